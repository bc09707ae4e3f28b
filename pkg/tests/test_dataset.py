import itertools
import warnings

from hypothesis import given, strategies as st
import numpy as np
import pytest

from selfgrasp.dataset import (DataPoint, DatasetError, DatasetStats, DatasetStore, DatasetWarning,
                               FilenameError, PGMError, decode_pgm, encode_pgm, finalize_name,
                               load_dataset, parse_name, provisional_name, quantize, read_pgm,
                               scan_dataset, stats, write_pgm)


def make_dataset(directory, n_success, n_fail, seed=0):
    rng = np.random.default_rng(seed)
    store = DatasetStore(directory)
    labels = [1] * n_success + [0] * n_fail
    rng.shuffle(labels)
    for gc, s in enumerate(labels):
        store.write_point(rng.random((32, 32)), gc)
        store.finalize_point(gc, int(rng.integers(18)), s)
    return store


@pytest.mark.parametrize("gc,name", [(0, "train_img_0.pgm"), (42, "train_img_42.pgm"),
                                     (123, "train_img_123.pgm")])
def test_provisional_name(gc, name):
    assert provisional_name(gc) == name
    assert provisional_name(gc, "png") == name[:-3] + "png"


def test_finalize_name():
    assert finalize_name(7, 11, 1) == "1_11_train_img_7.pgm"
    assert finalize_name(0, 0, 0) == "0_0_train_img_0.pgm"


def test_name_round_trip_full_label_space():
    for gc, c, s in itertools.product((0, 9, 12345), range(18), (0, 1)):
        p = parse_name(finalize_name(gc, c, s))
        assert (p.success, p.attempted, p.gc) == (s, c, gc)
        assert not p.provisional


def test_parse_examples():
    p = parse_name("1_11_train_img_7.pgm")
    assert (p.success, p.attempted, p.gc) == (1, 11, 7)
    p = parse_name("train_img_9.pgm")
    assert p.provisional and p.gc == 9


@pytest.mark.parametrize("name,component", [
    ("2_11_train_img_7.pgm", "success"),
    ("1_18_train_img_7.pgm", "class"),
    ("1_011_train_img_7.pgm", "class"),
    ("1_11_train_img_x.pgm", "counter"),
    ("1_11_train_img_7.png", "extension"),
    ("1_11_test_img_7.pgm", "template"),
    ("1_train_img_7.pgm", "prefix"),
    ("1_2_3_train_img_7.pgm", "prefix"),
])
def test_parse_errors_name_component(name, component):
    with pytest.raises(FilenameError) as e:
        parse_name(name)
    assert e.value.component == component


@given(st.text(max_size=30))
def test_parse_rejects_or_accepts_consistently(name):
    try:
        p = parse_name(name)
    except FilenameError:
        return
    rebuilt = provisional_name(p.gc) if p.provisional else finalize_name(p.gc, p.attempted, p.success)
    assert parse_name(rebuilt) == p


def test_pgm_golden_bytes():
    img = np.array([[0, 255, 128], [1, 2, 3]], dtype=np.uint8)
    assert encode_pgm(img) == b"P5\n3 2\n255\n\x00\xff\x80\x01\x02\x03"
    assert np.array_equal(decode_pgm(encode_pgm(img)), img)


def test_pgm_quantization():
    assert list(quantize(np.array([0.0, 1.0, 0.5, 1.7, -3.0]))) == [0, 255, 128, 255, 0]


def test_pgm_reads_comments():
    img = decode_pgm(b"P5\n# made by hand\n2 1\n# max\n255\n\x07\x08")
    assert img.tolist() == [[7, 8]]


@pytest.mark.parametrize("data", [b"P2\n1 1\n255\n\x00", b"P5\n2 2\n255\n\x00", b"P5\n2 2\n65535\n" + bytes(8),
                                  b"P5\n2", b"P5\nx 2\n255\n\x00\x00"])
def test_pgm_errors(data):
    with pytest.raises(PGMError):
        decode_pgm(data)


def test_pgm_file_round_trip(tmp_path):
    img = np.random.default_rng(0).integers(0, 256, (32, 32), dtype=np.uint8)
    write_pgm(tmp_path / "a.pgm", img)
    assert np.array_equal(read_pgm(tmp_path / "a.pgm"), img)
    floats = np.random.default_rng(1).random((32, 32))
    write_pgm(tmp_path / "b.pgm", floats)
    back = read_pgm(tmp_path / "b.pgm")
    write_pgm(tmp_path / "c.pgm", back)
    assert (tmp_path / "b.pgm").read_bytes() == (tmp_path / "c.pgm").read_bytes()


def test_write_then_finalize(tmp_path):
    store = DatasetStore(tmp_path)
    store.write_point(np.zeros((32, 32)), 3)
    assert [p.name for p in tmp_path.iterdir()] == ["train_img_3.pgm"]
    store.finalize_point(3, 5, 1)
    assert [p.name for p in tmp_path.iterdir()] == ["1_5_train_img_3.pgm"]


def test_finalize_without_write(tmp_path):
    with pytest.raises(DatasetError):
        DatasetStore(tmp_path).finalize_point(0, 1, 1)


def test_duplicate_gc(tmp_path):
    store = DatasetStore(tmp_path)
    store.write_point(np.zeros((32, 32)), 0)
    store.finalize_point(0, 1, 1)
    with pytest.raises(DatasetError):
        store.write_point(np.zeros((32, 32)), 0)


def test_interrupted_cycle_is_skipped(tmp_path):
    store = make_dataset(tmp_path, 3, 2)
    store.write_point(np.ones((32, 32)), 5)  # crash before feedback
    assert [p.name for p in store.provisional_leftovers()] == ["train_img_5.pgm"]
    with pytest.warns(DatasetWarning, match="interrupted"):
        pts = load_dataset(tmp_path)
    assert len(pts) == 5


def test_load_empty(tmp_path):
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert load_dataset(tmp_path) == []


def test_malformed_name_warns_once(tmp_path):
    make_dataset(tmp_path, 2, 2)
    (tmp_path / "7_1_train_img_99.pgm").write_bytes(encode_pgm(np.zeros((32, 32))))
    (tmp_path / "notes.txt").write_text("ignored")
    with pytest.warns(DatasetWarning) as rec:
        pts = load_dataset(tmp_path)
    assert len(rec) == 1 and len(pts) == 4


def test_undecodable_image_collected(tmp_path):
    make_dataset(tmp_path, 2, 1)
    (tmp_path / "1_3_train_img_50.pgm").write_bytes(b"garbage")
    pts, issues = scan_dataset(tmp_path)
    assert len(pts) == 3 and len(issues) == 1 and "train_img_50" in issues[0]


def test_load_orders_by_gc_and_is_bit_exact(tmp_path):
    store = DatasetStore(tmp_path)
    rng = np.random.default_rng(0)
    imgs = {}
    for gc in (10, 2, 7, 100):
        img = rng.integers(0, 256, (32, 32), dtype=np.uint8)
        imgs[gc] = img
        store.write_point(img, gc)
        store.finalize_point(gc, gc % 18, gc % 2)
    pts = load_dataset(tmp_path)
    assert [p.gc for p in pts] == [2, 7, 10, 100]
    for p in pts:
        assert np.array_equal(quantize(p.patch), imgs[p.gc])
        assert (p.attempted, p.success) == (p.gc % 18, p.gc % 2)


@pytest.mark.parametrize("s,f,rate", [(47, 76, 38.21), (22, 50, 30.55), (25, 26, 49.02)])
def test_reference_compositions(tmp_path, s, f, rate):
    make_dataset(tmp_path, s, f)
    st_ = stats(load_dataset(tmp_path))
    assert (st_.successful, st_.unsuccessful, st_.total) == (s, f, s + f)
    assert abs(100 * st_.rate - rate) <= 0.01


def test_stats_empty_and_table():
    assert stats([]) == DatasetStats(0, 0)
    assert stats([]).total == 0
    text = DatasetStats(22, 50).table("Session 1: Before CNN Training")
    assert "Successful Grasps" in text and "72" in text and "30.56%" in text
    assert DatasetStats(22, 50).kv() == ["successful=22", "unsuccessful=50", "total=72", "rate=0.305556"]


def test_gc_persistence(tmp_path):
    store = DatasetStore(tmp_path)
    assert store.next_gc() == 0
    store.record_gc(41)
    assert (tmp_path / "gc_file.txt").read_text() == "41"
    assert store.next_gc() == 42
    store.write_point(np.zeros((32, 32)), 60)
    assert store.next_gc() == 61


def test_datapoint_equality():
    a = DataPoint(np.zeros((2, 2)), 1, 1, 0)
    assert a == DataPoint(np.zeros((2, 2)), 1, 1, 0)
    assert a != DataPoint(np.ones((2, 2)), 1, 1, 0)
