"""Evaluate, collect, retrain and evaluate again over several seeds.

    python3 scripts/run_cycle.py --seeds 0 1 2 --collect 2000 --epochs 30
"""
import argparse
from pathlib import Path
import tempfile

from selfgrasp.harness import SessionConfig, run_training_cycle
from selfgrasp.learner import TrainConfig
from selfgrasp.world import ELONGATED, OracleConfig


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seeds", type=int, nargs="+", default=[0])
    ap.add_argument("--collect", type=int, default=2000)
    ap.add_argument("--eval", type=int, default=500)
    ap.add_argument("--epochs", type=int, default=30)
    ap.add_argument("--epsilon", type=float, default=0.2)
    ap.add_argument("--tolerance", type=float, default=15.0)
    args = ap.parse_args()

    print("seed  before   after    delta")
    for seed in args.seeds:
        with tempfile.TemporaryDirectory() as tmp:
            cfg = SessionConfig(seed=seed, epsilon=args.epsilon, world=ELONGATED,
                                oracle=OracleConfig(tolerance=args.tolerance, seed=seed),
                                train=TrainConfig(epochs=args.epochs, seed=seed),
                                collect_attempts=args.collect, eval_attempts=args.eval,
                                dataset_dir=Path(tmp) / "ds", model_path=Path(tmp) / "model.gfn")
            rep = run_training_cycle(cfg)
        b, a = 100 * rep.before.success_rate, 100 * rep.after.success_rate
        print(f"{seed:4d}  {b:6.2f}%  {a:6.2f}%  {a - b:+6.2f}")


if __name__ == "__main__":
    main()
