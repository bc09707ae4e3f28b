"""Success rates of the reference policies, next to the exact random-policy expectation.

    python3 scripts/baselines.py --attempts 50000
"""
import argparse

import numpy as np

from selfgrasp import geometry
from selfgrasp.harness import ConstantPolicy, OraclePolicy, evaluate_policy
from selfgrasp.world import PRESETS, OracleConfig, World, grasp_oracle


def expected_random_rate(world, oracle_cfg, n):
    hits = [grasp_oracle(world.object_for(k), geometry.class_to_degrees(c), oracle_cfg)
            for k in range(n) for c in range(geometry.N_CLASSES)]
    return float(np.mean(hits))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--attempts", type=int, default=50_000)
    ap.add_argument("--world", choices=sorted(PRESETS), default="elongated")
    ap.add_argument("--tolerance", type=float, default=15.0)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    world_cfg, oracle_cfg = PRESETS[args.world], OracleConfig(tolerance=args.tolerance)
    rng = np.random.default_rng(args.seed)
    policies = {
        "random": lambda patch, obj: int(rng.integers(geometry.N_CLASSES)),
        "fixed-0": ConstantPolicy(0),
        "oracle": OraclePolicy(),
    }
    for name, policy in policies.items():
        r = evaluate_policy(policy, args.attempts, args.seed, world_cfg, oracle_cfg)
        print(f"{name:8s} {100 * r.success_rate:6.2f}%  ({r.stats.successful}/{r.stats.total})")
    world = World(world_cfg, (args.seed, 1))
    exp = expected_random_rate(world, oracle_cfg, min(args.attempts, 5000))
    print(f"expected random rate (exhaustive over classes): {100 * exp:.2f}%")


if __name__ == "__main__":
    main()
