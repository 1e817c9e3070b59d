#!/usr/bin/env python3
"""Fused versus single-sensor error on symmetric-error synthetic traffic.

Each configuration is trained on one draw and scored on an independent draw.
With --update-baseline the results overwrite tests/baselines/bench_sym200.json
(only do this deliberately: the acceptance suite treats it as the floor).
"""

import argparse
import json
import logging
from pathlib import Path

from metalert.model import TrainConfig
from metalert.simulator import bench, symmetric_error_config

BASELINE = Path(__file__).resolve().parent.parent / "tests" / "baselines" / "bench_sym200.json"


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--traces", type=int, default=200)
    parser.add_argument("--sensors", type=int, default=3)
    parser.add_argument("--error", type=float, nargs="+", default=[0.2])
    parser.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    parser.add_argument("--max-iter", type=int, default=2000)
    parser.add_argument("--update-baseline", action="store_true")
    args = parser.parse_args()
    logging.basicConfig(level=logging.WARNING)

    configs = {}
    for error in args.error:
        for seed in args.seeds:
            name = f"sym{args.traces}_seed{seed}" if len(args.error) == 1 else f"sym{args.traces}_e{error}_seed{seed}"
            configs[name] = symmetric_error_config(args.traces, error, args.sensors, seed)
    rows = bench(configs, TrainConfig(max_iterations=args.max_iter))

    print(f"{'config':<24} {'alerts':>6} {'metas':>6} {'fused FP':>8} {'fused FN':>8} {'fused':>6} {'best sensor':>11}")
    for r in rows:
        print(f"{r.name:<24} {r.n_alerts:>6} {r.n_metas:>6} {r.fused_fp:>8} {r.fused_fn:>8} "
              f"{r.fused_errors:>6} {r.best_sensor_errors:>11}")

    if args.update_baseline:
        data = {r.name: {"fused_fp": r.fused_fp, "fused_fn": r.fused_fn, "fused_errors": r.fused_errors,
                         "best_sensor_errors": r.best_sensor_errors} for r in rows}
        BASELINE.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")
        print(f"baseline -> {BASELINE}")


if __name__ == "__main__":
    main()
