#!/usr/bin/env python3
"""Convergence sweeps over learning rate, momentum and seeds on the reference (table2) scenario.

Writes one TSV per run (iteration, PI) plus a summary table to --out, and
optionally a PNG of the curves (needs matplotlib).

    python3 scripts/run_experiments.py --out results/convergence
    python3 scripts/run_experiments.py --sim-seeds 0 1 2 3 4 5 6
"""

import argparse
import logging
from dataclasses import replace
from pathlib import Path

from metalert.aggregation import AggregationConfig, aggregate
from metalert.learning import build_training_patterns, compute_rates, train_signature
from metalert.model import TrainConfig
from metalert.simulator import TABLE2, generate, registry_for
from metalert.store import format_history

log = logging.getLogger("run_experiments")


def table2_patterns(sim_seed):
    config = replace(TABLE2, seed=sim_seed)
    registry = registry_for(config)
    sim = generate(config, registry)
    rates = compute_rates(sim.events, sim.summary, registry)
    metas = aggregate(sim.events, registry, AggregationConfig(0, 60))
    return build_training_patterns(metas, rates, registry)[config.signature_id]


def main():
    parser = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--out", type=Path, default=Path("results/convergence"))
    parser.add_argument("--lr", type=float, nargs="+", default=[0.5])
    parser.add_argument("--momentum", type=float, nargs="+", default=[0.1, 0.5, 0.7, 0.9])
    parser.add_argument("--init-seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    parser.add_argument("--sim-seeds", type=int, nargs="+", default=[TABLE2.seed])
    parser.add_argument("--goal", type=float, default=0.02)
    parser.add_argument("--max-iter", type=int, default=20_000)
    parser.add_argument("--plot", action="store_true")
    args = parser.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    args.out.mkdir(parents=True, exist_ok=True)
    rows, curves = [], {}
    for sim_seed in args.sim_seeds:
        patterns = table2_patterns(sim_seed)
        for lr in args.lr:
            for momentum in args.momentum:
                for seed in args.init_seeds:
                    cfg = TrainConfig(lr, momentum, args.goal, args.max_iter, seed)
                    _, history = train_signature(patterns, cfg)
                    name = f"sim{sim_seed}_lr{lr}_m{momentum}_init{seed}"
                    (args.out / f"{name}.tsv").write_text(format_history(history))
                    curves[name] = history
                    reached = history[-1] <= args.goal
                    rows.append((sim_seed, lr, momentum, seed, len(patterns), len(history), history[-1], reached))
                    log.info("%s: %d epochs, PI %.6f%s", name, len(history), history[-1],
                             "" if reached else " (cap hit)")

    header = "sim_seed\tlr\tmomentum\tinit_seed\tpatterns\tepochs\tfinal_pi\tgoal_reached\n"
    body = "".join("\t".join(str(v) for v in row) + "\n" for row in rows)
    (args.out / "summary.tsv").write_text(header + body)
    log.info("summary -> %s", args.out / "summary.tsv")

    if args.plot:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        fig, ax = plt.subplots(figsize=(7, 4.5))
        for name, history in curves.items():
            ax.plot(range(1, len(history) + 1), history, linewidth=0.8, label=name)
        ax.axhline(args.goal, color="grey", linestyle="--", linewidth=0.8)
        ax.set_xscale("log")
        ax.set_yscale("log")
        ax.set_xlabel("iteration")
        ax.set_ylabel("performance index")
        if len(curves) <= 12:
            ax.legend(fontsize=6)
        fig.tight_layout()
        fig.savefig(args.out / "convergence.png", dpi=150)
        log.info("plot -> %s", args.out / "convergence.png")


if __name__ == "__main__":
    main()
