"""Command-line entry point: ``metalert <command> [flags]``.

Commands
  simulate   write a synthetic labelled event stream and its traffic totals
  aggregate  group events into meta-alerts
  rates      compute per-sensor rates from labelled events
  train      full training phase; persists rates, weights and histories
  verify     tag closed meta-alerts with the trained perceptrons
  report     reduction ratio, rate tables, confusion counts, convergence
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import aggregation, ingest, learning, model, neuralnet, simulator, store, verification
from .aggregation import AggregationConfig, aggregate, reduction_ratio
from .learning import compute_rates
from .model import TrainConfig
from .pipeline import confusion, run_training, verify_all

EXIT_CODES = {
    "usage": 2,
    "ingest": 3,
    "aggregation": 4,
    "learning": 5,
    "neuralnet": 5,
    "verification": 6,
    "store": 7,
    "model": 8,
}

# most specific first
_ERROR_CATEGORIES = [
    (ingest.MalformedLine, "ingest", "malformed-line"),
    (ingest.UnknownReference, "ingest", "unknown-reference"),
    (ingest.IngestError, "ingest", "error"),
    (aggregation.CapabilityError, "aggregation", "capability-violation"),
    (aggregation.DuplicateAlertError, "aggregation", "duplicate-alert"),
    (aggregation.AggregationError, "aggregation", "error"),
    (learning.RateError, "learning", "rates"),
    (learning.PatternError, "learning", "patterns"),
    (neuralnet.TrainingError, "neuralnet", "training"),
    (verification.UnclassifiedError, "verification", "unclassified"),
    (verification.MissingRatesError, "verification", "missing-rates"),
    (verification.VerificationError, "verification", "error"),
    (store.NotFoundError, "store", "not-found"),
    (store.StoreError, "store", "error"),
    (model.RegistryError, "model", "registry"),
    (model.ModelError, "model", "invalid-value"),
]


def _categorize(exc: BaseException) -> Optional[tuple[str, str]]:
    for cls, module, code in _ERROR_CATEGORIES:
        if isinstance(exc, cls):
            return module, code
    return None


def _positive_float(text: str) -> float:
    value = float(text)
    if value <= 0:
        raise argparse.ArgumentTypeError(f"must be > 0: {text}")
    return value


def _store_layout(args) -> store.StoreLayout:
    return store.StoreLayout(store.default_root(args.store))


def _trained_at(sessions) -> Optional[str]:
    # stamp with the newest training event so reruns stay byte-identical
    return max(s.timestamp for s in sessions).isoformat() if sessions else None


# -- commands ---------------------------------------------------------------

def cmd_simulate(args) -> int:
    with open(args.config, encoding="utf-8") as fh:
        data = json.load(fh)
    if args.seed is not None:
        data["seed"] = args.seed
    config = simulator.SimConfig.from_dict(data)
    registry = simulator.registry_for(config)
    out = simulator.generate(config, registry)
    simulator.write_outputs(out, args.out_events, args.out_summary, args.out_truth)
    if args.out_registry:
        store.write_registry(registry, args.out_registry)
    print(f"{len(out.events)} alert events over {config.n_traces} traces -> {args.out_events}")
    return 0


def cmd_aggregate(args) -> int:
    registry = store.read_registry(args.registry)
    sessions = ingest.read_events(args.events, registry, lenient=args.lenient)
    config = AggregationConfig(args.window, max(args.close_timeout, args.window))
    metas = aggregate(sessions, registry, config, mode=args.mode)
    store.write_metas(metas, args.out)
    if sessions:
        print(f"{len(sessions)} alerts -> {len(metas)} meta-alerts "
              f"(reduction {reduction_ratio(len(sessions), len(metas))}%)")
    else:
        print("no alerts")
    return 0


def _format_rates(table) -> str:
    lines = [f"{'sensor':<12} {'protocol':<9} {'signature':<14} {'rtp':>9} {'rfp':>9} "
             f"{'rfn':>9} {'rtn':>9} {'pm':>6}"]
    for e in table:
        lines.append(f"{e.sensor_id:<12} {e.protocol_id:<9} {e.signature_id or '-':<14} "
                     f"{e.rtp:>9.6f} {e.rfp:>9.6f} {e.rfn:>9.6f} {e.rtn:>9.6f} {e.pm:>6.3f}")
    for key in table.flagged:
        lines.append(f"{key[0]:<12} {key[1]:<9} {key[2] or '-':<14} (no alerts, rates undefined)")
    return "\n".join(lines)


def cmd_rates(args) -> int:
    registry = store.read_registry(args.registry)
    sessions = ingest.read_events(args.events, registry, lenient=args.lenient)
    summary = ingest.read_summary(args.summary, registry)
    table = compute_rates(sessions, summary, registry)
    if args.store or os.environ.get(store.ENV_VAR):
        layout = _store_layout(args)
        store.save_rates(table, layout)
    print(_format_rates(table))
    return 0


def cmd_train(args) -> int:
    layout = _store_layout(args)
    registry = store.read_registry(args.registry)
    sessions = ingest.read_events(args.events, registry, lenient=args.lenient)
    summary = ingest.read_summary(args.summary, registry)
    agg_config = AggregationConfig(args.window, max(args.close_timeout, args.window))
    train_config = TrainConfig(args.lr, args.momentum, args.goal, args.max_iter, args.seed)

    # step 1: verified sessions into the framework store
    store.save_registry(registry, layout)
    store.atomic_write(layout.root / "sessions.jsonl", ingest.serialize_events(sessions))
    # steps 2-5
    result = run_training(sessions, summary, registry, agg_config, train_config)
    store.save_rates(result.rates, layout)
    trained_at = _trained_at(sessions)
    for sig, weights in result.weights.items():
        store.save_weights(weights, layout, trained_at, train_config)
        store.save_history(result.histories[sig], layout, sig)
    tagged = verify_all(result.metas, result.rates, result.weights, registry)
    store.save_metas(tagged, layout, "training")

    info = {
        "n_alerts": len(sessions),
        "n_metas": len(result.metas),
        "reduction_ratio": reduction_ratio(len(sessions), len(result.metas)) if sessions else None,
        "time_window": agg_config.time_window,
        "signatures": {
            sig: {
                "patterns": len(result.patterns[sig]),
                "epochs": len(hist),
                "final_pi": hist[-1],
                "goal_reached": hist[-1] <= train_config.goal,
            }
            for sig, hist in result.histories.items()
        },
    }
    store.save_run_info(info, layout)

    print(_format_rates(result.rates))
    for sig, meta in info["signatures"].items():
        print(f"{sig}: {meta['patterns']} patterns, {meta['epochs']} epochs, "
              f"PI {meta['final_pi']:.6f} ({'goal reached' if meta['goal_reached'] else 'cap hit'})")
    if args.history_out:
        text = "".join(store.format_history(h) for _, h in sorted(result.histories.items()))
        if args.history_out == "-":
            sys.stdout.write(text)
        else:
            store.atomic_write(Path(args.history_out), text)
    if args.plot:
        _plot_histories(result.histories, train_config, args.plot)
    return 0


def _plot_histories(histories: dict, config: TrainConfig, path: str) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4))
    for sig, hist in sorted(histories.items()):
        ax.plot(range(1, len(hist) + 1), hist, label=sig)
    ax.axhline(config.goal, color="grey", linestyle="--", linewidth=0.8, label="goal")
    ax.set_yscale("log")
    ax.set_xlabel("iteration")
    ax.set_ylabel("performance index")
    ax.set_title(f"lr={config.learning_rate} momentum={config.momentum}")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def cmd_verify(args) -> int:
    registry_path = args.registry or Path(args.rates).parent / "registry.json"
    registry = store.read_registry(registry_path)
    rates = store.read_rates(args.rates)
    weights = store.WeightsDir(args.weights)
    metas = store.read_metas(args.metas)
    open_metas = [m.meta_id for m in metas if m.open]
    if open_metas:
        raise verification.VerificationError(f"open meta-alerts cannot be verified: {', '.join(open_metas)}")
    tagged = verify_all(metas, rates, weights, registry)
    store.write_metas(tagged, args.out)
    n_real = sum(1 for m in tagged if m.tag is model.Tag.REAL)
    print(f"{len(tagged)} meta-alerts verified: {n_real} real, {len(tagged) - n_real} false -> {args.out}")
    return 0


def cmd_report(args) -> int:
    layout = _store_layout(args)
    info = store.load_run_info(layout)
    if info.get("reduction_ratio") is not None:
        print(f"alerts: {info['n_alerts']}  meta-alerts: {info['n_metas']}  "
              f"reduction: {info['reduction_ratio']}%")
    print()
    print(_format_rates(store.load_rates(layout)))
    metas = store.read_metas(args.metas) if args.metas else store.load_metas(layout, "training")
    counts = confusion(metas)
    print()
    print("confusion (meta-alerts): " + "  ".join(f"{k}={v}" for k, v in counts.items()))
    for sig, sig_info in sorted(info.get("signatures", {}).items()):
        hist = store.load_history(layout, sig)
        print(f"\nconvergence {sig}: {len(hist)} iterations, final PI {hist[-1]:.6f}")
        if args.series:
            sys.stdout.write(store.format_history(hist))
    return 0


# -- parser -----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="metalert", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter,
                                     allow_abbrev=False)
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    def add(name, func, help_text):
        p = sub.add_parser(name, help=help_text, description=help_text, allow_abbrev=False)
        p.set_defaults(func=func)
        return p

    def add_store(p):
        p.add_argument("--store", help=f"store directory (default: ${store.ENV_VAR})")

    def add_window(p):
        p.add_argument("--window", type=float, default=AggregationConfig.time_window,
                       help="aggregation time window in seconds (0 = identical timestamps)")
        p.add_argument("--close-timeout", type=float, default=AggregationConfig.close_timeout,
                       help="stream mode: close incomplete meta-alerts after this many seconds")

    p = add("simulate", cmd_simulate, "generate a synthetic labelled alert stream")
    p.add_argument("--config", required=True, help="simulation config (JSON)")
    p.add_argument("--out-events", required=True, help="event file to write (JSON lines)")
    p.add_argument("--out-summary", required=True, help="traffic-summary file to write")
    p.add_argument("--out-registry", help="also write the matching registry")
    p.add_argument("--out-truth", help="also write per-trace ground truth (JSON lines)")
    p.add_argument("--seed", type=int, help="override the config seed")

    p = add("aggregate", cmd_aggregate, "group alert events into meta-alerts")
    p.add_argument("--events", required=True)
    p.add_argument("--registry", required=True)
    add_window(p)
    p.add_argument("--mode", choices=("batch", "stream"), default="batch")
    p.add_argument("--out", required=True, help="meta-alert file to write (JSON lines)")
    p.add_argument("--lenient", action="store_true", help="skip malformed event lines")

    p = add("rates", cmd_rates, "compute per-sensor generation rates")
    p.add_argument("--events", required=True)
    p.add_argument("--summary", required=True)
    p.add_argument("--registry", required=True)
    add_store(p)
    p.add_argument("--lenient", action="store_true")

    p = add("train", cmd_train, "run the training phase and persist rates and weights")
    p.add_argument("--events", required=True)
    p.add_argument("--summary", required=True)
    p.add_argument("--registry", required=True)
    p.add_argument("--lr", type=_positive_float, default=0.5, help="learning rate")
    p.add_argument("--momentum", type=float, default=0.7)
    p.add_argument("--goal", type=_positive_float, default=0.02, help="performance-index goal")
    p.add_argument("--max-iter", type=int, default=20_000, help="epoch cap")
    p.add_argument("--seed", type=int, default=0, help="weight initialization seed")
    add_store(p)
    add_window(p)
    p.add_argument("--history-out", help="write convergence series here ('-' for stdout)")
    p.add_argument("--plot", help="render convergence curves to this image file")
    p.add_argument("--lenient", action="store_true")

    p = add("verify", cmd_verify, "tag closed meta-alerts as real or false threats")
    p.add_argument("--metas", required=True)
    p.add_argument("--rates", required=True, help="rates directory")
    p.add_argument("--weights", required=True, help="weights directory")
    p.add_argument("--registry", help="registry file (default: registry.json next to the rates directory)")
    p.add_argument("--out", required=True)

    p = add("report", cmd_report, "summarize a training run")
    add_store(p)
    p.add_argument("--metas", help="tagged meta-alert file (default: the training meta-alerts)")
    p.add_argument("--series", action="store_true", help="print full convergence series")
    return parser


def run(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_CODES["usage"]
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        category = _categorize(exc)
        if category is None:
            if isinstance(exc, OSError):
                category = ("io", "error")
            else:
                category = ("model", "invalid-value")
        module, code = category
        print(f"error[{module}.{code}]: {exc}", file=sys.stderr)
        return EXIT_CODES.get(module, 1)


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
