"""The two phases end to end: training (rates, meta-alerts, perceptrons) and verification."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .aggregation import AggregationConfig, aggregate
from .ingest import TrafficSummary
from .learning import RateTable, build_training_patterns, compute_rates, train_signature
from .model import AlertSession, Label, MetaAlert, MlpWeights, Registry, Tag, TrainConfig
from .verification import classify


@dataclass
class TrainingResult:
    rates: RateTable
    metas: list
    patterns: dict
    weights: dict = field(default_factory=dict)
    histories: dict = field(default_factory=dict)


def run_training(sessions: Sequence[AlertSession], summary: TrafficSummary, registry: Registry,
                 agg_config: AggregationConfig, train_config: TrainConfig) -> TrainingResult:
    rates = compute_rates(sessions, summary, registry)
    metas = aggregate(sessions, registry, agg_config)
    patterns = build_training_patterns(metas, rates, registry)
    result = TrainingResult(rates, metas, patterns)
    for sig, pats in sorted(patterns.items()):
        weights, history = train_signature(pats, train_config, sig)
        result.weights[sig] = weights
        result.histories[sig] = history
    return result


def verify_all(metas: Sequence[MetaAlert], rates: RateTable, weights: Mapping[str, MlpWeights],
               registry: Registry) -> list[MetaAlert]:
    return [classify(m, rates, weights, registry) for m in metas]


def confusion(metas: Sequence[MetaAlert]) -> dict:
    """Meta-level confusion counts of tags against ground-truth labels."""
    counts = {"tp": 0, "fp": 0, "fn": 0, "tn": 0, "unlabelled": 0, "pending": 0}
    for m in metas:
        if m.tag is Tag.PENDING:
            counts["pending"] += 1
        elif m.label is None:
            counts["unlabelled"] += 1
        elif m.tag is Tag.REAL:
            counts["tp" if m.label is Label.MALICIOUS else "fp"] += 1
        else:
            counts["fn" if m.label is Label.MALICIOUS else "tn"] += 1
    return counts
