"""Multi-sensor intrusion alert fusion: aggregation into meta-alerts, Bayesian
sensor credibility, and per-signature perceptron verification."""

from .aggregation import AggregationConfig, aggregate, merge_session, reduction_ratio
from .ingest import TrafficSummary, parse_events, summarize_traffic
from .learning import RateTable, build_training_patterns, compute_rates, train_signature
from .model import (AlertSession, Label, MetaAlert, MlpWeights, RateEntry, Registry, Tag,
                    TrainConfig, TrainingPattern, validate_registry)
from .verification import classify, resolve_rates, sensor_posterior, significant_probabilities

__version__ = "0.1.0"

__all__ = [
    "AggregationConfig", "aggregate", "merge_session", "reduction_ratio",
    "TrafficSummary", "parse_events", "summarize_traffic",
    "RateTable", "build_training_patterns", "compute_rates", "train_signature",
    "AlertSession", "Label", "MetaAlert", "MlpWeights", "RateEntry", "Registry", "Tag",
    "TrainConfig", "TrainingPattern", "validate_registry",
    "classify", "resolve_rates", "sensor_posterior", "significant_probabilities",
]
