"""Training phase: historical sensor rates, training patterns, perceptron fit."""

from __future__ import annotations

import logging
from collections import defaultdict
from typing import Iterable, Iterator, Optional

from . import neuralnet
from .ingest import TrafficSummary
from .model import (AlertSession, Label, MetaAlert, MlpWeights, RateEntry, Registry, TrainConfig,
                    TrainingPattern)

logger = logging.getLogger(__name__)


class RateError(ValueError):
    pass


class PatternError(ValueError):
    pass


class RateTable:
    """Rate entries keyed by (sensor, protocol, signature-or-None)."""

    def __init__(self, entries: Iterable[RateEntry] = (), flagged: Iterable[tuple] = ()):
        self._entries: dict[tuple, RateEntry] = {}
        for entry in entries:
            if entry.key in self._entries:
                raise RateError(f"duplicate rate entry {entry.key}")
            self._entries[entry.key] = entry
        for sensor, proto, sig in self._entries:
            if sig is not None and (sensor, proto, None) not in self._entries:
                raise RateError(f"signature-scope entry {(sensor, proto, sig)} lacks a protocol-scope sibling")
        # (sensor, protocol, signature) keys whose rates were undefined (no alerts)
        self.flagged = list(flagged)

    def get(self, sensor_id: str, protocol_id: str, signature_id: Optional[str] = None) -> Optional[RateEntry]:
        return self._entries.get((sensor_id, protocol_id, signature_id))

    def __iter__(self) -> Iterator[RateEntry]:
        return iter(sorted(self._entries.values(), key=lambda e: (e.sensor_id, e.protocol_id, e.signature_id or "")))

    def __len__(self) -> int:
        return len(self._entries)

    def __eq__(self, other) -> bool:
        return isinstance(other, RateTable) and self._entries == other._entries

    def for_sensor(self, sensor_id: str) -> list[RateEntry]:
        return [e for e in self if e.sensor_id == sensor_id]

    def sensors(self) -> list[str]:
        return sorted({e.sensor_id for e in self._entries.values()})


def _clamped(value: float, what: str) -> float:
    if value < 0.0 or value > 1.0:
        logger.warning("%s = %.6g outside [0, 1], clamping (miscounted training traffic?)", what, value)
        return min(1.0, max(0.0, value))
    return value


def compute_rates(sessions: Iterable[AlertSession], summary: TrafficSummary,
                  registry: Registry) -> RateTable:
    """Per-sensor generation rates at protocol and signature scope.

    At protocol scope, for a sensor with ``total`` alerts of which ``real`` are
    malicious and ``false`` benevolent, over ``mal`` malicious and ``ben``
    benevolent declared traces::

        rtp = real / total          rfp = 1 - rtp
        rfn = 1 - real / mal        rtn = 1 - false / ben
        pm  = mal / (mal + ben)

    Signature scope uses the same rtp/rfp/rfn formulas restricted to one
    signature (with that signature's malicious trace count) and inherits rtn
    and pm from protocol scope. A sensor with no alerts has undefined rates:
    the entry is omitted and its key appended to ``RateTable.flagged``.
    """
    proto_counts: dict[tuple, list[int]] = defaultdict(lambda: [0, 0])
    sig_counts: dict[tuple, list[int]] = defaultdict(lambda: [0, 0])
    for s in sessions:
        if s.label is None:
            raise RateError(f"session {s.session_id} has no verified label")
        proto = registry.protocol_of(s.signature_id)
        real = 1 if s.label is Label.MALICIOUS else 0
        for counts in (proto_counts[(s.sensor_id, proto)], sig_counts[(s.sensor_id, proto, s.signature_id)]):
            counts[0] += 1
            counts[1] += real

    capable = defaultdict(set)
    for cap in registry.capabilities:
        capable[(cap.sensor_id, registry.protocol_of(cap.signature_id))].add(cap.signature_id)

    entries, flagged = [], []
    for (sensor, proto), signatures in sorted(capable.items()):
        total, real = proto_counts.get((sensor, proto), (0, 0))
        if total == 0:
            logger.warning("sensor %r raised no alerts under %r; rates undefined", sensor, proto)
            flagged.append((sensor, proto, None))
            continue
        if proto not in summary.protocol_totals:
            raise RateError(f"traffic summary has no totals for protocol {proto!r}")
        mal, ben = summary.protocol_totals[proto]
        if mal == 0 or ben == 0:
            raise RateError(f"protocol {proto!r} needs both malicious and benevolent traces (got {mal}, {ben})")
        rtp = real / total
        rtn = _clamped(1.0 - (total - real) / ben, f"rtn[{sensor},{proto}]")
        pm = mal / (mal + ben)
        entries.append(RateEntry(sensor, proto, None, rtp, 1.0 - rtp,
                                 _clamped(1.0 - real / mal, f"rfn[{sensor},{proto}]"), rtn, pm))

        for sig in sorted(signatures):
            s_total, s_real = sig_counts.get((sensor, proto, sig), (0, 0))
            if s_total == 0:
                flagged.append((sensor, proto, sig))
                continue
            s_mal = summary.signature_malicious.get(sig, 0)
            if s_mal == 0:
                raise RateError(f"traffic summary has no malicious traces for signature {sig!r}")
            s_rtp = s_real / s_total
            s_rfn = _clamped(1.0 - s_real / s_mal, f"rfn[{sensor},{sig}]")
            entries.append(RateEntry(sensor, proto, sig, s_rtp, 1.0 - s_rtp, s_rfn, rtn, pm))
    return RateTable(entries, flagged)


def build_training_patterns(meta_alerts: Iterable[MetaAlert], rate_table: RateTable,
                            registry: Registry) -> dict[str, list[TrainingPattern]]:
    """Training patterns per signature, from incomplete pre-verified meta-alerts."""
    from .verification import MissingRatesError, significant_probabilities

    patterns: dict[str, list[TrainingPattern]] = {}
    for meta in meta_alerts:
        if meta.complete:
            continue
        if meta.label is None:
            raise PatternError(f"{meta.meta_id} has no verified label")
        try:
            ptrue, pfalse = significant_probabilities(meta, rate_table, registry)
        except MissingRatesError as exc:
            raise PatternError(f"{meta.meta_id}: {exc}") from None
        desired = 1 if meta.label is Label.MALICIOUS else 0
        patterns.setdefault(meta.signature_id, []).append(TrainingPattern((ptrue, pfalse), desired))
    return patterns


def train_signature(patterns: list[TrainingPattern], config: TrainConfig,
                    signature_id: str = "") -> tuple[MlpWeights, list[float]]:
    if not patterns:
        raise PatternError(f"no training patterns for signature {signature_id!r}")
    state = neuralnet.init(config.seed, signature_id)
    state, history = neuralnet.train(state, patterns, config)
    return state.weights, history
