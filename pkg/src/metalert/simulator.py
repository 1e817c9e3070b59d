"""Synthetic labelled alert traffic with prescribed per-sensor confusion counts.

A run lays out ``malicious + benevolent`` traces on a timeline, one timestamp
and socket per trace. Each sensor alerts on a seeded random subset of the
malicious traces (its true positives) and of the benevolent ones (its false
positives); the subset sizes are exactly the configured counts.
"""

from __future__ import annotations

import ipaddress
import json
import logging
import random
from dataclasses import asdict, dataclass, field, replace
from datetime import datetime, timedelta
from typing import Optional

from .aggregation import AggregationConfig, aggregate
from .ingest import TrafficSummary, parse_timestamp, serialize_events
from .model import (AlertSession, Label, ModelError, Protocol, Registry, Sensor, SensorCapability,
                    Signature, SocketPair, Tag, TrainConfig, validate_registry)
from .pipeline import run_training, verify_all

logger = logging.getLogger(__name__)

MAX_REDRAWS = 1000


@dataclass(frozen=True)
class SensorCounts:
    tp: int
    fp: int
    fn: int
    tn: int


@dataclass(frozen=True)
class SimConfig:
    sensors: dict  # sensor_id -> SensorCounts, in registry order
    malicious: int
    benevolent: int
    seed: int = 0
    signature_id: str = "sig-ssh-01"
    protocol_id: str = "ssh"
    socket_pool: Optional[int] = None
    spacing: float = 60.0
    jitter: float = 0.0
    start: str = "2016-05-12T00:00:00+00:00"
    dst_ip: str = "192.168.1.10"
    dst_port: int = 22
    require_coverage: bool = True

    def __post_init__(self):
        sensors = {
            k: v if isinstance(v, SensorCounts) else SensorCounts(**v) for k, v in self.sensors.items()
        }
        object.__setattr__(self, "sensors", sensors)
        if self.malicious < 0 or self.benevolent < 0:
            raise ModelError("trace counts must be non-negative")
        for name, c in sensors.items():
            if min(c.tp, c.fp, c.fn, c.tn) < 0:
                raise ModelError(f"{name}: negative count")
            if c.tp + c.fn != self.malicious:
                raise ModelError(f"{name}: tp + fn = {c.tp + c.fn}, expected {self.malicious} malicious traces")
            if c.fp + c.tn != self.benevolent:
                raise ModelError(f"{name}: fp + tn = {c.fp + c.tn}, expected {self.benevolent} benevolent traces")
        if self.socket_pool is not None and self.socket_pool < 1:
            raise ModelError("socket_pool must be >= 1")
        if self.spacing <= self.jitter:
            raise ModelError("spacing must exceed jitter so traces stay apart")
        parse_timestamp(self.start)

    @property
    def n_traces(self) -> int:
        return self.malicious + self.benevolent

    def to_dict(self) -> dict:
        data = asdict(self)
        data["sensors"] = {k: asdict(v) for k, v in self.sensors.items()}
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "SimConfig":
        return cls(**data)


@dataclass(frozen=True)
class TraceTruth:
    trace_id: str
    timestamp: datetime
    socket: SocketPair
    label: Label
    alerted_by: tuple = ()


@dataclass
class SimOutput:
    events: list = field(default_factory=list)
    summary: TrafficSummary = field(default_factory=TrafficSummary)
    truth: list = field(default_factory=list)


# Canonical reference scenario (configs/table2.json): 15 malicious + 5 benevolent SSH traces seen by
# three sensors. The seed is chosen so that no benevolent trace ends up with
# the same sensor combination as a malicious one (see tests/test_simulator.py).
TABLE2 = SimConfig(
    sensors={
        "snort": SensorCounts(tp=12, fp=5, fn=3, tn=0),
        "kippo": SensorCounts(tp=15, fp=1, fn=0, tn=4),
        "suricata": SensorCounts(tp=10, fp=3, fn=5, tn=2),
    },
    malicious=15,
    benevolent=5,
    seed=1,
)


def registry_for(config: SimConfig) -> Registry:
    return validate_registry(
        [Sensor(s, s) for s in config.sensors],
        [Protocol(config.protocol_id)],
        [Signature(config.signature_id, config.protocol_id)],
        [SensorCapability(s, config.signature_id) for s in config.sensors],
    )


def _socket(config: SimConfig, slot: int) -> SocketPair:
    src = ipaddress.IPv4Address(int(ipaddress.IPv4Address("10.0.0.0")) + 1 + slot)
    return SocketPair(str(src), 40000 + slot % 20000, config.dst_ip, config.dst_port)


def _allocate(config: SimConfig, rng: random.Random) -> dict:
    """sensor -> (set of malicious indices alerted, set of benevolent indices alerted)."""
    covering = (
        config.require_coverage
        and config.sensors
        and sum(c.tp for c in config.sensors.values()) >= config.malicious
        and sum(c.fp for c in config.sensors.values()) >= config.benevolent
    )
    for attempt in range(MAX_REDRAWS):
        alloc = {
            name: (set(rng.sample(range(config.malicious), c.tp)),
                   set(rng.sample(range(config.benevolent), c.fp)))
            for name, c in config.sensors.items()
        }
        if not covering:
            return alloc
        hit_mal = set().union(*(a[0] for a in alloc.values()))
        hit_ben = set().union(*(a[1] for a in alloc.values()))
        if len(hit_mal) == config.malicious and len(hit_ben) == config.benevolent:
            if attempt:
                logger.info("allocation redrawn %d time(s) to cover every trace", attempt)
            return alloc
    raise ModelError(f"could not cover every trace within {MAX_REDRAWS} draws")


def generate(config: SimConfig, registry: Optional[Registry] = None) -> SimOutput:
    """Deterministic labelled event stream, declared totals and per-trace truth."""
    registry = registry or registry_for(config)
    for name in config.sensors:
        if not registry.can_detect(name, config.signature_id):
            raise ModelError(f"sensor {name!r} cannot detect {config.signature_id!r} in registry")

    rng = random.Random(config.seed)
    alloc = _allocate(config, rng)
    kinds = [(Label.MALICIOUS, i) for i in range(config.malicious)]
    kinds += [(Label.BENEVOLENT, i) for i in range(config.benevolent)]
    order = list(range(len(kinds)))
    rng.shuffle(order)

    start = parse_timestamp(config.start)
    pool = config.socket_pool or max(1, config.n_traces)
    out = SimOutput(summary=TrafficSummary(
        {config.protocol_id: (config.malicious, config.benevolent)},
        {config.signature_id: config.malicious},
    ))
    events = []
    for slot, k in enumerate(order):
        label, idx = kinds[k]
        trace_id = f"t{slot + 1:04d}"
        ts = start + timedelta(seconds=slot * config.spacing)
        socket = _socket(config, slot % pool)
        alerted = []
        for name in config.sensors:
            hits = alloc[name][0] if label is Label.MALICIOUS else alloc[name][1]
            if idx not in hits:
                continue
            offset = round(rng.uniform(0, config.jitter), 6) if config.jitter else 0.0
            events.append(AlertSession(
                session_id=f"{trace_id}-{name}",
                timestamp=ts + timedelta(seconds=offset),
                sensor_id=name,
                signature_id=config.signature_id,
                socket=socket,
                label=label,
            ))
            alerted.append(name)
        out.truth.append(TraceTruth(trace_id, ts, socket, label, tuple(alerted)))
    events.sort(key=lambda s: s.timestamp)
    out.events = events
    return out


def truth_to_record(t: TraceTruth) -> dict:
    return {
        "trace_id": t.trace_id,
        "ts": t.timestamp.isoformat(),
        "src_ip": t.socket.src_ip,
        "src_port": t.socket.src_port,
        "dst_ip": t.socket.dst_ip,
        "dst_port": t.socket.dst_port,
        "label": t.label.value,
        "alerted_by": list(t.alerted_by),
    }


def write_outputs(out: SimOutput, events_path, summary_path=None, truth_path=None) -> None:
    with open(events_path, "w", encoding="utf-8") as fh:
        fh.write(serialize_events(out.events))
    if summary_path:
        with open(summary_path, "w", encoding="utf-8") as fh:
            json.dump(out.summary.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
    if truth_path:
        with open(truth_path, "w", encoding="utf-8") as fh:
            for t in out.truth:
                fh.write(json.dumps(truth_to_record(t)) + "\n")


def symmetric_error_config(n_traces: int = 200, error: float = 0.2, n_sensors: int = 3,
                           seed: int = 0) -> SimConfig:
    """Half malicious, half benevolent; each sensor misses and false-alarms ``error`` of them."""
    mal = n_traces // 2
    ben = n_traces - mal
    fn, fp = round(error * mal), round(error * ben)
    counts = SensorCounts(tp=mal - fn, fp=fp, fn=fn, tn=ben - fp)
    return SimConfig(
        sensors={f"sensor{i + 1}": counts for i in range(n_sensors)},
        malicious=mal,
        benevolent=ben,
        seed=seed,
    )


@dataclass
class BenchRow:
    name: str
    n_traces: int
    sensor_errors: dict  # sensor -> {"fp": .., "fn": ..}
    fused_fp: int
    fused_fn: int
    n_alerts: int
    n_metas: int

    @property
    def fused_errors(self) -> int:
        return self.fused_fp + self.fused_fn

    @property
    def best_sensor_errors(self) -> int:
        return min(e["fp"] + e["fn"] for e in self.sensor_errors.values())


def bench(configs: dict, train_config=None, agg_config=None, holdout_offset: int = 10_007) -> list[BenchRow]:
    """Train on one draw of each config and score the fused verdicts on a fresh draw.

    Fused errors are counted per trace: a malicious trace is missed unless some
    meta-alert containing one of its alerts is tagged real; a benevolent trace
    is a false positive if any such meta-alert is tagged real.
    """
    train_config = train_config or TrainConfig(max_iterations=2000)
    agg_config = agg_config or AggregationConfig()
    rows = []
    for name, config in configs.items():
        registry = registry_for(config)
        train = generate(config, registry)
        trained = run_training(train.events, train.summary, registry, agg_config, train_config)

        test = generate(replace(config, seed=config.seed + holdout_offset), registry)
        metas = verify_all(aggregate(test.events, registry, agg_config), trained.rates,
                           trained.weights, registry)
        trace_of = {f"{t.trace_id}-{s}": t for t in test.truth for s in t.alerted_by}
        flagged = set()
        for m in metas:
            if m.tag is Tag.REAL:
                flagged.update(trace_of[sid].trace_id for sid in m.sessions)
        fused_fp = sum(1 for t in test.truth if t.label is Label.BENEVOLENT and t.trace_id in flagged)
        fused_fn = sum(1 for t in test.truth if t.label is Label.MALICIOUS and t.trace_id not in flagged)
        rows.append(BenchRow(
            name=name,
            n_traces=config.n_traces,
            sensor_errors={s: {"fp": c.fp, "fn": c.fn} for s, c in config.sensors.items()},
            fused_fp=fused_fp,
            fused_fn=fused_fn,
            n_alerts=len(test.events),
            n_metas=len(metas),
        ))
    return rows
