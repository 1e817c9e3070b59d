"""Reading normalized alert events and declared traffic totals.

Event files hold one JSON object per line::

    {"ts": "2016-05-12T10:00:00+00:00", "sensor": "kippo", "signature": "sig-ssh-01",
     "src_ip": "10.0.0.7", "src_port": 40007, "dst_ip": "192.168.1.10", "dst_port": 22,
     "label": "malicious"}

``id`` and ``label`` are optional. Lines without ``id`` get ``L<lineno>`` so a
session can always be traced back to its source line.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from datetime import datetime
from typing import Iterable, Optional

from .model import AlertSession, Label, ModelError, Registry, SocketPair

logger = logging.getLogger(__name__)

REQUIRED_KEYS = ("ts", "sensor", "signature", "src_ip", "src_port", "dst_ip", "dst_port")
_TS_RE = re.compile(r"^\d{4}-\d{2}-\d{2}T\d{2}:\d{2}:\d{2}(\.\d{1,6})?(Z|[+-]\d{2}:\d{2})$")


class IngestError(ValueError):
    pass


class MalformedLine(IngestError):
    def __init__(self, lineno: int, reason: str):
        super().__init__(f"line {lineno}: {reason}")
        self.lineno = lineno
        self.reason = reason


class UnknownReference(IngestError):
    pass


def parse_timestamp(text: str) -> datetime:
    if not isinstance(text, str) or not _TS_RE.match(text):
        raise ValueError(f"timestamp not in ISO 8601 form with offset: {text!r}")
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    return datetime.fromisoformat(text)


def format_timestamp(ts: datetime) -> str:
    return ts.isoformat()


def _record_to_session(record: dict, lineno: int, registry: Registry) -> AlertSession:
    if not isinstance(record, dict):
        raise MalformedLine(lineno, "not a JSON object")
    missing = [k for k in REQUIRED_KEYS if k not in record]
    if missing:
        raise MalformedLine(lineno, f"missing key(s): {', '.join(missing)}")
    try:
        ts = parse_timestamp(record["ts"])
        socket = SocketPair(
            str(record["src_ip"]), record["src_port"], str(record["dst_ip"]), record["dst_port"]
        )
        label = record.get("label")
        if label is not None:
            label = Label(label)
        session = AlertSession(
            session_id=str(record.get("id") or f"L{lineno}"),
            timestamp=ts,
            sensor_id=str(record["sensor"]),
            signature_id=str(record["signature"]),
            socket=socket,
            label=label,
        )
    except (ValueError, ModelError) as exc:
        raise MalformedLine(lineno, str(exc)) from None

    if not registry.has_sensor(session.sensor_id):
        raise UnknownReference(f"line {lineno}: unknown sensor {session.sensor_id!r}")
    if not registry.has_signature(session.signature_id):
        raise UnknownReference(f"line {lineno}: unknown signature {session.signature_id!r}")
    return session


def parse_events(
    stream: Iterable[str],
    registry: Registry,
    lenient: bool = False,
    rejected: Optional[list] = None,
) -> list[AlertSession]:
    """Parse line-delimited event records into sessions, preserving order.

    In lenient mode malformed lines are logged and skipped (and appended to
    ``rejected`` as ``MalformedLine`` if a list is given). Unknown sensors or
    signatures are always fatal.
    """
    sessions = []
    for lineno, line in enumerate(stream, start=1):
        if not line.strip():
            continue
        try:
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedLine(lineno, f"invalid JSON: {exc.msg}") from None
            sessions.append(_record_to_session(record, lineno, registry))
        except MalformedLine as exc:
            if not lenient:
                raise
            logger.warning("skipping %s", exc)
            if rejected is not None:
                rejected.append(exc)
    return sessions


def session_to_record(session: AlertSession) -> dict:
    record = {
        "id": session.session_id,
        "ts": format_timestamp(session.timestamp),
        "sensor": session.sensor_id,
        "signature": session.signature_id,
        "src_ip": session.socket.src_ip,
        "src_port": session.socket.src_port,
        "dst_ip": session.socket.dst_ip,
        "dst_port": session.socket.dst_port,
    }
    if session.label is not None:
        record["label"] = session.label.value
    return record


def serialize_events(sessions: Iterable[AlertSession]) -> str:
    return "".join(json.dumps(session_to_record(s)) + "\n" for s in sessions)


def read_events(path, registry: Registry, lenient: bool = False) -> list[AlertSession]:
    with open(path, encoding="utf-8") as fh:
        return parse_events(fh, registry, lenient=lenient)


@dataclass(frozen=True)
class TrafficSummary:
    """Declared composition of the training traffic.

    ``protocol_totals`` maps protocol -> (malicious, benevolent) trace counts;
    ``signature_malicious`` maps signature -> malicious trace count.
    """

    protocol_totals: dict = field(default_factory=dict)
    signature_malicious: dict = field(default_factory=dict)

    def __post_init__(self):
        for proto, counts in self.protocol_totals.items():
            mal, ben = counts
            if mal < 0 or ben < 0:
                raise IngestError(f"negative trace count for protocol {proto!r}: {counts}")
        for sig, count in self.signature_malicious.items():
            if count < 0:
                raise IngestError(f"negative malicious count for signature {sig!r}: {count}")

    def malicious(self, protocol_id: str) -> int:
        return self.protocol_totals[protocol_id][0]

    def benevolent(self, protocol_id: str) -> int:
        return self.protocol_totals[protocol_id][1]

    def to_dict(self) -> dict:
        return {
            "protocol_totals": {
                p: {"malicious": m, "benevolent": b} for p, (m, b) in self.protocol_totals.items()
            },
            "signature_malicious_totals": dict(self.signature_malicious),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TrafficSummary":
        try:
            protocols = {
                p: (int(v["malicious"]), int(v["benevolent"]))
                for p, v in data["protocol_totals"].items()
            }
            signatures = {s: int(v) for s, v in data["signature_malicious_totals"].items()}
        except (KeyError, TypeError, ValueError) as exc:
            raise IngestError(f"malformed traffic summary: {exc!r}") from None
        return cls(protocols, signatures)


def _check_consistent(summary: TrafficSummary, registry: Optional[Registry]) -> None:
    if registry is None:
        return
    per_protocol: dict[str, int] = {}
    for sig, count in summary.signature_malicious.items():
        proto = registry.protocol_of(sig)
        per_protocol[proto] = per_protocol.get(proto, 0) + count
    for proto, total in per_protocol.items():
        if proto in summary.protocol_totals and total > summary.malicious(proto):
            raise IngestError(
                f"signature malicious totals under {proto!r} ({total}) exceed protocol total "
                f"({summary.malicious(proto)})"
            )


def summarize_traffic(
    sessions: Iterable[AlertSession] = (),
    declared: Optional[TrafficSummary | dict] = None,
    registry: Optional[Registry] = None,
) -> TrafficSummary:
    """Traffic totals for rate computation.

    Declared totals win whenever given: traces no sensor alerted on never show
    up as sessions, so counting sessions undercounts. Without declared totals
    every session must be labelled, and each distinct (signature, socket,
    timestamp) is counted as one trace.
    """
    if declared is not None:
        summary = declared if isinstance(declared, TrafficSummary) else TrafficSummary.from_dict(declared)
        _check_consistent(summary, registry)
        return summary

    sessions = list(sessions)
    if registry is None or not sessions or any(s.label is None for s in sessions):
        raise IngestError("traffic totals need labelled sessions and a registry, or declared totals")
    traces: dict[tuple, Label] = {}
    for s in sessions:
        traces.setdefault((s.signature_id, s.socket, s.timestamp), s.label)
    protocols: dict[str, list[int]] = {}
    signatures: dict[str, int] = {}
    for (sig, _, _), label in traces.items():
        counts = protocols.setdefault(registry.protocol_of(sig), [0, 0])
        if label is Label.MALICIOUS:
            counts[0] += 1
            signatures[sig] = signatures.get(sig, 0) + 1
        else:
            counts[1] += 1
    return TrafficSummary({p: tuple(c) for p, c in protocols.items()}, signatures)


def read_summary(path, registry: Optional[Registry] = None) -> TrafficSummary:
    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise IngestError(f"{path}: invalid JSON: {exc.msg}") from None
    return summarize_traffic(declared=data, registry=registry)
