"""Shared domain types: sensors, signatures, alert sessions, meta-alerts, rates.

Everything here is a frozen dataclass that validates itself on construction.
The one exception is ``MetaAlert``, which the aggregation engine mutates while
the meta-alert is open.
"""

from __future__ import annotations

import ipaddress
import math
from dataclasses import dataclass, field
from datetime import datetime
from enum import Enum
from typing import Iterable, Optional

RATE_TOLERANCE = 1e-9


class ModelError(ValueError):
    """Invalid domain value."""


class RegistryError(ModelError):
    """Duplicate id or dangling reference in a registry."""


class Label(str, Enum):
    MALICIOUS = "malicious"
    BENEVOLENT = "benevolent"


class Tag(str, Enum):
    REAL = "real"
    FALSE = "false"
    PENDING = "pending"


@dataclass(frozen=True)
class Sensor:
    sensor_id: str
    name: str = ""

    def __post_init__(self):
        if not self.sensor_id:
            raise ModelError("sensor_id must be non-empty")


@dataclass(frozen=True)
class Protocol:
    protocol_id: str

    def __post_init__(self):
        if not self.protocol_id:
            raise ModelError("protocol_id must be non-empty")
        if self.protocol_id != self.protocol_id.lower():
            raise ModelError(f"protocol_id must be lowercase: {self.protocol_id!r}")


@dataclass(frozen=True)
class Signature:
    signature_id: str
    protocol_id: str
    description: str = ""

    def __post_init__(self):
        if not self.signature_id:
            raise ModelError("signature_id must be non-empty")


@dataclass(frozen=True)
class SensorCapability:
    sensor_id: str
    signature_id: str


@dataclass(frozen=True)
class SocketPair:
    src_ip: str
    src_port: int
    dst_ip: str
    dst_port: int

    def __post_init__(self):
        for name in ("src_ip", "dst_ip"):
            value = getattr(self, name)
            try:
                ipaddress.ip_address(value)
            except ValueError:
                raise ModelError(f"{name} is not a valid IP address: {value!r}") from None
        for name in ("src_port", "dst_port"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, int) or not 0 <= value <= 65535:
                raise ModelError(f"{name} out of range 0-65535: {value!r}")


@dataclass(frozen=True)
class AlertSession:
    session_id: str
    timestamp: datetime
    sensor_id: str
    signature_id: str
    socket: SocketPair
    label: Optional[Label] = None

    def __post_init__(self):
        if not self.session_id:
            raise ModelError("session_id must be non-empty")
        if not isinstance(self.timestamp, datetime) or self.timestamp.tzinfo is None:
            raise ModelError(f"session {self.session_id}: timestamp must be timezone-aware")
        if self.label is not None and not isinstance(self.label, Label):
            object.__setattr__(self, "label", Label(self.label))


@dataclass
class MetaAlert:
    """All alerts raised for one attack session.

    ``alerted`` and ``silent`` together form the combination vector over the
    sensors capable of detecting ``signature_id``: a sensor in ``alerted`` has
    a_i = 1, a sensor in ``silent`` has a_i = 0.
    """

    meta_id: str
    signature_id: str
    socket: SocketPair
    window_start: datetime
    alerted: list[str]
    silent: list[str]
    sessions: list[str] = field(default_factory=list)
    open: bool = True
    ptrue: Optional[float] = None
    pfalse: Optional[float] = None
    tag: Tag = Tag.PENDING
    # ground truth carried over from labelled sessions; None in the real-time phase
    label: Optional[Label] = None

    @property
    def complete(self) -> bool:
        return not self.silent

    @property
    def capable(self) -> frozenset[str]:
        return frozenset(self.alerted) | frozenset(self.silent)

    def validate(self, capable: Optional[Iterable[str]] = None) -> None:
        if set(self.alerted) & set(self.silent):
            raise ModelError(f"{self.meta_id}: sensor both alerted and silent")
        if len(set(self.alerted)) != len(self.alerted) or len(set(self.silent)) != len(self.silent):
            raise ModelError(f"{self.meta_id}: repeated sensor in combination")
        if not self.alerted:
            raise ModelError(f"{self.meta_id}: a meta-alert needs at least one alert")
        if capable is not None and self.capable != frozenset(capable):
            raise ModelError(f"{self.meta_id}: alerted + silent differs from capable set")
        if self.open and self.tag is not Tag.PENDING:
            raise ModelError(f"{self.meta_id}: open meta-alert must be pending")
        if self.complete and (self.open or self.tag is not Tag.REAL or self.ptrue != 1):
            raise ModelError(f"{self.meta_id}: complete meta-alert must be closed, real, ptrue=1")
        for name in ("ptrue", "pfalse"):
            value = getattr(self, name)
            if value is not None and not 0.0 <= value <= 1.0:
                raise ModelError(f"{self.meta_id}: {name}={value} outside [0, 1]")


@dataclass(frozen=True)
class RateEntry:
    """Historical generation rates of one sensor.

    ``signature_id`` is None for protocol scope. ``pm`` is P(M=1), the share of
    malicious traces under the protocol.
    """

    sensor_id: str
    protocol_id: str
    signature_id: Optional[str]
    rtp: float
    rfp: float
    rfn: float
    rtn: float
    pm: float

    def __post_init__(self):
        for name in ("rtp", "rfp", "rfn", "rtn", "pm"):
            value = getattr(self, name)
            if not (isinstance(value, (int, float)) and 0.0 <= value <= 1.0):
                raise ModelError(f"rate {name}={value!r} outside [0, 1] for {self.key}")
        if abs(self.rtp + self.rfp - 1.0) > RATE_TOLERANCE:
            raise ModelError(f"rtp + rfp != 1 for {self.key}: {self.rtp} + {self.rfp}")

    @property
    def key(self) -> tuple[str, str, Optional[str]]:
        return (self.sensor_id, self.protocol_id, self.signature_id)


@dataclass(frozen=True)
class TrainingPattern:
    inputs: tuple[float, float]
    desired: int

    def __post_init__(self):
        if len(self.inputs) != 2:
            raise ModelError(f"pattern needs exactly 2 inputs, got {len(self.inputs)}")
        object.__setattr__(self, "inputs", tuple(float(v) for v in self.inputs))
        if not all(0.0 <= v <= 1.0 for v in self.inputs):
            raise ModelError(f"pattern inputs outside [0, 1]: {self.inputs}")
        if self.desired not in (0, 1):
            raise ModelError(f"desired must be 0 or 1, got {self.desired!r}")


@dataclass(frozen=True)
class MlpWeights:
    """Weights of the 2-3-1 perceptron.

    ``hidden[j]`` holds (w_ptrue, w_pfalse, bias) for hidden unit j;
    ``output`` holds (w_h1, w_h2, w_h3, bias).
    """

    signature_id: str
    hidden: tuple[tuple[float, float, float], ...]
    output: tuple[float, float, float, float]

    def __post_init__(self):
        hidden = tuple(tuple(float(v) for v in row) for row in self.hidden)
        output = tuple(float(v) for v in self.output)
        if len(hidden) != 3 or any(len(row) != 3 for row in hidden):
            raise ModelError("hidden weights must be 3x3")
        if len(output) != 4:
            raise ModelError("output weights must have 4 entries")
        if not all(math.isfinite(v) for row in hidden for v in row) or not all(
            math.isfinite(v) for v in output
        ):
            raise ModelError(f"non-finite weight for {self.signature_id}")
        object.__setattr__(self, "hidden", hidden)
        object.__setattr__(self, "output", output)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.5
    momentum: float = 0.7
    goal: float = 0.02
    max_iterations: int = 20_000
    seed: int = 0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ModelError(f"learning_rate must be > 0, got {self.learning_rate}")
        if not 0 <= self.momentum < 1:
            raise ModelError(f"momentum must be in [0, 1), got {self.momentum}")
        if not self.goal > 0:
            raise ModelError(f"goal must be > 0, got {self.goal}")
        if self.max_iterations < 1:
            raise ModelError(f"max_iterations must be >= 1, got {self.max_iterations}")


@dataclass(frozen=True)
class Registry:
    sensors: tuple[Sensor, ...] = ()
    protocols: tuple[Protocol, ...] = ()
    signatures: tuple[Signature, ...] = ()
    capabilities: tuple[SensorCapability, ...] = ()

    def sensor_ids(self) -> list[str]:
        return [s.sensor_id for s in self.sensors]

    def signature(self, signature_id: str) -> Signature:
        for sig in self.signatures:
            if sig.signature_id == signature_id:
                return sig
        raise KeyError(signature_id)

    def has_sensor(self, sensor_id: str) -> bool:
        return any(s.sensor_id == sensor_id for s in self.sensors)

    def has_signature(self, signature_id: str) -> bool:
        return any(s.signature_id == signature_id for s in self.signatures)

    def protocol_of(self, signature_id: str) -> str:
        return self.signature(signature_id).protocol_id

    def capable_sensors(self, signature_id: str) -> list[str]:
        """Base B for a signature, in registry sensor order."""
        capable = {c.sensor_id for c in self.capabilities if c.signature_id == signature_id}
        return [s for s in self.sensor_ids() if s in capable]

    def can_detect(self, sensor_id: str, signature_id: str) -> bool:
        return SensorCapability(sensor_id, signature_id) in self.capabilities


def _check_unique(ids: Iterable, kind: str) -> None:
    seen = set()
    for item in ids:
        if item in seen:
            raise RegistryError(f"duplicate {kind}: {item!r}")
        seen.add(item)


def validate_registry(sensors, protocols, signatures, capabilities) -> Registry:
    sensors, protocols = tuple(sensors), tuple(protocols)
    signatures, capabilities = tuple(signatures), tuple(capabilities)
    _check_unique((s.sensor_id for s in sensors), "sensor")
    _check_unique((p.protocol_id for p in protocols), "protocol")
    _check_unique((s.signature_id for s in signatures), "signature")
    _check_unique(((c.sensor_id, c.signature_id) for c in capabilities), "capability")

    protocol_ids = {p.protocol_id for p in protocols}
    for sig in signatures:
        if sig.protocol_id not in protocol_ids:
            raise RegistryError(
                f"signature {sig.signature_id!r} references unknown protocol {sig.protocol_id!r}"
            )
    sensor_ids = {s.sensor_id for s in sensors}
    signature_ids = {s.signature_id for s in signatures}
    for cap in capabilities:
        if cap.sensor_id not in sensor_ids:
            raise RegistryError(
                f"capability ({cap.sensor_id!r}, {cap.signature_id!r}) references unknown sensor {cap.sensor_id!r}"
            )
        if cap.signature_id not in signature_ids:
            raise RegistryError(
                f"capability ({cap.sensor_id!r}, {cap.signature_id!r}) references unknown signature {cap.signature_id!r}"
            )
    return Registry(sensors, protocols, signatures, capabilities)
