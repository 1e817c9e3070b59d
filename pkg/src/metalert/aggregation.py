"""Grouping alert sessions into meta-alerts.

Sessions are grouped by (signature, socket) and a time window anchored at the
first session of the group. Each meta-alert tracks which capable sensors have
alerted and which are still silent; once every capable sensor has alerted the
meta-alert closes itself as a real threat.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from datetime import datetime
from typing import Iterable, Optional

from .model import AlertSession, MetaAlert, ModelError, Registry, Tag

logger = logging.getLogger(__name__)


class AggregationError(ValueError):
    pass


class CapabilityError(AggregationError):
    pass


class DuplicateAlertError(AggregationError):
    pass


class KeyMismatchError(AggregationError):
    pass


@dataclass(frozen=True)
class AggregationConfig:
    time_window: float = 5.0
    close_timeout: float = 60.0

    def __post_init__(self):
        if self.time_window < 0:
            raise ModelError(f"time_window must be >= 0, got {self.time_window}")
        if self.close_timeout < self.time_window:
            raise ModelError(
                f"close_timeout ({self.close_timeout}) must be >= time_window ({self.time_window})"
            )


def _close_complete(meta: MetaAlert) -> None:
    meta.open = False
    meta.ptrue = 1.0
    meta.pfalse = 0.0
    meta.tag = Tag.REAL


def _fold_label(meta: MetaAlert, session: AlertSession, first: bool) -> None:
    if first:
        meta.label = session.label
    elif meta.label != session.label:
        if meta.label is not None:
            logger.warning("%s: conflicting ground-truth labels, dropping label", meta.meta_id)
        meta.label = None


def merge_session(meta: MetaAlert, session: AlertSession) -> MetaAlert:
    """Add one sensor's alert to an open meta-alert (in place; also returned)."""
    if not meta.open:
        raise AggregationError(f"{meta.meta_id} is closed")
    if session.signature_id != meta.signature_id or session.socket != meta.socket:
        raise KeyMismatchError(
            f"session {session.session_id} does not match {meta.meta_id} (signature/socket)"
        )
    if session.sensor_id in meta.alerted:
        raise DuplicateAlertError(
            f"session {session.session_id}: sensor {session.sensor_id!r} already alerted in {meta.meta_id}"
        )
    if session.sensor_id not in meta.silent:
        raise CapabilityError(
            f"session {session.session_id}: sensor {session.sensor_id!r} cannot detect {meta.signature_id!r}"
        )
    meta.alerted.append(session.sensor_id)
    meta.silent.remove(session.sensor_id)
    _fold_label(meta, session, first=False)
    meta.sessions.append(session.session_id)
    if not meta.silent:
        _close_complete(meta)
    return meta


class Aggregator:
    """Single-writer aggregation state machine.

    Feed sessions in timestamp order. In ``"stream"`` mode an incomplete
    meta-alert is closed (still pending) once a later session arrives at least
    ``close_timeout`` seconds after its window start. ``flush`` closes whatever
    is left.
    """

    def __init__(self, registry: Registry, config: AggregationConfig = AggregationConfig(),
                 mode: str = "batch", id_prefix: str = "meta-"):
        if mode not in ("batch", "stream"):
            raise ValueError(f"unknown aggregation mode {mode!r}")
        self.registry = registry
        self.config = config
        self.mode = mode
        self.id_prefix = id_prefix
        self.metas: list[MetaAlert] = []
        self._open: dict[tuple, list[MetaAlert]] = {}
        self._last_ts: Optional[datetime] = None

    def _new_meta(self, session: AlertSession) -> MetaAlert:
        capable = self.registry.capable_sensors(session.signature_id)
        meta = MetaAlert(
            meta_id=f"{self.id_prefix}{len(self.metas) + 1:05d}",
            signature_id=session.signature_id,
            socket=session.socket,
            window_start=session.timestamp,
            alerted=[session.sensor_id],
            silent=[s for s in capable if s != session.sensor_id],
            sessions=[session.session_id],
        )
        _fold_label(meta, session, first=True)
        self.metas.append(meta)
        if meta.complete:
            _close_complete(meta)
        return meta

    def expire(self, now: datetime) -> list[MetaAlert]:
        """Close open meta-alerts whose window started ``close_timeout`` or more before ``now``."""
        closed = []
        for key, bucket in list(self._open.items()):
            for meta in list(bucket):
                if (now - meta.window_start).total_seconds() >= self.config.close_timeout:
                    meta.open = False
                    bucket.remove(meta)
                    closed.append(meta)
            if not bucket:
                del self._open[key]
        return closed

    def feed(self, session: AlertSession) -> list[MetaAlert]:
        """Process one session; return the meta-alerts closed as a result."""
        if self._last_ts is not None and session.timestamp < self._last_ts:
            raise AggregationError(f"session {session.session_id} arrived out of timestamp order")
        self._last_ts = session.timestamp
        if not self.registry.can_detect(session.sensor_id, session.signature_id):
            raise CapabilityError(
                f"session {session.session_id}: sensor {session.sensor_id!r} "
                f"is not capable of {session.signature_id!r}"
            )

        closed = self.expire(session.timestamp) if self.mode == "stream" else []
        key = (session.signature_id, session.socket)
        bucket = self._open.setdefault(key, [])
        target = None
        for meta in bucket:
            elapsed = (session.timestamp - meta.window_start).total_seconds()
            if 0 <= elapsed <= self.config.time_window:
                target = meta
                break
        if target is None:
            target = self._new_meta(session)
            if target.open:
                bucket.append(target)
        else:
            merge_session(target, session)
        if not target.open:
            if target in bucket:
                bucket.remove(target)
            closed.append(target)
        if not bucket:
            del self._open[key]
        return closed

    def flush(self) -> list[MetaAlert]:
        closed = []
        for bucket in self._open.values():
            for meta in bucket:
                meta.open = False
                closed.append(meta)
        self._open.clear()
        return closed


def aggregate(sessions: Iterable[AlertSession], registry: Registry,
              config: AggregationConfig = AggregationConfig(), mode: str = "batch") -> list[MetaAlert]:
    """Group sessions into meta-alerts, returned in creation order."""
    agg = Aggregator(registry, config, mode=mode)
    for session in sorted(sessions, key=lambda s: s.timestamp):
        agg.feed(session)
    agg.flush()
    return agg.metas


def reduction_ratio(n_alerts: int, n_meta: int) -> float:
    """Percentage of alerts removed by aggregation, one decimal."""
    if n_alerts <= 0:
        raise ValueError("reduction ratio needs at least one alert")
    if not 0 <= n_meta <= n_alerts:
        raise ValueError(f"meta-alert count {n_meta} outside [0, {n_alerts}]")
    return round(100.0 * (n_alerts - n_meta) / n_alerts, 1)
