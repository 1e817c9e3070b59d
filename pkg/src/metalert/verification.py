"""Bayesian credibility of a meta-alert and its perceptron verdict.

Each sensor involved in a meta-alert contributes a posterior x: the
probability that the trace is malicious given that the sensor alerted
(P(M=1|A=1)) or given that it stayed silent (P(M=1|A=0)). The meta-alert is a
real threat if every alerting sensor was right and every silent one missed it
(ptrue = prod x), a false threat if the reverse (pfalse = prod (1 - x)).
"""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass
from typing import Mapping, Optional

from . import neuralnet
from .learning import RateTable
from .model import MetaAlert, MlpWeights, Registry, Tag

logger = logging.getLogger(__name__)

THRESHOLD = 0.5


class VerificationError(ValueError):
    pass


class MissingRatesError(VerificationError):
    pass


class UnclassifiedError(VerificationError):
    pass


@dataclass(frozen=True)
class EffectiveRates:
    """Rates actually used for one sensor after signature/protocol fallback.

    Unlike ``RateEntry`` these need not satisfy rtp + rfp = 1: the fallback is
    applied per component.
    """

    sensor_id: str
    rtp: float
    rfp: float
    rfn: float
    rtn: float
    pm: float


@dataclass(frozen=True)
class SensorPosterior:
    sensor_id: str
    alerted: bool
    x: float


def resolve_rates(sensor_id: str, signature_id: str, rate_table: RateTable,
                  registry: Registry) -> EffectiveRates:
    protocol_id = registry.protocol_of(signature_id)
    proto = rate_table.get(sensor_id, protocol_id)
    if proto is None:
        raise MissingRatesError(
            f"no protocol-scope rates for sensor {sensor_id!r} under {protocol_id!r}"
        )
    sig = rate_table.get(sensor_id, protocol_id, signature_id)
    if sig is None:
        return EffectiveRates(sensor_id, proto.rtp, proto.rfp, proto.rfn, proto.rtn, proto.pm)
    # a zero signature-scope rate means "no evidence"; fall back to protocol scope
    return EffectiveRates(
        sensor_id,
        rtp=sig.rtp if sig.rtp != 0 else proto.rtp,
        rfp=sig.rfp if sig.rfp != 0 else proto.rfp,
        rfn=sig.rfn if sig.rfn != 0 else proto.rfn,
        rtn=proto.rtn,
        pm=proto.pm,
    )


def sensor_posterior(rates: EffectiveRates, alerted: bool) -> SensorPosterior:
    if alerted:
        num = rates.rtp * rates.pm
        den = num + rates.rfp * (1.0 - rates.pm)
    else:
        num = rates.rfn * rates.pm
        den = num + rates.rtn * (1.0 - rates.pm)
    if den == 0.0:
        logger.debug("degenerate posterior for %s (alerted=%s), using 0", rates.sensor_id, alerted)
        x = 0.0
    else:
        x = num / den
    return SensorPosterior(rates.sensor_id, alerted, x)


def posteriors(meta: MetaAlert, rate_table: RateTable, registry: Registry) -> list[SensorPosterior]:
    out = []
    for sensor_id in meta.alerted:
        out.append(sensor_posterior(resolve_rates(sensor_id, meta.signature_id, rate_table, registry), True))
    for sensor_id in meta.silent:
        out.append(sensor_posterior(resolve_rates(sensor_id, meta.signature_id, rate_table, registry), False))
    return out


def significant_probabilities(meta: MetaAlert, rate_table: RateTable,
                              registry: Registry) -> tuple[float, float]:
    """(ptrue, pfalse) for a meta-alert; complete meta-alerts give (1, 0)."""
    if meta.complete:
        return 1.0, 0.0
    ptrue = pfalse = 1.0
    for post in posteriors(meta, rate_table, registry):
        ptrue *= post.x
        pfalse *= 1.0 - post.x
    return ptrue, pfalse


def classify(meta: MetaAlert, rate_table: RateTable, weights_store: Mapping[str, MlpWeights],
             registry: Registry) -> MetaAlert:
    """Return a copy of ``meta`` with ptrue, pfalse and tag filled in.

    Complete meta-alerts are real threats without consulting the perceptron.
    Otherwise the tag is real iff the signature's perceptron outputs strictly
    more than 0.5.
    """
    if meta.open:
        raise VerificationError(f"{meta.meta_id} is still open")
    if meta.complete:
        return dataclasses.replace(meta, alerted=list(meta.alerted), silent=[],
                                   sessions=list(meta.sessions), ptrue=1.0, pfalse=0.0, tag=Tag.REAL)
    weights: Optional[MlpWeights]
    try:
        weights = weights_store[meta.signature_id]
    except KeyError:
        weights = None
    if weights is None:
        raise UnclassifiedError(f"{meta.meta_id}: no trained weights for signature {meta.signature_id!r}")
    ptrue, pfalse = significant_probabilities(meta, rate_table, registry)
    output = neuralnet.forward(weights, (ptrue, pfalse))
    tag = Tag.REAL if output > THRESHOLD else Tag.FALSE
    return dataclasses.replace(meta, alerted=list(meta.alerted), silent=list(meta.silent),
                               sessions=list(meta.sessions), ptrue=ptrue, pfalse=pfalse, tag=tag)
