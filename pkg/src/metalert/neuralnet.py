"""2-3-1 sigmoid perceptron trained by online backpropagation with momentum.

Inputs are (ptrue, pfalse). Each hidden unit sees both inputs plus a bias;
the output unit sees the three hidden activations plus a bias. The error of a
single pattern is (output - desired)**2, and the performance index of a
pattern set is the mean of that error.

Plain Python floats are used throughout: with 13 weights, per-call numpy
overhead dominates any vectorization gain.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import mpmath

from .model import MlpWeights, ModelError, TrainConfig, TrainingPattern

N_HIDDEN = 3
INIT_SCALE = 0.5


class TrainingError(ValueError):
    pass


def sigmoid(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    z = math.exp(x)
    return z / (1.0 + z)


def _zero_deltas():
    return (tuple((0.0, 0.0, 0.0) for _ in range(N_HIDDEN)), (0.0, 0.0, 0.0, 0.0))


@dataclass(frozen=True)
class MlpState:
    weights: MlpWeights
    previous_deltas: tuple = field(default_factory=_zero_deltas)
    iteration: int = 0


def init(seed: int, signature_id: str = "") -> MlpState:
    """Fresh state with weights drawn uniformly from [-0.5, 0.5]."""
    rng = random.Random(seed)
    hidden = tuple(
        tuple(rng.uniform(-INIT_SCALE, INIT_SCALE) for _ in range(3)) for _ in range(N_HIDDEN)
    )
    output = tuple(rng.uniform(-INIT_SCALE, INIT_SCALE) for _ in range(N_HIDDEN + 1))
    return MlpState(MlpWeights(signature_id, hidden, output))


def _weights_of(net: Union[MlpState, MlpWeights]) -> MlpWeights:
    return net.weights if isinstance(net, MlpState) else net


def _check_inputs(inputs: Sequence[float]) -> tuple[float, float]:
    if len(inputs) != 2:
        raise ModelError(f"expected 2 inputs, got {len(inputs)}")
    x0, x1 = float(inputs[0]), float(inputs[1])
    if not (math.isfinite(x0) and math.isfinite(x1)):
        raise ModelError(f"non-finite input: {inputs!r}")
    return x0, x1


def _activations(hidden, output, x0, x1):
    h = [sigmoid(w[0] * x0 + w[1] * x1 + w[2]) for w in hidden]
    o = sigmoid(output[0] * h[0] + output[1] * h[1] + output[2] * h[2] + output[3])
    return h, o


def forward(net: Union[MlpState, MlpWeights], inputs: Sequence[float]) -> float:
    """Network output in (0, 1) for inputs (ptrue, pfalse)."""
    w = _weights_of(net)
    x0, x1 = _check_inputs(inputs)
    return _activations(w.hidden, w.output, x0, x1)[1]


def pattern_error(net, pattern: TrainingPattern) -> float:
    return (forward(net, pattern.inputs) - pattern.desired) ** 2


def performance_index(net, patterns: Sequence[TrainingPattern]) -> float:
    if not patterns:
        raise TrainingError("performance index of an empty pattern set is undefined")
    return sum(pattern_error(net, p) for p in patterns) / len(patterns)


def gradients(net, pattern: TrainingPattern):
    """Analytic dE/dw for one pattern, shaped like (hidden 3x3, output 4)."""
    w = _weights_of(net)
    x0, x1 = _check_inputs(pattern.inputs)
    h, o = _activations(w.hidden, w.output, x0, x1)
    delta_o = 2.0 * (o - pattern.desired) * o * (1.0 - o)
    g_out = (delta_o * h[0], delta_o * h[1], delta_o * h[2], delta_o)
    g_hid = []
    for j in range(N_HIDDEN):
        delta_h = delta_o * w.output[j] * h[j] * (1.0 - h[j])
        g_hid.append((delta_h * x0, delta_h * x1, delta_h))
    return tuple(g_hid), g_out


def train(state: MlpState, patterns: Sequence[TrainingPattern], config: TrainConfig):
    """Train until the performance index reaches ``config.goal`` or the epoch cap.

    Every pattern updates the weights in turn (file order, no shuffling):
    delta = -learning_rate * dE/dw + momentum * previous delta. The performance
    index is measured once after each epoch. Returns (state, history).
    """
    patterns = list(patterns)
    if not patterns:
        raise TrainingError("cannot train on an empty pattern set")
    lr, mom = config.learning_rate, config.momentum
    data = [(*_check_inputs(p.inputs), float(p.desired)) for p in patterns]
    q = len(data)

    hid = [list(row) for row in state.weights.hidden]
    out = list(state.weights.output)
    dhid = [list(row) for row in state.previous_deltas[0]]
    dout = list(state.previous_deltas[1])
    exp = math.exp

    def sig(x):
        if x >= 0:
            return 1.0 / (1.0 + exp(-x))
        z = exp(x)
        return z / (1.0 + z)

    history = []
    iteration = state.iteration
    for _ in range(config.max_iterations):
        for x0, x1, d in data:
            h = [sig(r[0] * x0 + r[1] * x1 + r[2]) for r in hid]
            o = sig(out[0] * h[0] + out[1] * h[1] + out[2] * h[2] + out[3])
            delta_o = 2.0 * (o - d) * o * (1.0 - o)
            # hidden deltas use the output weights before this pattern's update
            delta_h = [delta_o * out[j] * h[j] * (1.0 - h[j]) for j in range(N_HIDDEN)]
            for j in range(N_HIDDEN):
                step = -lr * delta_o * h[j] + mom * dout[j]
                out[j] += step
                dout[j] = step
            step = -lr * delta_o + mom * dout[3]
            out[3] += step
            dout[3] = step
            for j in range(N_HIDDEN):
                row, drow, dh = hid[j], dhid[j], delta_h[j]
                for k, xk in enumerate((x0, x1, 1.0)):
                    step = -lr * dh * xk + mom * drow[k]
                    row[k] += step
                    drow[k] = step
        iteration += 1
        err = 0.0
        for x0, x1, d in data:
            h0 = sig(hid[0][0] * x0 + hid[0][1] * x1 + hid[0][2])
            h1 = sig(hid[1][0] * x0 + hid[1][1] * x1 + hid[1][2])
            h2 = sig(hid[2][0] * x0 + hid[2][1] * x1 + hid[2][2])
            o = sig(out[0] * h0 + out[1] * h1 + out[2] * h2 + out[3])
            err += (o - d) * (o - d)
        pi = err / q
        if not math.isfinite(pi):
            raise TrainingError(f"performance index diverged at iteration {iteration}")
        history.append(pi)
        if pi <= config.goal:
            break

    weights = MlpWeights(state.weights.signature_id, hid, out)
    deltas = (tuple(tuple(r) for r in dhid), tuple(dout))
    return MlpState(weights, deltas, iteration), history


def _flat(hidden, output) -> list[float]:
    return [v for row in hidden for v in row] + list(output)


def _precise_error(flat, pattern: TrainingPattern):
    # independent forward pass at 40 digits; float64 roundoff in the
    # difference quotient would otherwise swamp gradients near 1e-6
    one = mpmath.mpf(1)
    x0, x1 = mpmath.mpf(pattern.inputs[0]), mpmath.mpf(pattern.inputs[1])
    h = [one / (one + mpmath.exp(-(flat[3 * j] * x0 + flat[3 * j + 1] * x1 + flat[3 * j + 2])))
         for j in range(N_HIDDEN)]
    z = flat[9] * h[0] + flat[10] * h[1] + flat[11] * h[2] + flat[12]
    return (one / (one + mpmath.exp(-z)) - pattern.desired) ** 2


def gradient_check(
    state: Union[MlpState, MlpWeights],
    pattern: TrainingPattern,
    epsilon: float = 1e-5,
    grad_fn: Optional[Callable] = None,
    floor: float = 1e-15,
) -> float:
    """Max relative deviation between analytic and central-difference gradients.

    Per weight the deviation is |a - n| / max(|a|, |n|); weights where both
    magnitudes are below ``floor`` count as agreeing. ``grad_fn`` replaces the
    analytic gradient (used to test the checker itself).
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    w = _weights_of(state)
    analytic = _flat(*(grad_fn or gradients)(w, pattern))
    with mpmath.workdps(40):
        base = [mpmath.mpf(v) for v in _flat(w.hidden, w.output)]
        eps = mpmath.mpf(epsilon)
        worst = 0.0
        for i in range(len(base)):
            plus, minus = list(base), list(base)
            plus[i] += eps
            minus[i] -= eps
            numeric = float(
                (_precise_error(plus, pattern) - _precise_error(minus, pattern)) / (2 * eps)
            )
            scale = max(abs(analytic[i]), abs(numeric))
            if scale < floor:
                continue
            worst = max(worst, abs(analytic[i] - numeric) / scale)
    return worst
