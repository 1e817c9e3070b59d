"""Reference computations written independently of the package code paths."""

import math
from itertools import product


def bayes_oracle(combination, sig_rates, proto_rates):
    """Significant probabilities by direct evaluation of the per-sensor Bayes terms.

    ``combination`` is a list of a_i in {0, 1}. ``proto_rates[i]`` is a dict
    with rtp, rfp, rfn, rtn, pm; ``sig_rates[i]`` is the same at signature
    scope or None. The conditional P(A|M) terms use the signature rate unless
    it is zero. P(X=TN) is computed with Bayes' theorem on (A=0, M=0), and
    P(X=FN) as its complement; P(X=TP) on (A=1, M=1), P(X=FP) as complement.
    A zero Bayes denominator means no evidence of maliciousness.
    """
    ptrue, pfalse = 1.0, 1.0
    for a, sig, proto in zip(combination, sig_rates, proto_rates):
        def cond(name):
            if sig is None or sig[name] == 0:
                return proto[name]
            return sig[name]

        p_a1_m1, p_a1_m0, p_a0_m1 = cond("rtp"), cond("rfp"), cond("rfn")
        p_a0_m0 = proto["rtn"]
        p_m1 = proto["pm"]
        p_m0 = 1 - p_m1

        den_tp = p_a1_m1 * p_m1 + p_a1_m0 * p_m0
        p_tp = p_a1_m1 * p_m1 / den_tp if den_tp else 0.0
        p_fp = 1 - p_tp
        den_tn = p_a0_m0 * p_m0 + p_a0_m1 * p_m1
        p_tn = p_a0_m0 * p_m0 / den_tn if den_tn else 1.0
        p_fn = 1 - p_tn

        ptrue *= a * p_tp + (1 - a) * p_fn
        pfalse *= a * p_fp + (1 - a) * p_tn
    return ptrue, pfalse


def scalar_forward(hidden, output, x0, x1):
    """2-3-1 logistic network written out term by term."""
    def logistic(z):
        return 1 / (1 + math.exp(-z))

    h1 = logistic(hidden[0][0] * x0 + hidden[0][1] * x1 + hidden[0][2] * 1)
    h2 = logistic(hidden[1][0] * x0 + hidden[1][1] * x1 + hidden[1][2] * 1)
    h3 = logistic(hidden[2][0] * x0 + hidden[2][1] * x1 + hidden[2][2] * 1)
    return logistic(output[0] * h1 + output[1] * h2 + output[2] * h3 + output[3] * 1)


def all_combinations(n):
    """Every non-empty-alert combination vector of length n."""
    return [c for c in product((0, 1), repeat=n) if any(c)]
