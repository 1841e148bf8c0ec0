"""Linear value approximator and its admissible weight set.

The critic is ``jhat(x, theta) = <theta, phi(x)>`` with a fixed feature
vector phi.  The shipped feature set ("clarke4") is chosen so that the
unit weight vector reproduces the Lyapunov function of :mod:`clfac.clf`
exactly, term by term, with the same floating-point operation order.
"""
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.optimize import bisect

from .errors import EnvelopeOrderViolation, WeightOutOfSet

# eigenvalues of the quadratic form [[1,-1],[-1,2]] in (planar norm, |x3|)
LAM_MIN = (3.0 - np.sqrt(5.0)) / 2.0
LAM_MAX = (3.0 + np.sqrt(5.0)) / 2.0

# coefficient of the lower feature envelope: 0.5 * LAM_MIN / theta_bar_eff
LOWER_COEFF = 0.5 * LAM_MIN / 4.0

THETA_SHARP = np.ones(4)

INVERSE_TOL = 1e-10
C4_TOL = 1e-12


@dataclass(frozen=True)
class ActivationSpec:
    """Feature map for the linear critic.

    ``lower_l`` bounds the critic from below: <theta, phi(x)> is at least
    lower_l(|x|) * |theta| for every admissible theta.
    """
    name: str
    p: int
    phi: Callable[[np.ndarray], np.ndarray]
    lower_l: Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class WeightSet:
    theta_lo: np.ndarray
    theta_hi: np.ndarray
    theta_underbar: float
    theta_bar: float
    # admissibility couples the last weight to the others so the critic
    # stays nonnegative for the shipped sign-indefinite feature set
    last_le_min: bool = True

    def contains(self, theta) -> bool:
        th = np.asarray(theta, dtype=float)
        if th.shape != self.theta_lo.shape:
            return False
        if (th < self.theta_lo).any() or (th > self.theta_hi).any():
            return False
        nrm = float(np.sqrt(th @ th))
        if nrm < self.theta_underbar or nrm > self.theta_bar:
            return False
        if self.last_le_min and th[-1] > min(th[:-1]):
            return False
        return True


def _phi_clarke4(X: np.ndarray) -> np.ndarray:
    x1, x2, x3 = X[..., 0], X[..., 1], X[..., 2]
    s = np.sqrt(x1 * x1 + x2 * x2)
    return np.stack(
        [x1 * x1, x2 * x2, 2.0 * (x3 * x3), -2.0 * np.abs(x3) * s], axis=-1
    )


def _lower_l_clarke4(s):
    s = np.asarray(s, dtype=float)
    return (LOWER_COEFF * s) * s


def case_study_activation() -> ActivationSpec:
    return ActivationSpec(name="clarke4", p=4, phi=_phi_clarke4,
                          lower_l=_lower_l_clarke4)


def case_study_weight_set() -> WeightSet:
    return WeightSet(theta_lo=np.full(4, 0.5), theta_hi=np.full(4, 2.0),
                     theta_underbar=1.0, theta_bar=4.0)


def critic_value(spec: ActivationSpec, theta, x, weight_set: WeightSet = None) -> float:
    """<theta, phi(x)> for a single state; validates theta when a set is given."""
    th = np.asarray(theta, dtype=float)
    if weight_set is not None and not weight_set.contains(th):
        raise WeightOutOfSet(f"theta {th.tolist()} outside the admissible set")
    p = spec.phi(np.asarray(x, dtype=float))
    acc = th[0] * p[..., 0] + th[1] * p[..., 1]
    for i in range(2, spec.p):
        acc = acc + th[i] * p[..., i]
    return float(acc)


def critic_value_batch(spec: ActivationSpec, TH, X) -> np.ndarray:
    """Batched critic: TH (..., p) against X (..., n), broadcast on the left."""
    P = spec.phi(np.asarray(X, dtype=float))
    TH = np.asarray(TH, dtype=float)
    acc = TH[..., 0] * P[..., 0] + TH[..., 1] * P[..., 1]
    for i in range(2, spec.p):
        acc = acc + TH[..., i] * P[..., i]
    return acc


class Envelope:
    """Strictly increasing scalar function with a bisection inverse.

    ``value_from_sq`` evaluates from the squared argument; the quadratic
    envelope uses it to avoid the sqrt/square round trip so grid scans and
    compiled kernels agree bit for bit.
    """

    def __init__(self, fn, fn_from_sq=None):
        self._fn = fn
        self._fn_sq = fn_from_sq

    def __call__(self, s):
        return self._fn(np.asarray(s, dtype=float))

    def value_from_sq(self, s_sq):
        if self._fn_sq is not None:
            return self._fn_sq(np.asarray(s_sq, dtype=float))
        return self._fn(np.sqrt(np.asarray(s_sq, dtype=float)))

    def inverse(self, y: float) -> float:
        y = float(y)
        if y <= 0.0:
            return 0.0
        hi = 1.0
        for _ in range(200):
            if float(self._fn(np.asarray(hi))) >= y:
                break
            hi *= 2.0
        else:
            raise EnvelopeOrderViolation("envelope failed to bracket the target level")
        return float(bisect(lambda s: float(self._fn(np.asarray(s))) - y,
                            0.0, hi, xtol=INVERSE_TOL))


def envelope_functions(weight_set: WeightSet, spec: ActivationSpec,
                       L_phi: float) -> tuple:
    """Lower and upper critic envelopes over the admissible weights.

    q1(s) = lower_l(s) * theta_underbar (quadratic for clarke4),
    q2(s) = theta_bar * L_phi * s.
    """
    if L_phi <= 0.0:
        raise ValueError("L_phi must be positive")
    tu = float(weight_set.theta_underbar)
    tb = float(weight_set.theta_bar)

    def q1_fn(s):
        return spec.lower_l(s) * tu

    q1_sq = None
    if spec.name == "clarke4":
        def q1_sq(s_sq):
            return (LOWER_COEFF * s_sq) * tu

    def q2_fn(s):
        return (tb * L_phi) * s

    def q2_sq(s_sq):
        return (tb * L_phi) * np.sqrt(s_sq)

    return Envelope(q1_fn, q1_sq), Envelope(q2_fn, q2_sq)


def check_c4(q1: Envelope, q2: Envelope, theta, spec: ActivationSpec, x) -> bool:
    """Range condition q1(|x|) <= jhat(x, theta) <= q2(|x|) with 1e-12 slack."""
    x = np.asarray(x, dtype=float)
    nsq = float(x @ x)
    j = critic_value(spec, theta, x)
    lo = float(q1.value_from_sq(nsq))
    hi = float(q2.value_from_sq(nsq))
    return (j >= lo - C4_TOL) and (j <= hi + C4_TOL)
