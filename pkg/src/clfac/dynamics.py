"""Controlled dynamics: models, interval integration, one-step prediction.

The closed loop holds each control constant over a sampling interval of
length ``delta``.  The reference trajectory over such an interval is
computed with classical fixed-step RK4; the optimizer's cheap prediction
is a single explicit Euler step.  Both are deterministic.
"""
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import IntegrationDiverged

BOX_TOL = 1e-12  # absolute slack when validating box membership


@dataclass(frozen=True)
class SystemModel:
    """A controlled ODE ``x' = rhs(x, u)`` with a box-constrained input.

    ``rhs`` must accept broadcastable arrays shaped ``(..., n)`` and
    ``(..., m)`` and return ``(..., n)``; identical inputs must give
    identical outputs.
    """
    name: str
    n: int
    m: int
    input_box: np.ndarray        # (m, 2) rows of [lo, hi]
    rhs: Callable[[np.ndarray, np.ndarray], np.ndarray]


def _nonholonomic_rhs(X: np.ndarray, U: np.ndarray) -> np.ndarray:
    x1, x2 = X[..., 0], X[..., 1]
    u1, u2 = U[..., 0], U[..., 1]
    return np.stack(np.broadcast_arrays(u1, u2, x1 * u2 - x2 * u1), axis=-1)


def nonholonomic() -> SystemModel:
    """Three-state system (x1', x2', x3') = (u1, u2, x1 u2 - x2 u1), inputs in [-1,1]^2."""
    return SystemModel(
        name="nonholonomic",
        n=3,
        m=2,
        input_box=np.array([[-1.0, 1.0], [-1.0, 1.0]]),
        rhs=_nonholonomic_rhs,
    )


def check_input(model: SystemModel, u: np.ndarray) -> None:
    """Validate box membership of ``u`` (batched or single) with 1e-12 slack."""
    u = np.asarray(u, dtype=float)
    lo = model.input_box[:, 0] - BOX_TOL
    hi = model.input_box[:, 1] + BOX_TOL
    if (u < lo).any() or (u > hi).any():
        raise ValueError(f"control outside the input box of {model.name}")


def integrate_interval(model: SystemModel, x_k, u_k, delta: float,
                       substeps: int = 10) -> np.ndarray:
    """State after holding ``u_k`` for ``delta`` seconds, RK4 with equal substeps.

    Accepts batched ``x_k`` / ``u_k`` with broadcastable leading shapes.
    """
    if delta <= 0.0 or substeps < 1:
        raise ValueError("delta must be positive and substeps at least 1")
    check_input(model, u_k)
    x = np.asarray(x_k, dtype=float)
    u = np.asarray(u_k, dtype=float)
    h = delta / substeps
    f = model.rhs
    for _ in range(substeps):
        k1 = f(x, u)
        k2 = f(x + (0.5 * h) * k1, u)
        k3 = f(x + (0.5 * h) * k2, u)
        k4 = f(x + h * k3, u)
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.isfinite(x).all():
        raise IntegrationDiverged(f"non-finite state after integrating {model.name}")
    return x


def euler_predict(model: SystemModel, x_k, u, delta: float) -> np.ndarray:
    """One explicit Euler step x + delta * rhs(x, u)."""
    if delta <= 0.0:
        raise ValueError("delta must be positive")
    check_input(model, u)
    x = np.asarray(x_k, dtype=float)
    return x + delta * model.rhs(x, np.asarray(u, dtype=float))


def predictor_error_bound(L_f: float, f_bar: float, delta: float) -> float:
    """Guaranteed gap between the RK4 interval state and the Euler prediction."""
    if L_f <= 0.0 or f_bar <= 0.0 or delta <= 0.0:
        raise ValueError("all arguments must be positive")
    return L_f * f_bar * delta * delta


def integrate_with_cost(model: SystemModel, reward, x_k, u_k, delta: float,
                        substeps: int = 10):
    """RK4 over one interval on the state augmented with a running-cost coordinate.

    Returns ``(x_end, cost_increment)`` where the increment is the integral
    of ``reward(x(t), u_k)`` over the interval.  The cost coordinate uses the
    same stage states as the state update, so refining ``substeps`` refines
    both consistently.
    """
    if delta <= 0.0 or substeps < 1:
        raise ValueError("delta must be positive and substeps at least 1")
    x = np.asarray(x_k, dtype=float)
    u = np.asarray(u_k, dtype=float)
    h = delta / substeps
    f = model.rhs
    cost = 0.0
    for _ in range(substeps):
        k1 = f(x, u)
        c1 = reward(x, u)
        x2 = x + (0.5 * h) * k1
        k2 = f(x2, u)
        c2 = reward(x2, u)
        x3 = x + (0.5 * h) * k2
        k3 = f(x3, u)
        c3 = reward(x3, u)
        x4 = x + h * k3
        k4 = f(x4, u)
        c4 = reward(x4, u)
        cost = cost + (h / 6.0) * (c1 + 2.0 * c2 + 2.0 * c3 + c4)
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.isfinite(x).all():
        raise IntegrationDiverged(f"non-finite state after integrating {model.name}")
    return x, float(cost)
