"""Per-step constrained optimization over control and critic weights.

Minimizes the squared one-step Bellman residual subject to four
constraints: the critic may not rise at the current state (C1), it must
dominate V at the predicted next state (C2), it must fall by half the
required decay (C3), and it must stay between the norm envelopes (C4).
The search is derivative-free: a seeded global scan over the control grid
times a weight candidate set, then a feasibility-preserving coordinate
descent.  A supplied fallback tuple is returned when nothing feasible is
found.

The NumPy scan here and the compiled scan in :mod:`clfac.kernels` evaluate
identical expressions in identical order and select the same first
minimum; tests compare them bitwise.
"""
from dataclasses import dataclass

import numpy as np

from .clf import ClfPair
from .critic import (ActivationSpec, Envelope, THETA_SHARP, WeightSet,
                     critic_value, critic_value_batch)
from .dynamics import SystemModel
from .errors import WeightOutOfSet

FEAS_TOL = 1e-9
DRAW_BLOCK = 64          # rejection-sampling block size for weight draws


def case_study_reward(X, U):
    """rho(x, u) = 0.1 |x|^2 + 2 |u|^2, batched."""
    X = np.asarray(X, dtype=float)
    U = np.asarray(U, dtype=float)
    x1, x2, x3 = X[..., 0], X[..., 1], X[..., 2]
    u1, u2 = U[..., 0], U[..., 1]
    return 0.1 * ((x1 * x1 + x2 * x2) + x3 * x3) + 2.0 * (u1 * u1 + u2 * u2)


@dataclass(frozen=True)
class AcProblem:
    model: SystemModel
    clf: ClfPair
    activation: ActivationSpec
    weight_set: WeightSet
    radii: object                 # RadiiSpec
    bounds: object                # BoundsReport
    reward: callable
    eps1: float
    eps2: float
    eps3: float
    delta: float
    control_grid: np.ndarray
    q1: Envelope
    q2: Envelope
    k_draws: int = 32
    refine_du0: float = 0.1
    refine_dth0: float = 0.15
    refine_max_evals: int = 200
    refine_du_min: float = 1e-4
    margin_tol: float = FEAS_TOL

    def __post_init__(self):
        if self.eps1 < 0.0 or self.eps2 < 0.0 or self.eps3 < 0.0:
            raise ValueError("relaxations must be nonnegative")
        if self.delta <= 0.0:
            raise ValueError("sampling period must be positive")


@dataclass
class AcSolution:
    u: np.ndarray
    theta: np.ndarray
    objective: float
    feasible: bool
    fallback_used: bool
    constraint_margins: np.ndarray


def _state_scalars(problem: AcProblem, x: np.ndarray):
    """(nsq, w_x, q1x, q2x) at the current state, canonical operation order."""
    x1, x2, x3 = float(x[0]), float(x[1]), float(x[2])
    nsq = (x1 * x1 + x2 * x2) + x3 * x3
    w_x = float(problem.clf.w(x[None])[0])
    q1x = float(problem.q1.value_from_sq(nsq))
    q2x = float(problem.q2.value_from_sq(nsq))
    return nsq, w_x, q1x, q2x


def bellman_error_sq(problem: AcProblem, x_k, u, theta, theta_prev) -> float:
    """Squared residual rho(x,u) + jhat(predicted, theta_prev) - jhat(x, theta)."""
    x = np.asarray(x_k, dtype=float)
    u = np.asarray(u, dtype=float)
    f = problem.model.rhs(x, u)
    xh = x + problem.delta * f
    rho = float(problem.reward(x, u))
    jnp = critic_value(problem.activation, theta_prev, xh)
    jc = critic_value(problem.activation, theta, x)
    resid = rho + jnp - jc
    return resid * resid


def constraint_margins(problem: AcProblem, x_k, u, theta, theta_prev) -> np.ndarray:
    """Slacks (m1, m2, m3, m4); nonnegative means the constraint holds."""
    x = np.asarray(x_k, dtype=float)
    u = np.asarray(u, dtype=float)
    _, w_x, q1x, q2x = _state_scalars(problem, x)
    f = problem.model.rhs(x, u)
    xh = x + problem.delta * f
    jc = critic_value(problem.activation, theta, x)
    jcp = critic_value(problem.activation, theta_prev, x)
    jn = critic_value(problem.activation, theta, xh)
    vh = float(problem.clf.v(xh[None])[0])
    m1 = jcp + problem.eps1 - jc
    m2 = jn + problem.eps2 - vh
    m3 = -0.5 * problem.delta * w_x + problem.eps3 - (jn - jc)
    m4 = min(jc - q1x, q2x - jc)
    return np.array([m1, m2, m3, m4])


def draw_thetas(rng: np.random.Generator, count: int,
                weight_set: WeightSet) -> np.ndarray:
    """Uniform draws from the weight box, rejecting rows outside the set.

    Rejection only needs the coupling between the last weight and the
    others: for the shipped box the norm bounds are implied by the box
    itself.  Draws come in fixed-size blocks so a given generator state
    always yields the same candidates.
    """
    lo = weight_set.theta_lo
    hi = weight_set.theta_hi
    rows = []
    have = 0
    while have < count:
        c = rng.uniform(lo, hi, size=(DRAW_BLOCK, len(lo)))
        keep = c[:, -1] <= np.minimum(np.minimum(c[:, 0], c[:, 1]), c[:, 2])
        c = c[keep]
        rows.append(c)
        have += len(c)
    return np.concatenate(rows)[:count]


def stage1_best(problem: AcProblem, x, theta_prev, TH):
    """First feasible minimum over the control grid x candidate weights.

    TH row 0 must equal theta_prev.  Returns (u index, weight index,
    objective, feasible count); u index is -1 when no pair is feasible.
    """
    x = np.asarray(x, dtype=float)
    TH = np.asarray(TH, dtype=float)
    Ug = problem.control_grid
    _, w_x, q1x, q2x = _state_scalars(problem, x)
    e1, e2, e3 = problem.eps1, problem.eps2, problem.eps3
    tol = problem.margin_tol
    F = problem.model.rhs(np.broadcast_to(x, (len(Ug), 3)), Ug)
    Xh = np.broadcast_to(x, (len(Ug), 3)) + problem.delta * F
    Vh = problem.clf.v(Xh)
    jn_prev = critic_value_batch(problem.activation, theta_prev[None, :], Xh)
    rho = problem.reward(np.broadcast_to(x, (len(Ug), 3)), Ug)
    jc = critic_value_batch(problem.activation, TH, x[None, :])
    jcp = float(critic_value_batch(problem.activation, theta_prev[None, :],
                                   x[None, :])[0])
    jn = critic_value_batch(problem.activation, TH[None, :, :], Xh[:, None, :])
    resid = rho[:, None] + jn_prev[:, None] - jc[None, :]
    obj = resid * resid
    m1 = jcp + e1 - jc
    m2 = jn + e2 - Vh[:, None]
    m3 = -0.5 * problem.delta * w_x + e3 - (jn - jc[None, :])
    m4 = np.minimum(jc - q1x, q2x - jc)
    feas = ((m1 >= -tol) & (m4 >= -tol))[None, :] & (m2 >= -tol) & (m3 >= -tol)
    flat = np.where(feas.reshape(-1), obj.reshape(-1), np.inf)
    i = int(np.argmin(flat))
    if not np.isfinite(flat[i]):
        return -1, -1, float("inf"), 0
    iu, it = divmod(i, TH.shape[0])
    return iu, it, float(flat[i]), int(feas.sum())


def _refine(problem: AcProblem, x, u0, th0, f0, theta_prev):
    """Coordinate descent accepting only feasible strict improvements."""
    lo = float(problem.weight_set.theta_lo[0])
    hi = float(problem.weight_set.theta_hi[0])
    tol = problem.margin_tol
    bu = np.array(u0, dtype=float)
    bth = np.array(th0, dtype=float)
    bf = f0
    du = problem.refine_du0
    dth = problem.refine_dth0
    evals = 0
    while evals < problem.refine_max_evals and du >= problem.refine_du_min:
        improved = False
        for c in range(6):
            for sgn in (1.0, -1.0):
                if evals >= problem.refine_max_evals:
                    break
                u = bu.copy()
                th = bth.copy()
                if c < 2:
                    u[c] = bu[c] + sgn * du
                    if abs(u[c]) > 1.0:
                        continue
                else:
                    j = c - 2
                    th[j] = bth[j] + sgn * dth
                    if not (lo <= th[j] <= hi):
                        continue
                    if th[3] > min(th[0], th[1], th[2]):
                        continue
                evals += 1
                m = constraint_margins(problem, x, u, th, theta_prev)
                fc = bellman_error_sq(problem, x, u, th, theta_prev)
                if float(m.min()) >= -tol and fc < bf:
                    bu = u
                    bth = th
                    bf = fc
                    improved = True
        if not improved:
            du *= 0.5
            dth *= 0.5
    return bu, bth, bf


def solve_ac(problem: AcProblem, x_k, theta_prev, fallback,
             draws: np.ndarray = None, seed: int = 0) -> AcSolution:
    """Two-stage feasible search; the fallback tuple covers the empty case.

    ``fallback`` is the pair (baseline action, unit weights).  ``draws``
    may carry pregenerated weight candidates; otherwise ``seed`` generates
    them.  The returned margins always describe the returned tuple.
    """
    x = np.asarray(x_k, dtype=float)
    theta_prev = np.asarray(theta_prev, dtype=float)
    if not problem.weight_set.contains(theta_prev):
        raise WeightOutOfSet("previous weights left the admissible set")
    if draws is None:
        rng = np.random.default_rng(seed)
        draws = draw_thetas(rng, problem.k_draws, problem.weight_set)
    TH = np.concatenate([theta_prev[None, :], THETA_SHARP[None, :], draws])
    iu, it, f0, _ = stage1_best(problem, x, theta_prev, TH)
    if iu < 0:
        u_fb = np.asarray(fallback[0], dtype=float)
        th_fb = np.asarray(fallback[1], dtype=float)
        m = constraint_margins(problem, x, u_fb, th_fb, theta_prev)
        obj = bellman_error_sq(problem, x, u_fb, th_fb, theta_prev)
        return AcSolution(u=u_fb, theta=th_fb, objective=obj,
                          feasible=bool(float(m.min()) >= -problem.margin_tol),
                          fallback_used=True, constraint_margins=m)
    u, th, f = _refine(problem, x, problem.control_grid[iu], TH[it], f0,
                       theta_prev)
    m = constraint_margins(problem, x, u, th, theta_prev)
    return AcSolution(u=u, theta=th, objective=f, feasible=True,
                      fallback_used=False, constraint_margins=m)
