"""Baseline sample-and-hold controller: one-step lookahead descent on V.

The action at x is the control-grid point minimizing V after one held
interval.  Outside the core ball the chosen action must deliver at least
half the continuous decay, V(next) - V(x) <= -(delta/2) w(x); the
certification helpers check that inequality over state grids and pick the
largest sampling period for which it holds everywhere.
"""
from dataclasses import dataclass, asdict

import numpy as np

from ._accel import use_numba
from .clf import ClfPair
from .dynamics import SystemModel, integrate_interval
from .errors import ConfigError, DecayInfeasible

DECAY_TOL = 1e-12    # absorbs rounding in the one-step V comparison


@dataclass(frozen=True)
class NominalPolicy:
    control_grid: np.ndarray    # (N, m), sorted so ties prefer small controls
    clf: ClfPair
    delta: float
    substeps: int = 10
    r_star: float = 0.0
    decay_tol: float = DECAY_TOL


def control_grid(model: SystemModel, resolution: int = 21) -> np.ndarray:
    """Uniform per-axis grid over the input box, sorted for tie-breaking.

    Sort keys: squared norm first, then the components lexicographically,
    so the first minimum during a scan realizes the smallest-norm,
    lexicographically-least action.  Resolution must be odd so the grid
    contains the zero input along with the box corners.
    """
    if resolution < 3 or resolution % 2 == 0:
        raise ConfigError("control grid resolution must be odd and at least 3")
    axes = [np.linspace(model.input_box[j, 0], model.input_box[j, 1], resolution)
            for j in range(model.m)]
    U = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, model.m)
    nsq = np.einsum("ij,ij->i", U, U)
    keys = tuple(U[:, j] for j in reversed(range(model.m))) + (nsq,)
    return U[np.lexsort(keys)]


def _scan_numpy(policy: NominalPolicy, model: SystemModel, X: np.ndarray):
    Ug = policy.control_grid
    Xn = integrate_interval(model, X[:, None, :], Ug[None, :, :],
                            policy.delta, policy.substeps)
    Vn = policy.clf.v(Xn)
    idx = np.argmin(Vn, axis=1)
    return idx, Vn[np.arange(len(X)), idx]


def lookahead_scan(policy: NominalPolicy, model: SystemModel, X: np.ndarray):
    """(grid index, achieved V) of the one-step lookahead minimum per state."""
    X = np.asarray(X, dtype=float)
    if use_numba() and model.name == "nonholonomic" and policy.clf.tag == "clarke4":
        from . import kernels
        return kernels.nominal_scan(np.ascontiguousarray(X),
                                    np.ascontiguousarray(policy.control_grid),
                                    policy.delta, policy.substeps)
    return _scan_numpy(policy, model, X)


def nominal_action(policy: NominalPolicy, model: SystemModel, x_k) -> np.ndarray:
    """Lookahead argmin action; enforces the half-decay contract outside the core."""
    x = np.asarray(x_k, dtype=float)
    idx, vbest = lookahead_scan(policy, model, x[None, :])
    u = policy.control_grid[int(idx[0])]
    nrm = float(np.linalg.norm(x))
    if nrm > policy.r_star:
        vx = float(policy.clf.v(x[None])[0])
        w_x = float(policy.clf.w(x[None])[0])
        need = vx - 0.5 * policy.delta * w_x + policy.decay_tol
        if not (float(vbest[0]) <= need):
            raise DecayInfeasible(
                f"no grid action achieves the half decay at |x|={nrm:.3g} "
                f"with delta={policy.delta:.3g}")
    return u


@dataclass
class DecayReport:
    delta: float
    substeps: int
    grid_size: int
    total: int
    passed: int
    failed: int
    worst_margin: float      # min over states of (required level - achieved V)

    def to_dict(self) -> dict:
        return asdict(self)


def verify_decay(policy: NominalPolicy, model: SystemModel,
                 points: np.ndarray) -> DecayReport:
    """Check the half-decay inequality at every point; failures are data."""
    X = np.asarray(points, dtype=float)
    _, vbest = lookahead_scan(policy, model, X)
    vx = policy.clf.v(X)
    w_x = policy.clf.w(X)
    need = vx - 0.5 * policy.delta * w_x + policy.decay_tol
    ok = vbest <= need
    margin = need - vbest
    return DecayReport(delta=policy.delta, substeps=policy.substeps,
                       grid_size=len(policy.control_grid), total=len(X),
                       passed=int(ok.sum()), failed=int((~ok).sum()),
                       worst_margin=float(margin.min()))


def certify_delta_bar(model: SystemModel, clf: ClfPair, grid: np.ndarray,
                      points: np.ndarray, candidates, substeps: int = 10,
                      r_star: float = 0.0):
    """Largest candidate sampling period passing verify_decay everywhere.

    Returns (delta_bar, {candidate: DecayReport}).  Candidates are tried
    largest first and the search stops at the first one that passes.
    """
    reports = {}
    for delta in sorted(candidates, reverse=True):
        policy = NominalPolicy(control_grid=grid, clf=clf, delta=float(delta),
                               substeps=substeps, r_star=r_star)
        rep = verify_decay(policy, model, points)
        reports[float(delta)] = rep
        if rep.failed == 0:
            return float(delta), reports
    raise DecayInfeasible(
        "no candidate sampling period passes the decay check on the grid")
