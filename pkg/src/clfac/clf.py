"""Lyapunov machinery and the bounds pipeline.

Holds the nonsmooth Lyapunov function for the shipped case study, its
quadratic envelopes, the generalized lower directional derivative used to
check admissible decay, and the estimation pipeline for every derived
constant (Lipschitz constants, suprema, radii, sampling-period bounds,
relaxation windows).

All estimates use deterministic grids.  Suprema and Lipschitz constants
are inflated by a 1.1 safety factor; the annulus decay infimum is left
uninflated because its grid attains the infimum at the inner radius for
the monotone decay functions used here.
"""
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .critic import LAM_MIN, LAM_MAX, Envelope
from .errors import EnvelopeOrderViolation, InvalidRadii, NumericalFailure, SamplingTooCoarse

INFLATE = 1.1
DEFAULT_KAPPA_W = 0.1     # calibration result for both shipped configurations
GLDD_TAU0 = 1e-3
GLDD_LEVELS = 12


@dataclass(frozen=True)
class ClfPair:
    """Lyapunov function, its decay-rate function, and norm envelopes.

    ``tag`` identifies built-in pairs so compiled drivers specialized to
    them can be selected; custom pairs leave it empty.
    """
    v: Callable[[np.ndarray], np.ndarray]
    w: Callable[[np.ndarray], np.ndarray]
    alpha1: Callable[[np.ndarray], np.ndarray]
    alpha2: Callable[[np.ndarray], np.ndarray]
    kappa_w: float
    tag: str = ""


def v_clarke(X: np.ndarray) -> np.ndarray:
    """x1^2 + x2^2 + 2 x3^2 - 2 |x3| sqrt(x1^2 + x2^2), batched."""
    x1, x2, x3 = X[..., 0], X[..., 1], X[..., 2]
    s = np.sqrt(x1 * x1 + x2 * x2)
    p1 = x1 * x1
    p2 = x2 * x2
    p3 = 2.0 * (x3 * x3)
    p4 = -2.0 * np.abs(x3) * s
    return ((p1 + p2) + p3) + p4


def clarke_clf(kappa_w: float = DEFAULT_KAPPA_W) -> ClfPair:
    """The case-study Lyapunov pair.

    The decay function is proportional, w = kappa_w * V; the default
    coefficient is the largest ladder value that passes the grid decay
    check for the shipped configurations (see calibrate_kappa).
    """

    def w(X):
        return kappa_w * v_clarke(np.asarray(X, dtype=float))

    def alpha1(s):
        s = np.asarray(s, dtype=float)
        return (LAM_MIN * s) * s

    def alpha2(s):
        s = np.asarray(s, dtype=float)
        return (LAM_MAX * s) * s

    return ClfPair(v=lambda X: v_clarke(np.asarray(X, dtype=float)),
                   w=w, alpha1=alpha1, alpha2=alpha2, kappa_w=kappa_w,
                   tag="clarke4")


def gldd(v_fn, x, direction, tau0: float = GLDD_TAU0,
         levels: int = GLDD_LEVELS) -> float:
    """Lower directional derivative estimate via a shrinking step ladder.

    Minimum of forward difference quotients over tau in
    {tau0, tau0/2, ..., tau0/2^levels}.  Conservative for piecewise-smooth
    functions; exact limits are not computable numerically.
    """
    x = np.asarray(x, dtype=float)
    v = np.asarray(direction, dtype=float)
    if not (np.isfinite(x).all() and np.isfinite(v).all()):
        raise NumericalFailure("non-finite arguments")
    if float(v @ v) == 0.0:
        return 0.0
    v0 = float(v_fn(x[None])[0])
    best = np.inf
    tau = tau0
    for _ in range(levels + 1):
        q = (float(v_fn((x + tau * v)[None])[0]) - v0) / tau
        if not np.isfinite(q):
            raise NumericalFailure("non-finite difference quotient")
        if q < best:
            best = q
        tau *= 0.5
    return best


# ---------------------------------------------------------------------------
# deterministic grids

def direction_set(n_polar: int = 9, n_azim: int = 12) -> np.ndarray:
    """Unit directions: both poles, near-pole rings, and uniform polar rings.

    The tight rings at polar angles 0.02 and 0.1 (and their mirrors) catch
    the worst-decay directions of the case-study Lyapunov function, which
    sits near the vertical axis.
    """
    out = [(0.0, 0.0, 1.0), (0.0, 0.0, -1.0)]
    pol = np.linspace(0.0, np.pi, n_polar + 2)[1:-1]
    pol = np.concatenate([[0.02, 0.1], pol, [np.pi - 0.1, np.pi - 0.02]])
    for t in pol:
        for a in np.linspace(0.0, 2.0 * np.pi, n_azim, endpoint=False):
            out.append((np.sin(t) * np.cos(a), np.sin(t) * np.sin(a), np.cos(t)))
    D = np.array(out)
    return D / np.linalg.norm(D, axis=1, keepdims=True)


def ball_grid(radius: float, density: int, n: int = 3) -> np.ndarray:
    ax = np.linspace(-radius, radius, density)
    P = np.stack(np.meshgrid(*([ax] * n), indexing="ij"), axis=-1).reshape(-1, n)
    keep = np.einsum("ij,ij->i", P, P) <= radius * radius * (1.0 + 1e-12)
    return P[keep]


def _directions_for(n: int) -> np.ndarray:
    """Unit directions: the polar set in three dimensions, axis and corner
    directions otherwise (enough for the scalar toys the estimators also
    serve)."""
    if n == 3:
        return direction_set()
    axes = np.concatenate([np.eye(n), -np.eye(n)])
    if n == 1:
        return axes
    corners = np.stack(np.meshgrid(*([[-1.0, 1.0]] * n), indexing="ij"),
                       axis=-1).reshape(-1, n) / np.sqrt(n)
    return np.concatenate([axes, corners])


def annulus_grid(r_star: float, R_star: float, n_polar: int = 9,
                 n_azim: int = 12, n_radial: int = 10, n: int = 3) -> np.ndarray:
    """Directions times geometric radii spanning [r_star, R_star]."""
    D = direction_set(n_polar, n_azim) if n == 3 else _directions_for(n)
    radii = np.geomspace(r_star, R_star, n_radial)
    return (radii[:, None, None] * D[None, :, :]).reshape(-1, n)


def sublevel_annulus_grid(clf: ClfPair, r_star: float, v_cap: float,
                          n_polar: int = 9, n_azim: int = 12,
                          n_radial: int = 10) -> np.ndarray:
    """Annulus restricted to the V-sublevel set {V <= v_cap}.

    Closed-loop trajectories that keep V below its initial supremum stay in
    this set, so decay admissibility only needs to hold here.  Per
    direction d the outer radius solves V(rho d) = v_cap using degree-2
    homogeneity of V.
    """
    D = direction_set(n_polar, n_azim)
    VD = clf.v(D)
    rho_cap = np.sqrt(v_cap / VD)
    pts = []
    for d, rc in zip(D, rho_cap):
        radii = np.geomspace(r_star, max(rc, r_star * (1.0 + 1e-9)), n_radial)
        pts.append(radii[:, None] * d[None, :])
    return np.concatenate(pts)


# ---------------------------------------------------------------------------
# radii and derived constants

@dataclass
class RadiiSpec:
    R: float
    r: float
    eta_R: float
    eta_r: float
    R_star: float
    r_star: float
    v_star: float
    J_bar: float

    def validate(self) -> None:
        if not (0.0 < self.r_star <= self.r < self.R < self.R_star):
            raise InvalidRadii(
                f"need 0 < r_star <= r < R < R_star, got "
                f"r_star={self.r_star}, r={self.r}, R={self.R}, R_star={self.R_star}")


@dataclass
class BoundsReport:
    L_f: float
    f_bar: float
    L_phi: float
    L_V: float
    w_bar: float
    grid_density: int
    kappa_w: float
    delta_bar: Optional[float] = None
    delta0_bar: Optional[float] = None
    delta1_bar: Optional[float] = None
    eps1_window: Optional[tuple] = None
    eps2_window: Optional[tuple] = None
    eps3_window: Optional[tuple] = None

    def validate(self) -> None:
        if not (self.w_bar > 0.0):
            raise InvalidRadii("w_bar must be positive")
        if self.delta_bar is not None and self.delta1_bar is not None:
            if not (0.0 < self.delta1_bar <= self.delta0_bar <= self.delta_bar):
                raise InvalidRadii("sampling bounds must be ordered")


def estimate_jbar(activation, weight_set, R: float, density: int = 21) -> float:
    """Supremum of the critic over ball of radius R times the weight set.

    For the shipped feature signs the per-state maximum over weights is
    attained at the componentwise upper bound on the nonnegative features
    and the lower bound on the nonpositive one, so the grid maximum is
    closed-form per state.  Inflated by the safety factor.
    """
    X = ball_grid(R, density)
    P = activation.phi(X)
    hi = weight_set.theta_hi
    lo = weight_set.theta_lo
    best = np.where(P >= 0.0, hi, lo) * P
    return float(best.sum(axis=-1).max()) * INFLATE


def compute_radii(q1: Envelope, q2: Envelope, R: float, r: float,
                  eta_R: float, J_bar: float, eta_r: float = 0.05) -> RadiiSpec:
    """Outer and core radii from the critic envelopes.

    R_star solves q1(R_star) = J_bar + eta_R; v_star = q1(r);
    r_star solves q2(r_star) = v_star / 2.
    """
    if not (0.0 < r < R) or eta_R <= 0.0:
        raise InvalidRadii("need 0 < r < R and eta_R > 0")
    R_star = q1.inverse(J_bar + eta_R)
    # envelope order on the working interval [0, R_star]
    ss = np.linspace(0.0, R_star, 256)[1:]
    if (np.asarray(q1(ss)) > np.asarray(q2(ss)) * (1.0 + 1e-12)).any():
        raise EnvelopeOrderViolation("q1 exceeds q2 on the bracketing interval")
    v_star = float(q1(r))
    r_star = q2.inverse(v_star / 2.0)
    spec = RadiiSpec(R=R, r=r, eta_R=eta_R, eta_r=eta_r, R_star=R_star,
                     r_star=r_star, v_star=v_star, J_bar=J_bar)
    if r_star > r:
        raise InvalidRadii(f"core radius {r_star} above target radius {r}")
    spec.validate()
    return spec


def _pair_grid(R_star: float, density: int, n: int = 3) -> tuple:
    """Point pairs for Lipschitz quotients: interior ball grid plus shells."""
    pts = ball_grid(R_star, density, n)
    D = direction_set(5, 8) if n == 3 else _directions_for(n)
    shell = np.concatenate([R_star * D, 0.99 * R_star * D, 0.5 * R_star * D])
    pts = np.concatenate([pts, shell])
    n = len(pts)
    iu, ju = np.triu_indices(n, k=1)
    if len(iu) > 400_000:
        stride = len(iu) // 400_000 + 1
        keep = np.arange(0, len(iu), stride)
        iu, ju = iu[keep], ju[keep]
    A, B = pts[iu], pts[ju]
    d = np.linalg.norm(A - B, axis=1)
    ok = d > 1e-9
    return A[ok], B[ok], d[ok]


def lipschitz_constants(model, clf: ClfPair, activation, R_star: float,
                        pair_density: int = 9, u_density: int = 9) -> tuple:
    """(L_f, L_phi, L_V) from pairwise difference quotients, inflated."""
    A, B, d = _pair_grid(R_star, pair_density, getattr(model, "n", 3))
    L_V = float((np.abs(clf.v(A) - clf.v(B)) / d).max()) * INFLATE
    PA = activation.phi(A)
    PB = activation.phi(B)
    L_phi = float((np.linalg.norm(PA - PB, axis=-1) / d).max()) * INFLATE
    ax = np.linspace(model.input_box[:, 0].min(), model.input_box[:, 1].max(),
                     u_density)
    U = np.stack(np.meshgrid(*([ax] * model.m), indexing="ij"), axis=-1).reshape(-1, model.m)
    lf = 0.0
    for u in U:
        FA = model.rhs(A, np.broadcast_to(u, (len(A), model.m)))
        FB = model.rhs(B, np.broadcast_to(u, (len(B), model.m)))
        lf = max(lf, float((np.linalg.norm(FA - FB, axis=-1) / d).max()))
    return lf * INFLATE, L_phi, L_V


def estimate_constants(model, clf: ClfPair, critic_shape, radii: RadiiSpec,
                       grid_density: int = 21) -> BoundsReport:
    """Grid estimates of every proof constant on the outer ball.

    Lipschitz constants come from pairwise quotients, the velocity bound
    from a dense ball-times-input grid (both inflated by 1.1); the annulus
    decay infimum w_bar = inf w / 2 is taken on a direction-radius grid of
    [r_star, R_star] whose inner ring attains the infimum.
    """
    radii.validate()
    if radii.r_star >= radii.R_star:
        raise InvalidRadii("r_star must be below R_star")
    L_f, L_phi, L_V = lipschitz_constants(model, clf, critic_shape, radii.R_star)
    ax = np.linspace(model.input_box[:, 0].min(), model.input_box[:, 1].max(), 9)
    U = np.stack(np.meshgrid(*([ax] * model.m), indexing="ij"), axis=-1).reshape(-1, model.m)
    X = ball_grid(radii.R_star, max(grid_density, 15), model.n)
    fb = 0.0
    for u in U:
        F = model.rhs(X, np.broadcast_to(u, (len(X), model.m)))
        fb = max(fb, float(np.linalg.norm(F, axis=-1).max()))
    f_bar = fb * INFLATE
    ann = annulus_grid(radii.r_star, radii.R_star, n=model.n)
    w_bar = float(clf.w(ann).min()) / 2.0
    report = BoundsReport(L_f=L_f, f_bar=f_bar, L_phi=L_phi, L_V=L_V,
                          w_bar=w_bar, grid_density=grid_density,
                          kappa_w=clf.kappa_w)
    report.validate()
    return report


def sampling_bounds(report: BoundsReport, theta_bar: float,
                    v_star: float) -> tuple:
    """Refined sampling-period bounds from the estimated constants.

    delta0_bar caps the prediction drift against the critic level and the
    decay margin; delta1_bar additionally caps it against the Lyapunov
    Lipschitz constant.
    """
    prod = theta_bar * report.L_phi * report.L_f * report.f_bar
    delta0 = min(report.delta_bar,
                 v_star / (4.0 * prod),
                 report.w_bar / (10.0 * prod))
    delta1 = min(delta0,
                 report.w_bar / (10.0 * report.L_V * report.L_f * report.f_bar))
    return delta0, delta1


def admissible_windows(report: BoundsReport, delta: float) -> tuple:
    """Admissible relaxation windows at sampling period delta.

    eps1 in [3 w_bar delta / 10, w_bar delta / 2], eps2 in [0, w_bar delta / 10],
    eps3 in [w_bar delta / 10, 3 w_bar delta / 10].
    """
    if report.delta1_bar is None:
        raise InvalidRadii("sampling bounds not computed yet")
    if delta > report.delta1_bar:
        raise SamplingTooCoarse(
            f"delta={delta} above certified delta1_bar={report.delta1_bar}")
    wd = report.w_bar * delta
    return ((3.0 * wd / 10.0, wd / 2.0),
            (0.0, wd / 10.0),
            (wd / 10.0, 3.0 * wd / 10.0))


def calibrate_kappa(clf_v, model, points: np.ndarray, control_grid: np.ndarray,
                    ladder=(1.0, 0.5, 0.1, 0.05, 0.01),
                    tau0: float = GLDD_TAU0, levels: int = GLDD_LEVELS) -> tuple:
    """Largest ladder coefficient k with min_u gldd(V, x, f(x,u)) <= -k V(x).

    Returns (kappa, worst_ratio) where worst_ratio is the grid minimum of
    available decay relative to V; kappa is None when even the smallest
    ladder entry fails.
    """
    taus = tau0 / (2.0 ** np.arange(levels + 1))
    F = model.rhs(points[:, None, :], control_grid[None, :, :])
    VX = clf_v(points)[:, None]
    best = np.full((points.shape[0], control_grid.shape[0]), np.inf)
    for t in taus:
        q = (clf_v(points[:, None, :] + t * F) - VX) / t
        best = np.minimum(best, q)
    g = best.min(axis=1)
    V = clf_v(points)
    worst = float((-g / V).min())
    for k in ladder:
        if (g <= -k * V + 1e-15).all():
            return k, worst
    return None, worst
