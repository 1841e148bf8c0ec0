"""Closed-loop runner, invariant monitors, costs, and the cost-ratio sweep.

A run iterates: read the state, pick a control (baseline lookahead, or the
constrained actor-critic solve outside the core ball), hold it for one
sampling interval, log everything.  Two drivers implement the loop: a
compiled one (kernels module) and a NumPy one; they share random draws and
operation order, so their logs match bitwise.  The contour sweep runs both
controllers per grid point and reports the percentage cost ratio.
"""
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .actor_critic import AcProblem, constraint_margins, draw_thetas, solve_ac
from .critic import THETA_SHARP, critic_value
from .dynamics import integrate_interval
from .errors import CostUndefined, IntegrationDiverged, RatioUndefined
from .nominal import NominalPolicy, lookahead_scan

CSV_HEADER = ("k,t,x1,x2,x3,u1,u2,theta1,theta2,theta3,theta4,"
              "Jhat,V,m1,m2,m3,m4,fallback,core")


@dataclass(frozen=True)
class RunConfig:
    controller: str              # "nominal" | "ac"
    x0: np.ndarray
    delta: float
    r: float
    R: float
    eps1: float
    eps2: float
    eps3: float
    horizon_steps: int
    substeps: int = 10
    dwell_steps: int = 200
    seed: int = 0
    control_resolution: int = 21
    theta_draws: int = 32
    refine_max_evals: int = 200

    def validate(self) -> None:
        if self.controller not in ("nominal", "ac"):
            raise ValueError(f"unknown controller {self.controller!r}")
        if self.horizon_steps < 0 or self.delta <= 0.0 or self.substeps < 1:
            raise ValueError("bad horizon, sampling period, or substeps")
        if float(np.linalg.norm(self.x0)) > self.R + 1e-12:
            raise ValueError("initial state outside the starting ball")


@dataclass
class TrajectoryLog:
    """Step records plus one terminal record (control columns zeroed there)."""
    delta: float
    controller: str
    n_steps: int
    states: np.ndarray           # (n_steps + 1, 3)
    controls: np.ndarray         # (n_steps + 1, 2)
    thetas: np.ndarray           # (n_steps + 1, 4)
    jhat: np.ndarray             # (n_steps + 1,)
    v: np.ndarray                # (n_steps + 1,)
    margins: np.ndarray          # (n_steps + 1, 4)
    fallback: np.ndarray         # (n_steps + 1,) uint8
    core: np.ndarray             # (n_steps + 1,) uint8
    reach_index: Optional[int]
    reaching_time: Optional[float]
    total_cost: Optional[float]
    fallback_count: int
    soft_decay_count: int
    boundedness_violations: int

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.delta

    def to_csv(self, path: str) -> None:
        with open(path, "w") as fh:
            fh.write(CSV_HEADER + "\n")
            for k in range(self.n_steps + 1):
                row = [repr(k), repr(k * self.delta)]
                row += [repr(float(v)) for v in self.states[k]]
                row += [repr(float(v)) for v in self.controls[k]]
                row += [repr(float(v)) for v in self.thetas[k]]
                row += [repr(float(self.jhat[k])), repr(float(self.v[k]))]
                row += [repr(float(v)) for v in self.margins[k]]
                row += [repr(int(self.fallback[k])), repr(int(self.core[k]))]
                fh.write(",".join(row) + "\n")


def read_trajectory_csv(path: str):
    """Parse a trajectory CSV back into column arrays keyed by header name."""
    with open(path) as fh:
        header = fh.readline().strip()
        if header != CSV_HEADER:
            raise ValueError(f"unexpected trajectory header in {path}")
        raw = [line.strip().split(",") for line in fh if line.strip()]
    cols = np.array(raw, dtype=float).T
    names = CSV_HEADER.split(",")
    return {name: cols[i] for i, name in enumerate(names)}


def _final_streak_start(inside: np.ndarray) -> Optional[int]:
    """Start index of the trailing all-true run, None when the last entry is false."""
    if len(inside) == 0 or not inside[-1]:
        return None
    j = len(inside) - 1
    while j > 0 and inside[j - 1]:
        j -= 1
    return j


def _pregenerate_draws(rng: np.random.Generator, horizon: int, count: int,
                       weight_set) -> np.ndarray:
    """Per-step weight candidates, consumed by step index in both drivers."""
    out = np.empty((max(horizon, 1), count, len(weight_set.theta_lo)))
    for k in range(horizon):
        out[k] = draw_thetas(rng, count, weight_set)
    return out


def _drive_numpy(suite, config: RunConfig, problem: AcProblem,
                 policy: NominalPolicy, THD: np.ndarray):
    """Reference driver; mirrors kernels.closed_loop operation for operation."""
    horizon = config.horizon_steps
    n3 = suite.model.n
    X = np.zeros((horizon + 1, n3))
    U = np.zeros((horizon, 2))
    TH = np.zeros((horizon, 4))
    JH = np.zeros(horizon)
    VV = np.zeros(horizon)
    MM = np.zeros((horizon, 4))
    FB = np.zeros(horizon, np.uint8)
    CORE = np.zeros(horizon, np.uint8)
    x = np.array(config.x0, dtype=float)
    X[0] = x
    thp = THETA_SHARP.copy()
    fb_count = 0
    soft_count = 0
    streak = 0
    n = 0
    status = 0
    is_ac = config.controller == "ac"
    r_star = policy.r_star
    for k in range(horizon):
        x1, x2, x3 = float(x[0]), float(x[1]), float(x[2])
        nsq = (x1 * x1 + x2 * x2) + x3 * x3
        nrm = np.sqrt(nsq)
        vx = float(suite.clf.v(x[None])[0])
        core = nrm <= r_star
        fb = False
        if core or not is_ac:
            idx, vbest = lookahead_scan(policy, suite.model, x[None, :])
            u = policy.control_grid[int(idx[0])].copy()
            th_k = thp
            if (not core) and (not is_ac):
                w_x = float(suite.clf.w(x[None])[0])
                need = vx - 0.5 * config.delta * w_x + policy.decay_tol
                if not (float(vbest[0]) <= need):
                    soft_count += 1
                    fb = True
        else:
            idx, _ = lookahead_scan(policy, suite.model, x[None, :])
            u_fb = policy.control_grid[int(idx[0])]
            sol = solve_ac(problem, x, thp, (u_fb, THETA_SHARP.copy()),
                           draws=THD[k])
            u = np.array(sol.u, dtype=float)
            th_k = np.array(sol.theta, dtype=float)
            if sol.fallback_used:
                fb = True
                fb_count += 1
        m = constraint_margins(problem, x, u, th_k, thp)
        U[k] = u
        TH[k] = th_k
        JH[k] = critic_value(suite.activation, th_k, x)
        VV[k] = vx
        MM[k] = m
        FB[k] = 1 if fb else 0
        CORE[k] = 1 if core else 0
        thp = np.array(th_k, dtype=float)
        x = integrate_interval(suite.model, x, u, config.delta, config.substeps)
        n = k + 1
        X[n] = x
        y1, y2, y3 = float(x[0]), float(x[1]), float(x[2])
        nn = np.sqrt((y1 * y1 + y2 * y2) + y3 * y3)
        if nn <= config.r:
            streak += 1
        else:
            streak = 0
        if streak >= config.dwell_steps:
            break
    return X, U, TH, JH, VV, MM, FB, CORE, n, fb_count, soft_count, status


def _drive_kernels(suite, config: RunConfig, problem: AcProblem,
                   policy: NominalPolicy, THD: np.ndarray):
    from . import kernels
    horizon = config.horizon_steps
    X = np.zeros((horizon + 1, 3))
    U = np.zeros((horizon, 2))
    TH = np.zeros((horizon, 4))
    JH = np.zeros(horizon)
    VV = np.zeros(horizon)
    MM = np.zeros((horizon, 4))
    FB = np.zeros(horizon, np.uint8)
    CORE = np.zeros(horizon, np.uint8)
    mode = 1 if config.controller == "ac" else 0
    q2_c = float(problem.weight_set.theta_bar) * float(suite.bounds.L_phi)
    n, fb_count, soft_count, status = kernels.closed_loop(
        mode, np.ascontiguousarray(config.x0, dtype=float),
        np.ascontiguousarray(policy.control_grid), THD, THETA_SHARP.copy(),
        config.delta, config.substeps, horizon, config.dwell_steps,
        config.r, policy.r_star, suite.clf.kappa_w,
        problem.eps1, problem.eps2, problem.eps3,
        suite.q1_lower_coeff, float(problem.weight_set.theta_underbar), q2_c,
        policy.decay_tol, problem.margin_tol,
        problem.refine_du0, problem.refine_dth0, problem.refine_max_evals,
        problem.refine_du_min,
        float(problem.weight_set.theta_lo[0]),
        float(problem.weight_set.theta_hi[0]),
        X, U, TH, JH, VV, MM, FB, CORE)
    return X, U, TH, JH, VV, MM, FB, CORE, n, fb_count, soft_count, status


def run_closed_loop(config: RunConfig, suite) -> TrajectoryLog:
    """Run one sample-and-hold trajectory and assemble its full log.

    Stops early once the state has stayed inside the target ball for the
    dwell count.  The reaching index is the start of the trailing
    in-ball streak of logged states; cost accumulates over the steps
    before it.  States beyond the outer certified radius are counted as
    boundedness violations, not raised.
    """
    config.validate()
    horizon = config.horizon_steps
    problem = suite.make_problem(config)
    policy = suite.make_policy(config)
    if config.controller == "ac" and horizon > 0:
        rng = np.random.default_rng(config.seed)
        THD = _pregenerate_draws(rng, horizon, config.theta_draws,
                                 suite.weight_set)
    else:
        THD = np.ones((1, 1, 4))
    if horizon == 0:
        x = np.array(config.x0, dtype=float)
        nrm = float(np.linalg.norm(x))
        reach = 0 if nrm <= config.r else None
        return TrajectoryLog(
            delta=config.delta, controller=config.controller, n_steps=0,
            states=x[None, :], controls=np.zeros((1, 2)),
            thetas=THETA_SHARP[None, :].copy(),
            jhat=np.array([critic_value(suite.activation, THETA_SHARP, x)]),
            v=np.array([float(suite.clf.v(x[None])[0])]),
            margins=np.zeros((1, 4)), fallback=np.zeros(1, np.uint8),
            core=np.array([1 if nrm <= suite.radii.r_star else 0], np.uint8),
            reach_index=reach,
            reaching_time=None if reach is None else 0.0,
            total_cost=None if reach is None else 0.0,
            fallback_count=0, soft_decay_count=0,
            boundedness_violations=int(nrm > suite.radii.R_star))
    if suite.use_kernels():
        out = _drive_kernels(suite, config, problem, policy, THD)
    else:
        out = _drive_numpy(suite, config, problem, policy, THD)
    X, U, TH, JH, VV, MM, FB, CORE, n, fb_count, soft_count, status = out
    if status != 0:
        raise IntegrationDiverged("closed-loop state left the finite range")
    xs = X[: n + 1]
    norms = np.sqrt(np.einsum("ij,ij->i", xs, xs))
    inside = norms <= config.r
    reach = _final_streak_start(inside)
    term_th = TH[n - 1] if n > 0 else THETA_SHARP.copy()
    log = TrajectoryLog(
        delta=config.delta, controller=config.controller, n_steps=n,
        states=xs.copy(),
        controls=np.concatenate([U[:n], np.zeros((1, 2))]),
        thetas=np.concatenate([TH[:n], term_th[None, :]]),
        jhat=np.concatenate(
            [JH[:n], [critic_value(suite.activation, term_th, xs[n])]]),
        v=np.concatenate([VV[:n], [float(suite.clf.v(xs[n][None])[0])]]),
        margins=np.concatenate([MM[:n], np.zeros((1, 4))]),
        fallback=np.concatenate([FB[:n], np.zeros(1, np.uint8)]),
        core=np.concatenate(
            [CORE[:n],
             [1 if norms[n] <= suite.radii.r_star else 0]]).astype(np.uint8),
        reach_index=reach,
        reaching_time=None if reach is None else reach * config.delta,
        total_cost=None,
        fallback_count=fb_count, soft_decay_count=soft_count,
        boundedness_violations=int((norms > suite.radii.R_star).sum()))
    if reach is not None:
        log.total_cost = quasi_ih_cost(log, suite.reward,
                                       suite.make_cost_integrator(config.substeps))
    return log


def quasi_ih_cost(log: TrajectoryLog, reward, integrator) -> float:
    """Integral of the running reward over the steps before the reaching index.

    ``integrator(reward, x, u, delta) -> (x_end, cost)`` must integrate
    the state together with the running cost over one held interval; the
    suite provides one bound to its model and substep count.
    """
    if log.reach_index is None:
        raise CostUndefined("reaching time undefined; horizon too short")
    total = 0.0
    for k in range(int(log.reach_index)):
        _, c = integrator(reward, log.states[k], log.controls[k], log.delta)
        total += c
    return float(total)


def saturation_fraction(log: TrajectoryLog, level: float = 0.999) -> float:
    """Fraction of applied steps with any input component at or beyond level."""
    if log.n_steps == 0:
        return 0.0
    U = log.controls[: log.n_steps]
    return float(np.mean(np.max(np.abs(U), axis=1) >= level))


def cost_ratio(x0, config_pair, suite) -> float:
    """100 * (actor-critic cost) / (baseline cost) from the same start.

    Zero-over-zero (both runs start inside the target ball) is 100 by
    convention; any other failure to define the quotient raises.
    """
    cfg_nom, cfg_ac = config_pair
    x0 = np.asarray(x0, dtype=float)
    log_n = run_closed_loop(replace(cfg_nom, x0=x0, controller="nominal"), suite)
    log_a = run_closed_loop(replace(cfg_ac, x0=x0, controller="ac"), suite)
    if log_n.reach_index is None or log_a.reach_index is None:
        raise RatioUndefined("a run failed to reach the target ball")
    cn, ca = log_n.total_cost, log_a.total_cost
    if cn == 0.0 and ca == 0.0:
        return 100.0
    if cn == 0.0:
        raise RatioUndefined("baseline cost is zero with nonzero comparison cost")
    return 100.0 * ca / cn


_WORKER_CTX = {}


def _contour_point(task):
    i, j, a, b = task
    suite = _WORKER_CTX["suite"]
    cfg = _WORKER_CTX["config"]
    x3_0 = _WORKER_CTX["x3_0"]
    seed_root = _WORKER_CTX["seed"]
    x0 = np.array([a, b, x3_0])
    seed = int(np.random.SeedSequence([seed_root, i, j]).generate_state(1)[0])
    cfg_pt = replace(cfg, seed=seed)
    try:
        log_n = run_closed_loop(replace(cfg_pt, x0=x0, controller="nominal"),
                                suite)
        log_a = run_closed_loop(replace(cfg_pt, x0=x0, controller="ac"), suite)
    except IntegrationDiverged:
        return i, j, a, b, None, None, None
    rn = log_n.reaching_time
    ra = log_a.reaching_time
    if rn is None or ra is None:
        return i, j, a, b, None, ra, rn
    cn, ca = log_n.total_cost, log_a.total_cost
    if cn == 0.0 and ca == 0.0:
        ratio = 100.0
    elif cn == 0.0:
        ratio = None
    else:
        ratio = 100.0 * ca / cn
    return i, j, a, b, ratio, ra, rn


def contour_sweep(suite, base_config: RunConfig, x1_range, x2_range,
                  density: int, x3_0: float, seed: int, workers: int = 1):
    """Cost ratios over a start-state grid; each point runs both controllers.

    Points are independent; with workers > 1 they run in forked processes
    (the parent must have the suite built and kernels warm).  Results are
    ordered by grid index regardless of scheduling, and a point whose
    ratio is undefined stays in the output with empty fields.
    """
    if density < 1:
        raise ValueError("grid density must be at least 1")
    a_vals = np.linspace(x1_range[0], x1_range[1], density)
    b_vals = np.linspace(x2_range[0], x2_range[1], density)
    tasks = [(i, j, float(a_vals[i]), float(b_vals[j]))
             for i in range(density) for j in range(density)]
    _WORKER_CTX.update(suite=suite, config=base_config, x3_0=x3_0, seed=seed)
    if workers > 1 and len(tasks) > 1:
        import multiprocessing as mp
        ctx = mp.get_context("fork")
        with ctx.Pool(processes=workers) as pool:
            rows = pool.map(_contour_point, tasks, chunksize=1)
    else:
        rows = [_contour_point(t) for t in tasks]
    rows.sort(key=lambda t: (t[0], t[1]))
    return rows


def margin_violations(log: TrajectoryLog, tol: float = 1e-9) -> int:
    """Applied steps outside the core ball whose worst constraint slack is below -tol."""
    if log.n_steps == 0:
        return 0
    n = log.n_steps
    worst = log.margins[:n].min(axis=1)
    outside = log.core[:n] == 0
    return int(((worst < -tol) & outside).sum())


def critic_decay_violations(log: TrajectoryLog, w_bar: float,
                            tol: float = 1e-9) -> int:
    """Steps outside the core ball where the critic fell slower than w_bar*delta/10.

    Compares consecutive logged critic values (next step's weights at the
    next state against this step's) with the required decrement.
    """
    if log.n_steps == 0:
        return 0
    n = log.n_steps
    diff = log.jhat[1: n + 1] - log.jhat[:n]
    thr = -(w_bar * log.delta) / 10.0 + tol
    outside = log.core[:n] == 0
    return int(((diff > thr) & outside).sum())


def contour_rows_to_csv(rows, path: str) -> None:
    with open(path, "w") as fh:
        fh.write("x1_0,x2_0,ratio_pct,reach_time_ac,reach_time_nom\n")
        for _, _, a, b, ratio, ra, rn in rows:
            cells = [repr(float(a)), repr(float(b)),
                     "" if ratio is None else repr(float(ratio)),
                     "" if ra is None else repr(float(ra)),
                     "" if rn is None else repr(float(rn))]
            fh.write(",".join(cells) + "\n")
