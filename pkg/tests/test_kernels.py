"""Cross-path equality: every compiled kernel against its NumPy twin.

These comparisons are exact by design; the two implementations share
operation order, so any drift means one side was reassociated.
"""
import numpy as np
import pytest

from clfac import kernels
from clfac.actor_critic import (AcProblem, _refine, _state_scalars,
                                bellman_error_sq, case_study_reward,
                                constraint_margins, draw_thetas, stage1_best)
from clfac.critic import THETA_SHARP, critic_value
from clfac.dynamics import integrate_interval, integrate_with_cost
from clfac.nominal import NominalPolicy, _scan_numpy, control_grid
from clfac.simulator import RunConfig, run_closed_loop


@pytest.fixture(scope="module")
def problem(suite):
    return AcProblem(model=suite.model, clf=suite.clf,
                     activation=suite.activation, weight_set=suite.weight_set,
                     radii=suite.radii, bounds=suite.bounds,
                     reward=case_study_reward, eps1=5e-8, eps2=5e-8,
                     eps3=5e-8, delta=0.01, control_grid=suite.control_grid,
                     q1=suite.q1, q2=suite.q2)


def _random_states(n, seed, scale=2.0):
    return np.random.default_rng(seed).uniform(-scale, scale, size=(n, 3))


def test_value_kernels_exact(suite):
    X = _random_states(200, 0)
    V = suite.clf.v(X)
    for i, x in enumerate(X):
        assert kernels._v(x[0], x[1], x[2]) == V[i]
    th = np.array([1.7, 0.6, 1.2, 0.55])
    for x in X[:50]:
        assert kernels._jhat(th[0], th[1], th[2], th[3], x[0], x[1],
                             x[2]) == critic_value(suite.activation, th, x)


def test_reward_kernel_exact():
    rng = np.random.default_rng(1)
    for _ in range(50):
        x = rng.uniform(-2, 2, 3)
        u = rng.uniform(-1, 1, 2)
        assert kernels._reward(x[0], x[1], x[2], u[0],
                               u[1]) == case_study_reward(x, u)


def test_integrator_kernel_exact(suite):
    rng = np.random.default_rng(2)
    for _ in range(40):
        x = rng.uniform(-2, 2, 3)
        u = rng.uniform(-1, 1, 2)
        y = integrate_interval(suite.model, x, u, 0.01, 10)
        k = kernels._rk4(x[0], x[1], x[2], u[0], u[1], 0.01, 10)
        assert (y[0], y[1], y[2]) == k


def test_cost_integrator_kernel_exact(suite):
    rng = np.random.default_rng(3)
    for _ in range(40):
        x = rng.uniform(-2, 2, 3)
        u = rng.uniform(-1, 1, 2)
        y, c = integrate_with_cost(suite.model, case_study_reward, x, u,
                                   0.02, 10)
        k1, k2, k3, kc = kernels._rk4_cost(x[0], x[1], x[2], u[0], u[1],
                                           0.02, 10)
        assert (y[0], y[1], y[2]) == (k1, k2, k3)
        assert c == kc


def test_nominal_scan_kernel_exact(suite):
    pol = NominalPolicy(control_grid=suite.control_grid, clf=suite.clf,
                        delta=0.01, substeps=10)
    X = _random_states(60, 4)
    idx_np, v_np = _scan_numpy(pol, suite.model, X)
    idx_k, v_k = kernels.nominal_scan(X, pol.control_grid, 0.01, 10)
    assert np.array_equal(idx_np, idx_k)
    assert np.array_equal(v_np, v_k)


def test_margins_kernel_exact(suite, problem):
    rng = np.random.default_rng(5)
    ws = suite.weight_set
    for _ in range(30):
        x = rng.uniform(-2, 2, 3)
        u = rng.uniform(-1, 1, 2)
        th = draw_thetas(rng, 1, ws)[0]
        thp = draw_thetas(rng, 1, ws)[0]
        _, w_x, q1x, q2x = _state_scalars(problem, x)
        obj_k, m1, m2, m3, m4 = kernels.margins_one(
            x[0], x[1], x[2], u[0], u[1], th, thp, problem.delta,
            problem.eps1, problem.eps2, problem.eps3, w_x, q1x, q2x)
        m_np = constraint_margins(problem, x, u, th, thp)
        assert np.array_equal(np.array([m1, m2, m3, m4]), m_np)
        assert obj_k == bellman_error_sq(problem, x, u, th, thp)


def test_stage1_kernel_exact(suite, problem):
    rng = np.random.default_rng(6)
    for trial in range(12):
        x = rng.uniform(-1.6, 1.6, 3)
        TH = np.concatenate([THETA_SHARP[None, :], THETA_SHARP[None, :],
                             draw_thetas(rng, 16, suite.weight_set)])
        _, w_x, q1x, q2x = _state_scalars(problem, x)
        got = kernels.stage1_scan(x[0], x[1], x[2], problem.control_grid, TH,
                                  problem.delta, problem.eps1, problem.eps2,
                                  problem.eps3, w_x, q1x, q2x,
                                  problem.margin_tol)
        want = stage1_best(problem, x, THETA_SHARP, TH)
        assert (got[0], got[1]) == (want[0], want[1])
        assert got[2] == want[2] or (np.isinf(got[2]) and np.isinf(want[2]))
        assert got[3] == want[3]


def test_refine_kernel_exact(suite, problem):
    rng = np.random.default_rng(7)
    ws = suite.weight_set
    for _ in range(6):
        x = rng.uniform(-1.4, 1.4, 3)
        TH = np.concatenate([THETA_SHARP[None, :],
                             draw_thetas(rng, 8, ws)])
        iu, it, f0, _ = stage1_best(problem, x, THETA_SHARP, TH)
        if iu < 0:
            continue
        u0 = problem.control_grid[iu]
        th0 = TH[it]
        _, w_x, q1x, q2x = _state_scalars(problem, x)
        ku1, ku2, kth, kf = kernels.refine_search(
            x[0], x[1], x[2], u0[0], u0[1], th0.copy(), f0, THETA_SHARP,
            problem.delta, problem.eps1, problem.eps2, problem.eps3,
            w_x, q1x, q2x, float(ws.theta_lo[0]), float(ws.theta_hi[0]),
            problem.refine_du0, problem.refine_dth0,
            problem.refine_max_evals, problem.refine_du_min,
            problem.margin_tol)
        nu, nth, nf = _refine(problem, x, u0, th0, f0, THETA_SHARP)
        assert (ku1, ku2) == (nu[0], nu[1])
        assert np.array_equal(kth, nth)
        assert kf == nf


def test_cost_over_steps_matches_python(suite):
    rng = np.random.default_rng(8)
    X = rng.uniform(-1, 1, size=(21, 3))
    U = rng.uniform(-1, 1, size=(20, 2))
    total = 0.0
    for k in range(20):
        _, c = integrate_with_cost(suite.model, case_study_reward, X[k],
                                   U[k], 0.01, 10)
        total += c
    assert kernels.cost_over_steps(X, U, 20, 0.01, 10) == total


def _run(suite, controller, steps=300):
    cfg = RunConfig(controller=controller,
                    x0=np.array([-2.0, -1.5, 0.4]), delta=0.01, r=0.1,
                    R=2.6, eps1=5e-8, eps2=5e-8, eps3=5e-8,
                    horizon_steps=steps, substeps=10, dwell_steps=200,
                    seed=2024)
    return run_closed_loop(cfg, suite)


@pytest.mark.parametrize("controller", ["nominal", "ac"])
def test_closed_loop_paths_bitwise_equal(suite, monkeypatch, controller):
    """Full-log equality between the compiled driver and the NumPy driver."""
    if not suite.use_kernels():
        pytest.skip("compiled path disabled in this environment")
    log_fast = _run(suite, controller)
    monkeypatch.setattr(suite, "use_kernels", lambda: False)
    log_slow = _run(suite, controller)
    for field in ("states", "controls", "thetas", "jhat", "v", "margins",
                  "fallback", "core"):
        assert np.array_equal(getattr(log_fast, field),
                              getattr(log_slow, field)), field
    assert log_fast.reach_index == log_slow.reach_index
    assert log_fast.total_cost == log_slow.total_cost
    assert log_fast.fallback_count == log_slow.fallback_count
