import numpy as np
import pytest

from clfac.critic import THETA_SHARP
from clfac.dynamics import SystemModel, integrate_with_cost
from clfac.errors import CostUndefined, RatioUndefined
from clfac.simulator import (CSV_HEADER, RunConfig, TrajectoryLog,
                             contour_rows_to_csv, contour_sweep, cost_ratio,
                             critic_decay_violations, margin_violations,
                             quasi_ih_cost, read_trajectory_csv,
                             run_closed_loop, saturation_fraction)


def _cfg(controller="nominal", x0=(-2.0, -1.5, 0.4), horizon=300, **kw):
    base = dict(controller=controller, x0=np.array(x0, dtype=float),
                delta=0.01, r=0.1, R=2.6, eps1=5e-8, eps2=5e-8, eps3=5e-8,
                horizon_steps=horizon, substeps=10, dwell_steps=200, seed=7)
    base.update(kw)
    return RunConfig(**base)


def _hand_log(states, controls, reach_index, delta=0.01, margins=None,
              jhat=None, core=None):
    n = len(controls)
    states = np.asarray(states, dtype=float)
    controls = np.concatenate([np.asarray(controls, dtype=float),
                               np.zeros((1, np.shape(controls)[1]))])
    z = np.zeros(n + 1)
    return TrajectoryLog(
        delta=delta, controller="nominal", n_steps=n, states=states,
        controls=controls, thetas=np.ones((n + 1, 4)),
        jhat=z if jhat is None else np.asarray(jhat, dtype=float), v=z,
        margins=np.zeros((n + 1, 4)) if margins is None else margins,
        fallback=np.zeros(n + 1, np.uint8),
        core=np.zeros(n + 1, np.uint8) if core is None else core,
        reach_index=reach_index,
        reaching_time=None if reach_index is None else reach_index * delta,
        total_cost=None, fallback_count=0, soft_decay_count=0,
        boundedness_violations=0)


def test_config_validation():
    with pytest.raises(ValueError):
        _cfg(controller="pid").validate()
    with pytest.raises(ValueError):
        _cfg(x0=(5.0, 0.0, 0.0)).validate()
    with pytest.raises(ValueError):
        _cfg(delta=-0.1).validate()
    _cfg().validate()


def test_zero_horizon_inside_target(suite):
    log = run_closed_loop(_cfg(x0=(0.01, 0.0, 0.0), horizon=0), suite)
    assert log.n_steps == 0
    assert log.reach_index == 0
    assert log.reaching_time == 0.0
    assert log.total_cost == 0.0


def test_zero_horizon_outside_target(suite):
    log = run_closed_loop(_cfg(horizon=0), suite)
    assert log.reach_index is None
    assert log.total_cost is None
    with pytest.raises(CostUndefined):
        quasi_ih_cost(log, suite.reward, suite.make_cost_integrator(10))


def test_rest_point_stays(suite):
    log = run_closed_loop(_cfg(x0=(0.0, 0.0, 0.0), horizon=50), suite)
    assert np.abs(log.states).max() == 0.0
    assert log.reach_index == 0
    assert log.total_cost == 0.0
    assert log.boundedness_violations == 0


def test_cost_oracle_scalar_decay():
    """States following x(t) = 1 - t under full brake: the integrated
    quadratic reward over the reaching interval is exactly one third."""
    model = SystemModel(name="scalar", n=1, m=1,
                        input_box=np.array([[-1.0, 1.0]]),
                        rhs=lambda x, u: u + 0.0 * x)
    delta, n = 0.01, 100
    states = (1.0 - delta * np.arange(n + 1))[:, None]
    controls = -np.ones((n, 1))
    log = _hand_log(states, controls, reach_index=n, delta=delta)
    reward = lambda x, u: np.einsum("...i,...i->...", x, x)
    integ = lambda rw, x, u, d: integrate_with_cost(model, rw, x, u, d, 10)
    assert quasi_ih_cost(log, reward, integ) == pytest.approx(1.0 / 3.0,
                                                              abs=1e-8)


def test_cost_counts_only_pre_reaching_steps():
    model = SystemModel(name="scalar", n=1, m=1,
                        input_box=np.array([[-1.0, 1.0]]),
                        rhs=lambda x, u: u + 0.0 * x)
    states = np.array([[1.0], [0.5], [0.5]])
    controls = np.array([[-1.0], [0.0]])
    log = _hand_log(states, controls, reach_index=1, delta=0.5)
    reward = lambda x, u: np.ones(np.shape(x)[:-1])
    integ = lambda rw, x, u, d: integrate_with_cost(model, rw, x, u, d, 10)
    # one interval of length 0.5 at unit reward
    assert quasi_ih_cost(log, reward, integ) == pytest.approx(0.5, abs=1e-12)


def test_saturation_counts_level_inclusive():
    states = np.zeros((4, 3))
    controls = np.array([[1.0, 0.0], [0.9995, 0.0], [0.5, 0.3]])
    log = _hand_log(states, controls, reach_index=None)
    assert saturation_fraction(log) == pytest.approx(2.0 / 3.0, abs=0)
    assert saturation_fraction(log, level=0.4) == 1.0


def test_margin_counter_respects_core_mask():
    states = np.zeros((4, 3))
    controls = np.zeros((3, 2))
    margins = np.zeros((4, 4))
    margins[0, 2] = -1e-6
    margins[1, 1] = -1e-6
    core = np.array([0, 1, 0, 0], np.uint8)
    log = _hand_log(states, controls, None, margins=margins, core=core)
    # the step inside the core ball is exempt from the slack requirement
    assert margin_violations(log) == 1
    assert margin_violations(log, tol=1e-5) == 0


def test_critic_decay_counter():
    states = np.zeros((4, 3))
    controls = np.zeros((3, 2))
    jh = np.array([1.0, 0.99, 1.5, 0.2])
    core = np.zeros(4, np.uint8)
    log = _hand_log(states, controls, None, jhat=jh, core=core)
    # rises from 0.99 to 1.5 on an outside step; the others fall fast enough
    assert critic_decay_violations(log, w_bar=1.0) == 1


def test_run_deterministic(suite):
    a = run_closed_loop(_cfg(horizon=200), suite)
    b = run_closed_loop(_cfg(horizon=200), suite)
    assert np.array_equal(a.states, b.states)
    assert np.array_equal(a.controls, b.controls)
    assert np.array_equal(a.margins, b.margins)


def test_run_logs_are_consistent(suite):
    log = run_closed_loop(_cfg(horizon=250), suite)
    assert log.states.shape == (log.n_steps + 1, 3)
    assert log.controls.shape == (log.n_steps + 1, 2)
    assert (log.controls[-1] == 0.0).all()
    assert np.isfinite(log.states).all()
    assert log.times[1] - log.times[0] == pytest.approx(0.01, abs=0)
    assert (np.abs(log.controls) <= 1.0 + 1e-12).all()
    assert margin_violations(log) == 0
    assert log.boundedness_violations == 0


def test_csv_round_trip(suite, tmp_path):
    log = run_closed_loop(_cfg(horizon=120), suite)
    path = tmp_path / "traj.csv"
    log.to_csv(str(path))
    cols = read_trajectory_csv(str(path))
    assert set(cols) == set(CSV_HEADER.split(","))
    assert np.array_equal(cols["x1"], log.states[:, 0])
    assert np.array_equal(cols["x3"], log.states[:, 2])
    assert np.array_equal(cols["u2"], log.controls[:, 1])
    assert np.array_equal(cols["theta4"], log.thetas[:, 3])
    assert np.array_equal(cols["m3"], log.margins[:, 2])
    assert np.array_equal(cols["Jhat"], log.jhat)
    assert np.array_equal(cols["k"], np.arange(log.n_steps + 1))


def test_csv_rejects_foreign_header(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("a,b,c\n1,2,3\n")
    with pytest.raises(ValueError):
        read_trajectory_csv(str(p))


def test_cost_ratio_trivial_start(suite):
    cfg = _cfg(horizon=10)
    ratio = cost_ratio(np.array([0.01, 0.0, 0.0]), (cfg, cfg), suite)
    assert ratio == 100.0


def test_cost_ratio_needs_reaching(suite):
    cfg = _cfg(horizon=5)
    with pytest.raises(RatioUndefined):
        cost_ratio(np.array([-2.0, -1.5, 0.4]), (cfg, cfg), suite)


def test_contour_single_trivial_point(suite):
    cfg = _cfg(horizon=10)
    rows = contour_sweep(suite, cfg, (0.0, 0.0), (0.0, 0.0), 1, 0.0, seed=1)
    assert len(rows) == 1
    i, j, a, b, ratio, ra, rn = rows[0]
    assert (i, j) == (0, 0)
    assert ratio == 100.0
    assert ra == 0.0 and rn == 0.0


def test_contour_rejects_empty_grid(suite):
    with pytest.raises(ValueError):
        contour_sweep(suite, _cfg(), (0, 1), (0, 1), 0, 0.0, seed=1)


def test_contour_csv_blank_cells(tmp_path):
    rows = [(0, 0, 0.5, -0.5, 100.0, 1.2, 3.4),
            (0, 1, 0.5, 0.5, None, None, None)]
    path = tmp_path / "contour.csv"
    contour_rows_to_csv(rows, str(path))
    lines = path.read_text().strip().split("\n")
    assert lines[0] == "x1_0,x2_0,ratio_pct,reach_time_ac,reach_time_nom"
    assert lines[1] == "0.5,-0.5,100.0,1.2,3.4"
    assert lines[2] == "0.5,0.5,,,"


def test_cost_stable_under_substep_refinement(suite):
    cfg = _cfg(horizon=2000)
    log = run_closed_loop(cfg, suite)
    assert log.reach_index is not None
    coarse = quasi_ih_cost(log, suite.reward, suite.make_cost_integrator(10))
    fine = quasi_ih_cost(log, suite.reward, suite.make_cost_integrator(100))
    assert coarse == pytest.approx(log.total_cost, rel=1e-12)
    assert fine == pytest.approx(coarse, rel=1e-6)
