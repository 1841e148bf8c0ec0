"""Timing comparison of the compiled kernels against the array fallback.

Run from the repository root:

    python3 benchmarks/bench_kernels.py

The same closed-loop segment and the same constraint scan are timed on
both paths; outputs are checked bitwise equal before timings are
reported, so the numbers compare identical work.
"""
import os
import time

import numpy as np

os.environ.setdefault("CLFAC_NUMBA", "1")

from clfac.config import ExperimentConfig
from clfac.simulator import run_closed_loop
from clfac.suite import build_suite
from clfac.actor_critic import draw_thetas, stage1_best


def time_call(fn, repeat=3):
    best = np.inf
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def closed_loop_segment(suite, cfg, steps, force_numpy):
    rc = cfg.run_config(controller="ac", horizon_steps=steps)
    if force_numpy:
        real = suite.use_kernels
        suite.use_kernels = lambda: False
        try:
            return run_closed_loop(rc, suite)
        finally:
            suite.use_kernels = real
    return run_closed_loop(rc, suite)


def main():
    cfg = ExperimentConfig()
    suite = build_suite(cfg)
    if not suite.use_kernels():
        raise SystemExit("compiled path unavailable; set CLFAC_NUMBA=1 "
                         "with numba installed")

    steps = 300
    t_jit, log_jit = time_call(
        lambda: closed_loop_segment(suite, cfg, steps, force_numpy=False))
    t_np, log_np = time_call(
        lambda: closed_loop_segment(suite, cfg, steps, force_numpy=True))
    assert np.array_equal(log_jit.states, log_np.states), "paths disagree"
    assert np.array_equal(log_jit.margins, log_np.margins), "paths disagree"
    print(f"closed loop, {steps} steps:")
    print(f"  compiled  {t_jit * 1e3:9.2f} ms")
    print(f"  fallback  {t_np * 1e3:9.2f} ms   (x{t_np / t_jit:.1f})")

    problem = suite.make_problem(cfg.run_config(controller="ac"))
    rng = np.random.default_rng(0)
    x = np.array([-2.0, -1.5, 0.4])
    theta_prev = np.ones(4)
    TH = np.concatenate([theta_prev[None, :], np.ones((1, 4)),
                         draw_thetas(rng, 32, suite.weight_set)])

    from clfac import kernels
    Ug = problem.control_grid
    nsq = (x[0] * x[0] + x[1] * x[1]) + x[2] * x[2]
    w_x = float(suite.clf.w(x[None])[0])
    q1x = suite.q1.value_from_sq(nsq)
    q2x = suite.q2.value_from_sq(nsq)

    def scan_jit():
        return kernels.stage1_scan(x[0], x[1], x[2], Ug, TH, problem.delta,
                                   problem.eps1, problem.eps2, problem.eps3,
                                   w_x, q1x, q2x, problem.margin_tol)

    def scan_np():
        return stage1_best(problem, x, theta_prev, TH)

    t1, out1 = time_call(scan_jit, repeat=20)
    t2, out2 = time_call(scan_np, repeat=20)
    assert out1[0] == out2[0] and out1[1] == out2[1], "winners disagree"
    print(f"constraint scan, {len(Ug)} controls x {len(TH)} weight vectors:")
    print(f"  compiled  {t1 * 1e6:9.1f} us")
    print(f"  fallback  {t2 * 1e6:9.1f} us   (x{t2 / t1:.1f})")


if __name__ == "__main__":
    main()
