"""Compiled hot loops for the built-in case study.

Every function here is specialized to the three-state system with two
inputs, the nonsmooth Lyapunov function of :mod:`clfac.clf`, the four-term
feature map of :mod:`clfac.critic`, and the quadratic running reward.  The
pure-NumPy drivers in :mod:`clfac.simulator` and :mod:`clfac.nominal`
implement the same arithmetic in the same operation order, so both paths
produce bit-identical trajectories; which one runs is decided by the
CLFAC_NUMBA environment switch (see :mod:`clfac._accel`).

Keep the operation order in this file in lockstep with the NumPy
expressions.  Reassociating a sum here breaks the cross-path equality
tests.
"""
import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:          # pragma: no cover - exercised only without numba
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn
        return wrap


@njit(cache=True)
def _v(x1, x2, x3):
    s = np.sqrt(x1 * x1 + x2 * x2)
    p1 = x1 * x1
    p2 = x2 * x2
    p3 = 2.0 * (x3 * x3)
    p4 = -2.0 * np.abs(x3) * s
    return ((p1 + p2) + p3) + p4


@njit(cache=True)
def _jhat(t0, t1, t2, t3, x1, x2, x3):
    s = np.sqrt(x1 * x1 + x2 * x2)
    p1 = x1 * x1
    p2 = x2 * x2
    p3 = 2.0 * (x3 * x3)
    p4 = -2.0 * np.abs(x3) * s
    acc = t0 * p1 + t1 * p2
    acc = acc + t2 * p3
    acc = acc + t3 * p4
    return acc


@njit(cache=True)
def _reward(x1, x2, x3, u1, u2):
    return 0.1 * ((x1 * x1 + x2 * x2) + x3 * x3) + 2.0 * (u1 * u1 + u2 * u2)


@njit(cache=True)
def _rk4(x1, x2, x3, u1, u2, delta, substeps):
    h = delta / substeps
    for _ in range(substeps):
        a11 = u1
        a12 = u2
        a13 = x1 * u2 - x2 * u1
        y1 = x1 + (0.5 * h) * a11
        y2 = x2 + (0.5 * h) * a12
        y3 = x3 + (0.5 * h) * a13
        a21 = u1
        a22 = u2
        a23 = y1 * u2 - y2 * u1
        z1 = x1 + (0.5 * h) * a21
        z2 = x2 + (0.5 * h) * a22
        z3 = x3 + (0.5 * h) * a23
        a31 = u1
        a32 = u2
        a33 = z1 * u2 - z2 * u1
        q1 = x1 + h * a31
        q2 = x2 + h * a32
        q3 = x3 + h * a33
        a41 = u1
        a42 = u2
        a43 = q1 * u2 - q2 * u1
        x1 = x1 + (h / 6.0) * (((a11 + 2.0 * a21) + 2.0 * a31) + a41)
        x2 = x2 + (h / 6.0) * (((a12 + 2.0 * a22) + 2.0 * a32) + a42)
        x3 = x3 + (h / 6.0) * (((a13 + 2.0 * a23) + 2.0 * a33) + a43)
    return x1, x2, x3


@njit(cache=True)
def _rk4_cost(x1, x2, x3, u1, u2, delta, substeps):
    """Interval state plus integral of the running reward, same stage states."""
    h = delta / substeps
    cost = 0.0
    for _ in range(substeps):
        a11 = u1
        a12 = u2
        a13 = x1 * u2 - x2 * u1
        c1 = _reward(x1, x2, x3, u1, u2)
        y1 = x1 + (0.5 * h) * a11
        y2 = x2 + (0.5 * h) * a12
        y3 = x3 + (0.5 * h) * a13
        a21 = u1
        a22 = u2
        a23 = y1 * u2 - y2 * u1
        c2 = _reward(y1, y2, y3, u1, u2)
        z1 = x1 + (0.5 * h) * a21
        z2 = x2 + (0.5 * h) * a22
        z3 = x3 + (0.5 * h) * a23
        a31 = u1
        a32 = u2
        a33 = z1 * u2 - z2 * u1
        c3 = _reward(z1, z2, z3, u1, u2)
        q1 = x1 + h * a31
        q2 = x2 + h * a32
        q3 = x3 + h * a33
        a41 = u1
        a42 = u2
        a43 = q1 * u2 - q2 * u1
        c4 = _reward(q1, q2, q3, u1, u2)
        cost = cost + (h / 6.0) * (((c1 + 2.0 * c2) + 2.0 * c3) + c4)
        x1 = x1 + (h / 6.0) * (((a11 + 2.0 * a21) + 2.0 * a31) + a41)
        x2 = x2 + (h / 6.0) * (((a12 + 2.0 * a22) + 2.0 * a32) + a42)
        x3 = x3 + (h / 6.0) * (((a13 + 2.0 * a23) + 2.0 * a33) + a43)
    return x1, x2, x3, cost


@njit(cache=True)
def nominal_scan_one(x1, x2, x3, Ug, delta, substeps):
    """First argmin over the (pre-sorted) control grid of V after one interval."""
    best = np.inf
    bi = 0
    for i in range(Ug.shape[0]):
        y1, y2, y3 = _rk4(x1, x2, x3, Ug[i, 0], Ug[i, 1], delta, substeps)
        v = _v(y1, y2, y3)
        if v < best:
            best = v
            bi = i
    return bi, best


@njit(cache=True)
def nominal_scan(X, Ug, delta, substeps):
    n = X.shape[0]
    idx = np.empty(n, np.int64)
    vmin = np.empty(n)
    for j in range(n):
        bi, bv = nominal_scan_one(X[j, 0], X[j, 1], X[j, 2], Ug, delta, substeps)
        idx[j] = bi
        vmin[j] = bv
    return idx, vmin


@njit(cache=True)
def margins_one(x1, x2, x3, u1, u2, th, thp, delta, e1, e2, e3, w_x, q1x, q2x):
    """Squared Bellman residual and the four constraint slacks of one tuple."""
    f3 = x1 * u2 - x2 * u1
    h1 = x1 + delta * u1
    h2 = x2 + delta * u2
    h3 = x3 + delta * f3
    jc = _jhat(th[0], th[1], th[2], th[3], x1, x2, x3)
    jcp = _jhat(thp[0], thp[1], thp[2], thp[3], x1, x2, x3)
    jn = _jhat(th[0], th[1], th[2], th[3], h1, h2, h3)
    vh = _v(h1, h2, h3)
    rho = _reward(x1, x2, x3, u1, u2)
    jnp = _jhat(thp[0], thp[1], thp[2], thp[3], h1, h2, h3)
    resid = rho + jnp - jc
    m1 = jcp + e1 - jc
    m2 = jn + e2 - vh
    m3 = -0.5 * delta * w_x + e3 - (jn - jc)
    m4 = min(jc - q1x, q2x - jc)
    return resid * resid, m1, m2, m3, m4


@njit(cache=True)
def stage1_scan(x1, x2, x3, Ug, TH, delta, e1, e2, e3, w_x, q1x, q2x, tol):
    """Feasible first-minimum of the objective over the control x weight product.

    TH row 0 must be the previous weights (the C1 reference and the
    prediction weights).  Weight-only constraints C1 and C4 are evaluated
    once per row; rows failing them are skipped inside the control loop,
    which cannot change the winner.  Returns (u index, weight index, best
    objective, feasible pair count); u index is -1 when nothing is feasible.
    """
    Nu = Ug.shape[0]
    Nt = TH.shape[0]
    jcs = np.empty(Nt)
    ok = np.empty(Nt, np.bool_)
    jcp = _jhat(TH[0, 0], TH[0, 1], TH[0, 2], TH[0, 3], x1, x2, x3)
    any_th = False
    for t in range(Nt):
        jc = _jhat(TH[t, 0], TH[t, 1], TH[t, 2], TH[t, 3], x1, x2, x3)
        jcs[t] = jc
        m1 = jcp + e1 - jc
        m4 = min(jc - q1x, q2x - jc)
        ok[t] = (m1 >= -tol) and (m4 >= -tol)
        any_th = any_th or ok[t]
    best = np.inf
    bu = -1
    bt = -1
    nfeas = 0
    if not any_th:
        return bu, bt, best, nfeas
    for i in range(Nu):
        u1 = Ug[i, 0]
        u2 = Ug[i, 1]
        f3 = x1 * u2 - x2 * u1
        h1 = x1 + delta * u1
        h2 = x2 + delta * u2
        h3 = x3 + delta * f3
        vh = _v(h1, h2, h3)
        jnp = _jhat(TH[0, 0], TH[0, 1], TH[0, 2], TH[0, 3], h1, h2, h3)
        rho = _reward(x1, x2, x3, u1, u2)
        for t in range(Nt):
            if not ok[t]:
                continue
            jn = _jhat(TH[t, 0], TH[t, 1], TH[t, 2], TH[t, 3], h1, h2, h3)
            m2 = jn + e2 - vh
            if m2 < -tol:
                continue
            m3 = -0.5 * delta * w_x + e3 - (jn - jcs[t])
            if m3 < -tol:
                continue
            nfeas += 1
            resid = rho + jnp - jcs[t]
            obj = resid * resid
            if obj < best:
                best = obj
                bu = i
                bt = t
    return bu, bt, best, nfeas


@njit(cache=True)
def refine_search(x1, x2, x3, u01, u02, th0, f0, thp, delta, e1, e2, e3,
                  w_x, q1x, q2x, th_lo, th_hi, du0, dth0, max_evals, du_min, tol):
    """Feasible coordinate descent from the stage-1 seed.

    Candidates outside the control box or the weight set are skipped
    without spending an evaluation; improvements are adopted immediately so
    later coordinates perturb the new best point.  Step sizes halve after a
    full sweep with no improvement.
    """
    bu1 = u01
    bu2 = u02
    bth = th0.copy()
    bf = f0
    du = du0
    dth = dth0
    evals = 0
    while evals < max_evals and du >= du_min:
        improved = False
        for c in range(6):
            for si in range(2):
                if evals >= max_evals:
                    break
                sgn = 1.0 if si == 0 else -1.0
                cu1 = bu1
                cu2 = bu2
                cth = bth.copy()
                if c == 0:
                    cu1 = bu1 + sgn * du
                    if np.abs(cu1) > 1.0:
                        continue
                elif c == 1:
                    cu2 = bu2 + sgn * du
                    if np.abs(cu2) > 1.0:
                        continue
                else:
                    j = c - 2
                    cth[j] = bth[j] + sgn * dth
                    if not (th_lo <= cth[j] <= th_hi):
                        continue
                    if cth[3] > min(cth[0], min(cth[1], cth[2])):
                        continue
                evals += 1
                obj, m1, m2, m3, m4 = margins_one(
                    x1, x2, x3, cu1, cu2, cth, thp, delta, e1, e2, e3,
                    w_x, q1x, q2x)
                if min(min(m1, m2), min(m3, m4)) >= -tol and obj < bf:
                    bu1 = cu1
                    bu2 = cu2
                    bth = cth
                    bf = obj
                    improved = True
        if not improved:
            du *= 0.5
            dth *= 0.5
    return bu1, bu2, bth, bf


@njit(cache=True)
def closed_loop(mode, x0, Ug, THD, th_sharp, delta, substeps, horizon, dwell,
                r, r_star, kappa_w, e1, e2, e3, q1_lo, q1_tu, q2_c,
                decay_tol, margin_tol, du0, dth0, max_evals, du_min,
                th_lo, th_hi, X, U, TH, JH, VV, MM, FB, CORE):
    """Sample-and-hold loop; mode 0 = lookahead baseline, mode 1 = actor-critic.

    THD holds the per-step pregenerated weight candidates (consumed by step
    index so compiled and NumPy drivers share one random stream).  Logged
    margins always refer to the applied tuple against the weights held
    before the step.  Returns (steps taken, fallback count, soft-decay
    count, status) with status 1 when the state left the finite range.
    """
    x1 = x0[0]
    x2 = x0[1]
    x3 = x0[2]
    X[0, 0] = x1
    X[0, 1] = x2
    X[0, 2] = x3
    thp = th_sharp.copy()
    fb_count = 0
    soft_count = 0
    streak = 0
    n = 0
    status = 0
    K = THD.shape[1]
    for k in range(horizon):
        nsq = (x1 * x1 + x2 * x2) + x3 * x3
        nrm = np.sqrt(nsq)
        vx = _v(x1, x2, x3)
        w_x = kappa_w * vx
        q1x = (q1_lo * nsq) * q1_tu
        q2x = q2_c * nrm
        core = nrm <= r_star
        fb = False
        if core or mode == 0:
            bi, bv = nominal_scan_one(x1, x2, x3, Ug, delta, substeps)
            u1 = Ug[bi, 0]
            u2 = Ug[bi, 1]
            th_k = thp
            if (not core) and mode == 0:
                need = vx - 0.5 * delta * w_x + decay_tol
                if not (bv <= need):
                    soft_count += 1
                    fb = True
        else:
            cand = np.empty((2 + K, 4))
            for j in range(4):
                cand[0, j] = thp[j]
                cand[1, j] = th_sharp[j]
            for a in range(K):
                for j in range(4):
                    cand[2 + a, j] = THD[k, a, j]
            bu, bt, bobj, nfeas = stage1_scan(
                x1, x2, x3, Ug, cand, delta, e1, e2, e3, w_x, q1x, q2x,
                margin_tol)
            if bu < 0:
                bi, bv = nominal_scan_one(x1, x2, x3, Ug, delta, substeps)
                u1 = Ug[bi, 0]
                u2 = Ug[bi, 1]
                th_k = th_sharp.copy()
                fb = True
                fb_count += 1
            else:
                ru1, ru2, rth, rf = refine_search(
                    x1, x2, x3, Ug[bu, 0], Ug[bu, 1], cand[bt], bobj, thp,
                    delta, e1, e2, e3, w_x, q1x, q2x, th_lo, th_hi,
                    du0, dth0, max_evals, du_min, margin_tol)
                u1 = ru1
                u2 = ru2
                th_k = rth
        obj, m1, m2, m3, m4 = margins_one(
            x1, x2, x3, u1, u2, th_k, thp, delta, e1, e2, e3, w_x, q1x, q2x)
        U[k, 0] = u1
        U[k, 1] = u2
        for j in range(4):
            TH[k, j] = th_k[j]
        JH[k] = _jhat(th_k[0], th_k[1], th_k[2], th_k[3], x1, x2, x3)
        VV[k] = vx
        MM[k, 0] = m1
        MM[k, 1] = m2
        MM[k, 2] = m3
        MM[k, 3] = m4
        FB[k] = 1 if fb else 0
        CORE[k] = 1 if core else 0
        thp = th_k.copy()
        x1, x2, x3 = _rk4(x1, x2, x3, u1, u2, delta, substeps)
        n = k + 1
        X[n, 0] = x1
        X[n, 1] = x2
        X[n, 2] = x3
        if not (np.isfinite(x1) and np.isfinite(x2) and np.isfinite(x3)):
            status = 1
            break
        nn = np.sqrt((x1 * x1 + x2 * x2) + x3 * x3)
        if nn <= r:
            streak += 1
        else:
            streak = 0
        if streak >= dwell:
            break
    return n, fb_count, soft_count, status


@njit(cache=True)
def cost_over_steps(X, U, n_steps, delta, substeps):
    """Integral of the running reward over the first n_steps logged intervals."""
    total = 0.0
    for k in range(n_steps):
        y1, y2, y3, c = _rk4_cost(X[k, 0], X[k, 1], X[k, 2],
                                  U[k, 0], U[k, 1], delta, substeps)
        total += c
    return total


def warmup():
    """Force compilation of every kernel (e.g. before forking workers)."""
    Ug = np.array([[0.0, 0.0], [1.0, -1.0]])
    THD = np.full((2, 1, 4), 1.0)
    ths = np.ones(4)
    X = np.zeros((3, 3))
    U = np.zeros((2, 2))
    TH = np.zeros((2, 4))
    JH = np.zeros(2)
    VV = np.zeros(2)
    MM = np.zeros((2, 4))
    FB = np.zeros(2, np.uint8)
    CORE = np.zeros(2, np.uint8)
    x0 = np.array([0.5, -0.25, 0.1])
    for mode in (0, 1):
        closed_loop(mode, x0, Ug, THD, ths, 1e-3, 2, 2, 5, 0.1, 1e-6,
                    0.1, 1e-9, 1e-9, 1e-9, 0.04774575140626314, 1.0, 10.0,
                    1e-12, 1e-9, 0.1, 0.15, 200, 1e-4, 0.5, 2.0,
                    X, U, TH, JH, VV, MM, FB, CORE)
    nominal_scan(X, Ug, 1e-3, 2)
    cost_over_steps(X, U, 2, 1e-3, 2)
