"""Compiled inner loops: capped-simplex projection, the compression QP, power iteration.

Everything here operates on contiguous float64 arrays and is deterministic:
no threading, no randomness.
"""
import numpy as np
from numba import njit


@njit(cache=True)
def _clipped_sum(v, mu):
    s = 0.0
    for i in range(v.shape[0]):
        t = v[i] - mu
        if t > 1.0:
            s += 1.0
        elif t > 0.0:
            s += t
    return s


@njit(cache=True)
def project_capped_simplex(v, k, out):
    """Write argmin_{0<=w<=1, sum w = k} ||w - v|| into ``out``; return the shift.

    The minimizer is ``clip(v - mu, 0, 1)`` where ``g(mu) = sum clip(v - mu, 0, 1)``
    equals ``k``.  ``g`` is piecewise linear and non-increasing with kinks at
    ``v_i - 1`` and ``v_i``, so ``mu`` is located exactly by binary search over
    the sorted kinks followed by linear interpolation.
    """
    n = v.shape[0]
    if k <= 0.0:
        for i in range(n):
            out[i] = 0.0
        return np.inf
    if k >= n:
        for i in range(n):
            out[i] = 1.0
        return -np.inf
    kinks = np.empty(2 * n)
    for i in range(n):
        kinks[i] = v[i] - 1.0
        kinks[n + i] = v[i]
    kinks.sort()
    # g(kinks[0]) = n > k and g(kinks[-1]) = 0 < k.
    lo = 0
    hi = 2 * n - 1
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if _clipped_sum(v, kinks[mid]) >= k:
            lo = mid
        else:
            hi = mid
    g_lo = _clipped_sum(v, kinks[lo])
    g_hi = _clipped_sum(v, kinks[hi])
    if g_lo == g_hi:
        mu = kinks[lo]
    else:
        mu = kinks[lo] + (g_lo - k) * (kinks[hi] - kinks[lo]) / (g_lo - g_hi)
    for i in range(n):
        t = v[i] - mu
        if t > 1.0:
            out[i] = 1.0
        elif t < 0.0:
            out[i] = 0.0
        else:
            out[i] = t
    return mu


@njit(cache=True)
def project_capped_simplex_warm(v, k, mu0, out):
    """Same projection as ``project_capped_simplex`` started from a guess ``mu0``.

    Newton steps on the piecewise-linear ``g(mu) - k`` inside a shrinking
    bracket; each step lands exactly on the root once ``mu`` is in the right
    linear piece.  Falls back to the sorting method if it stalls.
    """
    n = v.shape[0]
    if k <= 0.0 or k >= n or not np.isfinite(mu0):
        return project_capped_simplex(v, k, out)
    lo = -np.inf  # g(lo) >= k
    hi = np.inf   # g(hi) <= k
    mu = mu0
    for _ in range(30):
        g = 0.0
        free = 0
        for i in range(n):
            t = v[i] - mu
            if t >= 1.0:
                g += 1.0
            elif t > 0.0:
                g += t
                free += 1
        r = g - k
        if r == 0.0 or (free > 0 and abs(r) <= 1e-15 * k):
            for i in range(n):
                t = v[i] - mu
                out[i] = 1.0 if t > 1.0 else (0.0 if t < 0.0 else t)
            return mu
        if r > 0.0:
            lo = mu
        else:
            hi = mu
        if free == 0:
            break
        nxt = mu + r / free
        if not (lo < nxt < hi):
            break
        mu = nxt
    return project_capped_simplex(v, k, out)


@njit(cache=True)
def _gradient(H, b, w, g):
    # g = 2 (H w - b); returns w'Hw - 2 b'w  (objective minus y'y)
    Hw = H @ w
    quad = 0.0
    for i in range(w.shape[0]):
        g[i] = 2.0 * (Hw[i] - b[i])
        quad += w[i] * (Hw[i] - 2.0 * b[i])
    return quad


@njit(cache=True)
def _stationarity(w, g, L, k, scratch, proj):
    n = w.shape[0]
    for i in range(n):
        scratch[i] = w[i] - g[i] / L
    project_capped_simplex(scratch, k, proj)
    s = 0.0
    for i in range(n):
        d = w[i] - proj[i]
        s += d * d
    return np.sqrt(s)


@njit(cache=True)
def apg_capped_simplex_qp(H, b, c0, k, L, tol, max_iter, restart):
    """Accelerated projected gradient for min ||y - Bw||^2 over the capped simplex.

    ``H = B^T B``, ``b = B^T y``, ``c0 = y^T y``.  Fixed step ``1/L`` where
    ``L`` bounds the Lipschitz constant ``2 lambda_max(H)``.  Momentum is
    reset whenever the objective increases or the step opposes the momentum
    direction.  The gradient at the extrapolated point is formed from the two
    most recent iterate gradients, so each iteration costs one product with H.
    With ``restart=False`` the plain FISTA momentum schedule is used.

    Returns ``(w, converged, iterations, stationarity, objective)``.
    """
    n = b.shape[0]
    w = np.full(n, k / n)
    g_w = np.empty(n)
    f_w = _gradient(H, b, w, g_w) + c0
    if L <= 0.0:
        # B = 0: the objective is constant on P.
        return w, True, 0, 0.0, f_w
    scratch = np.empty(n)
    proj = np.empty(n)
    stat = _stationarity(w, g_w, L, k, scratch, proj)
    if stat <= tol:
        return w, True, 0, stat, f_w

    best = w.copy()
    best_f = f_w
    best_stat = stat
    z = w.copy()
    g_z = g_w.copy()
    t = 1.0
    w_new = np.empty(n)
    g_new = np.empty(n)
    mu = np.inf
    for it in range(1, max_iter + 1):
        for i in range(n):
            scratch[i] = z[i] - g_z[i] / L
        mu = project_capped_simplex_warm(scratch, k, mu, w_new)
        f_new = _gradient(H, b, w_new, g_new) + c0
        # Gradient-mapping step at z; only when it is small is the (costlier)
        # stationarity test at w_new itself performed.
        step = 0.0
        against = 0.0
        for i in range(n):
            d = z[i] - w_new[i]
            step += d * d
            against += d * (w_new[i] - w[i])
        if np.sqrt(step) <= tol:
            stat = _stationarity(w_new, g_new, L, k, scratch, proj)
            if stat <= tol:
                return w_new, True, it, stat, f_new
        if f_new < best_f:
            best[:] = w_new
            best_f = f_new
            best_stat = -1.0
        # Adaptive restart: objective went up, or step is against the momentum.
        if restart and (f_new > f_w or against > 0.0):
            t = 1.0
            for i in range(n):
                z[i] = w_new[i]
                g_z[i] = g_new[i]
        else:
            t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
            beta = (t - 1.0) / t_next
            for i in range(n):
                z[i] = w_new[i] + beta * (w_new[i] - w[i])
                g_z[i] = g_new[i] + beta * (g_new[i] - g_w[i])
            t = t_next
        for i in range(n):
            w[i] = w_new[i]
            g_w[i] = g_new[i]
        f_w = f_new
    if best_stat < 0.0:
        g_best = np.empty(n)
        _gradient(H, b, best, g_best)
        best_stat = _stationarity(best, g_best, L, k, scratch, proj)
    return best, False, max_iter, best_stat, best_f


@njit(cache=True)
def power_iteration_gram(G, tol, max_iter):
    """Largest eigenvalue of the symmetric PSD matrix ``G`` by power iteration."""
    n = G.shape[0]
    v = np.full(n, 1.0 / np.sqrt(n))
    rq = 0.0
    for _ in range(max_iter):
        Gv = G @ v
        rq_new = v @ Gv
        nrm = np.sqrt(Gv @ Gv)
        if nrm == 0.0:
            return 0.0
        v = Gv / nrm
        if abs(rq_new - rq) <= tol * abs(rq_new):
            return rq_new
        rq = rq_new
    return rq
