"""Pure numpy implementation of the hot kernels.

Mirrors the compiled ``_core`` extension function by function; the backend
selector in :mod:`fracinv._backend` picks one at import time.
"""

import numpy as np

__all__ = ["series_eval", "history_convolve", "l1_march", "picard_mode"]

# status codes shared with the compiled core
CONVERGED = 0
MAX_ITER = 1
DIVERGING = 2


def series_eval(x, log_coef, sign_coef):
    """Sum ``sum_k sign_coef[k] * exp(log_coef[k]) * x**k`` for every ``x``.

    Kahan-compensated. Returns ``(values, abs_sums)``; ``abs_sums`` is the sum
    of term magnitudes, i.e. the cancellation condition of each sum.
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    shape = x.shape
    x = x.ravel()
    n = x.size
    total = np.zeros(n)
    comp = np.zeros(n)
    asum = np.zeros(n)
    active = np.ones(n, dtype=bool)
    with np.errstate(divide="ignore"):
        logx = np.log(np.abs(x))
    neg = x < 0
    prev = np.full(n, -np.inf)
    for k in range(log_coef.shape[0]):
        sk = sign_coef[k]
        if sk == 0:
            continue
        if k == 0:
            lt = np.full(n, log_coef[0])
        else:
            lt = k * logx + log_coef[k]
        mag = np.exp(lt)
        term = sk * mag
        if k % 2 == 1:
            term = np.where(neg, -term, term)
        y = np.where(active, term - comp, 0.0)
        t = total + y
        comp = np.where(active, (t - total) - y, comp)
        total = np.where(active, t, total)
        asum = np.where(active, asum + mag, asum)
        done = (k > 0) & (lt < prev) & (mag <= 1e-17 * np.abs(total))
        active &= ~done
        prev = lt
        if not active.any():
            break
    return total.reshape(shape), asum.reshape(shape)


def history_convolve(w, g):
    """``out[n] = sum_{k<=n} w[n-k] * g[k]`` truncated to ``len(g)``."""
    g = np.asarray(g, dtype=np.float64)
    return np.convolve(g, np.asarray(w, dtype=np.float64))[: g.shape[0]]


def l1_march(mu, sigma, f, h0, c0, b):
    """Implicit L1 time stepping for ``D^a v + mu*sigma(t)*v = f`` on all modes.

    ``b`` holds the L1 weights ``(j+1)^(1-a) - j^(1-a)`` and ``c0`` the scale
    ``dt^-a / Gamma(2-a)``.
    """
    mu = np.asarray(mu, dtype=np.float64)
    f = np.asarray(f, dtype=np.float64)
    m, n1 = f.shape
    v = np.empty((m, n1))
    v[:, 0] = h0
    dv = np.empty((m, n1 - 1))
    for n in range(1, n1):
        rhs = f[:, n] + c0 * v[:, n - 1]
        if n > 1:
            rhs -= c0 * (dv[:, n - 2 :: -1] @ b[1:n])
        v[:, n] = rhs / (c0 + mu * sigma[n])
        dv[:, n - 1] = v[:, n] - v[:, n - 1]
    return v


def picard_mode(base, w, corr, coef, v0, tol, max_iter):
    """Iterate ``v -> base + T_w (coef*v) + corr @ v[:J]``.

    ``T_w`` is the lag-Toeplitz matrix of ``w`` and ``corr`` a dense
    correction acting on the first ``J = corr.shape[1]`` samples. Returns
    ``(v, iterations, diffs, status)``.
    """
    n1 = base.shape[0]
    corr = np.asarray(corr, dtype=np.float64)
    J1 = corr.shape[1]
    v = np.array(v0, dtype=np.float64)
    diffs = np.empty(max_iter)
    growth = 0
    for it in range(max_iter):
        g = coef * v
        vn = base + np.convolve(g, w)[:n1] + corr @ v[:J1]
        d = float(np.max(np.abs(vn - v)))
        diffs[it] = d
        v = vn
        if d <= tol * (1.0 + float(np.max(np.abs(vn)))):
            return v, it + 1, diffs[: it + 1], CONVERGED
        if it > 0 and d > diffs[it - 1]:
            growth += 1
            if growth >= 5:
                return v, it + 1, diffs[: it + 1], DIVERGING
        else:
            growth = 0
    return v, max_iter, diffs, MAX_ITER
