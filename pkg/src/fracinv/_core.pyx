# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels. Same contracts as ``fracinv._pycore``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, fabs, INFINITY

cnp.import_array()

cdef enum:
    CONVERGED = 0
    MAX_ITER = 1
    DIVERGING = 2


def series_eval(x, const double[::1] log_coef, const double[::1] sign_coef):
    xa = np.ascontiguousarray(x, dtype=np.float64)
    shape = xa.shape
    cdef const double[::1] xs = xa.ravel()
    cdef Py_ssize_t n = xs.shape[0], K = log_coef.shape[0]
    out = np.empty(n)
    absout = np.empty(n)
    cdef double[::1] o = out, ao = absout
    cdef Py_ssize_t i, k
    cdef double xv, lx, total, comp, asum, lt, prev, mag, term, y, t, sk
    cdef bint neg
    with nogil:
        for i in range(n):
            xv = xs[i]
            neg = xv < 0
            lx = log(fabs(xv)) if xv != 0 else -INFINITY
            total = 0.0
            comp = 0.0
            asum = 0.0
            prev = -INFINITY
            for k in range(K):
                sk = sign_coef[k]
                if sk == 0:
                    continue
                if k == 0:
                    lt = log_coef[0]
                else:
                    lt = k * lx + log_coef[k]
                mag = exp(lt)
                term = sk * mag
                if neg and (k & 1):
                    term = -term
                y = term - comp
                t = total + y
                comp = (t - total) - y
                total = t
                asum = asum + mag
                if k > 0 and lt < prev and mag <= 1e-17 * fabs(total):
                    break
                prev = lt
            o[i] = total
            ao[i] = asum
    return out.reshape(shape), absout.reshape(shape)


cdef void _conv(const double[::1] w, const double[::1] g, double[::1] out) noexcept nogil:
    # axpy order: both operands run forward, which the compiler vectorizes
    cdef Py_ssize_t n, k, n1 = g.shape[0]
    cdef double gk
    cdef const double* wp = &w[0]
    cdef double* op = &out[0]
    for n in range(n1):
        op[n] = 0.0
    for k in range(n1):
        gk = g[k]
        if gk == 0.0:
            continue
        for n in range(n1 - k):
            op[k + n] += gk * wp[n]


def history_convolve(w, g):
    cdef const double[::1] gv = np.ascontiguousarray(g, dtype=np.float64)
    cdef const double[::1] wv = np.ascontiguousarray(w, dtype=np.float64)
    if wv.shape[0] < gv.shape[0]:
        wv = np.concatenate([np.asarray(wv), np.zeros(gv.shape[0] - wv.shape[0])])
    out = np.empty(gv.shape[0])
    cdef double[::1] ov = out
    with nogil:
        _conv(wv, gv, ov)
    return out


def l1_march(mu, sigma, f, h0, double c0, b):
    cdef const double[::1] muv = np.ascontiguousarray(mu, dtype=np.float64)
    cdef const double[::1] sv = np.ascontiguousarray(sigma, dtype=np.float64)
    cdef const double[:, ::1] fv = np.ascontiguousarray(f, dtype=np.float64)
    cdef const double[::1] hv = np.ascontiguousarray(np.broadcast_to(h0, (fv.shape[0],)), dtype=np.float64)
    cdef const double[::1] bv = np.ascontiguousarray(b, dtype=np.float64)
    cdef Py_ssize_t m = fv.shape[0], n1 = fv.shape[1]
    out = np.empty((m, n1))
    cdef double[:, ::1] v = out
    cdef double[::1] dv = np.empty(n1)
    cdef Py_ssize_t i, n, j
    cdef double hist
    with nogil:
        for i in range(m):
            v[i, 0] = hv[i]
            for n in range(1, n1):
                hist = 0.0
                for j in range(1, n):
                    hist += bv[j] * dv[n - 1 - j]
                v[i, n] = (fv[i, n] + c0 * v[i, n - 1] - c0 * hist) / (c0 + muv[i] * sv[n])
                dv[n - 1] = v[i, n] - v[i, n - 1]
    return out


def picard_mode(base, w, corr, coef, v0, double tol, Py_ssize_t max_iter):
    cdef const double[::1] bv = np.ascontiguousarray(base, dtype=np.float64)
    cdef const double[::1] wv = np.ascontiguousarray(w, dtype=np.float64)
    # transposed so the window correction runs in axpy order
    cdef const double[:, ::1] ct = np.ascontiguousarray(np.asarray(corr, dtype=np.float64).T)
    cdef const double[::1] kv = np.ascontiguousarray(coef, dtype=np.float64)
    cdef Py_ssize_t n1 = bv.shape[0], J1 = ct.shape[0]
    v_arr = np.array(v0, dtype=np.float64)
    cdef double[::1] v = v_arr
    cdef double[::1] g = np.empty(n1)
    cdef double[::1] conv = np.empty(n1)
    cdef double[::1] vnew = np.empty(n1)
    diffs_arr = np.empty(max_iter)
    cdef double[::1] diffs = diffs_arr
    cdef Py_ssize_t it, n, j
    cdef int growth = 0, status = MAX_ITER
    cdef double d, vmax, vn, vj
    cdef Py_ssize_t done = max_iter
    with nogil:
        for it in range(max_iter):
            for n in range(n1):
                g[n] = kv[n] * v[n]
            _conv(wv, g, conv)
            for j in range(J1):
                vj = v[j]
                for n in range(n1):
                    conv[n] += ct[j, n] * vj
            d = 0.0
            vmax = 0.0
            for n in range(n1):
                vn = bv[n] + conv[n]
                if fabs(vn - v[n]) > d:
                    d = fabs(vn - v[n])
                if fabs(vn) > vmax:
                    vmax = fabs(vn)
                vnew[n] = vn
            for n in range(n1):
                v[n] = vnew[n]
            diffs[it] = d
            if d <= tol * (1.0 + vmax):
                status = CONVERGED
                done = it + 1
                break
            if it > 0 and d > diffs[it - 1]:
                growth += 1
                if growth >= 5:
                    status = DIVERGING
                    done = it + 1
                    break
            else:
                growth = 0
    return v_arr, done, diffs_arr[:done].copy(), status
