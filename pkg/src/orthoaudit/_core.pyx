# cython: language_level=3
"""Compiled implementations of the hot kernels.

Semantics mirror ``orthoaudit._core_py`` exactly; see that module for
the contracts.  Loops are written out so each output element has a
fixed summation order, making results reproducible run to run.
"""

import numpy as np

cimport cython
cimport numpy as cnp
from libc.math cimport exp, fabs, isfinite, log, log1p, pow, sqrt

cnp.import_array()

NAME = "cython"

# Row-block size for the projector application; kept for parity with the
# fallback even though the compiled path streams row by row.
_BLOCK = 4096


@cython.boundscheck(False)
@cython.wraparound(False)
def qr_pivoted(x, double tol):
    """Column-pivoted Householder QR; see _core_py.qr_pivoted."""
    a_arr = np.array(x, dtype=np.float64, order="C", copy=True)
    cdef double[:, ::1] a = a_arr
    cdef Py_ssize_t n = a_arr.shape[0]
    cdef Py_ssize_t p = a_arr.shape[1]
    cdef Py_ssize_t steps = n if n < p else p

    piv_arr = np.arange(p, dtype=np.int64)
    cdef long long[::1] piv = piv_arr
    vs_arr = np.zeros((steps, n), dtype=np.float64)
    cdef double[:, ::1] vs = vs_arr
    betas_arr = np.zeros(steps, dtype=np.float64)
    cdef double[::1] betas = betas_arr

    cdef Py_ssize_t i, j, k, jmax
    cdef long long tmpi
    cdef double best, cur, sigma, alpha, beta, s, tmp

    for k in range(steps):
        # pivot: column of largest remaining norm, first index on ties
        jmax = k
        best = -1.0
        for j in range(k, p):
            cur = 0.0
            for i in range(k, n):
                cur += a[i, j] * a[i, j]
            if cur > best:
                best = cur
                jmax = j
        if jmax != k:
            for i in range(n):
                tmp = a[i, k]
                a[i, k] = a[i, jmax]
                a[i, jmax] = tmp
            tmpi = piv[k]
            piv[k] = piv[jmax]
            piv[jmax] = tmpi

        sigma = 0.0
        for i in range(k, n):
            sigma += a[i, k] * a[i, k]
        if sigma == 0.0:
            betas[k] = 0.0
            continue
        for i in range(k, n):
            vs[k, i - k] = a[i, k]
        alpha = sqrt(sigma)
        if vs[k, 0] >= 0:
            vs[k, 0] += alpha
        else:
            vs[k, 0] -= alpha
        s = 0.0
        for i in range(n - k):
            s += vs[k, i] * vs[k, i]
        beta = 2.0 / s
        betas[k] = beta

        for j in range(k, p):
            s = 0.0
            for i in range(k, n):
                s += vs[k, i - k] * a[i, j]
            s *= beta
            for i in range(k, n):
                a[i, j] -= vs[k, i - k] * s

    cdef Py_ssize_t rank = 0
    cdef double threshold = 0.0
    if steps > 0:
        threshold = tol * fabs(a[0, 0])
    for i in range(steps):
        if fabs(a[i, i]) > threshold:
            rank += 1

    r_arr = np.triu(a_arr[:rank, :])
    cdef double[:, ::1] r = r_arr

    q1_arr = np.zeros((n, rank), dtype=np.float64)
    cdef double[:, ::1] q1 = q1_arr
    for i in range(rank):
        q1[i, i] = 1.0
    for k in range(rank - 1, -1, -1):
        if betas[k] == 0.0:
            continue
        beta = betas[k]
        for j in range(rank):
            s = 0.0
            for i in range(k, n):
                s += vs[k, i - k] * q1[i, j]
            s *= beta
            for i in range(k, n):
                q1[i, j] -= vs[k, i - k] * s

    for i in range(rank):
        if r[i, i] < 0:
            for j in range(p):
                r[i, j] = -r[i, j]
            for j in range(n):
                q1[j, i] = -q1[j, i]

    return q1_arr, r_arr, piv_arr, int(rank)


@cython.boundscheck(False)
@cython.wraparound(False)
def subtract_projection(double[:, ::1] q1, double[:, ::1] e, double[:, ::1] out):
    """out = e - q1 @ (q1.T @ e), streaming over rows."""
    cdef Py_ssize_t n = e.shape[0]
    cdef Py_ssize_t d = e.shape[1]
    cdef Py_ssize_t q = q1.shape[1]
    cdef Py_ssize_t i, j, k
    cdef double c

    if q == 0:
        for i in range(n):
            for k in range(d):
                out[i, k] = e[i, k]
        return

    g_arr = np.zeros((q, d), dtype=np.float64)
    cdef double[:, ::1] g = g_arr
    for i in range(n):
        for j in range(q):
            c = q1[i, j]
            for k in range(d):
                g[j, k] += c * e[i, k]
    for i in range(n):
        for k in range(d):
            out[i, k] = e[i, k]
        for j in range(q):
            c = q1[i, j]
            for k in range(d):
                out[i, k] -= c * g[j, k]


cdef inline double _sig(double z) nogil:
    cdef double ez
    if z >= 0:
        return 1.0 / (1.0 + exp(-z))
    ez = exp(z)
    return ez / (1.0 + ez)


@cython.boundscheck(False)
@cython.wraparound(False)
@cython.cdivision(True)
cdef inline void _upd(double g, double[::1] w, double[::1] m, double[::1] v,
                      Py_ssize_t k, double lr, double b1, double b2,
                      double eps, long t, bint adam) nogil:
    cdef double mhat, vhat
    if adam:
        m[k] = b1 * m[k] + (1.0 - b1) * g
        v[k] = b2 * v[k] + (1.0 - b2) * g * g
        mhat = m[k] / (1.0 - pow(b1, t))
        vhat = v[k] / (1.0 - pow(b2, t))
        w[k] -= lr * mhat / (sqrt(vhat) + eps)
    else:
        w[k] -= lr * g


@cython.boundscheck(False)
@cython.wraparound(False)
@cython.cdivision(True)
def epoch_binary(double[:, ::1] x, double[::1] y, long long[::1] order,
                 double[::1] w, double[::1] b,
                 double[::1] mw, double[::1] vw,
                 double[::1] mb, double[::1] vb,
                 double lr, double b1, double b2, double eps,
                 Py_ssize_t batch, long t, bint adam):
    """One epoch of minibatch logistic-loss descent; see _core_py."""
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t d = x.shape[1]
    z_arr = np.empty(batch, dtype=np.float64)
    c_arr = np.empty(batch, dtype=np.float64)
    g_arr = np.empty(d, dtype=np.float64)
    cdef double[::1] z = z_arr
    cdef double[::1] c = c_arr
    cdef double[::1] g = g_arr
    cdef Py_ssize_t bi, start, m, i, k, row
    cdef double loss, zi, gb

    bi = 0
    start = 0
    while start < n:
        m = batch if start + batch <= n else n - start
        loss = 0.0
        for i in range(m):
            row = order[start + i]
            zi = b[0]
            for k in range(d):
                zi += x[row, k] * w[k]
            z[i] = zi
            loss += (zi if zi > 0.0 else 0.0) - zi * y[row] + log1p(exp(-fabs(zi)))
        loss /= m
        if not isfinite(loss):
            return t, bi
        for i in range(m):
            c[i] = (_sig(z[i]) - y[order[start + i]]) / m
        t += 1
        for k in range(d):
            g[k] = 0.0
        gb = 0.0
        for i in range(m):
            row = order[start + i]
            for k in range(d):
                g[k] += x[row, k] * c[i]
            gb += c[i]
        for k in range(d):
            _upd(g[k], w, mw, vw, k, lr, b1, b2, eps, t, adam)
        _upd(gb, b, mb, vb, 0, lr, b1, b2, eps, t, adam)
        start += batch
        bi += 1
    return t, -1


@cython.boundscheck(False)
@cython.wraparound(False)
@cython.cdivision(True)
def epoch_linear(double[:, ::1] x, double[::1] y, long long[::1] order,
                 double[::1] w, double[::1] b,
                 double[::1] mw, double[::1] vw,
                 double[::1] mb, double[::1] vb,
                 double lr, double b1, double b2, double eps,
                 Py_ssize_t batch, long t, bint adam):
    """One epoch of minibatch squared-loss descent; see _core_py."""
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t d = x.shape[1]
    diff_arr = np.empty(batch, dtype=np.float64)
    g_arr = np.empty(d, dtype=np.float64)
    cdef double[::1] diff = diff_arr
    cdef double[::1] g = g_arr
    cdef Py_ssize_t bi, start, m, i, k, row
    cdef double loss, zi, gb, ci

    bi = 0
    start = 0
    while start < n:
        m = batch if start + batch <= n else n - start
        loss = 0.0
        for i in range(m):
            row = order[start + i]
            zi = b[0]
            for k in range(d):
                zi += x[row, k] * w[k]
            diff[i] = zi - y[row]
            loss += diff[i] * diff[i]
        loss /= m
        if not isfinite(loss):
            return t, bi
        t += 1
        for k in range(d):
            g[k] = 0.0
        gb = 0.0
        for i in range(m):
            row = order[start + i]
            ci = 2.0 * diff[i] / m
            for k in range(d):
                g[k] += x[row, k] * ci
            gb += ci
        for k in range(d):
            _upd(g[k], w, mw, vw, k, lr, b1, b2, eps, t, adam)
        _upd(gb, b, mb, vb, 0, lr, b1, b2, eps, t, adam)
        start += batch
        bi += 1
    return t, -1


@cython.boundscheck(False)
@cython.wraparound(False)
@cython.cdivision(True)
def epoch_multinomial(double[:, ::1] x, long long[::1] labels, long long[::1] order,
                      double[:, ::1] w, double[::1] b,
                      double[:, ::1] mw, double[:, ::1] vw,
                      double[::1] mb, double[::1] vb,
                      double lr, double b1, double b2, double eps,
                      Py_ssize_t batch, long t, bint adam):
    """One epoch of minibatch softmax cross-entropy descent; see _core_py."""
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t d = x.shape[1]
    cdef Py_ssize_t kc = w.shape[1]
    p_arr = np.empty((batch, kc), dtype=np.float64)
    g_arr = np.empty((d, kc), dtype=np.float64)
    gb_arr = np.empty(kc, dtype=np.float64)
    cdef double[:, ::1] p = p_arr
    cdef double[:, ::1] g = g_arr
    cdef double[::1] gb = gb_arr
    cdef Py_ssize_t bi, start, m, i, j, k, row
    cdef long long lb
    cdef double loss, zmax, sump, zi, mhat, vhat, xi

    bi = 0
    start = 0
    while start < n:
        m = batch if start + batch <= n else n - start
        loss = 0.0
        for i in range(m):
            row = order[start + i]
            zmax = -1e308
            for j in range(kc):
                zi = b[j]
                for k in range(d):
                    zi += x[row, k] * w[k, j]
                p[i, j] = zi
                if zi > zmax:
                    zmax = zi
            sump = 0.0
            for j in range(kc):
                p[i, j] = exp(p[i, j] - zmax)
                sump += p[i, j]
            for j in range(kc):
                p[i, j] /= sump
            loss -= log(p[i, labels[row]])
        loss /= m
        if not isfinite(loss):
            return t, bi
        for i in range(m):
            lb = labels[order[start + i]]
            p[i, lb] -= 1.0
            for j in range(kc):
                p[i, j] /= m
        t += 1
        for k in range(d):
            for j in range(kc):
                g[k, j] = 0.0
        for j in range(kc):
            gb[j] = 0.0
        for i in range(m):
            row = order[start + i]
            for k in range(d):
                xi = x[row, k]
                for j in range(kc):
                    g[k, j] += xi * p[i, j]
            for j in range(kc):
                gb[j] += p[i, j]
        if adam:
            for k in range(d):
                for j in range(kc):
                    mw[k, j] = b1 * mw[k, j] + (1.0 - b1) * g[k, j]
                    vw[k, j] = b2 * vw[k, j] + (1.0 - b2) * g[k, j] * g[k, j]
                    mhat = mw[k, j] / (1.0 - pow(b1, t))
                    vhat = vw[k, j] / (1.0 - pow(b2, t))
                    w[k, j] -= lr * mhat / (sqrt(vhat) + eps)
            for j in range(kc):
                mb[j] = b1 * mb[j] + (1.0 - b1) * gb[j]
                vb[j] = b2 * vb[j] + (1.0 - b2) * gb[j] * gb[j]
                mhat = mb[j] / (1.0 - pow(b1, t))
                vhat = vb[j] / (1.0 - pow(b2, t))
                b[j] -= lr * mhat / (sqrt(vhat) + eps)
        else:
            for k in range(d):
                for j in range(kc):
                    w[k, j] -= lr * g[k, j]
            for j in range(kc):
                b[j] -= lr * gb[j]
        start += batch
        bi += 1
    return t, -1
