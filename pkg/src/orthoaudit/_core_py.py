"""Pure NumPy implementations of the hot kernels.

The compiled extension ``orthoaudit._core`` provides the same five
functions with identical signatures and semantics; this module is the
fallback used when the extension is not built.  Both backends keep a fixed
summation order per output element, so results are reproducible run to run
on either backend (the two backends agree to rounding, not bit for bit).
"""

import numpy as np

NAME = "python"

# Row-block size for the projector application.  Bounds temporaries to
# blocks of the embedding instead of a second full n*d array.
_BLOCK = 4096


def qr_pivoted(x, tol):
    """Column-pivoted Householder QR of ``x`` (n x p).

    Returns ``(q1, r, piv, rank)`` where ``x[:, piv] ~= q1 @ r``, ``q1`` has
    orthonormal columns spanning col(x) and ``r`` is upper-trapezoidal with
    non-increasing, non-negative diagonal.  ``rank`` counts diagonal entries
    of magnitude above ``tol * |r[0, 0]|``.
    """
    a = np.array(x, dtype=np.float64, order="C", copy=True)
    n, p = a.shape
    steps = min(n, p)
    piv = np.arange(p)
    vs = []  # householder vectors, one per factored column

    for k in range(steps):
        norms = np.sqrt(np.einsum("ij,ij->j", a[k:, k:], a[k:, k:]))
        jmax = k + int(np.argmax(norms))
        if jmax != k:
            a[:, [k, jmax]] = a[:, [jmax, k]]
            piv[[k, jmax]] = piv[[jmax, k]]

        col = a[k:, k]
        sigma = float(col @ col)
        if sigma == 0.0:
            vs.append(None)
            continue
        v = col.copy()
        alpha = np.sqrt(sigma)
        if v[0] >= 0:
            v[0] += alpha
        else:
            v[0] -= alpha
        beta = 2.0 / float(v @ v)
        vs.append((v, beta))
        a[k:, k:] -= np.outer(beta * v, v @ a[k:, k:])

    diag = np.abs(np.diag(a)[:steps])
    threshold = tol * diag[0] if steps > 0 else 0.0
    rank = int(np.count_nonzero(diag > threshold))

    r = np.triu(a[:rank, :])
    q1 = np.zeros((n, rank))
    q1[np.arange(rank), np.arange(rank)] = 1.0
    for k in range(rank - 1, -1, -1):
        if vs[k] is None:
            continue
        v, beta = vs[k]
        q1[k:, :] -= np.outer(beta * v, v @ q1[k:, :])

    # sign convention: non-negative diagonal of r
    for i in range(rank):
        if r[i, i] < 0:
            r[i, :] = -r[i, :]
            q1[:, i] = -q1[:, i]

    return np.ascontiguousarray(q1), np.ascontiguousarray(r), piv, rank


def subtract_projection(q1, e, out):
    """Write ``e - q1 @ (q1.T @ e)`` into the preallocated ``out``.

    Blocked over rows so no temporary larger than ``_BLOCK`` rows is
    created; ``out`` may not alias ``e``.
    """
    n = e.shape[0]
    if q1.shape[1] == 0:
        np.copyto(out, e)
        return
    g = q1.T @ e
    for start in range(0, n, _BLOCK):
        stop = min(start + _BLOCK, n)
        np.subtract(e[start:stop], q1[start:stop] @ g, out=out[start:stop])


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _adam_step(g, w, m, v, lr, b1, b2, eps, t):
    m *= b1
    m += (1.0 - b1) * g
    v *= b2
    v += (1.0 - b2) * g * g
    mhat = m / (1.0 - b1**t)
    vhat = v / (1.0 - b2**t)
    w -= lr * mhat / (np.sqrt(vhat) + eps)


def _update(g, w, m, v, lr, b1, b2, eps, t, adam):
    if adam:
        _adam_step(g, w, m, v, lr, b1, b2, eps, t)
    else:
        w -= lr * g


def epoch_binary(x, y, order, w, b, mw, vw, mb, vb,
                 lr, b1, b2, eps, batch, t, adam):
    """One epoch of minibatch logistic-loss descent.

    ``order`` is the visit order of the rows; state arrays are updated in
    place.  Returns ``(t, bad_batch)`` where ``bad_batch`` is the index of
    the first batch with a non-finite loss, or -1.
    """
    n = x.shape[0]
    for bi, start in enumerate(range(0, n, batch)):
        idx = order[start:start + batch]
        xb = x[idx]
        yb = y[idx]
        z = xb @ w + b[0]
        loss = float(np.mean(np.maximum(z, 0.0) - z * yb + np.log1p(np.exp(-np.abs(z)))))
        if not np.isfinite(loss):
            return t, bi
        c = (_sigmoid(z) - yb) / idx.shape[0]
        t += 1
        _update(xb.T @ c, w, mw, vw, lr, b1, b2, eps, t, adam)
        _update(np.array([c.sum()]), b, mb, vb, lr, b1, b2, eps, t, adam)
    return t, -1


def epoch_linear(x, y, order, w, b, mw, vw, mb, vb,
                 lr, b1, b2, eps, batch, t, adam):
    """One epoch of minibatch squared-loss descent (see epoch_binary)."""
    n = x.shape[0]
    for bi, start in enumerate(range(0, n, batch)):
        idx = order[start:start + batch]
        xb = x[idx]
        diff = xb @ w + b[0] - y[idx]
        # overflow here is the divergence signal, not an error
        with np.errstate(over="ignore"):
            loss = float(np.mean(diff * diff))
        if not np.isfinite(loss):
            return t, bi
        c = 2.0 * diff / idx.shape[0]
        t += 1
        _update(xb.T @ c, w, mw, vw, lr, b1, b2, eps, t, adam)
        _update(np.array([c.sum()]), b, mb, vb, lr, b1, b2, eps, t, adam)
    return t, -1


def epoch_multinomial(x, labels, order, w, b, mw, vw, mb, vb,
                      lr, b1, b2, eps, batch, t, adam):
    """One epoch of minibatch softmax cross-entropy descent.

    ``w`` is d x k, ``b`` is length k; otherwise as epoch_binary.
    """
    n = x.shape[0]
    for bi, start in enumerate(range(0, n, batch)):
        idx = order[start:start + batch]
        xb = x[idx]
        lb = labels[idx]
        z = xb @ w + b
        z -= z.max(axis=1, keepdims=True)
        ez = np.exp(z)
        p = ez / ez.sum(axis=1, keepdims=True)
        loss = float(-np.mean(np.log(p[np.arange(idx.shape[0]), lb])))
        if not np.isfinite(loss):
            return t, bi
        c = p
        c[np.arange(idx.shape[0]), lb] -= 1.0
        c /= idx.shape[0]
        t += 1
        _update(xb.T @ c, w, mw, vw, lr, b1, b2, eps, t, adam)
        _update(c.sum(axis=0), b, mb, vb, lr, b1, b2, eps, t, adam)
    return t, -1
