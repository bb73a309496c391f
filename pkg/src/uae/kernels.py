"""Hot numeric loops, each with a numba kernel and a vectorized numpy twin.

The module-level names (``jacobi_eigh``, ``pairwise_scatter``, ``ista``,
``ista_batch``, ``knn_vote``) resolve to the numba kernels unless
``UAE_DISABLE_NUMBA`` is set. Both variants are always reachable through
``BACKENDS`` so tests and the benchmark can compare them.
"""
import math

import numpy as np

from ._accel import HAVE_NUMBA, USE_NUMBA, njit


# --------------------------------------------------------------------------
# cyclic Jacobi eigensolver for symmetric matrices
# --------------------------------------------------------------------------

def _rotation(app, aqq, apq):
    # Golub & Van Loan sym.schur2: (c, s) zeroing the (p, q) entry
    theta = (aqq - app) / (2.0 * apq)
    if theta >= 0.0:
        t = 1.0 / (theta + math.sqrt(1.0 + theta * theta))
    else:
        t = -1.0 / (-theta + math.sqrt(1.0 + theta * theta))
    c = 1.0 / math.sqrt(1.0 + t * t)
    return c, t * c


def _jacobi_np(s, tol, max_sweeps):
    a = np.array(s, dtype=np.float64, copy=True)
    n = a.shape[0]
    v = np.eye(n)
    scale = math.sqrt(float(np.sum(a * a)))
    thresh = tol * scale if scale > 0.0 else tol
    iu = np.triu_indices(n, 1)
    for sweep in range(max_sweeps + 1):
        off = math.sqrt(2.0 * float(np.sum(a[iu] ** 2)))
        if off <= thresh:
            return np.diag(a).copy(), v, sweep
        if sweep == max_sweeps:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                c, sn = _rotation(a[p, p], a[q, q], apq)
                colp = a[:, p].copy()
                a[:, p] = c * colp - sn * a[:, q]
                a[:, q] = sn * colp + c * a[:, q]
                rowp = a[p, :].copy()
                a[p, :] = c * rowp - sn * a[q, :]
                a[q, :] = sn * rowp + c * a[q, :]
                vp = v[:, p].copy()
                v[:, p] = c * vp - sn * v[:, q]
                v[:, q] = sn * vp + c * v[:, q]
    return np.diag(a).copy(), v, -1


def _jacobi_loops(s, tol, max_sweeps):
    n = s.shape[0]
    a = s.copy()
    v = np.zeros((n, n))
    for i in range(n):
        v[i, i] = 1.0
    scale = 0.0
    for i in range(n):
        for j in range(n):
            scale += a[i, j] * a[i, j]
    scale = math.sqrt(scale)
    thresh = tol * scale if scale > 0.0 else tol
    for sweep in range(max_sweeps + 1):
        off = 0.0
        for i in range(n):
            for j in range(n):
                if i != j:
                    off += a[i, j] * a[i, j]
        if math.sqrt(off) <= thresh:
            d = np.empty(n)
            for i in range(n):
                d[i] = a[i, i]
            return d, v, sweep
        if sweep == max_sweeps:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                if theta >= 0.0:
                    t = 1.0 / (theta + math.sqrt(1.0 + theta * theta))
                else:
                    t = -1.0 / (-theta + math.sqrt(1.0 + theta * theta))
                c = 1.0 / math.sqrt(1.0 + t * t)
                sn = t * c
                for k in range(n):
                    akp = a[k, p]
                    akq = a[k, q]
                    a[k, p] = c * akp - sn * akq
                    a[k, q] = sn * akp + c * akq
                for k in range(n):
                    apk = a[p, k]
                    aqk = a[q, k]
                    a[p, k] = c * apk - sn * aqk
                    a[q, k] = sn * apk + c * aqk
                for k in range(n):
                    vkp = v[k, p]
                    vkq = v[k, q]
                    v[k, p] = c * vkp - sn * vkq
                    v[k, q] = sn * vkp + c * vkq
    d = np.empty(n)
    for i in range(n):
        d[i] = a[i, i]
    return d, v, -1


# --------------------------------------------------------------------------
# sum over ordered pairs of (xi - xj)(xi - xj)^T
# --------------------------------------------------------------------------

def _scatter_np(d):
    n_pts, dim = d.shape
    out = np.zeros((dim, dim))
    # one row of the double sum at a time keeps memory at O(N n)
    for i in range(n_pts):
        diff = d[i] - d
        out += diff.T @ diff
    return out


def _scatter_loops(d):
    # the pair sum collapses to 2 N sum_i (x_i - mean)(x_i - mean)^T
    n_pts, dim = d.shape
    mean = np.zeros(dim)
    for i in range(n_pts):
        for k in range(dim):
            mean[k] += d[i, k]
    for k in range(dim):
        mean[k] /= n_pts
    out = np.zeros((dim, dim))
    c = np.empty(dim)
    for i in range(n_pts):
        for k in range(dim):
            c[k] = d[i, k] - mean[k]
        for k in range(dim):
            ck = c[k]
            for l in range(k, dim):
                out[k, l] += ck * c[l]
    for k in range(dim):
        for l in range(k, dim):
            out[k, l] *= 2.0 * n_pts
            out[l, k] = out[k, l]
    return out


# --------------------------------------------------------------------------
# ISTA for  min_x ||x||_1 + lam ||y - W x||^2
# --------------------------------------------------------------------------

def _ista_np(y, w, lam, step, max_iters, tol, x0):
    x = x0.astype(np.float64, copy=True)
    g = 2.0 * lam * step
    for it in range(1, max_iters + 1):
        v = x + g * (w.T @ (y - w @ x))
        x_new = np.sign(v) * np.maximum(np.abs(v) - step, 0.0)
        change = float(np.max(np.abs(x_new - x))) if x.size else 0.0
        x = x_new
        if change < tol:
            return x, it
    return x, max_iters


def _ista_loops(y, w, lam, step, max_iters, tol, x0):
    m, n = w.shape
    wt = np.ascontiguousarray(w.T)
    x = x0.copy()
    r = np.empty(m)
    g = 2.0 * lam * step
    for it in range(1, max_iters + 1):
        for i in range(m):
            acc = y[i]
            for j in range(n):
                acc -= w[i, j] * x[j]
            r[i] = acc
        change = 0.0
        for j in range(n):
            acc = 0.0
            for i in range(m):
                acc += wt[j, i] * r[i]
            v = x[j] + g * acc
            if v > step:
                xn = v - step
            elif v < -step:
                xn = v + step
            else:
                xn = 0.0
            dlt = abs(xn - x[j])
            if dlt > change:
                change = dlt
            x[j] = xn
        if change < tol:
            return x, it
    return x, max_iters


def _ista_batch_np(ys, w, lam, step, max_iters, tol):
    # rows of ys are independent problems; converged rows stop updating
    x = np.zeros((ys.shape[0], w.shape[1]))
    iters = np.full(ys.shape[0], max_iters, dtype=np.int64)
    active = np.arange(ys.shape[0])
    g = 2.0 * lam * step
    for it in range(1, max_iters + 1):
        if active.size == 0:
            break
        xa = x[active]
        v = xa + g * ((ys[active] - xa @ w.T) @ w)
        xn = np.sign(v) * np.maximum(np.abs(v) - step, 0.0)
        change = np.max(np.abs(xn - xa), axis=1) if w.shape[1] else np.zeros(active.size)
        x[active] = xn
        done = change < tol
        iters[active[done]] = it
        active = active[~done]
    return x, iters


def _ista_batch_loops(ys, w, lam, step, max_iters, tol):
    out = np.zeros((ys.shape[0], w.shape[1]))
    iters = np.empty(ys.shape[0], dtype=np.int64)
    x0 = np.zeros(w.shape[1])
    for b in range(ys.shape[0]):
        x, it = _ista_loops_c(ys[b].copy(), w, lam, step, max_iters, tol, x0)
        out[b] = x
        iters[b] = it
    return out, iters


# --------------------------------------------------------------------------
# brute-force k nearest neighbours with smallest-label tie breaking
# --------------------------------------------------------------------------

def _knn_np(train, labels, test, k, n_classes):
    # explicit differences, in row blocks, so equal distances compare exactly equal
    d2 = np.empty((test.shape[0], train.shape[0]))
    block = max(1, 2_000_000 // max(1, train.size))
    for s in range(0, test.shape[0], block):
        diff = test[s:s + block, None, :] - train[None, :, :]
        d2[s:s + block] = np.einsum("tij,tij->ti", diff, diff)
    # stable sort: equal distances resolve to the lower training index
    nn = np.argsort(d2, axis=1, kind="stable")[:, :k]
    votes = np.zeros((test.shape[0], n_classes), dtype=np.int64)
    rows = np.repeat(np.arange(test.shape[0]), k)
    np.add.at(votes, (rows, labels[nn].ravel()), 1)
    return np.argmax(votes, axis=1).astype(np.int64)


def _knn_loops(train, labels, test, k, n_classes):
    n_test = test.shape[0]
    n_train, dim = train.shape
    out = np.empty(n_test, dtype=np.int64)
    d2 = np.empty(n_train)
    for t in range(n_test):
        for i in range(n_train):
            acc = 0.0
            for j in range(dim):
                diff = test[t, j] - train[i, j]
                acc += diff * diff
            d2[i] = acc
        order = np.argsort(d2, kind="mergesort")
        votes = np.zeros(n_classes, dtype=np.int64)
        for r in range(k):
            votes[labels[order[r]]] += 1
        out[t] = np.argmax(votes)
    return out


_jacobi_loops_c = njit(_jacobi_loops)
_scatter_loops_c = njit(_scatter_loops)
_ista_loops_c = njit(_ista_loops)
_ista_batch_loops_c = njit(_ista_batch_loops)
_knn_loops_c = njit(_knn_loops)

BACKENDS = {
    "numpy": {
        "jacobi_eigh": _jacobi_np,
        "pairwise_scatter": _scatter_np,
        "ista": _ista_np,
        "ista_batch": _ista_batch_np,
        "knn_vote": _knn_np,
    },
}
if HAVE_NUMBA:
    BACKENDS["numba"] = {
        "jacobi_eigh": _jacobi_loops_c,
        "pairwise_scatter": _scatter_loops_c,
        "ista": _ista_loops_c,
        "ista_batch": _ista_batch_loops_c,
        "knn_vote": _knn_loops_c,
    }

ACTIVE = "numba" if USE_NUMBA else "numpy"
# batched ISTA is matrix-product bound, where numpy's BLAS
# path measures faster than the compiled loops (see benchmarks/bench_kernels.py)
_PREFER_NUMPY = ("ista_batch",)
_active = {k: BACKENDS["numpy" if k in _PREFER_NUMPY else ACTIVE][k] for k in BACKENDS["numpy"]}

jacobi_eigh = _active["jacobi_eigh"]
pairwise_scatter = _active["pairwise_scatter"]
ista = _active["ista"]
ista_batch = _active["ista_batch"]
knn_vote = _active["knn_vote"]
