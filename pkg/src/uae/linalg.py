"""Dense linear algebra, Adam, and a finite-difference gradient oracle.

Matrices are plain 2-D float64 numpy arrays in C order.
"""
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import DimensionError, NumericError, ValidationError

EIG_TOL = 1e-12
EIG_MAX_SWEEPS = 100


def as_matrix(a, name="matrix"):
    a = np.ascontiguousarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {a.shape}")
    return a


def matmul(a, b):
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def fix_signs(vectors):
    """Flip each row so its largest-magnitude entry (first on ties) is >= 0."""
    vectors = np.array(vectors, dtype=np.float64, copy=True)
    for row in vectors:
        if row[np.argmax(np.abs(row))] < 0:
            row *= -1.0
    return vectors


def sym_eig(s, tol=EIG_TOL, max_sweeps=EIG_MAX_SWEEPS):
    """Full eigensystem of a symmetric matrix by cyclic Jacobi rotations.

    Returns eigenvalues in descending order and the eigenvectors as rows,
    normalized to the sign convention of :func:`fix_signs`.
    """
    s = as_matrix(s, "s")
    n = s.shape[0]
    if s.shape[1] != n:
        raise DimensionError(f"expected a square matrix, got {s.shape}")
    if not np.all(np.isfinite(s)):
        raise NumericError("matrix has non-finite entries")
    scale = max(1.0, float(np.max(np.abs(s)))) if s.size else 1.0
    if np.max(np.abs(s - s.T), initial=0.0) > 1e-9 * scale:
        raise ValidationError("matrix is not symmetric within 1e-9")
    s = 0.5 * (s + s.T)
    vals, vecs, sweeps = kernels.jacobi_eigh(s, tol, max_sweeps)
    if sweeps < 0:
        raise NumericError(f"Jacobi iteration did not converge in {max_sweeps} sweeps")
    order = np.argsort(-vals, kind="stable")
    return vals[order], fix_signs(vecs[:, order].T)


def sym_eig_topm(s, m):
    """Top-``m`` eigenpairs of symmetric ``s``: (values desc, vectors as m x n rows)."""
    s = as_matrix(s, "s")
    if not 0 <= m <= s.shape[0]:
        raise ValidationError(f"m={m} outside [0, {s.shape[0]}]")
    vals, vecs = sym_eig(s)
    return vals[:m], vecs[:m]


def power_iteration(a, iters=1000, tol=1e-10, seed_vec=None):
    """Largest eigenvalue of a symmetric PSD matrix."""
    a = as_matrix(a)
    n = a.shape[0]
    if n == 0:
        return 0.0
    v = np.ones(n) / np.sqrt(n) if seed_vec is None else seed_vec / np.linalg.norm(seed_vec)
    lam = 0.0
    for _ in range(iters):
        w = a @ v
        norm = np.linalg.norm(w)
        if not np.isfinite(norm):
            raise NumericError("power iteration produced non-finite values")
        if norm == 0.0:
            return 0.0
        v = w / norm
        if abs(norm - lam) <= tol * max(norm, 1.0):
            return float(norm)
        lam = norm
    # ones can be orthogonal to the top eigenvector; fall back to the exact answer
    vals, _ = sym_eig(a)
    if vals.size and abs(vals[0] - lam) > 1e-6 * max(1.0, vals[0]):
        return float(vals[0])
    return float(lam)


@dataclass
class AdamState:
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    first_moment: list = field(default_factory=list)
    second_moment: list = field(default_factory=list)

    @classmethod
    def for_params(cls, params, **kwargs):
        return cls(
            first_moment=[np.zeros_like(p) for p in params],
            second_moment=[np.zeros_like(p) for p in params],
            **kwargs,
        )


def adam_update(params, grads, state):
    """One bias-corrected Adam step applied in place; returns ``(params, state)``."""
    if not (len(params) == len(grads) == len(state.first_moment) == len(state.second_moment)):
        raise DimensionError("params, grads and moments must align")
    for i, (p, g) in enumerate(zip(params, grads)):
        if p.shape != g.shape:
            raise DimensionError(f"parameter {i}: shape {p.shape} vs gradient {g.shape}")
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient for parameter {i}")
        with np.errstate(over="ignore"):
            if not np.all(np.isfinite(g * g)):
                raise NumericError(f"gradient for parameter {i} overflows the second moment")
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1**t
    bc2 = 1.0 - b2**t
    for p, g, m, v in zip(params, grads, state.first_moment, state.second_moment):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    return params, state


def finite_diff_grad(f, params, h=1e-5):
    """Central differences of scalar ``f()`` w.r.t. every entry of ``params``.

    ``params`` is an array or a list of arrays that ``f`` reads; entries are
    perturbed in place and restored.
    """
    if h <= 0:
        raise ValidationError("h must be positive")
    single = isinstance(params, np.ndarray)
    plist = [params] if single else list(params)
    grads = []
    for p in plist:
        g = np.zeros_like(p)
        flat = p.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = f()
            flat[i] = orig - h
            fm = f()
            flat[i] = orig
            if not (np.isfinite(fp) and np.isfinite(fm)):
                raise NumericError(f"f is non-finite near entry {i}")
            gflat[i] = (fp - fm) / (2.0 * h)
        grads.append(g)
    return grads[0] if single else grads
