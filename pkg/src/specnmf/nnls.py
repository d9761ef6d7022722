"""Non-negative least squares and the vector metrics built on it.

The solver is the Lawson-Hanson active-set method. Everything downstream
(scoring, denoising, outlier features) goes through :func:`nnls_solve`.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateVectorWarning, InputError, UndefinedVarianceError

__all__ = [
    "NnlsSolution",
    "as_matrix",
    "nnls_solve",
    "cosine_similarity",
    "explained_variance_ratio",
]

DEFAULT_TOLERANCE = 1e-10


@dataclass(frozen=True)
class NnlsSolution:
    coefficients: np.ndarray
    residual_norm: float
    iterations: int
    converged: bool


def as_matrix(values, name="matrix") -> np.ndarray:
    """Return ``values`` as a finite 2-D float64 array or raise InputError."""
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 2:
        raise InputError(f"{name} must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InputError(f"{name} contains non-finite entries")
    return arr


def _as_vector(values, name):
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1:
        raise InputError(f"{name} must be 1-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InputError(f"{name} contains non-finite entries")
    return arr


def _free_set_lstsq(A, b, free):
    """Least squares on the columns in ``free``; minimum-norm if rank-deficient."""
    sub = A[:, free]
    z = np.zeros(A.shape[1])
    m, p = sub.shape
    if p <= m:
        q, r = np.linalg.qr(sub)
        diag = np.abs(np.diag(r))
        if diag.size and diag.min() > max(m, p) * np.finfo(float).eps * diag.max():
            z[free] = np.linalg.solve(r, q.T @ b)
            return z
    z[free] = np.linalg.lstsq(sub, b, rcond=None)[0]
    return z


def nnls_solve(basis, target, tolerance=DEFAULT_TOLERANCE, max_iterations=None) -> NnlsSolution:
    """Solve ``min ||target - basis @ s||_2`` subject to ``s >= 0``.

    Parameters
    ----------
    basis : array_like, shape (m, k)
        Columns are the basis vectors. They need not be non-negative.
    target : array_like, shape (m,)
    tolerance : float
        KKT tolerance relative to ``||basis.T @ target||_inf``.
    max_iterations : int, optional
        Cap on outer (variable-freeing) iterations; defaults to ``3 * k``.

    Returns
    -------
    NnlsSolution
        If the cap is hit, the last feasible iterate is returned with
        ``converged=False``. The same happens when freeing a variable would
        need a coefficient beyond the float range (a near-zero column); that
        variable stays at zero.

    Notes
    -----
    Starts from ``s = 0`` with every constraint active. Each outer step frees
    the variable with the largest dual (most negative gradient), solves the
    unconstrained problem on the free set and, while that solution leaves the
    feasible region, steps back along the segment to the boundary and
    re-activates the variables that hit zero.
    """
    A = as_matrix(basis, "basis")
    b = _as_vector(target, "target")
    m, k = A.shape
    if m < 1 or k < 1:
        raise InputError("basis must have at least one row and one column")
    if b.shape[0] != m:
        raise InputError(f"target length {b.shape[0]} does not match basis rows {m}")
    if not tolerance > 0:
        raise InputError("tolerance must be positive")
    if max_iterations is None:
        max_iterations = 3 * k

    x = np.zeros(k)
    if not np.any(b):
        return NnlsSolution(x, 0.0, 0, True)

    w = A.T @ b
    tol = tolerance * max(np.max(np.abs(w)), np.finfo(float).tiny)
    free = np.zeros(k, dtype=bool)
    # variables whose freeing made no progress; skipped until x changes
    blocked = np.zeros(k, dtype=bool)
    iterations = 0
    converged = False
    # set when the optimum on some free set is not representable in floats
    overflow = False
    inner_cap = 3 * k + 10

    while True:
        candidates = ~free & ~blocked
        if not np.any(candidates) or np.max(np.where(candidates, w, -np.inf)) <= tol:
            converged = True
            break
        if iterations >= max_iterations:
            break
        iterations += 1

        t = int(np.argmax(np.where(candidates, w, -np.inf)))
        free[t] = True
        z = _free_set_lstsq(A, b, free)
        finite = bool(np.all(np.isfinite(z)))
        overflow |= not finite
        if not finite or z[t] <= 0:
            # numerically the freed variable cannot move; undo and skip it
            free[t] = False
            blocked[t] = True
            continue

        for _ in range(inner_cap):
            bad = free & (z <= 0)
            if not np.any(bad):
                break
            ratios = x[bad] / (x[bad] - z[bad])
            alpha = np.min(ratios)
            x = x + alpha * (z - x)
            hit = free & (x <= 10 * np.finfo(float).eps * np.max(np.abs(x)))
            hit[np.flatnonzero(bad)[np.argmin(ratios)]] = True
            free[hit] = False
            x[~free] = 0.0
            z = _free_set_lstsq(A, b, free)
        x = np.where(free, z, 0.0)
        x[x < 0] = 0.0
        w = A.T @ (b - A @ x)
        blocked[:] = False

    residual = float(np.linalg.norm(b - A @ x))
    return NnlsSolution(x, residual, iterations, converged and not overflow)


def cosine_similarity(u, v) -> float:
    """Cosine of the angle between ``u`` and ``v``.

    An all-zero input makes the angle undefined; 0.0 is returned and a
    :class:`DegenerateVectorWarning` is issued.
    """
    u = _as_vector(u, "u")
    v = _as_vector(v, "v")
    if u.shape != v.shape:
        raise InputError(f"length mismatch: {u.shape[0]} vs {v.shape[0]}")
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0 or nv == 0:
        warnings.warn("cosine similarity of an all-zero vector", DegenerateVectorWarning, stacklevel=2)
        return 0.0
    # scale first so huge count vectors cannot overflow the dot product
    c = float(np.dot(u / nu, v / nv))
    return min(1.0, max(-1.0, c))


def explained_variance_ratio(original, reconstruction) -> float:
    """``1 - Var(original - reconstruction) / Var(original)`` with population variance."""
    x = _as_vector(original, "original")
    r = _as_vector(reconstruction, "reconstruction")
    if x.shape != r.shape:
        raise InputError(f"length mismatch: {x.shape[0]} vs {r.shape[0]}")
    var = np.var(x)
    if var == 0:
        raise UndefinedVarianceError("original has zero variance")
    return float(1.0 - np.var(x - r) / var)
