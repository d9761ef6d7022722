"""Independent reference computations used to freeze expected values.

Nothing here imports the package under test.
"""
import itertools

import numpy as np


def nnls_enumerate(A, b):
    """Brute-force NNLS: try every free set, keep the best feasible LS solution."""
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    k = A.shape[1]
    best_x = np.zeros(k)
    best_r = float(np.linalg.norm(b))
    for size in range(1, k + 1):
        for free in itertools.combinations(range(k), size):
            cols = list(free)
            sol = np.linalg.lstsq(A[:, cols], b, rcond=None)[0]
            if np.any(sol < 0):
                continue
            x = np.zeros(k)
            x[cols] = sol
            r = float(np.linalg.norm(b - A @ x))
            if r < best_r - 1e-13:
                best_x, best_r = x, r
    return best_x, best_r


def overlap_rebin(src_edges, counts, dst_edges):
    """Rebin by explicit pairwise bin-overlap integrals (uniform density per bin)."""
    out = np.zeros(len(dst_edges) - 1)
    for i in range(len(counts)):
        lo, hi = src_edges[i], src_edges[i + 1]
        for j in range(len(out)):
            ov = min(hi, dst_edges[j + 1]) - max(lo, dst_edges[j])
            if ov > 0:
                out[j] += counts[i] * ov / (hi - lo)
    return out


def log_likelihood(w, b, x, y):
    z = w * np.asarray(x) + b
    return float(np.sum(y * z - np.logaddexp(0.0, z)))


def logistic_grid_boundary(x, y, w_range, b_range, n=801):
    """Coarse-to-fine grid search of the logistic log-likelihood over (w, b)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    (w_lo, w_hi), (b_lo, b_hi) = w_range, b_range
    for _ in range(4):
        ws = np.linspace(w_lo, w_hi, n)
        bs = np.linspace(b_lo, b_hi, n)
        W, B = np.meshgrid(ws, bs, indexing="ij")
        Z = W[..., None] * x + B[..., None]
        ll = np.sum(y * Z - np.logaddexp(0.0, Z), axis=-1)
        i, j = np.unravel_index(np.argmax(ll), ll.shape)
        dw = (w_hi - w_lo) / (n - 1) * 4
        db = (b_hi - b_lo) / (n - 1) * 4
        w_lo, w_hi = ws[i] - dw, ws[i] + dw
        b_lo, b_hi = bs[j] - db, bs[j] + db
    return ws[i], bs[j]


def gini_stump(x, y):
    """Exhaustive Gini split search by direct counting over all midpoints."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=bool)
    vals = np.unique(x)
    best = (np.inf, None)
    n = len(x)
    for lo, hi in zip(vals[:-1], vals[1:]):
        t = (lo + hi) / 2
        imp = 0.0
        for side in (x < t, x >= t):
            cnt = side.sum()
            p = y[side].mean()
            imp += cnt / n * (1 - p * p - (1 - p) * (1 - p))
        if imp < best[0] - 1e-15:
            best = (imp, t)
    return best
