"""Detect spectra of classes the model never saw.

A leave-one-class-out study produces a feature table with known outlier
flags. Three boundaries can be read off it: the Gini-optimal stump split,
the 50% point of a 1-D logistic fit, and a manual pick from an
accuracy/precision/recall sweep.
"""
from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import InputError
from .io import SpectraSet
from .model import SupervisedNmfModel, analyze, fit

__all__ = [
    "FEATURES",
    "OutlierStudy",
    "DecisionBoundary",
    "StumpFit",
    "LogisticFit",
    "SweepCurve",
    "compute_features",
    "build_study",
    "leave_one_out",
    "boundary_quality",
    "stump_fit",
    "permutation_importance",
    "logistic_fit_1d",
    "threshold_sweep",
    "adequate_band",
]

FEATURES = (
    "cosine_to_original",
    "explained_variance",
    "residual_norm",
    "max_share",
    "shares_entropy",
    "total_counts",
)


@dataclass(frozen=True)
class OutlierStudy:
    feature_names: tuple
    values: np.ndarray  # (n, n_features)
    is_outlier: np.ndarray  # (n,) bool
    held_out_label: str

    def __post_init__(self):
        if not np.all(np.isfinite(self.values)):
            raise InputError("feature values must be finite")

    def column(self, feature) -> np.ndarray:
        return self.values[:, self.feature_names.index(feature)]

    def to_csv(self) -> str:
        out = io.StringIO()
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow([*self.feature_names, "is_outlier"])
        for row, flag in zip(self.values, self.is_outlier):
            writer.writerow([*(repr(float(v)) for v in row), int(flag)])
        return out.getvalue()


@dataclass(frozen=True)
class DecisionBoundary:
    feature: str
    threshold: float
    direction: str  # "below" or "above": which side is flagged as outlier
    method: str  # "stump", "logistic" or "manual"
    quality: dict

    def to_dict(self):
        return {
            "feature": self.feature,
            "threshold": self.threshold,
            "direction": self.direction,
            "method": self.method,
            "quality": self.quality,
        }


def compute_features(result, spectrum) -> np.ndarray:
    """Feature vector in :data:`FEATURES` order.

    Undefined quantities get fixed encodings: an undefined explained variance
    is 0, undetermined shares give ``max_share = 0`` and entropy ``ln k``.
    """
    counts = np.asarray(getattr(spectrum, "counts", spectrum), dtype=float)
    k = len(result.scores.raw)
    if result.shares is None:
        max_share, entropy = 0.0, math.log(k)
    else:
        p = np.asarray(result.shares)
        nz = p[p > 0]
        max_share = float(p.max())
        entropy = float(-np.sum(nz * np.log(nz))) + 0.0
    ev = 0.0 if result.explained_variance is None else result.explained_variance
    return np.array(
        [result.cosine_to_original, ev, result.scores.residual_norm, max_share, entropy, counts.sum()]
    )


def build_study(model: SupervisedNmfModel, spectra, is_outlier, held_out_label="") -> OutlierStudy:
    rows = [compute_features(analyze(model, s), s) for s in spectra]
    values = np.array(rows) if rows else np.zeros((0, len(FEATURES)))
    return OutlierStudy(FEATURES, values, np.asarray(is_outlier, dtype=bool), held_out_label)


def leave_one_out(full_set: SpectraSet, held_out: str, test_set: SpectraSet | None = None):
    """Fit without ``held_out`` and tabulate features for the test spectra.

    Training uses the single-label spectra of every other class. A test
    spectrum is an outlier when ``held_out`` is among its labels. Without a
    ``test_set`` the full set itself is scored.
    """
    classes = {l for s in full_set if len(s.labels) == 1 for l in s.labels}
    if held_out not in classes:
        raise InputError(f"unknown label {held_out!r}")
    if len(classes) < 2:
        raise InputError("leave-one-out needs at least two classes")
    model = fit(full_set.with_spectra(s for s in full_set if len(s.labels) == 1 and held_out not in s.labels))
    test = full_set if test_set is None else test_set
    flags = [held_out in s.labels for s in test]
    return model, build_study(model, test, flags, held_out)


def _predict(values, threshold, direction):
    return values < threshold if direction == "below" else values > threshold


def boundary_quality(values, flags, threshold, direction="below") -> dict:
    """Accuracy, precision and recall of flagging outliers at ``threshold``."""
    flags = np.asarray(flags, dtype=bool)
    pred = _predict(np.asarray(values, dtype=float), threshold, direction)
    tp = int(np.sum(pred & flags))
    fp = int(np.sum(pred & ~flags))
    fn = int(np.sum(~pred & flags))
    n = flags.size
    return {
        "accuracy": (n - fp - fn) / n if n else None,
        "precision": tp / (tp + fp) if tp + fp else None,
        "recall": tp / (tp + fn) if tp + fn else None,
    }


def _gini(pos, total):
    p = pos / total
    return 1.0 - p * p - (1.0 - p) * (1.0 - p)


def _best_split(x, y):
    """Return (threshold, weighted Gini, direction) of the best single split."""
    n = x.size
    parent = _gini(y.sum(), n)
    order = np.argsort(x, kind="stable")
    xs, ys = x[order], y[order]
    cut = np.flatnonzero(np.diff(xs) > 0)  # split after position cut[i]
    if cut.size == 0:
        return float(xs[0]), parent, "below"
    left_n = cut + 1.0
    left_pos = np.cumsum(ys)[cut].astype(float)
    right_n = n - left_n
    right_pos = ys.sum() - left_pos
    impurity = (left_n * _gini(left_pos, left_n) + right_n * _gini(right_pos, right_n)) / n
    best = int(np.argmin(impurity))
    threshold = float((xs[cut[best]] + xs[cut[best] + 1]) / 2)
    below = left_pos[best] / left_n[best] >= right_pos[best] / right_n[best]
    return threshold, float(impurity[best]), "below" if below else "above"


@dataclass(frozen=True)
class StumpFit:
    boundaries: tuple  # one DecisionBoundary per feature
    impurities: tuple
    best_index: int

    @property
    def best(self) -> DecisionBoundary:
        return self.boundaries[self.best_index]

    def predict(self, values) -> np.ndarray:
        b = self.best
        return _predict(np.asarray(values, dtype=float)[:, self.best_index], b.threshold, b.direction)


def stump_fit(study: OutlierStudy) -> StumpFit:
    """Gini-optimal depth-1 split for every feature; the best feature wins, ties to the first."""
    y = study.is_outlier
    if y.all() or not y.any():
        raise InputError("study needs both outlier and known spectra")
    boundaries, impurities = [], []
    for j, name in enumerate(study.feature_names):
        x = study.values[:, j]
        threshold, impurity, direction = _best_split(x, y)
        quality = boundary_quality(x, y, threshold, direction)
        boundaries.append(DecisionBoundary(name, threshold, direction, "stump", quality))
        impurities.append(impurity)
    best = int(np.argmin(impurities))
    return StumpFit(tuple(boundaries), tuple(impurities), best)


def permutation_importance(study: OutlierStudy, stump: StumpFit, repeats=10, seed=0) -> np.ndarray:
    """Mean accuracy drop of ``stump`` when each feature column is shuffled."""
    if repeats < 1:
        raise InputError("repeats must be at least 1")
    rng = np.random.default_rng(seed)
    y = study.is_outlier
    base = np.mean(stump.predict(study.values) == y)
    out = np.zeros(len(study.feature_names))
    for j in range(len(study.feature_names)):
        drops = []
        for _ in range(repeats):
            shuffled = study.values.copy()
            shuffled[:, j] = rng.permutation(shuffled[:, j])
            drops.append(base - np.mean(stump.predict(shuffled) == y))
        out[j] = np.mean(drops)
    return out


@dataclass(frozen=True)
class LogisticFit:
    slope: float
    intercept: float
    boundary: float
    iterations: int
    converged: bool
    separable: bool
    direction: str


def _mean_loglik(w, b, x, y):
    z = w * x + b
    return float(np.mean(y * z - np.logaddexp(0.0, z)))


def logistic_fit_1d(x, y, max_iterations=100, gradient_tol=1e-8, divergence=1e6) -> LogisticFit:
    """Maximum-likelihood fit of ``P(outlier) = sigmoid(slope * x + intercept)`` by damped Newton.

    The boundary is ``-intercept / slope``. When the classes do not overlap
    the slope diverges; the fit is then flagged ``separable`` and the
    boundary is the midpoint between the classes.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise InputError("x and y must be 1-D and of equal length")
    if y.min() == y.max():
        raise InputError("logistic fit needs both classes")
    if x.min() == x.max():
        raise InputError("logistic fit needs a non-constant feature")

    # standardized coordinates keep the Hessian well scaled
    mu, sd = x.mean(), x.std()
    u = (x - mu) / sd
    theta = np.zeros(2)
    converged = separable = False
    it = 0
    for it in range(1, max_iterations + 1):
        p = 1.0 / (1.0 + np.exp(-(theta[0] * u + theta[1])))
        r = y - p
        grad = np.array([np.mean(r * u), np.mean(r)])
        if np.max(np.abs(grad)) < gradient_tol:
            converged = True
            break
        h = p * (1 - p)
        hess = np.array([[np.mean(h * u * u), np.mean(h * u)], [np.mean(h * u), np.mean(h)]])
        try:
            step = np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            step = grad
        current = _mean_loglik(theta[0], theta[1], u, y)
        t = 1.0
        while t > 1e-10 and _mean_loglik(*(theta + t * step), u, y) < current:
            t *= 0.5
        theta = theta + t * step
        if abs(theta[0] / sd) > divergence:
            separable = True
            break

    slope = theta[0] / sd
    intercept = theta[1] - theta[0] * mu / sd
    pos, neg = x[y > 0.5], x[y <= 0.5]
    disjoint = pos.max() < neg.min() or neg.max() < pos.min()
    if separable or disjoint:
        separable = True
        if pos.max() < neg.min():
            boundary, direction = (pos.max() + neg.min()) / 2, "below"
        else:
            boundary, direction = (neg.max() + pos.min()) / 2, "above"
    else:
        boundary = -intercept / slope
        direction = "below" if slope < 0 else "above"
    return LogisticFit(float(slope), float(intercept), float(boundary), it, converged, separable, direction)


@dataclass(frozen=True)
class SweepCurve:
    thresholds: np.ndarray
    accuracy: np.ndarray
    precision: np.ndarray  # NaN where undefined
    recall: np.ndarray
    direction: str

    def to_csv(self) -> str:
        out = io.StringIO()
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(["threshold", "accuracy", "precision", "recall"])
        for row in zip(self.thresholds, self.accuracy, self.precision, self.recall):
            writer.writerow(["" if math.isnan(v) else repr(float(v)) for v in row])
        return out.getvalue()


def threshold_sweep(values, flags, grid=101, direction="below") -> SweepCurve:
    """Evaluate ``grid`` evenly spaced thresholds over ``[min, max]`` of the feature."""
    if grid < 2:
        raise InputError("grid must have at least 2 points")
    values = np.asarray(values, dtype=float)
    flags = np.asarray(flags, dtype=bool)
    lo, hi = float(values.min()), float(values.max())
    if lo == hi:
        warnings.warn("constant feature: sweep collapses to one point", stacklevel=2)
        thresholds = np.array([lo])
    else:
        thresholds = np.linspace(lo, hi, grid)
    rows = [boundary_quality(values, flags, t, direction) for t in thresholds]

    def col(key):
        return np.array([np.nan if r[key] is None else r[key] for r in rows])

    return SweepCurve(thresholds, col("accuracy"), col("precision"), col("recall"), direction)


def adequate_band(curve: SweepCurve, floor=0.9):
    """Widest contiguous threshold range where accuracy, precision and recall are all >= ``floor``."""
    ok = (curve.accuracy >= floor) & (curve.precision >= floor) & (curve.recall >= floor)
    best = None
    start = None
    for i, flag in enumerate(np.append(ok, False)):
        if flag and start is None:
            start = i
        elif not flag and start is not None:
            if best is None or i - start > best[1] - best[0]:
                best = (start, i)
            start = None
    if best is None:
        return None
    return float(curve.thresholds[best[0]]), float(curve.thresholds[best[1] - 1])
