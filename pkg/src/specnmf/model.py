"""Supervised NMF with a fixed loadings basis.

A spectrum ``x`` is approximated by ``L @ s`` where column ``j`` of ``L`` is
the normalized mean training spectrum of class ``j`` and ``s >= 0`` is found by
NNLS. The scores ``s`` are the latent representation; normalized they read as
the fractional contribution of each class.
"""
from __future__ import annotations

import datetime as _dt
import json
import math
import os
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    DegenerateVectorWarning,
    InputError,
    ParseError,
    UndefinedVarianceError,
    UnsupportedVersionError,
    ValidationError,
)
from .io import EnergyCalibration, SpectraSet, Spectrum, format_float
from .nnls import cosine_similarity, explained_variance_ratio, nnls_solve
from .preprocess import StandardBinning, mean_spectrum, similarity_matrix

__all__ = [
    "SupervisedNmfModel",
    "ScoreVector",
    "AnalysisResult",
    "UNDETERMINED",
    "fit",
    "transform",
    "normalize_scores",
    "classify",
    "denoise",
    "analyze",
    "analyze_set",
    "save_model",
    "load_model",
    "model_to_text",
    "model_from_text",
]

UNDETERMINED = "undetermined"
MODEL_FORMAT_VERSION = "1"
SCORE_EPSILON_PER_CHANNEL = 1e-12


def _timestamp():
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    when = (
        _dt.datetime.fromtimestamp(int(epoch), _dt.timezone.utc)
        if epoch
        else _dt.datetime.now(_dt.timezone.utc).replace(microsecond=0)
    )
    return when.isoformat().replace("+00:00", "Z")


@dataclass(eq=False)
class SupervisedNmfModel:
    labels: tuple
    loadings: np.ndarray
    binning: StandardBinning
    created_at: str = field(default_factory=_timestamp)
    training_summary: dict = field(default_factory=dict)

    def __post_init__(self):
        self.labels = tuple(str(x) for x in self.labels)
        L = np.array(self.loadings, dtype=float)
        if L.ndim != 2:
            raise ValidationError("loadings must be a matrix")
        m, k = L.shape
        if k < 1 or k != len(self.labels):
            raise ValidationError(f"{len(self.labels)} labels for {k} loadings columns")
        if len(set(self.labels)) != k:
            raise ValidationError("labels must be unique")
        if UNDETERMINED in self.labels:
            raise ValidationError(f"{UNDETERMINED!r} is reserved")
        if m != self.binning.channel_count:
            raise ValidationError(f"loadings have {m} rows, binning has {self.binning.channel_count} channels")
        bad = np.argwhere(~np.isfinite(L) | (L < 0))
        if bad.size:
            r, c = bad[0]
            raise ValidationError(f"loadings entry ({r}, {c}) = {L[r, c]!r} is negative or not finite")
        sums = L.sum(axis=0)
        off = np.flatnonzero(np.abs(sums - 1.0) > 1e-9)
        if off.size:
            raise ValidationError(f"loadings column {off[0]} sums to {sums[off[0]]!r}, not 1")
        L.setflags(write=False)
        self.loadings = L

    @property
    def k(self) -> int:
        return len(self.labels)

    @property
    def channel_count(self) -> int:
        return self.binning.channel_count

    def loadings_similarity(self) -> np.ndarray:
        return similarity_matrix(list(zip(self.labels, self.loadings.T)))

    def __eq__(self, other):
        if not isinstance(other, SupervisedNmfModel):
            return NotImplemented
        return (
            self.labels == other.labels
            and np.array_equal(self.loadings, other.loadings)
            and self.binning == other.binning
            and self.created_at == other.created_at
            and self.training_summary == other.training_summary
        )

    __hash__ = None


@dataclass(frozen=True)
class ScoreVector:
    raw: np.ndarray
    residual_norm: float
    converged: bool


@dataclass(frozen=True)
class AnalysisResult:
    scores: ScoreVector
    shares: np.ndarray | None
    predicted_label: str
    denoised: np.ndarray
    cosine_to_original: float
    explained_variance: float | None
    cosine_defined: bool = True


def fit(training: SpectraSet, created_at: str | None = None) -> SupervisedNmfModel:
    """Build the loadings from single-label training spectra.

    Column order follows the first appearance of each label in ``training``.
    """
    if len(training) == 0:
        raise InputError("training set is empty")
    for i, s in enumerate(training):
        if len(s.labels) != 1:
            raise InputError(f"training requires single-label data (spectrum {i} has {s.label_string})")
    order = []
    summary = {}
    for s in training:
        (label,) = s.labels
        if label not in summary:
            order.append(label)
            summary[label] = 0
        summary[label] += 1
    columns = [mean_spectrum(training, label) for label in order]
    L = np.column_stack(columns)
    # renormalize so every column sums to 1 up to rounding of the mean
    L = L / L.sum(axis=0)
    binning = StandardBinning(training.channel_count, training.calibration)
    return SupervisedNmfModel(
        tuple(order), L, binning, created_at or _timestamp(), {k: summary[k] for k in order}
    )


def _counts_for(model, spectrum):
    if isinstance(spectrum, Spectrum):
        if not model.binning.matches(spectrum):
            raise InputError("spectrum binning differs from the model binning; rebin it first")
        return spectrum.counts
    counts = np.asarray(spectrum, dtype=float)
    if counts.shape != (model.channel_count,):
        raise InputError(f"expected {model.channel_count} channels, got shape {counts.shape}")
    return counts


def transform(model: SupervisedNmfModel, spectrum) -> ScoreVector:
    """NNLS scores of ``spectrum`` (a Spectrum or a raw count vector)."""
    sol = nnls_solve(model.loadings, _counts_for(model, spectrum))
    return ScoreVector(sol.coefficients, sol.residual_norm, sol.converged)


def normalize_scores(scores: ScoreVector, epsilon: float = SCORE_EPSILON_PER_CHANNEL):
    """Scores divided by their sum, or ``None`` when the sum is at most ``epsilon``."""
    total = float(np.sum(scores.raw))
    if not total > epsilon:
        return None
    return scores.raw / total


def _epsilon(model):
    return SCORE_EPSILON_PER_CHANNEL * model.channel_count


def _label_from_shares(model, shares):
    if shares is None:
        return UNDETERMINED
    return model.labels[int(np.argmax(shares))]


def classify(model: SupervisedNmfModel, spectrum) -> str:
    """Label with the largest share; the lowest index wins ties."""
    return _label_from_shares(model, normalize_scores(transform(model, spectrum), _epsilon(model)))


def denoise(model: SupervisedNmfModel, spectrum) -> np.ndarray:
    return model.loadings @ transform(model, spectrum).raw


def analyze(model: SupervisedNmfModel, spectrum) -> AnalysisResult:
    counts = _counts_for(model, spectrum)
    scores = transform(model, counts)
    shares = normalize_scores(scores, _epsilon(model))
    denoised = model.loadings @ scores.raw
    with warnings.catch_warnings():
        warnings.simplefilter("error", DegenerateVectorWarning)
        try:
            cosine, defined = cosine_similarity(counts, denoised), True
        except DegenerateVectorWarning:
            cosine, defined = 0.0, False
    try:
        ev = explained_variance_ratio(counts, denoised)
    except UndefinedVarianceError:
        ev = None
    return AnalysisResult(scores, shares, _label_from_shares(model, shares), denoised, cosine, ev, defined)


def analyze_set(model: SupervisedNmfModel, spectra) -> list:
    return [analyze(model, s) for s in spectra]


# --- persistence -------------------------------------------------------------


def model_to_text(model: SupervisedNmfModel) -> str:
    m, k = model.loadings.shape
    doc = {
        "format": "supervised-nmf-model",
        "version": MODEL_FORMAT_VERSION,
        "labels": list(model.labels),
        "binning": {
            "channel_count": model.channel_count,
            "calibration": {n: format_float(v) for n, v in model.binning.calibration.to_dict().items()},
        },
        "created_at": model.created_at,
        "training_summary": model.training_summary,
        "loadings": {"rows": m, "cols": k, "values": "@VALUES@"},
    }
    text = json.dumps(doc, sort_keys=True, indent=1)
    values = "[" + ",".join(format_float(v) for v in model.loadings.ravel()) + "]"
    return text.replace('"@VALUES@"', values) + "\n"


def save_model(model: SupervisedNmfModel, path) -> None:
    Path(path).write_text(model_to_text(model))


def model_from_text(text: str) -> SupervisedNmfModel:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"model file is not valid JSON: {exc.msg}", f"line {exc.lineno}") from None
    if not isinstance(doc, dict):
        raise ParseError("model file must hold a JSON object")
    if doc.get("version") != MODEL_FORMAT_VERSION:
        raise UnsupportedVersionError(f"unsupported model version {doc.get('version')!r}")
    for key in ("labels", "binning", "loadings"):
        if key not in doc:
            raise ParseError(f"model file lacks the {key!r} field")
    try:
        b = doc["binning"]
        binning = StandardBinning(
            int(b["channel_count"]),
            EnergyCalibration(**{n: float(v) for n, v in b["calibration"].items()}),
        )
        rows, cols = int(doc["loadings"]["rows"]), int(doc["loadings"]["cols"])
        values = [float(v) for v in doc["loadings"]["values"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"malformed model field: {exc}") from None
    if len(values) != rows * cols:
        raise ParseError(f"loadings hold {len(values)} values, expected {rows}x{cols}")
    if any(not math.isfinite(v) for v in values):
        raise ValidationError("loadings contain non-finite values")
    return SupervisedNmfModel(
        tuple(doc["labels"]),
        np.array(values).reshape(rows, cols),
        binning,
        doc.get("created_at") or "",
        dict(doc.get("training_summary") or {}),
    )


def load_model(path) -> SupervisedNmfModel:
    return model_from_text(Path(path).read_text())
