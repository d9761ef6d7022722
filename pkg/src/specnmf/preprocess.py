"""Harmonize spectra onto one energy grid and compute exploration statistics."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateVectorWarning, InputError, ValidationError
from .io import EnergyCalibration, SpectraSet, Spectrum
from .nnls import cosine_similarity

__all__ = [
    "StandardBinning",
    "rebin",
    "rebin_set",
    "balance_classes",
    "mean_spectrum",
    "similarity_matrix",
]


@dataclass(frozen=True)
class StandardBinning:
    channel_count: int
    calibration: EnergyCalibration = EnergyCalibration()

    def __post_init__(self):
        if int(self.channel_count) < 2:
            raise ValidationError("standard binning needs at least 2 channels")
        object.__setattr__(self, "channel_count", int(self.channel_count))
        if not self.calibration.is_increasing(self.channel_count):
            raise ValidationError("target energy grid is not strictly increasing")

    @property
    def edges(self):
        return self.calibration.edges(self.channel_count)

    def matches(self, spectrum: Spectrum) -> bool:
        return spectrum.channel_count == self.channel_count and spectrum.calibration == self.calibration

    def to_dict(self):
        return {"channel_count": self.channel_count, "calibration": self.calibration.to_dict()}


def rebin(spectrum: Spectrum, target: StandardBinning, return_dropped=False):
    """Redistribute counts onto ``target`` by fractional bin overlap.

    Counts are assumed uniform in energy within each source bin. Counts outside
    the target range are dropped; pass ``return_dropped=True`` to also get
    their sum.
    """
    if target.matches(spectrum):
        out = spectrum.replace()
        return (out, 0.0) if return_dropped else out

    src = spectrum.calibration.edges(spectrum.channel_count)
    if not np.all(np.diff(src) > 0):
        raise ValidationError("source calibration is not strictly increasing")
    dst = target.edges
    if src[-1] <= dst[0] or src[0] >= dst[-1]:
        raise InputError(
            f"no overlap between source [{src[0]:g}, {src[-1]:g}] keV and "
            f"target [{dst[0]:g}, {dst[-1]:g}] keV; rebinning parameters are far "
            "outside the calibration range"
        )
    # cumulative counts are piecewise linear in energy between source edges
    cumulative = np.concatenate(([0.0], np.cumsum(spectrum.counts)))
    at_dst = np.interp(dst, src, cumulative)
    counts = np.diff(at_dst)
    counts[counts < 0] = 0.0
    dropped = float(cumulative[-1] - (at_dst[-1] - at_dst[0]))
    out = spectrum.replace(counts=counts, calibration=target.calibration)
    return (out, max(dropped, 0.0)) if return_dropped else out


def rebin_set(spectra, target: StandardBinning) -> SpectraSet:
    return SpectraSet([rebin(s, target) for s in spectra], target.channel_count, target.calibration)


def balance_classes(spectra: SpectraSet, max_per_class: int, seed: int) -> SpectraSet:
    """Cap every label set at ``max_per_class`` members by uniform subsampling.

    Classes are visited in first-appearance order with one generator seeded by
    ``seed``, so the result is reproducible. Surviving spectra keep their
    relative order.
    """
    if max_per_class < 1:
        raise InputError("max_per_class must be at least 1")
    rng = np.random.default_rng(seed)
    keep = np.ones(len(spectra), dtype=bool)
    for labels in spectra.label_sets():
        members = np.array([i for i, s in enumerate(spectra) if s.labels == labels])
        if members.size > max_per_class:
            chosen = rng.choice(members, size=max_per_class, replace=False)
            keep[members] = False
            keep[chosen] = True
    return spectra.with_spectra(s for s, k in zip(spectra, keep) if k)


def mean_spectrum(spectra: SpectraSet, label: str, detector: str | None = None) -> np.ndarray:
    """Mean of the L1-normalized spectra labeled exactly ``{label}``.

    All-zero members carry no shape and are skipped. ``detector`` restricts the
    average to one detector id.
    """
    members = [
        s.counts
        for s in spectra
        if s.labels == {label} and (detector is None or s.detector_id == detector)
    ]
    totals = [m.sum() for m in members]
    usable = [m / t for m, t in zip(members, totals) if t > 0]
    if not usable:
        where = "" if detector is None else f" on detector {detector!r}"
        raise InputError(f"no non-empty spectra labeled {label!r}{where}")
    return np.mean(usable, axis=0)


def similarity_matrix(groups) -> np.ndarray:
    """Pairwise cosine similarities of ``(name, vector)`` groups.

    Zero vectors give 0 off-diagonal with a single DegenerateVectorWarning; the
    diagonal is 1 by definition.
    """
    vectors = [np.asarray(v, dtype=float) for _, v in groups]
    if not vectors:
        raise InputError("need at least one group")
    n = len(vectors)
    out = np.eye(n)
    degenerate = False
    with warnings.catch_warnings():
        warnings.simplefilter("error", DegenerateVectorWarning)
        for i in range(n):
            for j in range(i + 1, n):
                try:
                    c = cosine_similarity(vectors[i], vectors[j])
                except DegenerateVectorWarning:
                    c, degenerate = 0.0, True
                out[i, j] = out[j, i] = c
    if degenerate:
        warnings.warn("similarity matrix contains an all-zero group", DegenerateVectorWarning, stacklevel=2)
    return out
