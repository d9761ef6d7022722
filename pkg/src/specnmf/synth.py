"""Synthetic gamma spectra with known ground truth.

The peak tables below borrow familiar nuclide names and rough line energies,
but intensities, widths and continua are made up. They exercise the
numerics; they are not nuclear data.

Every sampled spectrum draws from its own generator seeded by
``[subset_tag, seed ^ index]``, so any subset of spectra can be regenerated
independently and in any order.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputError, ValidationError
from .io import EnergyCalibration, SpectraSet, Spectrum
from .preprocess import StandardBinning

__all__ = [
    "IsotopeTemplate",
    "TEMPLATES",
    "BACKGROUND",
    "OUTLIER",
    "ISOTOPES",
    "BENCHMARK_BINNING",
    "template_density",
    "template_to_clean_spectrum",
    "sample_spectrum",
    "make_benchmark_corpus",
    "add_gaussian_noise",
]

FWHM_TO_SIGMA = 2.3548


@dataclass(frozen=True)
class IsotopeTemplate:
    name: str
    peaks: tuple  # (energy keV, relative intensity, fwhm keV)
    continuum: tuple = (0.0, 1.0)  # (amplitude per keV, decay constant keV)

    def __post_init__(self):
        for energy, intensity, fwhm in self.peaks:
            if not (intensity > 0 and fwhm > 0):
                raise ValidationError(f"{self.name}: peak intensities and widths must be positive")
        amplitude, decay = self.continuum
        if amplitude < 0 or not decay > 0:
            raise ValidationError(f"{self.name}: continuum needs amplitude >= 0 and decay > 0")


def _fwhm(energy):
    # NaI-like resolution, 7% at 662 keV
    return 0.07 * np.sqrt(662.0 * energy)


def _template(name, lines, continuum):
    return IsotopeTemplate(name, tuple((e, i, float(_fwhm(e))) for e, i in lines), continuum)


ISOTOPES = ("Am241", "Ba133", "Cs137", "Co60", "Eu152")
BACKGROUND = "background"
OUTLIER = "Mn54"

TEMPLATES = {
    t.name: t
    for t in (
        _template("Am241", [(59.5, 1.0), (26.3, 0.15)], (0.002, 40.0)),
        _template("Ba133", [(81.0, 0.6), (302.9, 0.3), (356.0, 1.0), (383.8, 0.15)], (0.003, 150.0)),
        _template("Cs137", [(661.7, 1.0), (32.0, 0.1)], (0.002, 300.0)),
        _template("Co60", [(1173.2, 1.0), (1332.5, 1.0)], (0.002, 500.0)),
        _template("Eu152", [(121.8, 1.0), (344.3, 0.6), (778.9, 0.25), (1408.0, 0.4)], (0.003, 250.0)),
        _template(BACKGROUND, [(1460.8, 0.3), (238.6, 0.1)], (0.02, 150.0)),
        _template(OUTLIER, [(834.8, 1.0)], (0.002, 300.0)),
    )
}

# 256 channels of 6 keV: bin edges run from 0 to 1536 keV
BENCHMARK_BINNING = StandardBinning(256, EnergyCalibration(3.0, 6.0, 0.0))


def template_density(template: IsotopeTemplate, energy) -> np.ndarray:
    """Expected counts per keV at ``energy``; integrates to the peak intensities plus the continuum."""
    e = np.asarray(energy, dtype=float)
    out = np.zeros_like(e)
    for centre, intensity, fwhm in template.peaks:
        sigma = fwhm / FWHM_TO_SIGMA
        out += intensity * np.exp(-0.5 * ((e - centre) / sigma) ** 2) / (sigma * np.sqrt(2 * np.pi))
    amplitude, decay = template.continuum
    out += amplitude * np.exp(-e / decay)
    return out


def template_to_clean_spectrum(template: IsotopeTemplate, binning: StandardBinning, normalize=True) -> np.ndarray:
    """Density at bin centres times bin width (midpoint rule), L1-normalized by default."""
    edges = binning.edges
    centres = binning.calibration.centers(binning.channel_count)
    values = template_density(template, centres) * np.diff(edges)
    if normalize:
        values = values / values.sum()
    return values


def _rng(tag, seed, index):
    return np.random.default_rng([tag, int(seed) ^ int(index)])


def sample_spectrum(
    cleans: dict,
    mixing: dict,
    total_counts: float,
    binning: StandardBinning,
    seed,
    detector_id="synthetic",
    label_threshold=0.05,
) -> Spectrum:
    """Poisson-sample ``total_counts * sum(w * clean)``.

    ``seed`` may be an int or a ``numpy.random.Generator``. Labels are the
    components with weight at least ``label_threshold``, plus the background
    whenever it participates at all. The mixing weights are kept on the
    spectrum as ground truth.
    """
    if total_counts < 0:
        raise InputError("total_counts must be non-negative")
    if not mixing or any(w < 0 for w in mixing.values()):
        raise InputError("mixing weights must be non-negative and non-empty")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    expected = np.zeros(binning.channel_count)
    for name, w in mixing.items():
        expected += w * np.asarray(cleans[name], dtype=float)
    counts = rng.poisson(total_counts * expected).astype(float)
    labels = {n for n, w in mixing.items() if w >= label_threshold}
    if mixing.get(BACKGROUND, 0) > 0:
        labels.add(BACKGROUND)
    if not labels:
        labels = {max(mixing, key=mixing.get)}
    return Spectrum(
        counts,
        labels,
        detector_id,
        binning.calibration,
        weights={n: float(w) for n, w in mixing.items() if w > 0},
    )


def clean_spectra(binning=BENCHMARK_BINNING, templates=None) -> dict:
    templates = TEMPLATES if templates is None else templates
    return {name: template_to_clean_spectrum(t, binning) for name, t in templates.items()}


def make_benchmark_corpus(seed=42, binning=BENCHMARK_BINNING, train_per_class=200, n_single=1000, n_multi=500, n_outlier=200):
    """Build ``(train, test_single, test_multi, test_outlier)``.

    * train: ``train_per_class`` pure spectra at 1e5 counts for each isotope
      and for the background.
    * test_single: isotope plus background at 1e3 counts; the isotope weight
      is uniform on [0.5, 1.0] so it dominates the mixture. Isotopes cycle so
      the classes are balanced.
    * test_multi: two distinct isotopes plus background at 1e4 counts,
      weights drawn from a Dirichlet(2, 2, 1).
    * test_outlier: the held-back template plus background, drawn like
      test_single.
    """
    cleans = clean_spectra(binning)
    classes = list(ISOTOPES) + [BACKGROUND]

    train = []
    for c, name in enumerate(classes):
        for i in range(train_per_class):
            index = c * train_per_class + i
            train.append(sample_spectrum(cleans, {name: 1.0}, 1e5, binning, _rng(1, seed, index), "sim"))

    def single(tag, index, isotope):
        rng = _rng(tag, seed, index)
        w = rng.uniform(0.5, 1.0)
        return sample_spectrum(cleans, {isotope: w, BACKGROUND: 1.0 - w}, 1e3, binning, rng, "meas")

    test_single = [single(2, i, ISOTOPES[i % len(ISOTOPES)]) for i in range(n_single)]

    test_multi = []
    for i in range(n_multi):
        rng = _rng(3, seed, i)
        a, b = rng.choice(len(ISOTOPES), size=2, replace=False)
        w = rng.dirichlet([2.0, 2.0, 1.0])
        mixing = {ISOTOPES[a]: w[0], ISOTOPES[b]: w[1], BACKGROUND: w[2]}
        test_multi.append(sample_spectrum(cleans, mixing, 1e4, binning, rng, "meas"))

    test_outlier = [single(4, i, OUTLIER) for i in range(n_outlier)]

    def as_set(spectra):
        return SpectraSet(spectra, binning.channel_count, binning.calibration)

    return as_set(train), as_set(test_single), as_set(test_multi), as_set(test_outlier)


def add_gaussian_noise(spectra: SpectraSet, relative_sigma=0.1, seed=0) -> SpectraSet:
    """Add N(0, sigma) per channel with sigma = relative_sigma * mean channel count; clip at 0."""
    out = []
    for i, s in enumerate(spectra):
        rng = _rng(5, seed, i)
        sigma = relative_sigma * s.counts.mean()
        noisy = np.clip(s.counts + rng.normal(0.0, sigma, size=s.channel_count), 0.0, None)
        out.append(s.replace(counts=noisy))
    return spectra.with_spectra(out)
