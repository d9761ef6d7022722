import math

import numpy as np
import pytest

from specnmf import synth
from specnmf.io import EnergyCalibration
from specnmf.preprocess import StandardBinning

WIDE = StandardBinning(4000, EnergyCalibration(0.25, 0.5, 0.0))  # 0 .. 2000 keV


def _closed_form_area(t, lo, hi):
    area = sum(i for _, i, _ in t.peaks)
    amplitude, decay = t.continuum
    return area + amplitude * decay * (math.exp(-lo / decay) - math.exp(-hi / decay))


@pytest.mark.parametrize("name", sorted(synth.TEMPLATES))
def test_unnormalized_area_matches_closed_form(name):
    t = synth.TEMPLATES[name]
    values = synth.template_to_clean_spectrum(t, WIDE, normalize=False)
    edges = WIDE.edges
    # peaks near 0 keV lose their left tail; count only the in-range Gaussian mass
    area = _closed_form_area(t, edges[0], edges[-1])
    for centre, intensity, fwhm in t.peaks:
        sigma = fwhm / synth.FWHM_TO_SIGMA
        area -= intensity * 0.5 * math.erfc((centre - edges[0]) / (sigma * math.sqrt(2)))
    assert values.sum() == pytest.approx(area, rel=1e-3)


def test_single_peak_symmetric():
    t = synth.IsotopeTemplate("p", ((500.0, 1.0, 40.0),), (0.0, 1.0))
    b = StandardBinning(101, EnergyCalibration(0.0, 10.0, 0.0))
    v = synth.template_to_clean_spectrum(t, b)
    assert int(np.argmax(v)) == 50
    np.testing.assert_allclose(v, v[::-1], atol=1e-15)
    assert v.sum() == pytest.approx(1.0)


def test_zero_continuum_is_local():
    t = synth.IsotopeTemplate("p", ((500.0, 1.0, 40.0),), (0.0, 1.0))
    v = synth.template_to_clean_spectrum(t, StandardBinning(101, EnergyCalibration(0.0, 10.0, 0.0)))
    assert v[:30].max() < 1e-12 and v[70:].max() < 1e-12


def test_template_validation():
    with pytest.raises(ValueError):
        synth.IsotopeTemplate("bad", ((100.0, -1.0, 5.0),))
    with pytest.raises(ValueError):
        synth.IsotopeTemplate("bad", ((100.0, 1.0, 5.0),), (1.0, 0.0))


def test_sample_zero_counts_and_determinism():
    cleans = synth.clean_spectra()
    zero = synth.sample_spectrum(cleans, {"Cs137": 1.0}, 0, synth.BENCHMARK_BINNING, seed=1)
    assert zero.total_counts == 0
    a = synth.sample_spectrum(cleans, {"Cs137": 0.7, "background": 0.3}, 1e3, synth.BENCHMARK_BINNING, seed=5)
    b = synth.sample_spectrum(cleans, {"Cs137": 0.7, "background": 0.3}, 1e3, synth.BENCHMARK_BINNING, seed=5)
    assert a == b
    assert a.labels == {"Cs137", "background"}
    assert a.weights == {"Cs137": 0.7, "background": 0.3}


def test_labels_threshold():
    cleans = synth.clean_spectra()
    s = synth.sample_spectrum(
        cleans, {"Cs137": 0.9, "Co60": 0.04, "background": 0.06}, 1e3, synth.BENCHMARK_BINNING, seed=0
    )
    assert s.labels == {"Cs137", "background"}


def test_law_of_large_numbers():
    cleans = synth.clean_spectra()
    mixing = {"Co60": 0.5, "background": 0.5}
    s = synth.sample_spectrum(cleans, mixing, 1e8, synth.BENCHMARK_BINNING, seed=3)
    expected = 0.5 * cleans["Co60"] + 0.5 * cleans["background"]
    assert np.abs(s.counts / s.total_counts - expected).sum() < 0.01


def test_channel_mean_within_three_standard_errors():
    cleans = synth.clean_spectra()
    mixing = {"Eu152": 0.6, "background": 0.4}
    total = 500.0
    rng = np.random.default_rng(11)
    draws = np.array(
        [synth.sample_spectrum(cleans, mixing, total, synth.BENCHMARK_BINNING, rng).counts for _ in range(10_000)]
    )
    lam = total * (0.6 * cleans["Eu152"] + 0.4 * cleans["background"])
    se = np.sqrt(lam / len(draws))
    z = np.abs(draws.mean(axis=0) - lam) / np.where(se > 0, se, 1)
    # 256 channels: allow the handful of 3-sigma excursions expected by chance
    assert np.mean(z < 3) > 0.98


@pytest.fixture(scope="module")
def corpus():
    return synth.make_benchmark_corpus(42)


def test_corpus_shapes_and_balance(corpus):
    train, single, multi, outlier = corpus
    assert len(train) == 6 * 200 and len(single) == 1000 and len(multi) == 500 and len(outlier) == 200
    assert train.channel_count == 256
    sizes = {}
    for s in train:
        assert len(s.labels) == 1
        sizes[s.label_string] = sizes.get(s.label_string, 0) + 1
    assert set(sizes.values()) == {200} and len(sizes) == 6
    assert synth.OUTLIER not in sizes
    assert all(synth.OUTLIER in s.labels for s in outlier)
    for s in single:
        iso = [l for l in s.labels if l != "background"]
        assert len(iso) == 1 and s.weights[iso[0]] >= 0.3
    assert all(len(s.labels - {"background"}) >= 1 for s in multi)


def test_corpus_reproducible(corpus):
    again = synth.make_benchmark_corpus(42)
    assert all(a == b for a, b in zip(corpus, again))
    other = synth.make_benchmark_corpus(43)
    assert other[1] != corpus[1]


def test_gaussian_noise_keeps_invariants(corpus):
    noisy = synth.add_gaussian_noise(corpus[1], 0.1, seed=0)
    assert len(noisy) == len(corpus[1])
    assert all(np.all(s.counts >= 0) for s in noisy)
    assert noisy != corpus[1]
