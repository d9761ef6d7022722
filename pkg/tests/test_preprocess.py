import numpy as np
import pytest

from specnmf.errors import DegenerateVectorWarning, InputError, ValidationError
from specnmf.io import EnergyCalibration, SpectraSet, Spectrum
from specnmf.preprocess import (
    StandardBinning,
    balance_classes,
    mean_spectrum,
    rebin,
    similarity_matrix,
)

from oracles import overlap_rebin


def test_identity_rebin_is_exact():
    rng = np.random.default_rng(0)
    cal = EnergyCalibration(1.0, 3.0, 1e-4)
    s = Spectrum(rng.exponential(5, 64), {"A"}, calibration=cal)
    out = rebin(s, StandardBinning(64, cal))
    np.testing.assert_array_equal(out.counts, s.counts)


def test_hand_computed_halving():
    s = Spectrum([1.0, 1.0, 1.0, 1.0], {"A"}, calibration=EnergyCalibration(0, 1, 0))
    # target edges 2(c +- 1/2) + 0.5 = -0.5, 1.5, 3.5: same range as the source
    out, dropped = rebin(s, StandardBinning(2, EnergyCalibration(0.5, 2, 0)), return_dropped=True)
    np.testing.assert_allclose(out.counts, [2.0, 2.0], rtol=1e-15)
    assert dropped == pytest.approx(0.0, abs=1e-12)


def test_partial_overlap_reports_dropped():
    s = Spectrum([1.0, 1.0, 1.0, 1.0], {"A"})
    out, dropped = rebin(s, StandardBinning(2, EnergyCalibration(0, 2, 0)), return_dropped=True)
    ref = overlap_rebin(np.arange(5) - 0.5, s.counts, np.array([-1.0, 1.0, 3.0]))
    np.testing.assert_allclose(out.counts, ref)
    np.testing.assert_allclose(out.counts, [1.5, 2.0])
    assert dropped == pytest.approx(0.5)


def test_zero_overlap_error():
    s = Spectrum([1.0, 1.0], {"A"}, calibration=EnergyCalibration(1000, 1, 0))
    with pytest.raises(InputError, match="far outside"):
        rebin(s, StandardBinning(4, EnergyCalibration(0, 1, 0)))


def test_matches_pairwise_overlap_oracle():
    rng = np.random.default_rng(1)
    for _ in range(50):
        src_cal = EnergyCalibration(rng.uniform(-3, 3), rng.uniform(0.5, 2), rng.uniform(0, 1e-3))
        dst_cal = EnergyCalibration(rng.uniform(-3, 3), rng.uniform(0.5, 2), rng.uniform(0, 1e-3))
        m_src, m_dst = int(rng.integers(2, 30)), int(rng.integers(2, 30))
        s = Spectrum(rng.exponential(3, m_src), {"A"}, calibration=src_cal)
        target = StandardBinning(m_dst, dst_cal)
        try:
            out = rebin(s, target)
        except InputError:
            continue
        ref = overlap_rebin(src_cal.edges(m_src), s.counts, target.edges)
        np.testing.assert_allclose(out.counts, ref, rtol=1e-9, atol=1e-12)


def test_target_calibration_validated():
    with pytest.raises(ValidationError):
        StandardBinning(1)
    with pytest.raises(ValidationError):
        StandardBinning(10, EnergyCalibration(0, 1, -0.5))


def _set(rows):
    return SpectraSet([Spectrum(c, labels) for labels, c in rows])


def test_balance_under_cap():
    s = _set([({"A"}, [1, 1])] * 3)
    assert len(balance_classes(s, 5, seed=0)) == 3


def test_balance_determinism_and_order():
    rng = np.random.default_rng(0)
    s = _set([({"A"}, [float(i), 1.0]) for i in range(100)])
    a = balance_classes(s, 10, seed=7)
    b = balance_classes(s, 10, seed=7)
    assert len(a) == 10 and a == b
    firsts = [x.counts[0] for x in a]
    assert firsts == sorted(firsts)


def test_balance_per_class_cap():
    rows = [({"A"}, [1.0, 0.0])] * 100 + [({"B"}, [0.0, 1.0])] * 20
    out = balance_classes(_set(rows), 50, seed=1)
    sizes = {}
    for x in out:
        sizes[x.label_string] = sizes.get(x.label_string, 0) + 1
    assert sizes == {"A": 50, "B": 20}


def test_mean_spectrum_examples():
    np.testing.assert_array_equal(mean_spectrum(_set([({"A"}, [2, 2])]), "A"), [0.5, 0.5])
    np.testing.assert_array_equal(mean_spectrum(_set([({"A"}, [1, 0]), ({"A"}, [0, 1])]), "A"), [0.5, 0.5])
    np.testing.assert_array_equal(mean_spectrum(_set([({"A"}, [4, 0]), ({"A"}, [0, 1])]), "A"), [0.5, 0.5])


def test_mean_spectrum_ignores_multilabel_and_errors_on_missing():
    s = _set([({"A"}, [1, 0]), ({"A", "B"}, [0, 1])])
    np.testing.assert_array_equal(mean_spectrum(s, "A"), [1.0, 0.0])
    with pytest.raises(InputError, match="'B'"):
        mean_spectrum(s, "B")


def test_mean_spectrum_unit_l1():
    rng = np.random.default_rng(3)
    s = _set([({"A"}, rng.exponential(1, 20) * 10 ** rng.uniform(0, 6)) for _ in range(30)])
    assert mean_spectrum(s, "A").sum() == pytest.approx(1.0, abs=1e-12)


def test_mean_spectrum_per_detector():
    s = SpectraSet([Spectrum([1, 0], {"A"}, "d1"), Spectrum([0, 1], {"A"}, "d2")])
    np.testing.assert_array_equal(mean_spectrum(s, "A", detector="d2"), [0.0, 1.0])


def test_similarity_matrix():
    np.testing.assert_array_equal(similarity_matrix([("a", [1, 2])]), [[1.0]])
    m = similarity_matrix([("a", [1, 0]), ("b", [0, 1])])
    assert m[0, 1] == 0.0 and m[1, 0] == 0.0
    rng = np.random.default_rng(0)
    m = similarity_matrix([(str(i), rng.random(8)) for i in range(5)])
    np.testing.assert_array_equal(m, m.T)
    np.testing.assert_array_equal(np.diag(m), 1.0)


def test_similarity_matrix_zero_group_warns():
    with pytest.warns(DegenerateVectorWarning):
        m = similarity_matrix([("a", [1, 0]), ("b", [0, 0])])
    assert m[0, 1] == 0.0
