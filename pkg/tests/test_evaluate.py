from types import SimpleNamespace

import numpy as np
import pytest

from specnmf.errors import InputError
from specnmf.evaluate import (
    ConfusionMatrix,
    accuracy,
    confusion,
    metrics_report,
    misclassification_stats,
    precision,
    recall,
    resolve_truth,
)


def test_all_correct_is_diagonal():
    truths = ["A", "B"] * 5
    cm = confusion(truths, truths)
    np.testing.assert_array_equal(cm.counts, [[5, 0], [0, 5]])
    assert cm.total == 10
    assert accuracy(cm) == 1.0
    assert precision(cm, "A") == recall(cm, "B") == 1.0


def test_single_error():
    cm = confusion(["A"], ["B"])
    assert cm.labels == ("A", "B")
    assert cm.counts[cm.index("A"), cm.index("B")] == 1


def test_hand_evaluated_metrics():
    cm = ConfusionMatrix(("0", "1"), np.array([[8, 2], [1, 9]]))
    assert accuracy(cm) == pytest.approx(17 / 20)
    assert precision(cm, "0") == pytest.approx(8 / 9)
    assert recall(cm, "0") == pytest.approx(8 / 10)


def test_never_predicted_class():
    cm = confusion(["A", "B"], ["A", "A"])
    assert precision(cm, "B") is None
    assert recall(cm, "B") == 0.0
    assert metrics_report(cm)["per_class"]["B"]["precision"] is None


def test_length_mismatch_and_unknown_class():
    with pytest.raises(InputError):
        confusion(["A"], ["A", "B"])
    with pytest.raises(InputError):
        precision(confusion(["A"], ["A"]), "Z")


def test_accuracy_against_direct_count():
    rng = np.random.default_rng(0)
    for _ in range(200):
        n = int(rng.integers(1, 50))
        t = list(rng.choice(list("ABCD"), n))
        p = list(rng.choice(list("ABCDE"), n))
        cm = confusion(t, p)
        direct = sum(a == b for a, b in zip(t, p)) / n
        assert accuracy(cm) == pytest.approx(direct, abs=1e-15)
        weighted = sum(
            (recall(cm, c) or 0.0) * cm.counts[cm.index(c)].sum() for c in cm.labels
        ) / cm.total
        assert accuracy(cm) == pytest.approx(weighted, abs=1e-12)
        assert cm.counts.sum() == n


def test_relabeling_permutes_matrix():
    rng = np.random.default_rng(1)
    t = list(rng.choice(list("ABC"), 40))
    p = list(rng.choice(list("ABC"), 40))
    rename = {"A": "z", "B": "y", "C": "x"}
    cm = confusion(t, p)
    cm2 = confusion([rename[x] for x in t], [rename[x] for x in p])
    order = [cm.index(k) for k in sorted(rename, key=rename.get)]
    np.testing.assert_array_equal(cm2.counts, cm.counts[np.ix_(order, order)])


def test_row_normalized_csv():
    cm = ConfusionMatrix(("A", "B"), np.array([[3, 1], [0, 0]]))
    np.testing.assert_allclose(cm.row_normalized(), [[0.75, 0.25], [0, 0]])
    assert cm.to_csv().splitlines() == ["truth\\predicted,A,B", "A,3,1", "B,0,0"]


def test_resolve_truth_rules():
    assert resolve_truth({"Cs137", "background"}, "Cs137") == "Cs137"
    assert resolve_truth({"Cs137", "background"}, "background") == "Cs137"
    assert resolve_truth({"background"}, "background") == "background"
    w = {"Cs137": 0.6, "Co60": 0.03, "background": 0.37}
    assert resolve_truth({"Cs137", "Co60", "background"}, "Co60", weights=w) == "Cs137"
    assert resolve_truth({"Cs137", "Co60"}, "Co60", weights={"Cs137": 0.3, "Co60": 0.7}) == "Co60"
    assert resolve_truth({"Cs137", "Co60"}, "Am241", weights={"Cs137": 0.3, "Co60": 0.7}) == "Co60"


def _result(label, shares):
    return SimpleNamespace(predicted_label=label, shares=None if shares is None else np.array(shares))


def test_misclassification_stats_clean():
    results = [_result("A", [1.0, 0.0])] * 3
    report = misclassification_stats(results, ["A"] * 3, ["A", "B"])
    assert report["breakdown"] == {}
    assert report["per_class"]["A"]["rate"] == 0.0
    assert report["mean_shares"] == {"A": {"A": 1.0, "B": 0.0}}


def test_misclassification_stats_one_error():
    results = [_result("A", [0.9, 0.1])] * 9 + [_result("B", [0.4, 0.6])]
    report = misclassification_stats(results, ["A"] * 10, ["A", "B"])
    assert report["per_class"]["A"]["rate"] == pytest.approx(0.1)
    assert report["breakdown"] == {"A": {"B": 1}}
    assert report["isotope_isotope_confusions_present"] is True
    assert report["mean_shares"]["A"]["A"] == pytest.approx(0.85)


def test_isotope_background_confusions_only():
    results = [_result("background", [0.2, 0.8]), _result("A", [0.9, 0.1])]
    report = misclassification_stats(results, ["A", "A"], ["A", "background"])
    assert report["isotope_isotope_confusions_present"] is False
