import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from orthoaudit.errors import (
    DegenerateClassesWarning,
    InvalidInput,
    ShapeMismatch,
    UndefinedMetric,
)
from orthoaudit.metrics import (
    auc,
    confusion_metrics,
    regression_metrics,
    subgroup_auc_delta,
)
from orthoaudit.synth import oracle_auc_paircount


# ---------------------------------------------------------------------------
# auc


def test_auc_worked_example():
    scores = [0.1, 0.4, 0.35, 0.8]
    labels = [0, 0, 1, 1]
    assert auc(scores, labels) == pytest.approx(0.75, abs=1e-12)


def test_auc_perfect_separation():
    assert auc([1.0, 2.0, 3.0, 4.0], [0, 0, 1, 1]) == 1.0


def test_auc_all_tied_scores():
    assert auc([0.5] * 6, [0, 1, 0, 1, 0, 1]) == pytest.approx(0.5, abs=1e-12)


def test_auc_single_class_undefined():
    with pytest.raises(UndefinedMetric):
        auc([0.1, 0.2], [1, 1])
    with pytest.raises(UndefinedMetric):
        auc([0.1, 0.2], [0, 0])


def test_auc_matches_pair_count_oracle():
    rng = np.random.default_rng(0)
    for _ in range(50):
        n = int(rng.integers(2, 200))
        labels = rng.integers(0, 2, size=n)
        if labels.min() == labels.max():
            labels[0] = 1 - labels[0]
        # quantized scores so ties actually happen
        scores = np.round(rng.standard_normal(n), 1)
        assert auc(scores, labels) == pytest.approx(
            oracle_auc_paircount(scores, labels), abs=1e-12
        )


def test_auc_complement_identity():
    rng = np.random.default_rng(1)
    scores = np.round(rng.standard_normal(101), 1)
    labels = rng.integers(0, 2, size=101)
    labels[0] = 0
    labels[1] = 1
    a = auc(scores, labels)
    b = auc(scores, 1 - labels)
    assert a + b == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 60), st.integers(0, 2**31 - 1))
def test_auc_invariant_under_monotone_transform(n, seed):
    rng = np.random.default_rng(seed)
    scores = rng.standard_normal(n)
    labels = rng.integers(0, 2, size=n)
    labels[0], labels[1] = 0, 1
    base = auc(scores, labels)
    warped = auc(3.0 * scores + 1.0, labels)
    exps = auc(np.exp(scores / 4.0), labels)
    assert warped == pytest.approx(base, abs=1e-12)
    assert exps == pytest.approx(base, abs=1e-12)


def test_auc_negated_scores_flip():
    rng = np.random.default_rng(2)
    scores = rng.standard_normal(64)  # continuous, no ties
    labels = rng.integers(0, 2, size=64)
    labels[0], labels[1] = 0, 1
    assert auc(scores, labels) + auc(-scores, labels) == pytest.approx(1.0, abs=1e-12)


# ---------------------------------------------------------------------------
# confusion_metrics


def test_confusion_worked_counts():
    # 2 TP, 1 FP, 1 FN, 6 TN at threshold 0.5
    scores = [0.9, 0.9, 0.9, 0.1] + [0.1] * 6
    labels = [1, 1, 0, 1] + [0] * 6
    rep = confusion_metrics(scores, labels, threshold=0.5)
    v = rep.values
    assert (v["tp"], v["fp"], v["fn"], v["tn"]) == (2, 1, 1, 6)
    assert v["sensitivity"] == pytest.approx(2 / 3)
    assert v["specificity"] == pytest.approx(6 / 7)
    assert v["precision"] == pytest.approx(2 / 3)
    assert v["f1"] == pytest.approx(2 / 3)
    assert v["accuracy"] == pytest.approx(0.8)
    assert rep.n == 10 and rep.positives == 3


def test_confusion_boundary_score_counts_positive():
    rep = confusion_metrics([0.5, 0.4], [1, 0], threshold=0.5)
    assert rep.values["tp"] == 1 and rep.values["tn"] == 1


def test_confusion_nothing_predicted_positive():
    rep = confusion_metrics([0.1, 0.2, 0.3], [1, 0, 1], threshold=0.5)
    assert rep.values["sensitivity"] == 0.0
    assert rep.values["specificity"] == 1.0
    assert rep.values["precision"] == 0.0
    assert rep.values["f1"] == 0.0
    assert "NoPositivePredictions" in rep.flags


def test_confusion_single_class_undefined():
    with pytest.raises(UndefinedMetric):
        confusion_metrics([0.6, 0.7], [1, 1])


def test_confusion_empty_input():
    with pytest.raises(InvalidInput):
        confusion_metrics([], [])


def test_confusion_logit_threshold_zero_matches_prob_half():
    rng = np.random.default_rng(3)
    logits = rng.standard_normal(200)
    labels = (logits + rng.standard_normal(200) > 0).astype(int)
    a = confusion_metrics(logits, labels, threshold=0.0)
    probs = 1.0 / (1.0 + np.exp(-logits))
    b = confusion_metrics(probs, labels, threshold=0.5)
    assert a.values["tp"] == b.values["tp"]
    assert a.values["tn"] == b.values["tn"]


# ---------------------------------------------------------------------------
# regression_metrics


def test_regression_perfect():
    rep = regression_metrics([1.0, 2.0, 3.0], [1.0, 2.0, 3.0])
    assert rep.values["mae"] == 0.0
    assert rep.values["r_squared"] == 1.0


def test_regression_mean_predictor_zero_r2():
    targets = [1.0, 2.0, 3.0, 6.0]
    mean = sum(targets) / 4
    rep = regression_metrics([mean] * 4, targets)
    assert rep.values["r_squared"] == pytest.approx(0.0, abs=1e-12)


def test_regression_worse_than_mean_negative_r2():
    rep = regression_metrics([10.0, 0.0], [0.0, 10.0])
    assert rep.values["r_squared"] == pytest.approx(-3.0)
    assert rep.values["mae"] == pytest.approx(10.0)


def test_regression_constant_target_flagged():
    rep = regression_metrics([1.0, 2.0], [5.0, 5.0])
    assert rep.values["r_squared"] == 0.0
    assert "ConstantTarget" in rep.flags


def test_regression_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        regression_metrics([1.0], [1.0, 2.0])


# ---------------------------------------------------------------------------
# subgroup_auc_delta


def test_subgroup_single_group_zero_delta():
    rng = np.random.default_rng(4)
    scores = rng.standard_normal(50)
    labels = rng.integers(0, 2, size=50)
    labels[:2] = [0, 1]
    rep = subgroup_auc_delta(scores, labels, ["all"] * 50)
    assert len(rep.groups) == 1
    g = rep.groups[0]
    assert g.group == "all" and g.n == 50
    assert g.delta == pytest.approx(0.0, abs=1e-12)
    assert g.delta_pct == pytest.approx(0.0, abs=1e-12)


def test_subgroup_independent_grouping_small_deltas():
    rng = np.random.default_rng(5)
    n = 20000
    scores = rng.standard_normal(n)
    labels = (scores + rng.standard_normal(n) * 0.8 > 0).astype(int)
    groups = rng.choice(["a", "b"], size=n)
    rep = subgroup_auc_delta(scores, labels, groups)
    for g in rep.groups:
        assert abs(g.delta) < 0.02


def test_subgroup_planted_shuffle_detected():
    rng = np.random.default_rng(6)
    n = 4000
    scores = rng.standard_normal(n)
    labels = (scores > 0).astype(int)
    groups = np.array(["good"] * n)
    groups[: n // 4] = "bad"
    labels[: n // 4] = rng.integers(0, 2, size=n // 4)  # break the link for one group
    rep = subgroup_auc_delta(scores, labels, groups)
    by_name = {g.group: g for g in rep.groups}
    assert abs(by_name["bad"].auc - 0.5) < 0.05  # labels shuffled, score is noise
    assert by_name["bad"].delta < -0.1
    assert by_name["good"].auc == 1.0


def test_subgroup_degenerate_group_reported_none():
    scores = [0.1, 0.9, 0.2, 0.8]
    labels = [0, 1, 1, 1]
    groups = ["a", "a", "b", "b"]  # group b has only positives
    with pytest.warns(DegenerateClassesWarning):
        rep = subgroup_auc_delta(scores, labels, groups)
    by_name = {g.group: g for g in rep.groups}
    assert by_name["b"].auc is None
    assert by_name["b"].delta is None
    assert by_name["b"].n == 2
    assert by_name["a"].auc is not None


def test_subgroup_delta_pct_definition():
    rng = np.random.default_rng(7)
    n = 600
    scores = rng.standard_normal(n)
    labels = (scores + rng.standard_normal(n) > 0).astype(int)
    groups = np.where(np.arange(n) % 2 == 0, "even", "odd")
    rep = subgroup_auc_delta(scores, labels, groups)
    for g in rep.groups:
        assert g.delta == pytest.approx(g.auc - rep.overall, abs=1e-12)
        assert g.delta_pct == pytest.approx(100.0 * g.delta / rep.overall, abs=1e-9)


def test_subgroup_rejects_float_groups():
    with pytest.raises(InvalidInput):
        subgroup_auc_delta([0.1, 0.9], [0, 1], np.array([1.5, 2.5]))
