import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pyrocast.errors import ContractError, DimensionError
from pyrocast.metrics import (MetricsReport, ScoredSet, accuracy, confusion,
                              optimal_threshold, pr_curve,
                              precision_recall_f1, roc_auc, roc_curve,
                              score_model)


def _brute_auc(scores, labels):
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    wins = ties = 0
    for p in pos:
        for n in neg:
            if p > n:
                wins += 1
            elif p == n:
                ties += 1
    return (wins + 0.5 * ties) / (len(pos) * len(neg))


def _brute_best_f1(scores, labels):
    uniq = np.unique(scores)
    cands = np.sort(np.concatenate([uniq, 0.5 * (uniq[:-1] + uniq[1:])])
                    if len(uniq) > 1 else uniq)
    best_t, best_f1 = float(cands[0]), -1.0
    for t in cands:
        pred = scores >= t
        tp = np.sum(pred & (labels == 1))
        fp = np.sum(pred & (labels == 0))
        fn = np.sum(~pred & (labels == 1))
        prec = tp / (tp + fp) if tp + fp else 0.0
        rec = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * prec * rec / (prec + rec) if prec + rec else 0.0
        if f1 > best_f1:
            best_t, best_f1 = float(t), f1
    return best_t, best_f1


class TestHandExamples:
    def test_perfect_separation(self):
        s = ScoredSet([0.9, 0.8, 0.2, 0.1], [1, 1, 0, 0])
        assert roc_auc(s) == 1.0

    def test_reversed_separation(self):
        s = ScoredSet([0.1, 0.2, 0.8, 0.9], [1, 1, 0, 0])
        assert roc_auc(s) == 0.0

    def test_all_tied_scores(self):
        s = ScoredSet([0.5, 0.5, 0.5, 0.5], [1, 1, 0, 0])
        assert roc_auc(s) == 0.5

    def test_confusion_inclusive_threshold(self):
        s = ScoredSet([0.3, 0.5, 0.7], [0, 1, 1])
        c = confusion(s, 0.5)
        assert c == {"tp": 2, "fp": 0, "tn": 1, "fn": 0}

    def test_zero_denominators_give_zero(self):
        c = {"tp": 0, "fp": 0, "tn": 3, "fn": 0}
        assert precision_recall_f1(c) == (0.0, 0.0, 0.0)
        assert accuracy({"tp": 0, "fp": 0, "tn": 0, "fn": 0}) == 0.0

    def test_f1_hand_value(self):
        c = {"tp": 2, "fp": 1, "tn": 5, "fn": 2}
        prec, rec, f1 = precision_recall_f1(c)
        assert prec == pytest.approx(2 / 3)
        assert rec == pytest.approx(0.5)
        assert f1 == pytest.approx(2 * (2 / 3) * 0.5 / (2 / 3 + 0.5))

    def test_single_class_rejected(self):
        with pytest.raises(ContractError):
            roc_auc(ScoredSet([0.1, 0.9], [1, 1]))

    def test_length_mismatch_rejected(self):
        with pytest.raises(DimensionError):
            ScoredSet([0.1, 0.2], [1])

    def test_tie_break_prefers_lower_threshold(self):
        # thresholds 0.2 and 0.8 both give F1 = 1 on this set? no:
        # construct equal-F1 ties explicitly: scores 1..4, labels 0011
        s = ScoredSet([1.0, 2.0, 3.0, 4.0], [0, 0, 1, 1])
        t, f1 = optimal_threshold(s)
        assert f1 == 1.0
        # candidates 2.5 and 3.0 both achieve F1 = 1; lower one wins
        assert t == 2.5


class TestBruteForceOracle:
    def test_auc_matches_pairwise_count_on_200_points(self):
        rng = np.random.default_rng(0)
        scores = np.round(rng.uniform(size=200), 2)    # force ties
        labels = rng.integers(0, 2, size=200)
        labels[:2] = [0, 1]
        s = ScoredSet(scores, labels)
        assert roc_auc(s) == pytest.approx(_brute_auc(scores, labels),
                                           abs=1e-9)

    def test_optimal_threshold_matches_exhaustive_sweep(self):
        rng = np.random.default_rng(1)
        for trial in range(5):
            scores = np.round(rng.normal(size=200), 1)
            labels = (scores + rng.normal(size=200) > 0).astype(int)
            if len(np.unique(labels)) < 2:
                continue
            s = ScoredSet(scores, labels)
            t, f1 = optimal_threshold(s)
            bt, bf1 = _brute_best_f1(scores, labels)
            assert f1 == pytest.approx(bf1, abs=1e-9), trial
            assert t == pytest.approx(bt, abs=1e-9), trial

    def test_confusion_matches_explicit_loop(self):
        rng = np.random.default_rng(2)
        scores = rng.uniform(size=200)
        labels = rng.integers(0, 2, size=200)
        s = ScoredSet(scores, labels)
        for t in (0.25, 0.5, 0.75):
            c = confusion(s, t)
            tp = sum(1 for sc, lb in zip(scores, labels)
                     if sc >= t and lb == 1)
            fp = sum(1 for sc, lb in zip(scores, labels)
                     if sc >= t and lb == 0)
            assert c["tp"] == tp and c["fp"] == fp
            assert c["fn"] == int(labels.sum()) - tp
            assert c["tn"] == int((labels == 0).sum()) - fp


class TestInvariants:
    @settings(max_examples=40, deadline=None)
    @given(st.lists(st.floats(-5, 5, allow_nan=False), min_size=4,
                    max_size=40),
           st.integers(0, 2 ** 31 - 1))
    def test_auc_invariant_under_monotone_transform(self, raw, seed):
        # quantize so distinct scores stay distinct after the transform
        scores = np.round(np.array(raw), 3)
        rng = np.random.default_rng(seed)
        labels = rng.integers(0, 2, size=len(scores))
        labels[:2] = [0, 1]
        s = ScoredSet(scores, labels)
        warped = ScoredSet(np.exp(0.5 * scores) + 3.0, labels)
        assert roc_auc(warped) == pytest.approx(roc_auc(s), abs=1e-9)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2 ** 31 - 1))
    def test_optimal_f1_at_least_default_threshold_f1(self, seed):
        rng = np.random.default_rng(seed)
        scores = rng.uniform(size=60)
        labels = rng.integers(0, 2, size=60)
        labels[:2] = [0, 1]
        s = ScoredSet(scores, labels)
        _, best = optimal_threshold(s)
        _, _, at_half = precision_recall_f1(confusion(s, 0.5))
        assert best >= at_half - 1e-12

    def test_auc_symmetry_under_label_flip(self):
        rng = np.random.default_rng(3)
        scores = rng.uniform(size=100)
        labels = rng.integers(0, 2, size=100)
        labels[:2] = [0, 1]
        a = roc_auc(ScoredSet(scores, labels))
        b = roc_auc(ScoredSet(scores, 1 - labels))
        assert a + b == pytest.approx(1.0, abs=1e-9)


class TestCurvesAndReport:
    def test_roc_curve_monotone_and_complete(self):
        rng = np.random.default_rng(4)
        s = ScoredSet(rng.uniform(size=50), rng.integers(0, 2, size=50))
        fpr, tpr = roc_curve(s)
        assert fpr[0] == 0.0 and tpr[0] == 0.0
        assert fpr[-1] == 1.0 and tpr[-1] == 1.0
        assert np.all(np.diff(fpr) >= 0)
        assert np.all(np.diff(tpr) >= 0)

    def test_pr_curve_range(self):
        rng = np.random.default_rng(5)
        s = ScoredSet(rng.uniform(size=50), rng.integers(0, 2, size=50))
        rec, prec = pr_curve(s)
        assert np.all((rec >= 0) & (rec <= 1))
        assert np.all((prec >= 0) & (prec <= 1))
        assert rec[-1] == 1.0                 # lowest threshold recalls all

    def test_score_model_consistent_fields(self):
        s = ScoredSet([0.9, 0.8, 0.4, 0.1], [1, 1, 1, 0])
        rep = score_model("demo", s, trainable_params=10, frozen_params=5)
        assert rep.model == "demo"
        assert rep.tp + rep.fn == 3
        assert rep.f1 == pytest.approx(optimal_threshold(s)[1])
        assert rep.auc == pytest.approx(roc_auc(s))

    def test_report_dict_round_trip(self):
        s = ScoredSet([0.9, 0.2], [1, 0])
        rep = score_model("demo", s)
        d = rep.to_dict()
        assert d["report_version"] == 1
        assert MetricsReport.from_dict(d) == rep
