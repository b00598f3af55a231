import numpy as np
import pytest

from combustion_ews.evaluation import (
    SearchSpace,
    alarmed_events,
    baseline_table,
    cross_validate,
    f_score,
    permutation_importance,
    random_search,
    roc_curve,
    threshold_for_fpr,
    train_on_runs,
)
from combustion_ews.features import FeatureSeries
from combustion_ews.labeling import InstabilityInterval, LabeledRun
from combustion_ews.svm import SvmParams


def _make_run(seed, run_id, n=120, separation=2.0):
    """Synthetic labeled run: the positive class is shifted in features 0/3."""
    rng = np.random.default_rng(seed)
    t = 0.2 + np.arange(n) * 0.01
    labels = np.full(n, -1, dtype=np.int8)
    labels[rng.random(n) < 0.3] = 1
    x = rng.standard_normal((n, 10))
    x[labels == 1, 0] += separation
    x[labels == 1, 3] += separation
    return LabeledRun(run_id, FeatureSeries(run_id, t, x, 0.01), labels, ())


class TestFScore:
    def test_perfect(self):
        y = np.array([1, -1, 1, -1])
        assert f_score(y, y) == 1.0

    def test_harmonic_mean(self):
        truth = np.array([1, 1, -1, -1])
        pred = np.array([1, -1, -1, -1])  # P = 1, R = 0.5
        assert f_score(pred, truth) == pytest.approx(2 / 3)

    def test_all_negative_convention(self):
        truth = np.array([1, 1, -1])
        pred = np.array([-1, -1, -1])
        assert f_score(pred, truth) == 0.0

    def test_no_positives_error(self):
        with pytest.raises(ValueError, match="undefined recall"):
            f_score(np.array([1, -1]), np.array([-1, -1]))


class TestRoc:
    def test_perfect_auc(self):
        truth = np.r_[np.ones(50), -np.ones(50)].astype(int)
        scores = truth.astype(float)
        roc = roc_curve(scores, truth)
        assert roc.auc == pytest.approx(1.0)

    def test_random_auc_half(self):
        rng = np.random.default_rng(0)
        truth = np.where(rng.random(10_000) < 0.5, 1, -1)
        scores = rng.standard_normal(10_000)
        assert roc_curve(scores, truth).auc == pytest.approx(0.5, abs=0.02)

    def test_endpoints(self):
        rng = np.random.default_rng(1)
        truth = np.where(rng.random(200) < 0.4, 1, -1)
        roc = roc_curve(rng.standard_normal(200), truth)
        assert roc.tpr[0] == 0.0 and roc.fpr[0] == 0.0
        assert roc.tpr[-1] == 1.0 and roc.fpr[-1] == 1.0
        assert np.all(np.diff(roc.tpr) >= 0)
        assert np.all(np.diff(roc.fpr) >= 0)

    def test_auc_invariant_under_monotone_transform(self):
        rng = np.random.default_rng(2)
        truth = np.where(rng.random(500) < 0.5, 1, -1)
        scores = rng.standard_normal(500)
        a1 = roc_curve(scores, truth).auc
        a2 = roc_curve(np.tanh(scores) * 7 + 2, truth).auc
        assert a1 == pytest.approx(a2, abs=1e-12)

    def test_tpr_at_fpr_nondecreasing(self):
        rng = np.random.default_rng(3)
        truth = np.where(rng.random(1000) < 0.3, 1, -1)
        roc = roc_curve(rng.standard_normal(1000) + truth, truth)
        budgets = [0.005, 0.01, 0.02, 0.1, 0.5]
        vals = [roc.tpr_at_fpr(q) for q in budgets]
        assert vals == sorted(vals)

    def test_threshold_meets_budget(self):
        rng = np.random.default_rng(4)
        truth = np.where(rng.random(2000) < 0.3, 1, -1)
        scores = rng.standard_normal(2000) + truth
        thr = threshold_for_fpr(scores, truth, 0.02)
        fpr = np.mean(scores[truth == -1] >= thr)
        assert fpr <= 0.02 + 1e-12

    def test_single_class_error(self):
        with pytest.raises(ValueError):
            roc_curve(np.array([0.1, 0.2]), np.array([1, 1]))


class TestCrossValidate:
    def test_fold_count_and_mean(self):
        runs = [_make_run(s, f"r{s}") for s in range(6)]
        mean, folds = cross_validate(runs, SvmParams(c=1.0, gamma=0.5))
        assert len(folds) == 6
        assert mean == pytest.approx(np.mean(folds))

    def test_deterministic(self):
        runs = [_make_run(s, f"r{s}") for s in range(3)]
        a = cross_validate(runs, SvmParams(c=1.0, gamma=0.5))
        b = cross_validate(runs, SvmParams(c=1.0, gamma=0.5))
        assert a == b

    def test_overfit_params_score_lower(self):
        # a huge gamma memorizes the training folds and generalizes poorly
        runs = [_make_run(s, f"r{s}") for s in range(4)]
        good, _ = cross_validate(runs, SvmParams(c=1.0, gamma=0.05))
        bad, _ = cross_validate(runs, SvmParams(c=1.0, gamma=100.0))
        assert good > bad

    def test_needs_two_runs(self):
        with pytest.raises(ValueError):
            cross_validate([_make_run(0, "r0")], SvmParams(c=1.0, gamma=1.0))

    def test_no_leakage_from_held_out(self):
        # the model scoring a held-out run is a function of the training runs
        # only: its score on run b must match a model trained on run a alone
        a, b = _make_run(0, "a"), _make_run(1, "b")
        params = SvmParams(c=1.0, gamma=0.5)
        _, folds = cross_validate([a, b], params)
        model = train_on_runs([a], params)
        x = b.features.values[b.labels != 0]
        if model.scaler is not None:
            x = model.scaler.transform(x)
        pred = np.where(model.decision_function(x) >= 0, 1, -1)
        expected = f_score(pred, b.labels[b.labels != 0].astype(int))
        assert folds[1] == pytest.approx(expected, abs=1e-12)


class TestRandomSearch:
    def test_single_sample_degenerate_argmax(self):
        runs = [_make_run(s, f"r{s}") for s in range(3)]
        space = SearchSpace(n_samples=1, seed=5)
        params, mean_f, records = random_search(runs, space)
        assert len(records) == 1
        assert records[0]["c"] == params.c

    def test_seeded_identical(self):
        runs = [_make_run(s, f"r{s}") for s in range(3)]
        space = SearchSpace(n_samples=5, seed=9)
        p1, _, _ = random_search(runs, space)
        p2, _, _ = random_search(runs, space)
        assert (p1.c, p1.gamma) == (p2.c, p2.gamma)

    def test_samples_inside_ranges(self):
        runs = [_make_run(s, f"r{s}") for s in range(3)]
        space = SearchSpace(c_range=(0.5, 2.0), gamma_range=(0.1, 1.0), n_samples=6, seed=1)
        _, _, records = random_search(runs, space)
        for rec in records:
            assert 0.5 <= rec["c"] <= 2.0
            assert 0.1 <= rec["gamma"] <= 1.0


class TestImportance:
    def test_informative_features_dominate(self):
        train = [_make_run(s, f"r{s}") for s in range(4)]
        test = [_make_run(s + 50, f"t{s}") for s in range(2)]
        model = train_on_runs(train, SvmParams(c=1.0, gamma=0.5))
        imp = permutation_importance(model, test, n_repeats=5, seed=0)
        assert imp.shape == (10,)
        informative = imp[[0, 3]].min()
        assert informative > imp[[1, 2, 4, 5, 6, 7, 8, 9]].max()

    def test_constant_feature_zero_importance(self):
        train = [_make_run(s, f"r{s}") for s in range(3)]
        model = train_on_runs(train, SvmParams(c=1.0, gamma=0.5))
        test = [_make_run(60, "t0")]
        test[0].features.values[:, 7] = 0.0
        imp = permutation_importance(model, test, n_repeats=3, seed=0)
        assert imp[7] == 0.0


class TestEventsAndBaselines:
    def test_alarmed_events_window(self):
        t = np.arange(0.0, 10.0, 0.01)
        scores = np.full(len(t), -1.0)
        scores[(t >= 4.85) & (t < 4.95)] = 2.0  # alarm inside the lead window
        ivs = [InstabilityInterval(5.0, 6.0, "type1"),
               InstabilityInterval(8.0, 9.0, "type1")]
        out = alarmed_events(t, scores, ivs, threshold=0.0, lead_s=0.2)
        assert out == [True, False]

    def test_baseline_rows_and_orientation(self):
        runs = [_make_run(s, f"r{s}") for s in range(3)]
        rows = baseline_table(runs, hurst={r.run_id: np.full(len(r.labels), 0.5) for r in runs})
        names = [r["measure"] for r in rows]
        assert names == ["RR", "DET", "LAM", "ENTR", "RATIO", "H"]
        for row in rows:
            assert row["auc"] >= 0.5 - 1e-9
