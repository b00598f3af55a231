"""Model selection and evaluation: leave-one-run-out cross-validation,
random hyperparameter search maximizing the F-score, ROC / TPR-at-FPR
computation, decision-threshold selection, permutation feature importance and
single-measure baseline detectors."""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .features import FEATURE_NAMES, FeatureScaler
from .labeling import LABEL_EXCLUDED, LabeledRun
from .svm import (
    ConvergenceError,
    SupportVectorClassifier,
    SvmModel,
    SvmParams,
    TrainingSet,
    squared_distances,
)

__all__ = [
    "SearchSpace",
    "RocCurve",
    "EvalReport",
    "f_score",
    "roc_curve",
    "threshold_for_fpr",
    "cross_validate",
    "random_search",
    "train_on_runs",
    "run_scores",
    "permutation_importance",
    "alarmed_events",
    "baseline_table",
    "write_trace_csv",
]

DEFAULT_FPR_BUDGETS = (0.005, 0.01, 0.02)


@dataclass(frozen=True)
class SearchSpace:
    c_range: tuple = (1e-2, 1e2)
    gamma_range: tuple = (1e-2, 1e1)
    n_samples: int = 60
    seed: int = 0

    def __post_init__(self):
        for low, high in (self.c_range, self.gamma_range):
            if not (0 < low < high):
                raise ValueError("ranges must satisfy 0 < low < high")
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")


@dataclass(frozen=True)
class RocCurve:
    thresholds: np.ndarray  # descending, with a +inf sentinel first
    tpr: np.ndarray
    fpr: np.ndarray
    auc: float

    def tpr_at_fpr(self, budget: float) -> float:
        """TPR of the most permissive threshold whose FPR stays within the
        budget."""
        ok = np.flatnonzero(self.fpr <= budget + 1e-12)
        return float(self.tpr[ok[-1]]) if ok.size else 0.0

    def threshold_at_fpr(self, budget: float) -> float:
        ok = np.flatnonzero(self.fpr <= budget + 1e-12)
        return float(self.thresholds[ok[-1]]) if ok.size else float("inf")


def f_score(predictions, truth) -> float:
    """Harmonic mean of precision and recall; 0 when both are undefined or
    zero by the all-negative-predictions convention."""
    predictions = np.asarray(predictions)
    truth = np.asarray(truth)
    if predictions.shape != truth.shape:
        raise ValueError("predictions and truth must have the same length")
    pos = truth == 1
    if not pos.any():
        raise ValueError("undefined recall: no positive points in truth")
    tp = np.sum((predictions == 1) & pos)
    fp = np.sum((predictions == 1) & ~pos)
    fn = np.sum((predictions != 1) & pos)
    denom = 2 * tp + fp + fn
    return float(2 * tp / denom) if denom > 0 else 0.0


def roc_curve(scores, truth) -> RocCurve:
    scores = np.asarray(scores, dtype=np.float64)
    truth = np.asarray(truth)
    pos = truth == 1
    n_pos = int(pos.sum())
    n_neg = int(len(truth) - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise ValueError("ROC needs both classes in truth")
    order = np.argsort(-scores, kind="stable")
    sorted_pos = pos[order]
    uniq_last = np.flatnonzero(np.r_[np.diff(scores[order]) != 0, True])
    tp = np.cumsum(sorted_pos)[uniq_last]
    fp = (uniq_last + 1) - tp
    thresholds = np.r_[np.inf, scores[order][uniq_last]]
    tpr = np.r_[0.0, tp / n_pos]
    fpr = np.r_[0.0, fp / n_neg]
    auc = float(np.trapezoid(tpr, fpr))
    return RocCurve(thresholds=thresholds, tpr=tpr, fpr=fpr, auc=auc)


def threshold_for_fpr(scores, truth, budget: float) -> float:
    """Decision threshold meeting an FPR budget on the given scored points."""
    return roc_curve(scores, truth).threshold_at_fpr(budget)


def _stable_xy(run: LabeledRun) -> tuple[np.ndarray, np.ndarray]:
    keep = run.labels != LABEL_EXCLUDED
    return run.features.values[keep], run.labels[keep].astype(np.int64)


def _prepare_folds(runs):
    runs = list(runs)
    if len(runs) < 2:
        raise ValueError("cross-validation needs at least 2 runs")
    folds = []
    for held_out in range(len(runs)):
        train_parts = [_stable_xy(r) for i, r in enumerate(runs) if i != held_out]
        x_tr = np.vstack([p[0] for p in train_parts])
        y_tr = np.concatenate([p[1] for p in train_parts])
        scaler = FeatureScaler().fit(x_tr)
        x_tr = scaler.transform(x_tr)
        x_te, y_te = _stable_xy(runs[held_out])
        folds.append(
            {
                "x_tr": x_tr,
                "y_tr": y_tr,
                "d2_tr": squared_distances(x_tr, x_tr),
                "x_te": scaler.transform(x_te),
                "y_te": y_te,
            }
        )
    return folds


def _cv_mean_f(folds, params: SvmParams, tol, max_iter) -> tuple[float, list]:
    scores = []
    for fold in folds:
        clf = SupportVectorClassifier(
            c=params.c,
            gamma=params.gamma,
            class_weight=params.class_weights if params.class_weights else "balanced",
            tol=tol,
            max_iter=max_iter,
        )
        clf.fit(fold["x_tr"], fold["y_tr"], squared_dists=fold["d2_tr"])
        scores.append(f_score(clf.predict(fold["x_te"]), fold["y_te"]))
    return float(np.mean(scores)), scores


def cross_validate(runs, params: SvmParams, tol: float = 1e-3,
                   max_iter: int = 10_000_000) -> tuple[float, list]:
    """Leave-one-run-out cross-validation; returns (mean F-score, per-fold
    F-scores). The scaler and model of each fold are fitted on the training
    folds only."""
    mean, scores = _cv_mean_f(_prepare_folds(runs), params, tol, max_iter)
    return mean, scores


def random_search(runs, space: SearchSpace, tol: float = 1e-3,
                  max_iter: int = 10_000_000):
    """Log-uniform random search over (C, gamma), scored by leave-one-run-out
    mean F-score. Returns (best SvmParams, best mean F, per-sample records).
    Samples whose folds fail are skipped with a warning."""
    folds = _prepare_folds(runs)
    rng = np.random.default_rng(space.seed)
    log_c = rng.uniform(np.log(space.c_range[0]), np.log(space.c_range[1]), space.n_samples)
    log_g = rng.uniform(np.log(space.gamma_range[0]), np.log(space.gamma_range[1]), space.n_samples)
    records = []
    best = None
    for k in range(space.n_samples):
        params = SvmParams(c=float(np.exp(log_c[k])), gamma=float(np.exp(log_g[k])))
        try:
            mean, fold_scores = _cv_mean_f(folds, params, tol, max_iter)
        except (ConvergenceError, ValueError) as exc:
            warnings.warn(f"search sample {k} (C={params.c:.4g}, gamma={params.gamma:.4g}) "
                          f"skipped: {exc}", stacklevel=2)
            continue
        records.append({"c": params.c, "gamma": params.gamma,
                        "mean_f": mean, "fold_f": fold_scores})
        if best is None or mean > best[1]:
            best = (params, mean, fold_scores)
    if best is None:
        raise RuntimeError("all search samples failed")
    return best[0], best[1], records


def train_on_runs(runs, params: SvmParams, tol: float = 1e-3,
                  max_iter: int = 10_000_000) -> SvmModel:
    """Fit the scaler and final SVM on the complete collection of runs."""
    parts = [_stable_xy(r) for r in runs]
    x = np.vstack([p[0] for p in parts])
    y = np.concatenate([p[1] for p in parts])
    scaler = FeatureScaler().fit(x)
    clf = SupportVectorClassifier(
        c=params.c,
        gamma=params.gamma,
        class_weight=params.class_weights if params.class_weights else "balanced",
        tol=tol,
        max_iter=max_iter,
    )
    clf.fit(scaler.transform(x), y)
    return clf.to_model(scaler=scaler)


def run_scores(model: SvmModel, run: LabeledRun) -> np.ndarray:
    """Decision-function values for every feature vector of a run (the model
    scaler is applied here)."""
    x = run.features.values
    if model.scaler is not None:
        x = model.scaler.transform(x)
    return model.decision_function(x)


def permutation_importance(model: SvmModel, test_runs, n_repeats: int = 5,
                           seed: int = 0, threshold: float = 0.0) -> np.ndarray:
    """Mean decrease of the F-score on pooled stable test points after
    shuffling each feature column."""
    xs, ys = [], []
    for run in test_runs:
        x, y = _stable_xy(run)
        xs.append(x)
        ys.append(y)
    x = np.vstack(xs)
    y = np.concatenate(ys)
    if model.scaler is not None:
        x = model.scaler.transform(x)
    rng = np.random.default_rng(seed)
    baseline = f_score(np.where(model.decision_function(x) >= threshold, 1, -1), y)
    importances = np.zeros(x.shape[1])
    for col in range(x.shape[1]):
        drops = []
        for _ in range(n_repeats):
            shuffled = x.copy()
            shuffled[:, col] = shuffled[rng.permutation(len(x)), col]
            f = f_score(np.where(model.decision_function(shuffled) >= threshold, 1, -1), y)
            drops.append(baseline - f)
        importances[col] = np.mean(drops)
    return importances


def alarmed_events(t: np.ndarray, scores: np.ndarray, intervals,
                   threshold: float, lead_s: float = 0.2) -> list[bool]:
    """Per-event check: did the warning signal cross the threshold inside
    [onset - lead_s, onset]?"""
    out = []
    for iv in intervals:
        window = (t >= iv.onset_s - lead_s - 1e-9) & (t <= iv.onset_s + 1e-9)
        out.append(bool(np.any(scores[window] >= threshold)))
    return out


def baseline_table(test_runs, fpr_budgets=DEFAULT_FPR_BUDGETS,
                   hurst: dict | None = None) -> list[dict]:
    """Threshold detectors built from single RQA measures (and optionally a
    Hurst-exponent series per run). Each measure is auto-oriented so that its
    AUC is at least 0.5, which favors the baseline."""
    rows = []
    y = np.concatenate([_stable_xy(r)[1] for r in test_runs])
    for col, name in enumerate(FEATURE_NAMES[:5]):
        scores = np.concatenate([_stable_xy(r)[0][:, col] for r in test_runs])
        rows.append(_baseline_row(name.upper(), scores, y, fpr_budgets))
    if hurst is not None:
        scores, ys = [], []
        for run in test_runs:
            h = np.asarray(hurst[run.run_id], dtype=np.float64)
            keep = (run.labels != LABEL_EXCLUDED) & np.isfinite(h)
            scores.append(h[keep])
            ys.append(run.labels[keep].astype(np.int64))
        rows.append(_baseline_row("H", np.concatenate(scores), np.concatenate(ys), fpr_budgets))
    return rows


def _baseline_row(name, scores, y, fpr_budgets):
    roc = roc_curve(scores, y)
    orientation = 1
    if roc.auc < 0.5:
        roc = roc_curve(-scores, y)
        orientation = -1
    return {
        "measure": name,
        "orientation": orientation,
        "auc": roc.auc,
        "tpr_at_fpr": {str(q): roc.tpr_at_fpr(q) for q in fpr_budgets},
    }


@dataclass
class EvalReport:
    chosen_params: dict
    per_run_f: dict
    mean_f: float
    roc: RocCurve
    tpr_at_fpr: dict
    feature_importances: np.ndarray
    baselines: list = field(default_factory=list)
    events: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)

    def to_json(self) -> str:
        doc = {
            "chosen_params": self.chosen_params,
            "per_run_f": self.per_run_f,
            "mean_f": self.mean_f,
            "roc": {
                "thresholds": [float(v) for v in self.roc.thresholds],
                "tpr": self.roc.tpr.tolist(),
                "fpr": self.roc.fpr.tolist(),
                "auc": self.roc.auc,
            },
            "tpr_at_fpr": self.tpr_at_fpr,
            "feature_importances": dict(zip(FEATURE_NAMES, np.asarray(self.feature_importances).tolist())),
            "baselines": self.baselines,
            "events": self.events,
            "provenance": self.provenance,
        }
        return json.dumps(doc, indent=2)


def write_trace_csv(path, t, decision, threshold: float, envelope_pct, labels) -> None:
    """Plot-ready decision-function trace aligned with the envelope."""
    lines = ["t,decision_value,threshold,envelope_pct,label"]
    for i in range(len(t)):
        lines.append(
            f"{t[i]!r},{decision[i]!r},{threshold!r},{envelope_pct[i]!r},{int(labels[i])}"
        )
    Path(path).write_text("\n".join(lines) + "\n")
