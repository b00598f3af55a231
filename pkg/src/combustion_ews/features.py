"""Sliding-window feature pipeline: recurrence measures per trailing window,
linear trend slopes of each measure, and standardization into the
ten-dimensional feature vectors fed to the classifier.

Feature ordering is fixed: [rr, det, lam, entr, ratio, s_rr, s_det, s_lam,
s_entr, s_ratio], where ``s_*`` are trend slopes in measure units per second.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .embedding import DegenerateSignalError, EmbeddingConfig
from .rqa import RecurrenceConfig, RqaMeasures, rqa_measures_from_window
from .signal import TimeSeries

__all__ = [
    "FEATURE_NAMES",
    "FeatureVector",
    "FeatureSeries",
    "FeatureScaler",
    "sweep_measures",
    "trend_slope",
    "StreamingFeatureAssembler",
    "assemble_features",
    "fit_scaler",
    "apply_scaler",
    "write_feature_csv",
    "read_feature_csv",
]

FEATURE_NAMES = (
    "rr", "det", "lam", "entr", "ratio",
    "s_rr", "s_det", "s_lam", "s_entr", "s_ratio",
)

_TIME_TOL = 1e-9


@dataclass(frozen=True)
class FeatureVector:
    t: float  # window end time, s
    values: np.ndarray  # the 10 features, FEATURE_NAMES order

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.shape != (10,):
            raise ValueError("feature vector must have exactly 10 components")
        object.__setattr__(self, "values", values)


@dataclass
class FeatureSeries:
    run_id: str
    t: np.ndarray  # strictly increasing timestamps
    values: np.ndarray  # n x 10
    stride_s: float

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=np.float64)
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2 or (len(self.t) and self.values.shape != (len(self.t), 10)):
            raise ValueError("values must be an n x 10 array aligned with t")

    def __len__(self) -> int:
        return len(self.t)


def sweep_measures(
    series: TimeSeries,
    embed_cfg: EmbeddingConfig,
    rqa_cfg: RecurrenceConfig,
    window_s: float = 0.2,
    stride_s: float = 0.01,
) -> list[tuple[float, RqaMeasures | None]]:
    """Recurrence measures for every trailing window of ``window_s`` seconds,
    advancing by ``stride_s``. Entries for degenerate (zero-variance) windows
    carry ``None`` and break trend histories downstream."""
    if stride_s <= 0:
        raise ValueError("stride_s must be positive")
    fs = series.sample_rate
    w = int(round(window_s * fs))
    st = max(1, int(round(stride_s * fs)))
    x = series.samples
    out: list[tuple[float, RqaMeasures | None]] = []
    for i0 in range(0, len(x) - w + 1, st):
        t = series.start_time + (i0 + w) / fs
        try:
            m = rqa_measures_from_window(x[i0 : i0 + w], embed_cfg, rqa_cfg)
        except DegenerateSignalError:
            m = None
        out.append((t, m))
    return out


def trend_slope(history, span_s: float = 0.1) -> float:
    """Least-squares slope of (t, value) points inside the trailing span."""
    pts = list(history)
    if not pts:
        raise ValueError("insufficient history: no points")
    t_end = pts[-1][0]
    sel = [(t, v) for t, v in pts if t >= t_end - span_s - _TIME_TOL]
    if len(sel) < 2:
        raise ValueError("insufficient history: need at least 2 points inside the span")
    t = np.array([p[0] for p in sel])
    v = np.array([p[1] for p in sel])
    tc = t - t.mean()
    denom = np.dot(tc, tc)
    if denom == 0:
        raise ValueError("insufficient history: coincident timestamps")
    return float(np.dot(tc, v - v.mean()) / denom)


class StreamingFeatureAssembler:
    """Single-stream fold: push one window's measures, get at most one
    feature vector once a full trend span of history has accumulated.
    Invalid (None) measures reset the history buffer."""

    def __init__(self, span_s: float = 0.1):
        self.span_s = span_s
        self._buffer: list[tuple[float, np.ndarray]] = []

    def push(self, t: float, measures: RqaMeasures | None) -> FeatureVector | None:
        if measures is None:
            self._buffer = []
            return None
        self._buffer.append((t, measures.as_array()))
        # prune to the trailing span
        self._buffer = [(tj, m) for tj, m in self._buffer if tj >= t - self.span_s - _TIME_TOL]
        oldest = self._buffer[0][0]
        if oldest > t - self.span_s + _TIME_TOL or len(self._buffer) < 2:
            return None
        ts = np.array([tj for tj, _ in self._buffer])
        ms = np.stack([m for _, m in self._buffer])
        tc = ts - ts.mean()
        slopes = (tc @ (ms - ms.mean(axis=0))) / np.dot(tc, tc)
        return FeatureVector(t, np.concatenate([ms[-1], slopes]))


def assemble_features(
    measures,
    span_s: float = 0.1,
    run_id: str = "",
    stride_s: float | None = None,
) -> FeatureSeries:
    """Fold a time-ordered measure sequence into a feature series; entries
    without a full trend history are dropped."""
    assembler = StreamingFeatureAssembler(span_s)
    ts, rows = [], []
    for t, m in measures:
        fv = assembler.push(t, m)
        if fv is not None:
            ts.append(fv.t)
            rows.append(fv.values)
    if stride_s is None:
        stride_s = float(ts[1] - ts[0]) if len(ts) > 1 else 0.0
    values = np.stack(rows) if rows else np.empty((0, 10))
    return FeatureSeries(run_id=run_id, t=np.array(ts), values=values, stride_s=stride_s)


class FeatureScaler(BaseEstimator, TransformerMixin):
    """Per-feature standardization (zero mean, unit variance), fitted on
    training data only."""

    def __init__(self):
        self.means_: np.ndarray | None = None
        self.stds_: np.ndarray | None = None

    def fit(self, X, y=None):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or len(X) == 0:
            raise ValueError("need a non-empty 2-d array to fit the scaler")
        means = X.mean(axis=0)
        stds = X.std(axis=0)
        zero = np.flatnonzero(stds == 0)
        if zero.size:
            raise ValueError(f"zero-variance feature at index {zero[0]}")
        self.means_ = means
        self.stds_ = stds
        return self

    def transform(self, X):
        if self.means_ is None:
            raise ValueError("scaler is not fitted")
        X = np.asarray(X, dtype=np.float64)
        return (X - self.means_) / self.stds_


def fit_scaler(training) -> FeatureScaler:
    """Fit a scaler on the stacked vectors of a collection of FeatureSeries."""
    series = list(training)
    if not series:
        raise ValueError("training collection is empty")
    X = np.vstack([fs.values for fs in series])
    return FeatureScaler().fit(X)


def apply_scaler(scaler: FeatureScaler, series: FeatureSeries) -> FeatureSeries:
    return FeatureSeries(
        run_id=series.run_id,
        t=series.t.copy(),
        values=scaler.transform(series.values),
        stride_s=series.stride_s,
    )


def write_feature_csv(series: FeatureSeries, path, extra: dict | None = None) -> None:
    """Interchange CSV: one row per feature vector; extra columns (e.g. the
    Hurst exponent) are appended after the ten features."""
    path = Path(path)
    extra = extra or {}
    header = ",".join(("t",) + FEATURE_NAMES + tuple(extra))
    lines = [f"# run_id={series.run_id}", f"# stride_s={series.stride_s!r}", header]
    extra_cols = [np.asarray(v) for v in extra.values()]
    for i in range(len(series)):
        row = [repr(float(series.t[i]))]
        row.extend(repr(float(v)) for v in series.values[i])
        row.extend(repr(float(col[i])) for col in extra_cols)
        lines.append(",".join(row))
    path.write_text("\n".join(lines) + "\n")


def read_feature_csv(path) -> FeatureSeries:
    path = Path(path)
    run_id = path.stem
    stride_s = 0.0
    ts, rows = [], []
    header_seen = False
    for line in path.read_text().splitlines():
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            key, _, value = line[1:].strip().partition("=")
            if key.strip() == "run_id":
                run_id = value.strip()
            elif key.strip() == "stride_s":
                stride_s = float(value)
            continue
        if not header_seen:
            expected = ("t",) + FEATURE_NAMES
            cols = tuple(c.strip() for c in line.split(","))
            if cols[: len(expected)] != expected:
                raise ValueError(f"unexpected feature CSV header: {line!r}")
            header_seen = True
            continue
        parts = line.split(",")
        ts.append(float(parts[0]))
        rows.append([float(v) for v in parts[1:11]])
    values = np.array(rows) if rows else np.empty((0, 10))
    return FeatureSeries(run_id=run_id, t=np.array(ts), values=values, stride_s=stride_s)
