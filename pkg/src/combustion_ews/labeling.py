"""Instability-interval detection from the normalized peak-to-peak envelope
and derivation of the binary transient-vs-far classification targets.

Labels: +1 transient (stable, within the lead window before an onset),
-1 far from instability, 0 inside an instability interval (excluded from
training and evaluation)."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .features import FeatureSeries
from .signal import TimeSeries

__all__ = [
    "InstabilityInterval",
    "LabeledRun",
    "detect_intervals",
    "label_features",
    "write_intervals_jsonl",
    "read_intervals_jsonl",
    "write_label_csv",
    "read_label_csv",
    "LABEL_TRANSIENT",
    "LABEL_FAR",
    "LABEL_EXCLUDED",
]

LABEL_TRANSIENT = 1
LABEL_FAR = -1
LABEL_EXCLUDED = 0

TYPE1_THRESHOLD_PCT = 6.25
TYPE2_THRESHOLD_PCT = 20.0
HOLD_S = 0.5
LEAD_S = 0.2


@dataclass(frozen=True)
class InstabilityInterval:
    onset_s: float
    offset_s: float
    kind: str  # "type1" | "type2"

    def __post_init__(self):
        if self.offset_s <= self.onset_s:
            raise ValueError("offset must be after onset")
        if self.kind not in ("type1", "type2"):
            raise ValueError(f"unknown interval kind {self.kind!r}")


@dataclass
class LabeledRun:
    run_id: str
    features: FeatureSeries
    labels: np.ndarray  # int8, aligned with features.t
    intervals: tuple[InstabilityInterval, ...]

    @property
    def counts(self) -> dict[str, int]:
        return {
            "transient": int(np.sum(self.labels == LABEL_TRANSIENT)),
            "far_stable": int(np.sum(self.labels == LABEL_FAR)),
            "unstable": int(np.sum(self.labels == LABEL_EXCLUDED)),
        }


def detect_intervals(
    envelope: TimeSeries,
    thr1: float = TYPE1_THRESHOLD_PCT,
    thr2: float = TYPE2_THRESHOLD_PCT,
    hold_s: float = HOLD_S,
) -> tuple[InstabilityInterval, ...]:
    """Instability intervals from an envelope in percent of p_cc.

    An interval opens when the envelope first exceeds ``thr1`` and closes at
    the first drop below ``thr1`` that is confirmed by staying below for at
    least ``hold_s`` (shorter dips do not split an interval; a dip running to
    the end of the data also closes it). An interval whose peak reaches
    ``thr2`` is classified type 2.
    """
    env = envelope.samples
    times = envelope.times()
    above = env > thr1
    if not above.any():
        return ()
    hold_n = int(round(hold_s * envelope.sample_rate))
    intervals = []
    i = int(np.argmax(above))
    n = len(env)
    while i < n:
        onset_idx = i
        # find confirmed end: first below-stretch of >= hold_n samples (or to the end)
        j = onset_idx
        offset_idx = None
        while j < n:
            if above[j]:
                j += 1
                continue
            # start of a below-stretch
            k = j
            while k < n and not above[k]:
                k += 1
            if (k - j) >= hold_n or k == n:
                offset_idx = j
                break
            j = k  # dip too short: continue the interval
        if offset_idx is None:
            offset_idx = n - 1
            next_start = n
        else:
            later = np.flatnonzero(above[offset_idx:])
            next_start = offset_idx + int(later[0]) if later.size else n
        peak = env[onset_idx : max(offset_idx, onset_idx + 1)].max()
        kind = "type2" if peak >= thr2 else "type1"
        intervals.append(
            InstabilityInterval(
                onset_s=float(times[onset_idx]),
                offset_s=float(times[offset_idx]),
                kind=kind,
            )
        )
        i = next_start
    return tuple(intervals)


def label_features(
    features: FeatureSeries,
    intervals,
    lead_s: float = LEAD_S,
    run_id: str | None = None,
) -> LabeledRun:
    """Per-vector labels: inside any interval -> excluded; within ``lead_s``
    of the next onset (boundary inclusive) -> transient; otherwise far."""
    t = features.t
    labels = np.full(len(t), LABEL_FAR, dtype=np.int8)
    intervals = tuple(intervals)
    tol = 1e-9
    for iv in intervals:
        labels[(t >= iv.onset_s - tol) & (t <= iv.offset_s + tol)] = LABEL_EXCLUDED
    for iv in intervals:
        transient = (t >= iv.onset_s - lead_s - tol) & (t < iv.onset_s - tol)
        labels[transient & (labels != LABEL_EXCLUDED)] = LABEL_TRANSIENT
    return LabeledRun(
        run_id=run_id if run_id is not None else features.run_id,
        features=features,
        labels=labels,
        intervals=intervals,
    )


def write_intervals_jsonl(intervals, run_id: str, path) -> None:
    lines = [
        json.dumps(
            {"run_id": run_id, "onset_s": iv.onset_s, "offset_s": iv.offset_s, "kind": iv.kind}
        )
        for iv in intervals
    ]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))


def read_intervals_jsonl(path) -> dict[str, tuple[InstabilityInterval, ...]]:
    out: dict[str, list[InstabilityInterval]] = {}
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line:
            continue
        rec = json.loads(line)
        out.setdefault(rec["run_id"], []).append(
            InstabilityInterval(rec["onset_s"], rec["offset_s"], rec["kind"])
        )
    return {k: tuple(v) for k, v in out.items()}


def write_label_csv(run: LabeledRun, path) -> None:
    lines = [f"# run_id={run.run_id}", "t,label"]
    lines.extend(f"{float(t)!r},{int(l)}" for t, l in zip(run.features.t, run.labels))
    Path(path).write_text("\n".join(lines) + "\n")


def read_label_csv(path) -> tuple[np.ndarray, np.ndarray]:
    ts, labels = [], []
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#") or line.startswith("t,"):
            continue
        a, _, b = line.partition(",")
        ts.append(float(a))
        labels.append(int(b))
    return np.array(ts), np.array(labels, dtype=np.int8)
