"""Recurrence matrices and the five recurrence quantification measures
(recurrence rate, determinism, laminarity, diagonal-line entropy and the
determinism/recurrence-rate ratio) for one embedded analysis window.

The scalar window is z-scored before embedding, so the recurrence threshold
``epsilon`` is expressed in units of the window's standard deviation."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import _kernels
from .embedding import DegenerateSignalError, EmbeddingConfig, StateVectors, embed

__all__ = [
    "RecurrenceConfig",
    "RecurrenceMatrix",
    "RqaMeasures",
    "recurrence_matrix",
    "recurrence_from_window",
    "rqa_measures",
    "rqa_measures_from_window",
    "write_recurrence_pbm",
]


@dataclass(frozen=True)
class RecurrenceConfig:
    epsilon: float = 3.0  # distance units after z-scoring the window
    l_min: int = 2
    v_min: int = 2
    theiler_window: int = 0
    decimation: int = 4  # keep every k-th state vector

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.l_min < 2 or self.v_min < 2:
            raise ValueError("l_min and v_min must be >= 2")
        if self.theiler_window < 0:
            raise ValueError("theiler_window must be >= 0")
        if self.decimation < 1:
            raise ValueError("decimation must be >= 1")


@dataclass(frozen=True)
class RecurrenceMatrix:
    """Symmetric binary recurrence matrix, stored as bit-packed rows."""

    packed: np.ndarray  # n x ceil(n/8) uint8, row-major bit packing
    n: int
    config: RecurrenceConfig

    def dense(self) -> np.ndarray:
        return np.unpackbits(self.packed, axis=1, count=self.n).astype(bool)


@dataclass(frozen=True)
class RqaMeasures:
    rr: float
    det: float
    lam: float
    entr: float
    ratio: float

    def as_array(self) -> np.ndarray:
        return np.array([self.rr, self.det, self.lam, self.entr, self.ratio])


def _zscore(window) -> np.ndarray:
    x = np.asarray(window, dtype=np.float64)
    std = x.std()
    if std == 0 or not np.isfinite(std):
        raise DegenerateSignalError("degenerate signal: zero-variance window")
    return (x - x.mean()) / std


def recurrence_matrix(states: StateVectors, config: RecurrenceConfig) -> RecurrenceMatrix:
    """Threshold pairwise Euclidean distances of the (decimated) state
    vectors; distances are taken in the units of the vectors as given."""
    vectors = states.vectors[:: config.decimation]
    n = len(vectors)
    if n < 2:
        raise ValueError("need at least 2 state vectors")
    eps2 = config.epsilon ** 2
    packed_cols = (n + 7) // 8
    packed = np.empty((n, packed_cols), dtype=np.uint8)
    chunk = max(1, int(2**24 // max(1, n * vectors.shape[1])))
    for lo in range(0, n, chunk):
        hi = min(n, lo + chunk)
        diff = vectors[lo:hi, None, :] - vectors[None, :, :]
        d2 = np.einsum("ijk,ijk->ij", diff, diff)
        bits = d2 <= eps2
        if config.theiler_window > 0:
            idx = np.arange(n)
            for row in range(lo, hi):
                bits[row - lo, np.abs(idx - row) <= config.theiler_window] = False
        packed[lo:hi] = np.packbits(bits, axis=1)
    return RecurrenceMatrix(packed, n, config)


def recurrence_from_window(
    window, embed_cfg: EmbeddingConfig, rqa_cfg: RecurrenceConfig
) -> RecurrenceMatrix:
    """z-score the scalar window, embed it and threshold the distances."""
    states = embed(_zscore(window), embed_cfg)
    return recurrence_matrix(states, rqa_cfg)


def _measures_from_stats(
    n: int,
    n_points: int,
    diag_hist: np.ndarray,
    vert_hist: np.ndarray,
    l_min: int,
    v_min: int,
) -> RqaMeasures:
    rr = n_points / (n * n)
    lengths = np.arange(len(diag_hist))

    diag_total = float(np.dot(lengths, diag_hist))
    det = float(np.dot(lengths[l_min:], diag_hist[l_min:]) / diag_total) if diag_total > 0 else 0.0

    vert_total = float(np.dot(lengths[: len(vert_hist)], vert_hist))
    lam = (
        float(np.dot(lengths[v_min : len(vert_hist)], vert_hist[v_min:]) / vert_total)
        if vert_total > 0
        else 0.0
    )

    n_lines = diag_hist[l_min:].sum()
    if n_lines > 0:
        p = diag_hist[l_min:][diag_hist[l_min:] > 0] / n_lines
        entr = float(-(p * np.log(p)).sum())
    else:
        entr = 0.0

    ratio = det / rr if rr > 0 else 0.0
    return RqaMeasures(rr=rr, det=det, lam=lam, entr=entr, ratio=ratio)


def rqa_measures(matrix: RecurrenceMatrix) -> RqaMeasures:
    """Measures from an explicit recurrence matrix."""
    bits = matrix.dense().astype(np.uint8)
    n_points, diag_hist, vert_hist = _kernels.matrix_line_stats(bits, 0)
    return _measures_from_stats(
        matrix.n, n_points, diag_hist, vert_hist, matrix.config.l_min, matrix.config.v_min
    )


def rqa_measures_from_window(
    window, embed_cfg: EmbeddingConfig, rqa_cfg: RecurrenceConfig
) -> RqaMeasures:
    """Fast path used by the sliding-window sweep: z-score, embed, decimate
    and scan lines without materializing the recurrence matrix."""
    states = embed(_zscore(window), embed_cfg)
    vectors = np.ascontiguousarray(states.vectors[:: rqa_cfg.decimation])
    n = len(vectors)
    if n < 2:
        raise ValueError("need at least 2 state vectors")
    n_points, diag_hist, vert_hist = _kernels.window_line_stats(
        vectors, float(rqa_cfg.epsilon) ** 2, rqa_cfg.theiler_window
    )
    return _measures_from_stats(n, n_points, diag_hist, vert_hist, rqa_cfg.l_min, rqa_cfg.v_min)


def write_recurrence_pbm(matrix: RecurrenceMatrix, path) -> None:
    """Export as a binary PBM (P4) bitmap for visual inspection."""
    path = Path(path)
    header = f"P4\n{matrix.n} {matrix.n}\n".encode("ascii")
    path.write_bytes(header + matrix.packed.tobytes())
