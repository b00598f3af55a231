"""Phase-space reconstruction from a scalar window: delay estimation via the
autocorrelation zero crossing, embedding-dimension estimation via Cao's
E1 statistic, and construction of the delayed state vectors."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

__all__ = [
    "EmbeddingConfig",
    "StateVectors",
    "DegenerateSignalError",
    "estimate_delay",
    "cao_e1",
    "cao_dimension",
    "embed",
]



class DegenerateSignalError(ValueError):
    """The window is constant (or otherwise has zero variance)."""


@dataclass(frozen=True)
class EmbeddingConfig:
    delay_samples: int
    dimension: int

    def __post_init__(self):
        if self.delay_samples < 1:
            raise ValueError("delay_samples must be >= 1")
        if self.dimension < 1:
            raise ValueError("dimension must be >= 1")


@dataclass(frozen=True)
class StateVectors:
    vectors: np.ndarray  # N x d
    config: EmbeddingConfig

    def __len__(self) -> int:
        return len(self.vectors)


def autocorrelation(window: np.ndarray, max_lag: int) -> np.ndarray:
    """Biased (divide by n) normalized autocorrelation for lags 0..max_lag."""
    x = np.asarray(window, dtype=np.float64)
    x = x - x.mean()
    denom = np.dot(x, x)
    if denom <= 0:
        raise DegenerateSignalError("degenerate signal: constant window")
    n = len(x)
    nfft = 1 << int(np.ceil(np.log2(2 * n)))
    spec = np.fft.rfft(x, nfft)
    acov = np.fft.irfft(spec * np.conj(spec), nfft)[: max_lag + 1]
    return acov / denom


def estimate_delay(window, sample_rate: float | None = None, max_lag: int | None = None) -> int:
    """Smallest lag at which the autocorrelation reaches zero or changes sign.

    Falls back to the first drop below 1/e (with a warning) when no zero
    crossing occurs within ``max_lag`` (default n/4). ``sample_rate`` is
    accepted for interface symmetry; the result is always in samples.
    """
    x = np.asarray(window, dtype=np.float64)
    if len(x) < 4:
        raise ValueError("window must have at least 4 samples")
    if max_lag is None:
        max_lag = max(1, len(x) // 4)
    acf = autocorrelation(x, max_lag)
    # a finite window leaves O(1/sqrt(n)) residue at a true zero of the
    # autocorrelation, so "reaches zero" uses a band of that scale
    zero_tol = 2.5 / np.sqrt(len(x))
    for k in range(1, max_lag + 1):
        if acf[k] <= zero_tol:
            return k
    below = np.flatnonzero(acf[1:] < 1.0 / np.e)
    if below.size:
        lag = int(below[0]) + 1
        warnings.warn(
            f"no autocorrelation zero crossing within {max_lag} lags; "
            f"using first drop below 1/e at lag {lag}",
            stacklevel=2,
        )
        return lag
    raise ValueError(f"autocorrelation neither crosses zero nor decays below 1/e within {max_lag} lags")


def embed(window, config: EmbeddingConfig) -> StateVectors:
    """Delayed state vectors: ``vectors[i][j] = window[i + j*delay]``."""
    x = np.asarray(window, dtype=np.float64)
    tau, d = config.delay_samples, config.dimension
    span = (d - 1) * tau + 1
    if len(x) < span:
        raise ValueError(f"window of {len(x)} samples too short for embedding; need at least {span}")
    frames = np.lib.stride_tricks.sliding_window_view(x, span)[:, ::tau]
    return StateVectors(np.ascontiguousarray(frames), config)


def cao_e1(window, delay: int, d_max: int) -> np.ndarray:
    """Cao's E1(d) = E(d+1)/E(d) for d = 1..d_max.

    E(d) averages, over all points, the ratio of the distance (maximum norm)
    to the nearest neighbor re-measured in dimension d+1 versus dimension d;
    neighbors are found in dimension d. Near-zero-distance neighbors
    (duplicate states, exact or equal up to float rounding) are skipped in
    favor of the nearest distinct neighbor, since the ratio at a
    rounding-level denominator is meaningless.
    """
    x = np.asarray(window, dtype=np.float64)
    if np.ptp(x) == 0:
        raise DegenerateSignalError("degenerate signal: constant window")
    dup_tol = np.ptp(x) * 1e-9
    n = len(x)
    e = np.empty(d_max + 1)
    for d in range(1, d_max + 2):
        # restrict to points whose (d+1)-dimensional extension exists
        n_pts = n - d * delay
        if n_pts < 2:
            raise ValueError(f"window too short for Cao's method at d_max={d_max}")
        pts = np.lib.stride_tricks.sliding_window_view(x, (d - 1) * delay + 1)[:n_pts, ::delay]
        tree = cKDTree(pts)
        extension = x[d * delay : d * delay + n_pts]
        ratios = []
        # periodic signals produce duplicate state vectors, so the neighbor
        # query widens until a distinct neighbor appears
        pending = np.arange(n_pts)
        k_query = min(n_pts, 8)
        while pending.size:
            dists, idx = tree.query(pts[pending], k=k_query, p=np.inf)
            unresolved = []
            for row, i in enumerate(pending):
                hit = np.flatnonzero(dists[row, 1:] > dup_tol)
                if hit.size:
                    r = hit[0] + 1
                    j = idx[row, r]
                    num = max(dists[row, r], abs(extension[i] - extension[j]))
                    ratios.append(num / dists[row, r])
                elif k_query < n_pts:
                    unresolved.append(i)
            pending = np.asarray(unresolved, dtype=np.intp)
            if k_query == n_pts:
                break
            k_query = min(n_pts, 4 * k_query)
        if not ratios:
            raise DegenerateSignalError("degenerate signal: all state vectors identical")
        e[d - 1] = float(np.mean(ratios))
    return e[1:] / e[:-1]


def cao_dimension(window, delay: int, d_max: int = 16, saturation_tol: float = 0.05) -> int:
    """Smallest dimension where E1 has saturated near 1 (two consecutive
    values within ``saturation_tol``); returns ``d_max`` with a warning when
    no saturation is found."""
    e1 = cao_e1(window, delay, d_max)
    for d in range(1, d_max):
        if abs(e1[d - 1] - 1.0) < saturation_tol and abs(e1[d] - 1.0) < saturation_tol:
            return d
    warnings.warn(f"Cao E1 did not saturate below d_max={d_max}", stacklevel=2)
    return d_max
