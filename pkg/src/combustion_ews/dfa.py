"""Detrended fluctuation analysis and Hurst-exponent estimation, used as the
comparison baseline detector."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .embedding import DegenerateSignalError

__all__ = [
    "HurstEstimate",
    "dfa_fluctuation",
    "hurst_exponent",
    "OPERATING_SCALE_RANGE",
]

# Operating preset: logarithmically spaced scales of 50k-70k samples,
# 5-7 cycles of a ~10 kHz oscillation at 100 kHz sampling.
OPERATING_SCALE_RANGE = (50_000, 70_000)
DEFAULT_N_SCALES = 8


@dataclass(frozen=True)
class HurstEstimate:
    h: float
    window_sizes: np.ndarray
    fluctuations: np.ndarray
    fit_r2: float


def _segment_fluctuation(profile: np.ndarray, scale: int, order: int) -> float:
    """RMS of residuals after per-segment polynomial detrending; segments are
    taken from both ends of the profile (standard DFA practice)."""
    n = len(profile)
    n_seg = n // scale
    fwd = profile[: n_seg * scale].reshape(n_seg, scale)
    bwd = profile[n - n_seg * scale :].reshape(n_seg, scale)
    segments = np.vstack([fwd, bwd])
    t = np.arange(scale, dtype=np.float64)
    coefs = np.polynomial.polynomial.polyfit(t, segments.T, order)
    fitted = np.polynomial.polynomial.polyvander(t, order) @ coefs
    resid = segments - fitted.T
    return float(np.sqrt(np.mean(resid ** 2)))


def dfa_fluctuation(window, scale: int, order: int = 1) -> float:
    """Detrended fluctuation F(s) of the window at one segment size."""
    x = np.asarray(window, dtype=np.float64)
    n = len(x)
    if scale < 4:
        raise ValueError("scale must be >= 4")
    if scale > n // 2:
        raise ValueError(f"scale {scale} exceeds half the window length ({n // 2})")
    profile = np.cumsum(x - x.mean())
    return _segment_fluctuation(profile, scale, order)


def log_spaced_scales(scale_min: int, scale_max: int, n_scales: int) -> np.ndarray:
    scales = np.unique(
        np.round(np.geomspace(scale_min, scale_max, n_scales)).astype(int)
    )
    return scales


def hurst_exponent(
    window,
    scale_min: int,
    scale_max: int,
    n_scales: int = DEFAULT_N_SCALES,
    order: int = 1,
) -> HurstEstimate:
    """Hurst exponent as the log-log slope of F(s) over log-spaced scales."""
    x = np.asarray(window, dtype=np.float64)
    n = len(x)
    if scale_min < 4:
        raise ValueError("scale_min must be >= 4")
    if scale_max > n // 2:
        raise ValueError(f"scale_max {scale_max} exceeds half the window length ({n // 2})")
    if n_scales < 2:
        raise ValueError("n_scales must be >= 2")
    if x.std() == 0:
        raise DegenerateSignalError("degenerate signal: zero-variance window")
    scales = log_spaced_scales(scale_min, scale_max, n_scales)
    if len(scales) < 2:
        raise ValueError("scale range too narrow for the requested number of scales")
    profile = np.cumsum(x - x.mean())
    flucts = np.array([_segment_fluctuation(profile, int(s), order) for s in scales])
    if np.any(flucts <= 0):
        raise DegenerateSignalError("zero detrended fluctuation; window is (piecewise) linear")
    log_s = np.log(scales)
    log_f = np.log(flucts)
    slope, intercept = np.polyfit(log_s, log_f, 1)
    pred = slope * log_s + intercept
    ss_res = np.sum((log_f - pred) ** 2)
    ss_tot = np.sum((log_f - log_f.mean()) ** 2)
    r2 = float(1.0 - ss_res / ss_tot) if ss_tot > 0 else 1.0
    return HurstEstimate(h=float(slope), window_sizes=scales, fluctuations=flucts, fit_r2=r2)
