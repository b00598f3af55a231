"""Raw pressure-signal handling: run file I/O, high-pass filtering and
peak-to-peak amplitude envelopes.

Two run file formats are supported:

* CSV: comment header lines ``# sample_rate=<Hz>``, ``# p_cc=<bar>``,
  ``# run_id=<text>`` followed by one sample per line.
* Binary: magic ``RQS1``, uint64-LE sample count, float64-LE sample rate,
  float64-LE mean chamber pressure, then float64-LE samples.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import signal as sps

BINARY_MAGIC = b"RQS1"

__all__ = [
    "TimeSeries",
    "RunMetadata",
    "FilterSpec",
    "RunFormatError",
    "MalformedHeaderError",
    "NonFiniteSampleError",
    "EmptyRunError",
    "load_run",
    "save_run",
    "high_pass",
    "peak_to_peak_envelope",
]


class RunFormatError(ValueError):
    """A run file does not conform to the documented layout."""


class MalformedHeaderError(RunFormatError):
    """Header lines or magic bytes are missing or unparseable."""


class NonFiniteSampleError(RunFormatError):
    """A sample is NaN or infinite."""


class EmptyRunError(RunFormatError):
    """The file contains no samples."""


@dataclass(frozen=True)
class TimeSeries:
    """Uniformly sampled scalar signal. Index ``i`` maps to time
    ``start_time + i / sample_rate``."""

    samples: np.ndarray
    sample_rate: float
    start_time: float = 0.0
    channel_id: str = ""

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        object.__setattr__(self, "samples", samples)
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        if samples.ndim != 1:
            raise ValueError("samples must be one-dimensional")

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate

    def times(self) -> np.ndarray:
        return self.start_time + np.arange(len(self.samples)) / self.sample_rate


@dataclass(frozen=True)
class RunMetadata:
    run_id: str
    mean_chamber_pressure: float  # bar
    notes: str = ""

    def __post_init__(self):
        if self.mean_chamber_pressure <= 0:
            raise ValueError("mean_chamber_pressure must be positive")


@dataclass(frozen=True)
class FilterSpec:
    """High-pass filter specification. ``order`` is the overall order of the
    zero-phase (forward-backward) response and must be even."""

    cutoff_hz: float
    order: int = 4
    kind: str = "high_pass"

    def __post_init__(self):
        if self.cutoff_hz <= 0:
            raise ValueError("cutoff_hz must be positive")
        if self.order < 1:
            raise ValueError("order must be >= 1")
        if self.order % 2 != 0:
            raise ValueError("order must be even (zero-phase filtering runs the signal through the filter twice)")
        if self.kind != "high_pass":
            raise ValueError(f"unsupported filter kind: {self.kind!r}")


def _parse_csv(text: str, default_run_id: str) -> tuple[TimeSeries, RunMetadata]:
    sample_rate = None
    p_cc = None
    run_id = default_run_id
    values = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if "=" not in body:
                raise MalformedHeaderError(f"line {lineno}: header line without '='")
            key, _, value = body.partition("=")
            key = key.strip()
            value = value.strip()
            try:
                if key == "sample_rate":
                    sample_rate = float(value)
                elif key == "p_cc":
                    p_cc = float(value)
                elif key == "run_id":
                    run_id = value
                # unknown header keys are carried as notes-level noise, ignored
            except ValueError as exc:
                raise MalformedHeaderError(f"line {lineno}: bad value for {key}: {value!r}") from exc
        else:
            try:
                values.append(float(line))
            except ValueError as exc:
                raise RunFormatError(f"line {lineno}: not a sample value: {line!r}") from exc
    if sample_rate is None:
        raise MalformedHeaderError("missing '# sample_rate=' header")
    if p_cc is None:
        raise MalformedHeaderError("missing '# p_cc=' header")
    if not values:
        raise EmptyRunError("no samples in file")
    samples = np.asarray(values, dtype=np.float64)
    _check_finite(samples)
    return (
        TimeSeries(samples, sample_rate=sample_rate, channel_id=run_id),
        RunMetadata(run_id=run_id, mean_chamber_pressure=p_cc),
    )


def _check_finite(samples: np.ndarray) -> None:
    bad = np.flatnonzero(~np.isfinite(samples))
    if bad.size:
        raise NonFiniteSampleError(f"non-finite sample at index {bad[0]}")


def _parse_binary(raw: bytes, default_run_id: str) -> tuple[TimeSeries, RunMetadata]:
    header_size = 4 + 8 + 8 + 8
    if len(raw) < header_size:
        raise MalformedHeaderError("file too short for binary header")
    if raw[:4] != BINARY_MAGIC:
        raise MalformedHeaderError(f"bad magic bytes {raw[:4]!r}, expected {BINARY_MAGIC!r}")
    count, sample_rate, p_cc = struct.unpack("<Qdd", raw[4:header_size])
    if count == 0:
        raise EmptyRunError("no samples in file")
    expected = header_size + 8 * count
    if len(raw) != expected:
        raise RunFormatError(f"file length {len(raw)} does not match header (expected {expected})")
    samples = np.frombuffer(raw, dtype="<f8", count=count, offset=header_size).astype(np.float64)
    _check_finite(samples)
    return (
        TimeSeries(samples, sample_rate=sample_rate, channel_id=default_run_id),
        RunMetadata(run_id=default_run_id, mean_chamber_pressure=p_cc),
    )


def load_run(path, format: str = "auto") -> tuple[TimeSeries, RunMetadata]:
    """Read a run file in CSV or binary format.

    ``format`` is ``"csv"``, ``"binary"`` or ``"auto"`` (sniff the magic
    bytes).
    """
    path = Path(path)
    raw = path.read_bytes()
    if not raw:
        raise EmptyRunError(f"{path}: zero-length file")
    if format == "auto":
        format = "binary" if raw[:4] == BINARY_MAGIC else "csv"
    if format == "binary":
        return _parse_binary(raw, path.stem)
    if format == "csv":
        return _parse_csv(raw.decode("utf-8"), path.stem)
    raise ValueError(f"unknown format: {format!r}")


def save_run(path, series: TimeSeries, meta: RunMetadata, format: str = "binary") -> None:
    """Write a run file; the binary format round-trips bit-exactly."""
    path = Path(path)
    if format == "binary":
        buf = io.BytesIO()
        buf.write(BINARY_MAGIC)
        buf.write(struct.pack("<Qdd", len(series.samples), series.sample_rate,
                              meta.mean_chamber_pressure))
        buf.write(series.samples.astype("<f8").tobytes())
        path.write_bytes(buf.getvalue())
    elif format == "csv":
        lines = [
            f"# sample_rate={series.sample_rate!r}",
            f"# p_cc={meta.mean_chamber_pressure!r}",
            f"# run_id={meta.run_id}",
        ]
        lines.extend(repr(float(v)) for v in series.samples)
        path.write_text("\n".join(lines) + "\n")
    else:
        raise ValueError(f"unknown format: {format!r}")


def _design_sos(spec: FilterSpec, sample_rate: float) -> np.ndarray:
    nyquist = sample_rate / 2.0
    if spec.cutoff_hz >= nyquist:
        raise ValueError(f"cutoff {spec.cutoff_hz} Hz >= Nyquist {nyquist} Hz")
    # One forward and one backward pass of a Butterworth of half the requested
    # order. The per-pass cutoff is lowered so the combined zero-phase
    # response is -3 dB at the nominal cutoff; the correction is applied in
    # the bilinear (tan) domain so it is exact for the digital filter.
    half_order = spec.order // 2
    correction = (np.sqrt(2.0) + 1.0) ** (-1.0 / (2.0 * half_order))
    warped = np.tan(np.pi * spec.cutoff_hz / sample_rate) * correction
    corrected_hz = np.arctan(warped) * sample_rate / np.pi
    return sps.butter(half_order, corrected_hz, btype="highpass", fs=sample_rate, output="sos")


def high_pass(series: TimeSeries, spec: FilterSpec) -> TimeSeries:
    """Zero-phase high-pass filter; removes DC and slow non-acoustic drift."""
    sos = _design_sos(spec, series.sample_rate)
    filtered = sps.sosfiltfilt(sos, series.samples)
    return TimeSeries(filtered, series.sample_rate, series.start_time, series.channel_id)


def peak_to_peak_envelope(
    series: TimeSeries,
    window_s: float,
    p_cc: float,
    stride_s: float = 0.001,
) -> TimeSeries:
    """Trailing peak-to-peak amplitude as a percentage of the mean chamber
    pressure, evaluated every ``stride_s`` seconds."""
    if p_cc <= 0:
        raise ValueError("p_cc must be positive")
    window = int(round(window_s * series.sample_rate))
    stride = max(1, int(round(stride_s * series.sample_rate)))
    if window < 2:
        raise ValueError("window must span at least 2 samples")
    if window > len(series.samples):
        raise ValueError(f"window of {window} samples longer than series ({len(series.samples)})")
    frames = np.lib.stride_tricks.sliding_window_view(series.samples, window)[::stride]
    env = (frames.max(axis=1) - frames.min(axis=1)) / p_cc * 100.0
    return TimeSeries(
        env,
        sample_rate=series.sample_rate / stride,
        start_time=series.start_time + (window - 1) / series.sample_rate,
        channel_id=series.channel_id,
    )
