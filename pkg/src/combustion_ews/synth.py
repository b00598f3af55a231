"""Surrogate combustor pressure runs with controlled transitions to
instability.

The dynamic pressure is built from a stochastically forced Hopf normal form
integrated in the rotating frame of the dominant acoustic mode,

    dB = [mu(t) - (1 + i beta) |B|^2] B dt + sigma dW,

so p'(t) = a Re[B(t) exp(i w0 t)] plus a 1/f-shaped broadband noise floor and,
optionally, spontaneous high-amplitude burst packets. The bifurcation
parameter schedule mu(t) drives the stable <-> limit-cycle transitions, which
makes the ground-truth onsets known by construction.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numba import njit

from .labeling import InstabilityInterval, detect_intervals
from .signal import RunMetadata, TimeSeries, save_run

__all__ = [
    "SynthConfig",
    "GroundTruth",
    "generate_run",
    "generate_campaign",
    "write_manifest",
    "read_manifest",
]

# Fixed normal-form constants; documented, not fitted.
BETA = 0.5  # shear (amplitude-phase coupling)
SIGMA = 0.05  # stochastic forcing strength in B units
NOISE_F_MIN_HZ = 50.0  # 1/f shaping flattens below this frequency

# Post-onset amplitude scaling per target kind, as a fraction of p_cc applied
# to |B|. Campaign schedules saturate at |B| = sqrt(mu_max) = 2, so the tone's
# peak-to-peak reaches about 12 % (type 1) / 35 % (type 2) of p_cc, bracketing
# the 6.25 % and 20 % classification thresholds.
AMP_FRACTION = {"type1": 0.030, "type2": 0.0875}

BURST_AMP_FRACTION = 0.25  # pp about 50 % of p_cc, always a type-2 event
BURST_WIDTH_S = 0.05


@dataclass(frozen=True)
class SynthConfig:
    seed: int
    duration_s: float
    sample_rate: float = 100_000.0
    p_cc: float = 80.0
    f0_hz: float = 10_000.0
    noise_level: float = 0.5  # broadband noise rms in percent of p_cc
    mu_schedule: tuple = ((0.0, -1.0),)  # piecewise-linear (t, mu) breakpoints
    burst_rate: float = 0.0  # spontaneous events per second
    target_kind: str = "type1"

    def __post_init__(self):
        if self.duration_s <= 0:
            raise ValueError("duration_s must be positive")
        if self.sample_rate <= 2 * self.f0_hz:
            raise ValueError("sample_rate must exceed twice f0_hz")
        if self.p_cc <= 0:
            raise ValueError("p_cc must be positive")
        if self.noise_level < 0:
            raise ValueError("noise_level must be non-negative")
        if self.burst_rate < 0:
            raise ValueError("burst_rate must be non-negative")
        if self.target_kind not in AMP_FRACTION:
            raise ValueError(f"unknown target_kind {self.target_kind!r}")
        sched = tuple((float(t), float(mu)) for t, mu in self.mu_schedule)
        if not sched:
            raise ValueError("mu_schedule must have at least one breakpoint")
        if any(b[0] <= a[0] for a, b in zip(sched, sched[1:])):
            raise ValueError("mu_schedule breakpoints must be strictly increasing")
        object.__setattr__(self, "mu_schedule", sched)


@dataclass(frozen=True)
class GroundTruth:
    intervals: tuple[InstabilityInterval, ...]
    mu_crossings: tuple[float, ...]  # upward zero crossings of mu(t)


@njit(cache=True)
def _integrate_hopf(mu, noise_r, noise_i, dt, beta, sigma):
    n = len(mu)
    br = np.empty(n)
    bi = np.empty(n)
    x = 0.0
    y = 0.0
    sq = sigma * np.sqrt(dt)
    for k in range(n):
        r2 = x * x + y * y
        gr = mu[k] - r2
        gi = -beta * r2
        xn = x + dt * (gr * x - gi * y) + sq * noise_r[k]
        yn = y + dt * (gr * y + gi * x) + sq * noise_i[k]
        x, y = xn, yn
        br[k] = x
        bi[k] = y
    return br, bi


def _mu_values(schedule, t: np.ndarray) -> np.ndarray:
    ts = np.array([p[0] for p in schedule])
    mus = np.array([p[1] for p in schedule])
    return np.interp(t, ts, mus)


def _mu_crossings(schedule, duration_s: float) -> tuple[float, ...]:
    ts = np.array([p[0] for p in schedule])
    mus = np.array([p[1] for p in schedule])
    out = []
    for a in range(len(ts) - 1):
        if mus[a] < 0 <= mus[a + 1]:
            tc = ts[a] + (0.0 - mus[a]) * (ts[a + 1] - ts[a]) / (mus[a + 1] - mus[a])
            if 0 <= tc <= duration_s:
                out.append(float(tc))
    return tuple(out)


def _pink_noise(rng: np.random.Generator, n: int, fs: float, rms: float) -> np.ndarray:
    """Band-limited 1/f-shaped Gaussian noise, flattened below NOISE_F_MIN_HZ."""
    if rms == 0:
        return np.zeros(n)
    white = rng.standard_normal(n)
    spec = np.fft.rfft(white)
    f = np.fft.rfftfreq(n, d=1.0 / fs)
    shape = 1.0 / np.sqrt(np.maximum(f, NOISE_F_MIN_HZ))
    spec *= shape
    spec[0] = 0.0
    x = np.fft.irfft(spec, n)
    return x * (rms / x.std())


def generate_run(config: SynthConfig) -> tuple[TimeSeries, RunMetadata, GroundTruth]:
    """One surrogate run; deterministic given the config seed."""
    fs = config.sample_rate
    n = int(round(config.duration_s * fs))
    dt = 1.0 / fs
    t = np.arange(n) * dt
    mu = _mu_values(config.mu_schedule, t)
    if dt * max(1.0, np.abs(mu).max()) > 0.05:
        raise RuntimeError("unstable integration: time step too large for the mu schedule")
    rng = np.random.default_rng(config.seed)
    br, bi = _integrate_hopf(mu, rng.standard_normal(n), rng.standard_normal(n),
                             dt, BETA, SIGMA)
    if not (np.isfinite(br[-1]) and np.isfinite(bi[-1])):
        raise RuntimeError("unstable integration: state diverged")
    amp = AMP_FRACTION[config.target_kind] * config.p_cc
    phase = 2 * np.pi * config.f0_hz * t
    pressure = amp * (br * np.cos(phase) - bi * np.sin(phase))
    clean_env = 2.0 * amp * np.hypot(br, bi)  # peak-to-peak of the mode, bar

    n_bursts = rng.poisson(config.burst_rate * config.duration_s)
    for _ in range(n_bursts):
        tc = rng.uniform(0.0, config.duration_s)
        phi = rng.uniform(0.0, 2 * np.pi)
        gauss = np.exp(-0.5 * ((t - tc) / BURST_WIDTH_S) ** 2)
        a_burst = BURST_AMP_FRACTION * config.p_cc
        pressure += a_burst * gauss * np.cos(phase + phi)
        clean_env += 2.0 * a_burst * gauss

    pressure += _pink_noise(rng, n, fs, rms=config.noise_level / 100.0 * config.p_cc)

    # ground truth from the noiseless mode envelope, at 1 kHz
    step = max(1, int(round(fs / 1000.0)))
    env_pct = clean_env[::step] / config.p_cc * 100.0
    truth_intervals = detect_intervals(TimeSeries(env_pct, sample_rate=fs / step))
    truth = GroundTruth(
        intervals=truth_intervals,
        mu_crossings=_mu_crossings(config.mu_schedule, config.duration_s),
    )
    series = TimeSeries(pressure, sample_rate=fs, channel_id=f"synth-{config.seed}")
    meta = RunMetadata(
        run_id=f"synth-{config.seed}",
        mean_chamber_pressure=config.p_cc,
        notes=f"target_kind={config.target_kind}",
    )
    return series, meta, truth


MU_LOW = -4.0
MU_HIGH = 4.0


def _campaign_schedule(rng: np.random.Generator, duration_s: float,
                       n_events: int) -> tuple:
    """Episodic mu schedule: stable baseline, ramp up with a randomized onset,
    hold long enough for the limit cycle to saturate, fast ramp down."""
    points = [(0.0, MU_LOW)]
    last_start = duration_s - 3.4
    if n_events > 1 and (last_start - 1.2) / (n_events - 1) < 2.6:
        raise ValueError("duration too short for the requested number of episodes")
    slots = np.linspace(1.2, last_start, n_events) if n_events > 1 else np.array([1.2])
    for e in range(n_events):
        t0 = float(slots[e] + rng.uniform(-0.1, 0.1))
        rise = float(rng.uniform(0.5, 0.7))
        hold = float(rng.uniform(1.1, 1.3))
        points.extend([
            (t0, MU_LOW),
            (t0 + rise, MU_HIGH),
            (t0 + rise + hold, MU_HIGH),
            (t0 + rise + hold + 0.15, MU_LOW),
        ])
    return tuple(points)


def generate_campaign(
    out_dir,
    n_runs: int = 10,
    seed: int = 0,
    duration_s: float = 8.0,
    n_train: int = 6,
    events_per_run: int = 2,
    template: SynthConfig | None = None,
) -> list[dict]:
    """Generate a campaign of runs with a train/test manifest.

    Kinds alternate type1/type2 so both appear in both splits; every run
    carries ``events_per_run`` ramp-driven instability episodes.
    """
    if n_runs < 2:
        raise ValueError("n_runs must be >= 2")
    if not 0 < n_train < n_runs:
        raise ValueError("n_train must split the campaign into two non-empty sets")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    root = np.random.SeedSequence(seed)
    children = root.spawn(n_runs)
    manifest = []
    for k in range(n_runs):
        run_seed = int(children[k].generate_state(1)[0])
        rng = np.random.default_rng(children[k].spawn(1)[0])
        kind = "type1" if k % 2 == 0 else "type2"
        base = template if template is not None else SynthConfig(seed=0, duration_s=duration_s)
        config = SynthConfig(
            seed=run_seed,
            duration_s=duration_s,
            sample_rate=base.sample_rate,
            p_cc=base.p_cc,
            f0_hz=base.f0_hz,
            noise_level=base.noise_level,
            mu_schedule=_campaign_schedule(rng, duration_s, events_per_run),
            burst_rate=0.0,
            target_kind=kind,
        )
        series, meta, truth = generate_run(config)
        run_id = f"run{k + 1:02d}"
        meta = RunMetadata(run_id=run_id, mean_chamber_pressure=meta.mean_chamber_pressure,
                           notes=meta.notes)
        path = out_dir / f"{run_id}.bin"
        save_run(path, TimeSeries(series.samples, series.sample_rate, channel_id=run_id), meta)
        manifest.append(
            {
                "run_id": run_id,
                "path": path.name,
                "split": "train" if k < n_train else "test",
                "kind": kind,
                "seed": run_seed,
                "p_cc": config.p_cc,
                "intervals": [
                    {"onset_s": iv.onset_s, "offset_s": iv.offset_s, "kind": iv.kind}
                    for iv in truth.intervals
                ],
                "mu_crossings": list(truth.mu_crossings),
            }
        )
    write_manifest(out_dir / "manifest.jsonl", manifest)
    return manifest


def write_manifest(path, manifest) -> None:
    lines = [json.dumps(rec) for rec in manifest]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))


def read_manifest(path) -> list[dict]:
    out = []
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if line:
            out.append(json.loads(line))
    return out
