import numpy as np
import pytest

from combustion_ews.signal import (
    EmptyRunError,
    FilterSpec,
    MalformedHeaderError,
    NonFiniteSampleError,
    RunMetadata,
    TimeSeries,
    high_pass,
    load_run,
    peak_to_peak_envelope,
    save_run,
)


def _write_csv(path, body):
    path.write_text(body)
    return path


class TestLoadRun:
    def test_csv_basic(self, tmp_path):
        body = "# sample_rate=100000\n# p_cc=80\n# run_id=r1\n" + "\n".join(
            str(v) for v in range(10)
        ) + "\n"
        series, meta = load_run(_write_csv(tmp_path / "r.csv", body))
        assert len(series.samples) == 10
        assert series.sample_rate == 100_000
        assert meta.run_id == "r1"
        assert meta.mean_chamber_pressure == 80

    def test_nan_sample_rejected(self, tmp_path):
        body = "# sample_rate=1000\n# p_cc=80\n0.0\n1.0\nnan\n3.0\n"
        with pytest.raises(NonFiniteSampleError, match="non-finite sample at index 2"):
            load_run(_write_csv(tmp_path / "r.csv", body))

    def test_missing_header(self, tmp_path):
        with pytest.raises(MalformedHeaderError):
            load_run(_write_csv(tmp_path / "r.csv", "# p_cc=80\n1.0\n"))

    def test_empty_file(self, tmp_path):
        (tmp_path / "r.csv").write_text("")
        with pytest.raises(EmptyRunError):
            load_run(tmp_path / "r.csv")

    def test_binary_roundtrip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(0)
        samples = rng.standard_normal(2_000_000)
        series = TimeSeries(samples, sample_rate=100_000.0, channel_id="big")
        meta = RunMetadata(run_id="big", mean_chamber_pressure=80.0)
        save_run(tmp_path / "r.bin", series, meta)
        back, meta2 = load_run(tmp_path / "r.bin")
        assert len(back.samples) == 2_000_000
        assert np.array_equal(back.samples, samples)
        assert back.sample_rate == series.sample_rate
        assert meta2.mean_chamber_pressure == meta.mean_chamber_pressure

    def test_csv_roundtrip(self, tmp_path):
        series = TimeSeries(np.array([1.5, -2.25, 3.0]), sample_rate=1000.0)
        meta = RunMetadata(run_id="c", mean_chamber_pressure=40.0)
        save_run(tmp_path / "r.csv", series, meta, format="csv")
        back, meta2 = load_run(tmp_path / "r.csv")
        assert np.array_equal(back.samples, series.samples)
        assert meta2.run_id == "c"

    def test_truncated_binary(self, tmp_path):
        series = TimeSeries(np.arange(100, dtype=float), sample_rate=1000.0)
        save_run(tmp_path / "r.bin", series, RunMetadata("t", 80.0))
        raw = (tmp_path / "r.bin").read_bytes()
        (tmp_path / "r.bin").write_bytes(raw[:-16])
        with pytest.raises(Exception):
            load_run(tmp_path / "r.bin")


class TestFilterSpec:
    def test_odd_order_rejected(self):
        with pytest.raises(ValueError, match="even"):
            FilterSpec(1000.0, order=3)

    def test_cutoff_above_nyquist(self):
        series = TimeSeries(np.zeros(100), sample_rate=1000.0)
        with pytest.raises(ValueError, match="Nyquist"):
            high_pass(series, FilterSpec(600.0))


class TestHighPass:
    FS = 100_000.0

    def test_dc_rejected(self):
        series = TimeSeries(np.full(50_000, 7.0), sample_rate=self.FS)
        out = high_pass(series, FilterSpec(1000.0))
        settle = out.samples[5000:-5000]
        assert np.abs(settle).max() < 1e-6 * 7.0

    def test_minus_3db_at_cutoff(self):
        t = np.arange(200_000) / self.FS
        x = np.sin(2 * np.pi * 1000.0 * t)
        out = high_pass(TimeSeries(x, self.FS), FilterSpec(1000.0))
        core = slice(20_000, -20_000)
        ratio = np.sqrt(np.mean(out.samples[core] ** 2) / np.mean(x[core] ** 2))
        assert ratio == pytest.approx(1 / np.sqrt(2), rel=0.05)

    def test_passband_flat(self):
        t = np.arange(200_000) / self.FS
        x = np.sin(2 * np.pi * 10_000.0 * t)
        out = high_pass(TimeSeries(x, self.FS), FilterSpec(1000.0))
        core = slice(20_000, -20_000)
        ratio = np.sqrt(np.mean(out.samples[core] ** 2) / np.mean(x[core] ** 2))
        assert ratio == pytest.approx(1.0, rel=0.02)

    def test_linearity(self):
        rng = np.random.default_rng(3)
        x = rng.standard_normal(20_000)
        y = rng.standard_normal(20_000)
        spec = FilterSpec(1000.0)
        fa = high_pass(TimeSeries(2.5 * x - 0.5 * y, self.FS), spec).samples
        fb = (2.5 * high_pass(TimeSeries(x, self.FS), spec).samples
              - 0.5 * high_pass(TimeSeries(y, self.FS), spec).samples)
        assert np.allclose(fa, fb, rtol=1e-9, atol=1e-9 * np.abs(fa).max())


class TestEnvelope:
    def test_sine_peak_to_peak(self):
        fs = 100_000.0
        t = np.arange(100_000) / fs
        a, p = 2.0, 80.0
        # 12.5 kHz at 100 kHz puts samples exactly on the crests, so the
        # sampled peak-to-peak equals the analog 2a
        x = a * np.sin(2 * np.pi * 12_500.0 * t)
        env = peak_to_peak_envelope(TimeSeries(x, fs), window_s=0.01, p_cc=p)
        assert np.median(env.samples) == pytest.approx(200 * a / p, rel=1e-3)

    def test_constant_zero(self):
        env = peak_to_peak_envelope(TimeSeries(np.ones(1000), 1000.0), 0.1, 80.0)
        assert np.all(env.samples == 0.0)

    def test_square_wave(self):
        x = np.tile(np.r_[np.ones(50), -np.ones(50)], 20)
        env = peak_to_peak_envelope(TimeSeries(x, 1000.0), 0.2, 80.0)
        assert env.samples[-1] == pytest.approx(2.5)

    def test_scale_covariance(self):
        rng = np.random.default_rng(5)
        x = rng.standard_normal(5000)
        e1 = peak_to_peak_envelope(TimeSeries(x, 1000.0), 0.05, 80.0).samples
        e2 = peak_to_peak_envelope(TimeSeries(3.0 * x, 1000.0), 0.05, 80.0).samples
        assert np.allclose(e2, 3.0 * e1, rtol=1e-12)

    def test_window_longer_than_series(self):
        with pytest.raises(ValueError, match="longer than series"):
            peak_to_peak_envelope(TimeSeries(np.zeros(10), 1000.0), 1.0, 80.0)
