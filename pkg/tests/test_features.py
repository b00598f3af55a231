import numpy as np
import pytest

from combustion_ews.embedding import EmbeddingConfig
from combustion_ews.features import (
    FEATURE_NAMES,
    FeatureScaler,
    FeatureSeries,
    StreamingFeatureAssembler,
    apply_scaler,
    assemble_features,
    fit_scaler,
    read_feature_csv,
    sweep_measures,
    trend_slope,
    write_feature_csv,
)
from combustion_ews.rqa import RecurrenceConfig, RqaMeasures
from combustion_ews.signal import TimeSeries

EC = EmbeddingConfig(2, 5)
RC = RecurrenceConfig(epsilon=1.0, decimation=4)


def _sine_series(duration_s=1.0, fs=10_000.0, freq=500.0, noise=0.0, seed=0):
    t = np.arange(int(duration_s * fs)) / fs
    x = np.sin(2 * np.pi * freq * t)
    if noise:
        x = x + noise * np.random.default_rng(seed).standard_normal(len(t))
    return TimeSeries(x, fs)


class TestSweep:
    def test_window_count_and_times(self):
        out = sweep_measures(_sine_series(1.0), EC, RC, window_s=0.2, stride_s=0.01)
        assert len(out) == 81
        ts = [t for t, _ in out]
        assert ts[0] == pytest.approx(0.2)
        assert ts[-1] == pytest.approx(1.0)

    def test_stationary_sine_constant_det(self):
        out = sweep_measures(_sine_series(1.0, noise=0.001), EC, RC, 0.2, 0.01)
        dets = [m.det for _, m in out if m is not None]
        assert max(dets) - min(dets) < 1e-3

    def test_short_series_empty(self):
        out = sweep_measures(_sine_series(0.1), EC, RC, 0.2, 0.01)
        assert out == []

    def test_degenerate_window_flagged_none(self):
        fs = 1000.0
        x = np.r_[np.zeros(400), np.sin(2 * np.pi * 100 * np.arange(600) / fs)]
        out = sweep_measures(TimeSeries(x, fs), EmbeddingConfig(1, 3),
                             RecurrenceConfig(epsilon=1.0, decimation=1),
                             window_s=0.2, stride_s=0.1)
        assert out[0][1] is None
        assert out[-1][1] is not None


class TestTrendSlope:
    def test_exact_line(self):
        pts = [(t, 2.0 * t) for t in np.linspace(4.9, 5.0, 11)]
        assert trend_slope(pts, 0.1) == pytest.approx(2.0, rel=1e-9)

    def test_constant_zero(self):
        pts = [(t, 3.3) for t in np.linspace(0.0, 0.1, 11)]
        assert trend_slope(pts, 0.1) == pytest.approx(0.0, abs=1e-12)

    def test_noisy_slope_within_band(self):
        rng = np.random.default_rng(0)
        ok = 0
        for _ in range(50):
            t = np.linspace(0.0, 0.09, 10)
            pts = list(zip(t, 3.0 * t + 0.01 * rng.standard_normal(10)))
            if abs(trend_slope(pts, 0.1) - 3.0) <= 0.5:
                ok += 1
        assert ok >= 48

    def test_insufficient_history(self):
        with pytest.raises(ValueError, match="insufficient history"):
            trend_slope([(0.0, 1.0)], 0.1)

    def test_only_span_points_used(self):
        pts = [(0.0, 100.0)] + [(t, 2.0 * t) for t in np.linspace(0.9, 1.0, 11)]
        assert trend_slope(pts, 0.1) == pytest.approx(2.0, rel=1e-9)


def _measures(value=0.5):
    return RqaMeasures(value, value, value, value, value)


class TestAssemble:
    def test_warmup_drop_count(self):
        entries = [(0.2 + 0.01 * k, _measures()) for k in range(81)]
        series = assemble_features(entries, span_s=0.1)
        assert len(series) == 71

    def test_single_entry_empty(self):
        series = assemble_features([(0.2, _measures())], span_s=0.1)
        assert len(series) == 0

    def test_constant_measures_zero_slopes(self):
        entries = [(0.01 * k, _measures(0.7)) for k in range(30)]
        series = assemble_features(entries, span_s=0.1)
        assert np.allclose(series.values[:, 5:], 0.0, atol=1e-12)
        assert np.all(series.values[:, :5] == 0.7)

    def test_none_resets_history(self):
        entries = [(0.01 * k, _measures()) for k in range(15)]
        entries.append((0.15, None))
        entries.extend((0.16 + 0.01 * k, _measures()) for k in range(5))
        series = assemble_features(entries, span_s=0.1)
        # nothing after the reset has a full span of history yet
        assert np.all(series.t <= 0.15)

    def test_streaming_matches_batch(self):
        rng = np.random.default_rng(1)
        entries = [(0.01 * k, _measures(float(rng.random()))) for k in range(40)]
        batch = assemble_features(entries, span_s=0.1)
        assembler = StreamingFeatureAssembler(0.1)
        stream = [fv for fv in (assembler.push(t, m) for t, m in entries) if fv is not None]
        assert len(stream) == len(batch)
        for fv, t, row in zip(stream, batch.t, batch.values):
            assert fv.t == t
            assert np.array_equal(fv.values, row)

    def test_no_lookahead(self):
        series = _sine_series(1.0, noise=0.05)
        full = assemble_features(sweep_measures(series, EC, RC, 0.2, 0.01), 0.1)
        cut = TimeSeries(series.samples[:7000], series.sample_rate)
        part = assemble_features(sweep_measures(cut, EC, RC, 0.2, 0.01), 0.1)
        k = len(part)
        assert np.array_equal(full.values[:k], part.values)

    def test_amplitude_invariance(self):
        series = _sine_series(0.6, noise=0.05)
        a = assemble_features(sweep_measures(series, EC, RC, 0.2, 0.01), 0.1)
        scaled = TimeSeries(17.0 * series.samples, series.sample_rate)
        b = assemble_features(sweep_measures(scaled, EC, RC, 0.2, 0.01), 0.1)
        assert np.array_equal(a.values, b.values)


class TestScaler:
    def test_two_point_fit(self):
        scaler = FeatureScaler().fit(np.array([[0.0] * 10, [2.0] * 10]))
        assert np.all(scaler.means_ == 1.0)
        assert np.all(scaler.stds_ == 1.0)
        assert np.all(scaler.transform(np.full((1, 10), 2.0)) == 1.0)

    def test_standardizes_training_data(self):
        rng = np.random.default_rng(2)
        x = rng.standard_normal((200, 10)) * 3 + 5
        scaler = FeatureScaler().fit(x)
        z = scaler.transform(x)
        assert np.allclose(z.mean(axis=0), 0.0, atol=1e-9)
        assert np.allclose(z.var(axis=0), 1.0, atol=1e-9)

    def test_zero_variance_names_index(self):
        x = np.random.default_rng(3).standard_normal((50, 10))
        x[:, 4] = 1.0
        with pytest.raises(ValueError, match="zero-variance feature at index 4"):
            FeatureScaler().fit(x)

    def test_no_refit_on_apply(self):
        rng = np.random.default_rng(4)
        train = FeatureSeries("a", np.arange(20) * 0.01, rng.standard_normal((20, 10)), 0.01)
        test = FeatureSeries("b", np.arange(30) * 0.01, rng.standard_normal((30, 10)), 0.01)
        scaler = fit_scaler([train])
        means = scaler.means_.copy()
        out = apply_scaler(scaler, test)
        assert np.all(np.isfinite(out.values))
        assert np.array_equal(scaler.means_, means)

    def test_sklearn_params_roundtrip(self):
        scaler = FeatureScaler()
        assert scaler.get_params() == {}


class TestCsv:
    def test_roundtrip(self, tmp_path):
        rng = np.random.default_rng(5)
        series = FeatureSeries("r7", 0.2 + np.arange(12) * 0.01,
                               rng.standard_normal((12, 10)), 0.01)
        write_feature_csv(series, tmp_path / "r7.features.csv")
        back = read_feature_csv(tmp_path / "r7.features.csv")
        assert back.run_id == "r7"
        assert back.stride_s == 0.01
        assert np.array_equal(back.t, series.t)
        assert np.array_equal(back.values, series.values)

    def test_header_order(self, tmp_path):
        series = FeatureSeries("x", [0.2], np.zeros((1, 10)), 0.01)
        write_feature_csv(series, tmp_path / "x.csv")
        lines = (tmp_path / "x.csv").read_text().splitlines()
        header = [l for l in lines if not l.startswith("#")][0]
        assert header == "t," + ",".join(FEATURE_NAMES)

    def test_extra_column(self, tmp_path):
        series = FeatureSeries("x", [0.2, 0.21], np.zeros((2, 10)), 0.01)
        write_feature_csv(series, tmp_path / "x.csv", extra={"hurst": [0.5, 0.4]})
        lines = (tmp_path / "x.csv").read_text().splitlines()
        header = [l for l in lines if not l.startswith("#")][0]
        assert header.endswith(",hurst")
