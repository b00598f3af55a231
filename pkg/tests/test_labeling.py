import numpy as np
import pytest

from combustion_ews.features import FeatureSeries
from combustion_ews.labeling import (
    LABEL_EXCLUDED,
    LABEL_FAR,
    LABEL_TRANSIENT,
    InstabilityInterval,
    detect_intervals,
    label_features,
    read_intervals_jsonl,
    read_label_csv,
    write_intervals_jsonl,
    write_label_csv,
)
from combustion_ews.signal import TimeSeries

FS = 1000.0  # envelope rate used throughout


def _env(values):
    return TimeSeries(np.asarray(values, dtype=float), FS)


def _step(t_on, t_off, level, duration=10.0):
    n = int(duration * FS)
    env = np.full(n, 1.0)
    env[int(t_on * FS):int(t_off * FS)] = level
    return _env(env)


class TestDetectIntervals:
    def test_single_onset(self):
        env = _step(3.0, 10.0, 10.0)
        ivs = detect_intervals(env)
        assert len(ivs) == 1
        assert ivs[0].onset_s == pytest.approx(3.0)
        assert ivs[0].kind == "type1"

    def test_short_dip_does_not_split(self):
        n = int(10.0 * FS)
        env = np.full(n, 1.0)
        env[2000:6000] = 10.0
        env[3900:4100] = 1.0  # 200 ms dip < 500 ms hold
        ivs = detect_intervals(_env(env))
        assert len(ivs) == 1
        assert ivs[0].onset_s == pytest.approx(2.0)
        assert ivs[0].offset_s == pytest.approx(6.0)

    def test_long_gap_splits(self):
        n = int(10.0 * FS)
        env = np.full(n, 1.0)
        env[2000:4000] = 10.0
        env[5000:7000] = 10.0  # 1 s gap >= hold
        ivs = detect_intervals(_env(env))
        assert len(ivs) == 2
        assert ivs[0].offset_s == pytest.approx(4.0)
        assert ivs[1].onset_s == pytest.approx(5.0)

    def test_type2_from_peak(self):
        env = _step(3.0, 5.0, 30.0)
        ivs = detect_intervals(env)
        assert ivs[0].kind == "type2"

    def test_offset_is_drop_time_not_drop_plus_hold(self):
        env = _step(2.0, 4.0, 10.0)
        ivs = detect_intervals(env)
        assert ivs[0].offset_s == pytest.approx(4.0)

    def test_no_crossings_empty(self):
        assert detect_intervals(_env(np.full(1000, 1.0))) == ()

    def test_interval_open_at_end(self):
        env = _step(8.0, 10.0, 10.0)
        ivs = detect_intervals(env)
        assert ivs[0].offset_s == pytest.approx(10.0 - 1 / FS)

    def test_raising_threshold_never_earlier(self):
        rng = np.random.default_rng(0)
        env = _env(np.abs(np.cumsum(rng.standard_normal(5000))) * 0.05 + 1.0)
        a = detect_intervals(env, thr1=3.0)
        b = detect_intervals(env, thr1=5.0)
        if a and b:
            assert b[0].onset_s >= a[0].onset_s

    def test_idempotent(self):
        env = _step(3.0, 6.0, 10.0)
        assert detect_intervals(env) == detect_intervals(env)


def _features(n=1000, t0=0.2, stride=0.01):
    t = t0 + np.arange(n) * stride
    return FeatureSeries("r", t, np.zeros((n, 10)), stride)


class TestLabelFeatures:
    def test_no_intervals_all_far(self):
        run = label_features(_features(), [])
        assert np.all(run.labels == LABEL_FAR)

    def test_transient_count_20(self):
        fs = _features(n=1100, t0=0.0, stride=0.01)
        run = label_features(fs, [InstabilityInterval(10.0, 10.5, "type1")])
        transient_ts = fs.t[run.labels == LABEL_TRANSIENT]
        assert len(transient_ts) == 20
        assert transient_ts[0] == pytest.approx(9.80)
        assert transient_ts[-1] == pytest.approx(9.99)

    def test_inside_interval_excluded(self):
        fs = _features(n=200, t0=0.0, stride=0.01)
        run = label_features(fs, [InstabilityInterval(0.5, 1.0, "type1")])
        inside = (fs.t >= 0.5) & (fs.t <= 1.0)
        assert np.all(run.labels[inside] == LABEL_EXCLUDED)

    def test_boundary_inclusive_transient(self):
        fs = _features(n=200, t0=0.0, stride=0.01)
        run = label_features(fs, [InstabilityInterval(1.0, 1.5, "type1")])
        k = np.argmin(np.abs(fs.t - 0.8))
        assert run.labels[k] == LABEL_TRANSIENT

    def test_partition_complete(self):
        fs = _features(n=500, t0=0.0, stride=0.01)
        run = label_features(fs, [InstabilityInterval(1.0, 2.0, "type2")])
        assert np.all(np.isin(run.labels, [LABEL_FAR, LABEL_TRANSIENT, LABEL_EXCLUDED]))
        counts = run.counts
        assert sum(counts.values()) == 500

    def test_zero_lead_no_transient(self):
        fs = _features(n=500, t0=0.0, stride=0.01)
        run = label_features(fs, [InstabilityInterval(1.0, 2.0, "type1")], lead_s=0.0)
        assert np.sum(run.labels == LABEL_TRANSIENT) == 0


class TestPersistence:
    def test_intervals_jsonl_roundtrip(self, tmp_path):
        ivs = (InstabilityInterval(1.0, 2.0, "type1"), InstabilityInterval(3.0, 4.5, "type2"))
        write_intervals_jsonl(ivs, "r1", tmp_path / "iv.jsonl")
        back = read_intervals_jsonl(tmp_path / "iv.jsonl")
        assert back["r1"] == ivs

    def test_label_csv_roundtrip(self, tmp_path):
        fs = _features(n=30, t0=0.2, stride=0.01)
        run = label_features(fs, [InstabilityInterval(0.3, 0.4, "type1")])
        write_label_csv(run, tmp_path / "l.csv")
        t, labels = read_label_csv(tmp_path / "l.csv")
        assert np.array_equal(t, fs.t)
        assert np.array_equal(labels, run.labels)

    def test_bad_kind_rejected(self):
        with pytest.raises(ValueError, match="unknown interval kind"):
            InstabilityInterval(1.0, 2.0, "type3")

    def test_backwards_interval_rejected(self):
        with pytest.raises(ValueError):
            InstabilityInterval(2.0, 1.0, "type1")
