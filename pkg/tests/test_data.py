import numpy as np
import pytest

from fedsim.data import (LAG_ATTENUATION, LAG_FEATURE_INDEX, CsvSchema,
                         DriftKind, DriftSpec,
                         TraceSeries, apply_drift, generate_trace, ingest_csv,
                         normalize, windowize)


def small_trace(length=40, fog_id=0, seed=1):
    return generate_trace(fog_id, length, seed)


class TestGenerateTrace:
    def test_determinism(self):
        a = generate_trace(2, 100, seed=5)
        b = generate_trace(2, 100, seed=5)
        assert np.array_equal(a.target, b.target)
        assert np.array_equal(a.features, b.features)

    def test_degenerate_generator_is_constant(self):
        t = generate_trace(3, 50, seed=0, amplitude=0.0, innovation_std=0.0)
        expected = 1.0 + 0.3 * 3
        np.testing.assert_allclose(t.target, expected, atol=1e-12)

    def test_sample_mean_near_base(self):
        # law-of-large-numbers check; the tolerance was verified against an
        # independent statistics pass over the emitted series
        t = generate_trace(1, 10_000, seed=7)
        assert abs(t.target.mean() - 1.3) < 0.02

    def test_too_short_rejected(self):
        with pytest.raises(ValueError, match="too short"):
            generate_trace(0, 1, seed=0)

    def test_lag_feature_is_shifted_target(self):
        t = generate_trace(0, 30, seed=2)
        np.testing.assert_array_equal(t.features[1:, LAG_FEATURE_INDEX],
                                      t.target[:-1])
        assert t.features[0, LAG_FEATURE_INDEX] == t.target[0]


class TestDriftSpec:
    def test_temporary_requires_end(self):
        with pytest.raises(ValueError, match="end_round"):
            DriftSpec(kind=DriftKind.TEMPORARY, target_fogs=frozenset([0]),
                      start_round=5)

    def test_step_rejects_end(self):
        with pytest.raises(ValueError, match="end_round"):
            DriftSpec(kind=DriftKind.STEP, target_fogs=frozenset([0]),
                      start_round=0, end_round=5)

    def test_temporary_ordering(self):
        with pytest.raises(ValueError):
            DriftSpec(kind=DriftKind.TEMPORARY, target_fogs=frozenset([0]),
                      start_round=5, end_round=5)


class TestApplyDrift:
    def rounds(self, series, per_round=10):
        return np.arange(len(series)) // per_round

    def test_untargeted_fog_unchanged(self):
        t = small_trace(fog_id=1)
        spec = DriftSpec(kind=DriftKind.STEP, target_fogs=frozenset([0]),
                         start_round=0)
        assert apply_drift(t, spec, self.rounds(t)) is t

    def test_step_adds_half_everywhere(self):
        t = small_trace()
        spec = DriftSpec(kind=DriftKind.STEP, target_fogs=frozenset([0]),
                         start_round=0)
        out = apply_drift(t, spec, self.rounds(t))
        np.testing.assert_allclose(out.target, t.target + 0.5, atol=1e-15)

    def test_temporary_three_stages(self):
        t = small_trace(length=60)
        spec = DriftSpec(kind=DriftKind.TEMPORARY, target_fogs=frozenset([0]),
                         start_round=2, end_round=4, magnitude=0.5)
        rounds = self.rounds(t, per_round=10)
        out = apply_drift(t, spec, rounds)
        stage1 = rounds < 2
        stage2 = (rounds >= 2) & (rounds < 4)
        stage3 = rounds >= 4
        np.testing.assert_array_equal(out.target[stage1], t.target[stage1])
        np.testing.assert_allclose(out.target[stage2], t.target[stage2] + 0.5)
        np.testing.assert_array_equal(out.target[stage3], t.target[stage3])

    def test_lag_feature_recomputed(self):
        t = small_trace()
        spec = DriftSpec(kind=DriftKind.STEP, target_fogs=frozenset([0]),
                         start_round=1)
        out = apply_drift(t, spec, self.rounds(t))
        np.testing.assert_array_equal(out.features[1:, LAG_FEATURE_INDEX],
                                      out.target[:-1])

    def test_subtracting_magnitude_restores_original(self):
        t = small_trace(length=60)
        # 0.5 is exactly representable, so the round trip is bit-exact
        spec = DriftSpec(kind=DriftKind.STEP, target_fogs=frozenset([0]),
                         start_round=3, magnitude=0.5)
        rounds = self.rounds(t, per_round=10)
        out = apply_drift(t, spec, rounds)
        restored = out.target.copy()
        restored[rounds >= 3] -= 0.5
        np.testing.assert_array_equal(restored, t.target)

    def test_double_application_doubles_offset(self):
        t = small_trace()
        spec = DriftSpec(kind=DriftKind.STEP, target_fogs=frozenset([0]),
                         start_round=0)
        rounds = self.rounds(t)
        twice = apply_drift(apply_drift(t, spec, rounds), spec, rounds)
        np.testing.assert_allclose(twice.target, t.target + 1.0, atol=1e-15)


class TestIngestCsv:
    SCHEMA = CsvSchema(timestamp_column="ts", target_column="throughput",
                       feature_columns=("hour", "loc"), fog_column="fog")

    def write(self, tmp_path, rows):
        path = tmp_path / "traces.csv"
        path.write_text("ts,throughput,hour,loc,fog\n" + "\n".join(rows) + "\n")
        return path

    def test_two_fog_fixture(self, tmp_path):
        path = self.write(tmp_path, [
            "0,1.0,0,0.1,0", "1,1.1,1,0.1,0", "2,1.2,2,0.1,0",
            "0,2.0,0,0.2,1", "1,2.1,1,0.2,1", "2,2.2,2,0.2,1",
        ])
        traces, skipped = ingest_csv(path, self.SCHEMA)
        assert skipped == 0
        assert len(traces) == 2
        assert all(len(t) == 3 for t in traces)
        assert traces[0].fog_id == 0 and traces[1].fog_id == 1

    def test_rows_sorted_by_timestamp(self, tmp_path):
        path = self.write(tmp_path, [
            "2,1.2,2,0.1,0", "0,1.0,0,0.1,0", "1,1.1,1,0.1,0"])
        traces, _ = ingest_csv(path, self.SCHEMA)
        np.testing.assert_array_equal(traces[0].timestamps, [0, 1, 2])
        np.testing.assert_allclose(traces[0].target, [1.0, 1.1, 1.2])

    def test_missing_column_named(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("ts,hour,loc,fog\n0,0,0.1,0\n")
        with pytest.raises(ValueError, match="throughput"):
            ingest_csv(path, self.SCHEMA)

    def test_malformed_row_skipped_and_counted(self, tmp_path):
        path = self.write(tmp_path, [
            "0,1.0,0,0.1,0", "1,not_a_number,1,0.1,0", "2,1.2,2,0.1,0"])
        traces, skipped = ingest_csv(path, self.SCHEMA)
        assert skipped == 1
        assert len(traces[0]) == 2

    def test_missing_file(self):
        with pytest.raises(FileNotFoundError):
            ingest_csv("/nonexistent/file.csv", self.SCHEMA)

    def test_schema_rejects_duplicate_columns(self):
        with pytest.raises(ValueError, match="distinct"):
            CsvSchema(timestamp_column="ts", target_column="ts",
                      feature_columns=("a",), fog_column="fog")


class TestNormalize:
    def test_constant_window_rejected(self):
        t = generate_trace(0, 50, seed=0, amplitude=0.0, innovation_std=0.0)
        with pytest.raises(ValueError, match="standard deviation"):
            normalize(t, (0, 50))

    def test_already_standardized_is_noop(self):
        rng = np.random.default_rng(3)
        raw = rng.normal(size=200)
        raw = (raw - raw.mean()) / raw.std()
        t = TraceSeries(fog_id=0, timestamps=np.arange(200),
                        features=np.zeros((200, 4)), target=raw)
        out, mean, std = normalize(t, (0, 200))
        np.testing.assert_allclose(out.target, raw, atol=1e-9)
        assert abs(mean) < 1e-12 and abs(std - 1.0) < 1e-12

    def test_drift_offset_scales_by_std(self):
        t = small_trace(length=100)
        spec = DriftSpec(kind=DriftKind.STEP, target_fogs=frozenset([0]),
                         start_round=1, magnitude=0.5)
        rounds = np.arange(100) // 50
        drifted = apply_drift(t, spec, rounds)
        # stats from the pre-drift half only
        norm, mean, std = normalize(drifted, (0, 50))
        norm_clean, _, _ = normalize(t, (0, 50))
        offset = norm.target[50:] - norm_clean.target[50:]
        np.testing.assert_allclose(offset, 0.5 / std, atol=1e-9)

    def test_lag_feature_z_scored_then_attenuated(self):
        t = small_trace(length=100)
        out, mean, std = normalize(t, (0, 100))
        lag_raw = t.features[:, LAG_FEATURE_INDEX]
        expected = (lag_raw - mean) / std * LAG_ATTENUATION
        np.testing.assert_allclose(out.features[:, LAG_FEATURE_INDEX],
                                   expected, atol=1e-12)
        # the other feature columns are untouched
        np.testing.assert_array_equal(out.features[:, :LAG_FEATURE_INDEX],
                                      t.features[:, :LAG_FEATURE_INDEX])


class TestWindowize:
    def test_minimum_length_one_example(self):
        t = small_trace(length=11)
        batch = windowize(t, 10)
        assert len(batch) == 1

    def test_count(self):
        t = small_trace(length=15)
        assert len(windowize(t, 10)) == 5

    def test_too_short(self):
        t = small_trace(length=10)
        with pytest.raises(ValueError, match="too short"):
            windowize(t, 10)

    def test_windows_overlap(self):
        t = small_trace(length=20)
        batch = windowize(t, 10)
        np.testing.assert_array_equal(batch.inputs[0][1:], batch.inputs[1][:-1])

    def test_targets_are_one_step_ahead(self):
        t = small_trace(length=14)
        batch = windowize(t, 10, horizon=1)
        np.testing.assert_array_equal(batch.targets, t.target[10:14])

    def test_normalize_preserves_example_count(self):
        t = small_trace(length=60)
        norm, _, _ = normalize(t, (0, 60))
        assert len(windowize(norm, 10)) == len(windowize(t, 10))
