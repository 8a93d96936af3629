import numpy as np
import pytest

from driftmem.data import (
    DataError,
    FeatureScaler,
    PeriodDataset,
    StreamConfig,
    apply_scaler,
    fit_scaler,
    generate_synthetic_stream,
    load_csv_stream,
    make_windows,
)


def write_csv(path, header, rows):
    lines = [",".join(header)] + [",".join(str(v) for v in row) for row in rows]
    path.write_text("\n".join(lines) + "\n")
    return str(path)


class TestLoadCsv:
    def test_even_partition(self, tmp_path):
        path = write_csv(tmp_path / "d.csv", ["a", "b", "y"], [[i, i + 1, 2 * i] for i in range(6)])
        periods = load_csv_stream(path, 3, ["y"])
        assert [p.size for p in periods] == [3, 3]
        assert [p.index for p in periods] == [1, 2]

    def test_short_final_period_kept(self, tmp_path):
        path = write_csv(tmp_path / "d.csv", ["a", "y"], [[i, i] for i in range(7)])
        periods = load_csv_stream(path, 3, ["y"])
        assert [p.size for p in periods] == [3, 3, 1]

    def test_row_order_and_total_count_preserved(self, tmp_path):
        rng = np.random.default_rng(0)
        rows = rng.normal(size=(23, 3)).tolist()
        path = write_csv(tmp_path / "d.csv", ["a", "b", "y"], rows)
        periods = load_csv_stream(path, 5, ["y"])
        assert sum(p.size for p in periods) == 23
        flat = np.concatenate([p.x for p in periods])
        assert np.allclose(flat, [r[:2] for r in rows])

    def test_non_numeric_cell_names_row_and_column(self, tmp_path):
        path = write_csv(tmp_path / "d.csv", ["a", "y"], [[1, 2], ["abc", 3]])
        with pytest.raises(DataError, match=r"row 3.*column 'a'"):
            load_csv_stream(path, 2, ["y"])

    def test_missing_target_column(self, tmp_path):
        path = write_csv(tmp_path / "d.csv", ["a", "y"], [[1, 2]])
        with pytest.raises(DataError, match="'z'"):
            load_csv_stream(path, 1, ["z"])

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError, match="no such file"):
            load_csv_stream(str(tmp_path / "nope.csv"), 1, ["y"])

    def test_empty_file(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("")
        with pytest.raises(DataError, match="empty"):
            load_csv_stream(str(path), 1, ["y"])

    def test_header_only_file(self, tmp_path):
        path = write_csv(tmp_path / "d.csv", ["a", "y"], [])
        with pytest.raises(DataError, match="no data rows"):
            load_csv_stream(path, 1, ["y"])

    def test_timestamp_column_ignored(self, tmp_path):
        path = write_csv(
            tmp_path / "d.csv", ["timestamp", "a", "y"], [[100 + i, i, 2 * i] for i in range(4)]
        )
        periods = load_csv_stream(path, 4, ["y"])
        assert periods[0].input_dim == 1
        assert np.allclose(periods[0].x[:, 0], range(4))

    def test_multiple_targets(self, tmp_path):
        path = write_csv(tmp_path / "d.csv", ["a", "y1", "y2"], [[1, 2, 3], [4, 5, 6]])
        periods = load_csv_stream(path, 2, ["y1", "y2"])
        assert periods[0].target_dim == 2
        assert np.allclose(periods[0].y, [[2, 3], [5, 6]])


class TestSyntheticStream:
    def test_deterministic(self):
        cfg = StreamConfig(periods=4, samples_per_period=50, input_dim=3, noise_std=0.1, seed=9)
        a = generate_synthetic_stream(cfg)
        b = generate_synthetic_stream(cfg)
        for pa, pb in zip(a, b):
            assert pa.x.tobytes() == pb.x.tobytes()
            assert pa.y.tobytes() == pb.y.tobytes()

    def test_scheduled_mean_shift(self):
        cfg = StreamConfig(
            periods=8,
            samples_per_period=4000,
            input_dim=2,
            shift_schedule=((6, (3.0, 0.0), 1.0),),
            seed=1,
        )
        stream = generate_synthetic_stream(cfg)
        jump = stream[5].x[:, 0].mean() - stream[4].x[:, 0].mean()
        stderr = np.sqrt(2.0 / 4000)  # both period means have variance 1/n
        assert abs(jump - 3.0) < 5 * stderr

    def test_zero_noise_targets_exactly_linear(self):
        cfg = StreamConfig(periods=2, samples_per_period=40, input_dim=3, target_dim=2, seed=3)
        stream = generate_synthetic_stream(cfg)
        x = np.concatenate([p.x for p in stream])
        y = np.concatenate([p.y for p in stream])
        design = np.hstack([x, np.ones((len(x), 1))])
        coef, *_ = np.linalg.lstsq(design, y, rcond=None)
        assert np.abs(design @ coef - y).max() < 1e-9

    def test_map_redrawn_at_shift(self):
        cfg = StreamConfig(
            periods=2, samples_per_period=200, input_dim=2,
            shift_schedule=((2, (0.0, 0.0), 1.0),), seed=5,
        )
        p1, p2 = generate_synthetic_stream(cfg)
        fit = lambda p: np.linalg.lstsq(
            np.hstack([p.x, np.ones((p.size, 1))]), p.y, rcond=None
        )[0]
        assert not np.allclose(fit(p1), fit(p2), atol=1e-3)


class TestMakeWindows:
    def test_tiny_example(self):
        ds = make_windows([1.0, 2.0, 3.0, 4.0, 5.0], window=3, horizon=1)
        assert ds.size == 2
        assert np.allclose(ds.x, [[1, 2, 3], [2, 3, 4]])
        assert np.allclose(ds.y, [[4], [5]])

    def test_count_formula(self):
        ds = make_windows(np.arange(10.0), window=4, horizon=2)
        assert ds.size == 5

    def test_count_formula_property(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            length = int(rng.integers(2, 60))
            window = int(rng.integers(1, length))
            horizon = int(rng.integers(1, length - window + 1))
            ds = make_windows(rng.normal(size=length), window, horizon)
            assert ds.size == length - window - horizon + 1

    def test_too_short_series(self):
        with pytest.raises(DataError, match="too short"):
            make_windows([1.0, 2.0, 3.0], window=3, horizon=1)

    def test_multichannel(self):
        series = np.stack([np.arange(6.0), np.arange(6.0) * 10], axis=1)
        ds = make_windows(series, window=2, horizon=1, target_col=1)
        assert ds.input_dim == 4
        assert np.allclose(ds.y[:, 0], [20, 30, 40, 50])


class TestScaler:
    def test_standardizes_fitting_data(self):
        rng = np.random.default_rng(4)
        ds = PeriodDataset(1, rng.normal(3.0, 2.5, size=(500, 4)), rng.normal(size=(500, 1)))
        scaler = fit_scaler([ds])
        scaled = apply_scaler(scaler, ds)
        assert np.abs(scaled.x.mean(axis=0)).max() < 1e-9
        assert np.abs(scaled.x.std(axis=0) - 1).max() < 1e-9

    def test_constant_feature_clamped(self):
        x = np.ones((10, 2))
        x[:, 1] = np.arange(10)
        ds = PeriodDataset(1, x, np.zeros((10, 1)))
        scaler = fit_scaler([ds])
        assert scaler.stds[0] == 1e-8
        assert np.allclose(apply_scaler(scaler, ds).x[:, 0], 0.0)

    def test_round_trip(self):
        rng = np.random.default_rng(5)
        ds = PeriodDataset(1, rng.normal(size=(50, 3)) * 7 + 2, rng.normal(size=(50, 1)))
        scaler = fit_scaler([ds])
        back = scaler.inverse(scaler.transform(ds.x))
        assert np.abs(back - ds.x).max() < 1e-9

    def test_empty_input_rejected(self):
        with pytest.raises(ValueError):
            fit_scaler([])


class TestTypes:
    def test_period_requires_finite(self):
        with pytest.raises(ValueError):
            PeriodDataset(1, np.array([[np.nan]]), np.array([[1.0]]))

    def test_period_index_positive(self):
        with pytest.raises(ValueError):
            PeriodDataset(0, np.ones((1, 1)), np.ones((1, 1)))

    def test_arrays_immutable(self):
        ds = PeriodDataset(1, np.ones((2, 2)), np.ones((2, 1)))
        with pytest.raises(ValueError):
            ds.x[0, 0] = 5.0

    def test_stream_config_validates_schedule(self):
        with pytest.raises(ValueError, match="offset length"):
            StreamConfig(periods=2, samples_per_period=5, input_dim=2,
                         shift_schedule=((2, (1.0,), 1.0),))
