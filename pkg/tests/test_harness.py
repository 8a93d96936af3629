import json
import math

import numpy as np
import pytest

from driftmem.data import PeriodDataset, StreamConfig, generate_synthetic_stream
from driftmem.harness import (
    MethodSpec,
    MetricsReport,
    PeriodRecord,
    build_eval_sets,
    mse,
    pca_project_2d,
    run_experiment,
    write_run_outputs,
)
from driftmem.model import LossWeights, RegressorParams, TrainConfig


def tiny_stream(periods=3, n=40, k=2, seed=0, shift=None):
    schedule = ((shift, (2.0,) * k, 1.0),) if shift else ()
    cfg = StreamConfig(
        periods=periods, samples_per_period=n, input_dim=k,
        shift_schedule=schedule, noise_std=0.05, seed=seed,
    )
    return generate_synthetic_stream(cfg)


def tiny_train(epochs=3, **kw):
    return TrainConfig(epochs=epochs, hidden_dim=8, seed=0, **kw)


class TestEvalSets:
    def test_historical_is_period_one_copy(self):
        stream = tiny_stream()
        hist, _ = build_eval_sets(stream, 0.5, seed=0)
        assert np.array_equal(hist.x, stream[0].x)
        assert np.array_equal(hist.y, stream[0].y)

    def test_full_fraction_is_permutation_of_union(self):
        stream = tiny_stream()
        _, future = build_eval_sets(stream, 1.0, seed=1)
        all_x = np.concatenate([p.x for p in stream])
        assert future.size == len(all_x)
        key = lambda arr: sorted(map(tuple, arr.tolist()))
        assert key(future.x) == key(all_x)

    def test_fraction_size_is_ceiling(self):
        stream = tiny_stream(periods=8, n=100)
        _, future = build_eval_sets(stream, 0.1, seed=2)
        assert future.size == 80
        _, future = build_eval_sets(stream, 0.0013, seed=2)
        assert future.size == math.ceil(0.0013 * 800)

    def test_deterministic(self):
        stream = tiny_stream()
        a = build_eval_sets(stream, 0.2, seed=3)[1]
        b = build_eval_sets(stream, 0.2, seed=3)[1]
        assert a.x.tobytes() == b.x.tobytes()

    def test_validation(self):
        with pytest.raises(ValueError):
            build_eval_sets([], 0.5, seed=0)
        with pytest.raises(ValueError):
            build_eval_sets(tiny_stream(), 0.0, seed=0)


class TestMse:
    def test_perfect_predictor(self):
        params = RegressorParams(np.zeros((2, 1)), np.zeros(2), np.zeros((1, 2)), np.zeros(1))
        ds = PeriodDataset(1, np.array([[1.0], [2.0]]), np.array([[0.0], [0.0]]))
        assert mse(params, ds) == 0.0

    def test_constant_zero_predictor_on_unit_targets(self):
        params = RegressorParams(np.zeros((2, 1)), np.zeros(2), np.zeros((1, 2)), np.zeros(1))
        ds = PeriodDataset(1, np.array([[5.0], [7.0]]), np.array([[1.0], [-1.0]]))
        assert mse(params, ds) == 1.0

    def test_hand_arithmetic(self):
        params = RegressorParams(np.zeros((2, 1)), np.zeros(2), np.zeros((1, 2)), np.zeros(1))
        ds = PeriodDataset(1, np.array([[0.0], [0.0]]), np.array([[3.0], [4.0]]))
        assert mse(params, ds) == pytest.approx(12.5, abs=1e-12)


class TestMethodSpec:
    def test_kinds_validated(self):
        with pytest.raises(ValueError, match="unknown method"):
            MethodSpec("dmshm_extra")

    def test_finetune_disables_memory_and_hint(self):
        w = MethodSpec("finetune").effective_weights(LossWeights(2.0, 3.0, 4.0, 5.0))
        assert (w.alpha, w.beta, w.xi, w.delta) == (0.0, 0.0, 0.0, 5.0)

    def test_no_hint_zeroes_xi_only(self):
        w = MethodSpec("dmshm_no_hint").effective_weights(LossWeights(2.0, 3.0, 4.0, 5.0))
        assert (w.alpha, w.beta, w.xi, w.delta) == (2.0, 3.0, 0.0, 5.0)

    def test_no_dms_pins_gamma(self):
        assert MethodSpec("dmshm_no_dms").gamma_override == 1.0
        assert MethodSpec("dmshm").gamma_override is None

    def test_loss_weight_override(self):
        spec = MethodSpec("dmshm", loss_weights=LossWeights(0.1, 0.2, 0.3, 0.4))
        w = spec.effective_weights(LossWeights())
        assert (w.alpha, w.beta, w.xi, w.delta) == (0.1, 0.2, 0.3, 0.4)


class TestRunExperiment:
    def test_record_per_period(self):
        stream = tiny_stream(periods=4)
        report = run_experiment(stream, MethodSpec("dmshm"), tiny_train(), 10, seed=0)
        assert len(report.records) == 4
        assert [r.period for r in report.records] == [1, 2, 3, 4]

    def test_fe_is_mean_pe_is_final(self):
        stream = tiny_stream(periods=3)
        report = run_experiment(stream, MethodSpec("dmshm"), tiny_train(), 10, seed=1)
        assert report.fe == pytest.approx(
            np.mean([r.historical_mse for r in report.records]), rel=1e-12
        )
        assert report.pe == report.records[-1].future_mse

    def test_metrics_report_validates_redundancy(self):
        rec = PeriodRecord(1, 2.0, 3.0, 0.5, 0.4, 0.1)
        with pytest.raises(ValueError, match="recomputation"):
            MetricsReport((rec,), fe=9.9, pe=3.0, method=MethodSpec("dmshm"), seed=0)

    def test_deterministic_end_to_end(self):
        stream = tiny_stream(periods=3)
        a = run_experiment(stream, MethodSpec("dmshm"), tiny_train(), 10, seed=5)
        b = run_experiment(stream, MethodSpec("dmshm"), tiny_train(), 10, seed=5)
        assert repr(a) == repr(b)  # nan-tolerant field-for-field equality

    def test_finetune_never_builds_memory(self):
        stream = tiny_stream(periods=3)
        report = run_experiment(stream, MethodSpec("finetune"), tiny_train(), 10, seed=2)
        assert all(math.isnan(r.gamma) for r in report.records)
        assert all(math.isnan(r.bandwidth) for r in report.records)

    def test_no_dms_gamma_pinned_in_records(self):
        stream = tiny_stream(periods=3)
        report = run_experiment(stream, MethodSpec("dmshm_no_dms"), tiny_train(), 10, seed=3)
        assert all(r.gamma == 1.0 for r in report.records)

    def test_dmshm_records_gamma_and_bandwidth(self):
        stream = tiny_stream(periods=3)
        report = run_experiment(stream, MethodSpec("dmshm"), tiny_train(), 10, seed=4)
        assert report.records[0].gamma == 1.0
        assert math.isnan(report.records[0].bandwidth)
        for r in report.records[1:]:
            assert 0.0 <= r.gamma <= 1.0
            assert r.bandwidth > 0

    def test_needs_two_periods(self):
        stream = tiny_stream(periods=1)
        with pytest.raises(ValueError, match="2 periods"):
            run_experiment(stream, MethodSpec("dmshm"), tiny_train(), 10, seed=0)

    def test_historical_mse_arithmetic_example(self):
        # FE over a known trace is the arithmetic mean
        recs = tuple(
            PeriodRecord(i + 1, h, 0.5, float("nan"), float("nan"), 0.0)
            for i, h in enumerate([2.0, 4.0, 6.0])
        )
        report = MetricsReport(recs, fe=4.0, pe=0.5, method=MethodSpec("finetune"), seed=0)
        assert report.fe == 4.0


class TestPca:
    def test_collinear_second_component_zero(self):
        t = np.linspace(0, 1, 50)
        pts = np.stack([t, 2 * t + 1, -t], axis=1)
        coords = pca_project_2d(pts)
        assert np.abs(coords[:, 1]).max() < 1e-6

    def test_k2_preserves_pairwise_distances(self):
        rng = np.random.default_rng(0)
        pts = rng.normal(size=(40, 2))
        coords = pca_project_2d(pts)
        d_in = np.linalg.norm(pts[:, None] - pts[None, :], axis=2)
        d_out = np.linalg.norm(coords[:, None] - coords[None, :], axis=2)
        assert np.abs(d_in - d_out).max() < 1e-9

    def test_matches_eigendecomposition_oracle(self):
        rng = np.random.default_rng(1)
        pts = rng.normal(size=(200, 3)) @ np.diag([3.0, 1.0, 0.2])
        centered = pts - pts.mean(axis=0)
        cov = centered.T @ centered / (len(pts) - 1)
        evals, evecs = np.linalg.eigh(cov)
        order = np.argsort(evals)[::-1]
        coords = pca_project_2d(pts)
        for c in range(2):
            vec = evecs[:, order[c]]
            proj = centered @ vec
            # same up to sign
            err = min(np.abs(coords[:, c] - proj).max(), np.abs(coords[:, c] + proj).max())
            assert err < 1e-6

    def test_sign_convention(self):
        rng = np.random.default_rng(2)
        pts = rng.normal(size=(60, 3)) @ np.diag([4.0, 1.5, 0.5])
        coords = pca_project_2d(pts)
        centered = pts - pts.mean(axis=0)
        for c in range(2):
            # recover the component from a least-squares fit and check its
            # largest-magnitude loading is positive
            vec, *_ = np.linalg.lstsq(centered, coords[:, c], rcond=None)
            vec = vec / np.linalg.norm(vec)
            assert vec[np.argmax(np.abs(vec))] > 0

    def test_rejects_degenerate_input(self):
        with pytest.raises(ValueError, match="identical"):
            pca_project_2d(np.ones((5, 3)))
        with pytest.raises(ValueError, match="3 points"):
            pca_project_2d(np.ones((2, 3)))
        with pytest.raises(ValueError, match="2 dimensions"):
            pca_project_2d(np.ones((5, 1)))


class TestRunOutputs:
    def test_files_written(self, tmp_path):
        stream = tiny_stream(periods=3)
        report = run_experiment(stream, MethodSpec("dmshm"), tiny_train(), 10, seed=7)
        out = tmp_path / "run"
        write_run_outputs(
            report, str(out), resolved_config={"seeds": [7]},
            projection_points=[(p.index, p.x) for p in stream],
        )
        metrics = json.loads((out / "metrics.json").read_text())
        assert metrics["method"] == "dmshm" and metrics["seed"] == 7
        assert metrics["fe"] == report.fe and metrics["pe"] == report.pe
        lines = (out / "periods.csv").read_text().strip().splitlines()
        assert lines[0] == "period,historical_mse,future_mse,gamma,bandwidth,train_loss_final"
        assert len(lines) == 4
        proj = (out / "projection.csv").read_text().strip().splitlines()
        assert proj[0] == "period,x1,x2"
        assert len(proj) == 1 + sum(p.size for p in stream)
        assert json.loads((out / "config.json").read_text()) == {"seeds": [7]}
