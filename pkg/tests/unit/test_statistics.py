"""
Unit tests for ensemble estimators, scaling fits, stationarity and
quadratic variation
"""
import math

import numpy as np
import pytest

from sbelab.analysis.drift import DriftAccumulator
from sbelab.analysis.statistics import (
    EnsembleSummary,
    batch_means,
    exp_moment_probe,
    lp_norm,
    lp_sup_norm,
    quadratic_variation,
    scaling_regression,
    stationarity_test,
)
from sbelab.common.errors import EstimatorError
from sbelab.measures.gaussian import MeasureSpec, sample_ensemble
from sbelab.models.schemas import MeasureKind
from sbelab.spectral.field import mode_norms


class TestLpNorm:

    def test_constant_samples(self):
        value, se = lp_norm(np.full(32, -3.0), p=2.0)
        assert value == pytest.approx(3.0)
        assert se == pytest.approx(0.0, abs=1e-12)

    def test_too_few_paths(self):
        with pytest.raises(EstimatorError):
            lp_norm(np.ones(15))

    def test_gaussian_second_moment(self, rng):
        value, se = lp_norm(rng.standard_normal(4096), p=2.0)
        assert abs(value - 1.0) < 4.0 * se

    def test_zero_samples(self):
        assert lp_norm(np.zeros(64)) == (0.0, 0.0)

    def test_batch_count_from_environment(self, monkeypatch, rng):
        monkeypatch.setenv("SBELAB_BATCH_COUNT", "400")
        samples = rng.standard_normal(6400)
        mean, se = batch_means(samples)
        assert se == pytest.approx(1.0 / 80.0, rel=0.15)

    def test_standard_error_shrinks_with_paths(self, rng):
        _, small = batch_means(rng.standard_normal(1600))
        _, large = batch_means(rng.standard_normal(6400))
        assert small / large == pytest.approx(2.0, rel=0.5)

    def test_too_few_for_batches(self):
        with pytest.raises(EstimatorError, match="batches"):
            batch_means(np.ones(8), batches=16)


class TestLpSupNorm:

    def test_sup_over_time_per_path(self):
        times = np.array([0.0, 0.5, 1.0])
        ensemble = [
            DriftAccumulator("G", times, [1, 2], np.array([[0, 0], [2j, 1], [-1, 3]], dtype=complex))
            for _ in range(32)
        ]
        assert lp_sup_norm(ensemble, 1)[0] == pytest.approx(2.0)
        assert lp_sup_norm(ensemble, 2, p=4.0)[0] == pytest.approx(3.0)

    def test_empty_ensemble(self):
        with pytest.raises(EstimatorError, match="empty"):
            lp_sup_norm([], 1)


class TestScalingRegression:

    def test_exact_power_law(self):
        points = [(x, 3.0 * x ** -0.75, 0.0) for x in range(1, 9)]
        fit = scaling_regression(points, abscissa="M")
        assert fit.slope == pytest.approx(-0.75)
        assert fit.intercept == pytest.approx(math.log(3.0))
        assert fit.slope_se == pytest.approx(0.0, abs=1e-10)
        assert fit.fit_range == (1.0, 8.0)
        assert fit.n_points == 8

    def test_noisy_square(self, rng):
        xs = np.arange(2, 33)
        ys = xs ** 2.0 * np.exp(0.01 * rng.standard_normal(xs.size))
        fit = scaling_regression([(x, y, 0.01 * y) for x, y in zip(xs, ys)])
        assert fit.slope == pytest.approx(2.0, abs=0.05)

    def test_constant(self):
        fit = scaling_regression([(x, 5.0, 0.1) for x in (1, 2, 4, 8, 16)])
        assert fit.slope == pytest.approx(0.0, abs=1e-12)

    def test_too_few_points(self):
        with pytest.raises(EstimatorError, match="at least 5"):
            scaling_regression([(1, 1, 0), (2, 2, 0)])

    def test_nonpositive_estimate(self):
        with pytest.raises(EstimatorError, match="positive"):
            scaling_regression([(x, 0.0, 0.0) for x in range(1, 6)])


class TestStationarity:

    def test_white_noise_passes(self):
        spec = MeasureSpec(MeasureKind.WHITE_NOISE_1D, 32)
        fields = sample_ensemble(spec, 0, "stationarity", paths=512)
        table = stationarity_test(fields, spec, range(1, 33))
        passed = (table["z2"].abs() < 3.0) & (table["z4"].abs() < 3.0)
        assert passed.mean() >= 0.9

    def test_null_rejection_rate(self):
        spec = MeasureSpec(MeasureKind.WHITE_NOISE_1D, 16)
        scores = np.concatenate([
            stationarity_test(sample_ensemble(spec, rep, "calibration", paths=256), spec, range(1, 17))[["z2", "z4"]].to_numpy()
            for rep in range(60)
        ])
        rejected = np.mean(np.abs(scores) >= 3.0, axis=0)
        assert rejected.max() < 0.01
        np.testing.assert_allclose(scores.mean(axis=0), 0.0, atol=0.15)
        np.testing.assert_allclose(scores.std(axis=0), 1.0, atol=0.1)

    def test_low_fourth_moment_keeps_its_error_bar(self):
        spec = MeasureSpec(MeasureKind.WHITE_NOISE_1D, 2)
        fields = np.zeros((256, 5), dtype=complex)
        fields[:, 3] = 1.0
        fields[:, 1] = 1.0
        # |x|^2 = 1 on every path: E|x|^4 sits 1 below its oracle of 2, null SE sqrt(20/256)
        table = stationarity_test(fields, spec, [1])
        assert table.loc[0, "z2"] == pytest.approx(0.0)
        assert table.loc[0, "z4"] == pytest.approx(-1.0 / np.sqrt(20.0 / 256.0))

    def test_scaled_field_fails(self):
        spec = MeasureSpec(MeasureKind.WHITE_NOISE_1D, 8)
        fields = 1.5 * sample_ensemble(spec, 1, "stationarity", paths=1024)
        table = stationarity_test(fields, spec, [1, 2, 3])
        assert np.all(table["z2"] > 10.0)

    def test_wrong_measure_rejected_in_2d(self):
        spec = MeasureSpec(MeasureKind.NS_GIBBS_2D, 3)
        norms = mode_norms(3, 2)
        # rescale Gibbs draws to unit variance in every mode
        fields = sample_ensemble(spec, 2, "stationarity", paths=1024) * np.where(norms > 0, norms, 0.0)
        table = stationarity_test(fields, spec, [(1, 0), (1, 1), (2, 1)])
        assert abs(table.loc[0, "z2"]) < 4.0
        assert np.all(table.loc[1:, "z2"] > 10.0)

    def test_columns(self):
        spec = MeasureSpec(MeasureKind.WHITE_NOISE_1D, 4)
        table = stationarity_test(sample_ensemble(spec, 0, "stationarity", paths=64), spec, [1])
        assert {"mode", "m2", "oracle2", "z2", "p2", "m4", "oracle4", "z4", "p4"} <= set(table.columns)
        assert table.loc[0, "oracle4"] == 2.0


class TestQuadraticVariation:

    def test_linear_path(self):
        c, L = 3.0, 10
        path = c * np.linspace(0.0, 1.0, 2 ** L + 1)
        report = quadratic_variation(path, range(2, 9))
        for level, qv in zip(report.levels, report.qv):
            assert qv == pytest.approx(c * c * 2.0 ** -level)
        assert report.decay_exponent == pytest.approx(1.0)

    def test_brownian_path_does_not_decay(self, rng):
        L = 14
        steps = rng.standard_normal(2 ** L) * math.sqrt(2.0 ** -L)
        path = np.concatenate([[0.0], np.cumsum(steps)])
        report = quadratic_variation(path, range(6, 13))
        assert report.qv[-1] == pytest.approx(1.0, abs=0.1)
        assert report.decay_exponent == pytest.approx(0.0, abs=0.1)

    def test_fractional_path(self, rng):
        H, L = 0.7, 10
        t = np.linspace(0.0, 1.0, 2 ** L + 1)[1:]
        cov = 0.5 * (t[:, None] ** (2 * H) + t[None, :] ** (2 * H) - np.abs(t[:, None] - t[None, :]) ** (2 * H))
        path = np.concatenate([[0.0], np.linalg.cholesky(cov) @ rng.standard_normal(t.size)])
        report = quadratic_variation(path, range(4, 11))
        assert report.decay_exponent == pytest.approx(2 * H - 1, abs=0.15)

    def test_mesh_scales_with_horizon(self):
        report = quadratic_variation(np.zeros(9), [1, 2], T=4.0)
        assert report.meshes == [2.0, 1.0]
        assert math.isnan(report.decay_exponent)

    def test_non_dyadic_grid(self):
        with pytest.raises(EstimatorError, match="dyadic"):
            quadratic_variation(np.zeros(100), [1, 2])

    def test_levels_must_refine(self):
        with pytest.raises(EstimatorError, match="refine"):
            quadratic_variation(np.zeros(17), [3, 3])

    def test_level_beyond_grid(self):
        with pytest.raises(EstimatorError):
            quadratic_variation(np.zeros(17), [2, 5])


class TestExpMomentProbe:

    def test_zero_observable(self):
        table = exp_moment_probe(np.zeros(300), [0.5, 1.0])
        np.testing.assert_allclose(table["moment"], 1.0)
        assert not table["unreliable"].any()

    def test_chi_square(self, rng):
        z = rng.standard_normal(100_000)
        table = exp_moment_probe(z ** 2, [0.1])
        assert table.loc[0, "moment"] == pytest.approx((1.0 - 0.2) ** -0.5, rel=0.02)

    def test_heavy_tail_flagged(self):
        samples = np.zeros(500)
        samples[0] = 100.0
        table = exp_moment_probe(samples, [1.0])
        assert table.loc[0, "unreliable"]
        assert table.loc[0, "top_share"] > 0.99


class TestEnsembleSummary:

    def test_constant_fields(self):
        fields = np.zeros((32, 3, 5), dtype=complex)
        fields[:, :, 3] = 2.0
        fields[:, :, 1] = 2.0
        summary = EnsembleSummary.from_fields(fields, np.array([0.0, 0.5, 1.0]), [1], K=2)
        np.testing.assert_allclose(summary.m2, 4.0)
        np.testing.assert_allclose(summary.m4, 16.0)
        frame = summary.to_frame()
        assert len(frame) == 3
        assert set(frame["paths"]) == {32}
