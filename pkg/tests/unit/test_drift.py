"""
Unit tests for the Poisson solution, generator, energies, energy sums,
drift accumulators and martingale decomposition
"""
import numpy as np
import pytest
from scipy.integrate import quad

from sbelab.analysis.drift import (
    accumulate_drift,
    accumulate_mild_drift,
    cached_poisson_form,
    dirichlet_energy,
    expected_dirichlet_energy,
    generator_apply,
    h_poisson,
    i_sum,
    i_sum_diff,
    martingale_decompose,
    mollified_drift,
)
from sbelab.common.errors import TrajectoryError
from sbelab.dynamics.integrators import simulate_path
from sbelab.dynamics.trajectory import TrajectoryRecorder
from sbelab.measures.gaussian import MeasureSpec, RngStream, sample_ensemble
from sbelab.models.schemas import CoefficientKind, MeasureKind, ModelConfig, Part
from sbelab.spectral.field import SpectralField, flat_index, mode_norms
from sbelab.spectral.forms import QuadraticForm, diagonal_linear
from sbelab.spectral.nonlinear import burgers_flat, burgers_nonlinearity


def constant_path(x: SpectralField, steps: int, dt: float) -> TrajectoryRecorder:
    rec = TrajectoryRecorder(K=x.K, dim=1, dt=dt)
    for j in range(steps + 1):
        rec.append(j * dt, x.flat)
    return rec


class TestPoissonSolution:

    def test_single_pair(self):
        x = SpectralField.from_modes(2, {1: 1.0})
        assert h_poisson(x, 2, 1.0).coeff(2) == pytest.approx(-1j)

    def test_zero(self):
        assert np.all(h_poisson(SpectralField.zeros(4), 4, 1.0).flat == 0.0)

    def test_matches_time_integral(self, random_field):
        x = random_field(4, seed=1)
        lam = mode_norms(4, 1) ** 2

        def integrand(t, k, part):
            value = burgers_flat(np.exp(-lam * t) * x.flat, 4, 4)[k + 4]
            return -(value.real if part == "re" else value.imag)

        H = h_poisson(x, 4, 1.0)
        for k in range(1, 5):
            re = quad(integrand, 0.0, 20.0, args=(k, "re"), epsabs=1e-12, epsrel=1e-12, limit=200)[0]
            im = quad(integrand, 0.0, 20.0, args=(k, "im"), epsabs=1e-12, epsrel=1e-12, limit=200)[0]
            assert H.coeff(k) == pytest.approx(re + 1j * im, abs=1e-8)

    def test_theta_must_be_positive(self):
        with pytest.raises(ValueError):
            cached_poisson_form(4, 4, 0.0)


class TestGenerator:

    def test_poisson_identity(self, random_field):
        x = random_field(8, seed=2)
        form = cached_poisson_form(8, 8, 1.0)
        F = burgers_nonlinearity(x, 8)
        np.testing.assert_allclose(generator_apply(form, x, 1.0).flat, F.flat, atol=1e-12 * np.max(np.abs(F.flat)) + 1e-12)

    def test_poisson_identity_single_pair(self):
        x = SpectralField.from_modes(2, {1: 1.0})
        assert generator_apply(cached_poisson_form(2, 2, 1.0), x, 1.0).coeff(2) == pytest.approx(2j)

    def test_linear_coordinate(self, random_field):
        x = random_field(3, seed=4)
        form = QuadraticForm.linear_only(3, diagonal_linear(3, 1, {1: 1.0}), "x_1")
        assert generator_apply(form, x, 1.0).coeff(1) == pytest.approx(-x.coeff(1))


class TestDirichletEnergy:

    def test_hand_value(self):
        x = SpectralField.from_modes(2, {1: 1.0})
        form = cached_poisson_form(2, 2, 1.0)
        total = dirichlet_energy(form, 2, Part.REAL, x, 1.0) + dirichlet_energy(form, 2, Part.IMAG, x, 1.0)
        assert total == pytest.approx(2.0)

    def test_zero(self):
        form = cached_poisson_form(4, 4, 1.0)
        assert dirichlet_energy(form, 2, Part.REAL, SpectralField.zeros(4), 1.0) == 0.0

    def test_expectation_matches_monte_carlo(self):
        form = cached_poisson_form(4, 4, 1.0)
        fields = sample_ensemble(MeasureSpec(MeasureKind.WHITE_NOISE_1D, 4), 0, "energy", paths=4000)
        energies = [
            dirichlet_energy(form, 2, Part.REAL, SpectralField(a, validate=False), 1.0) for a in fields
        ]
        assert np.mean(energies) == pytest.approx(expected_dirichlet_energy(form, 2, Part.REAL, 1.0), rel=0.05)

    def test_difference_of_forms(self):
        hi, lo = cached_poisson_form(8, 8, 1.0), cached_poisson_form(8, 4, 1.0)
        diff = expected_dirichlet_energy(hi, 2, Part.REAL, 1.0, minus=lo)
        assert 0.0 < diff < expected_dirichlet_energy(hi, 2, Part.REAL, 1.0)

    def test_energy_bound_uniform_in_mode_and_cutoff(self):
        theta = 1.0
        scaled = {}
        for N in (8, 16, 32):
            form = cached_poisson_form(N, N, theta)
            for k in (1, 2, 4, 8):
                scaled[k, N] = expected_dirichlet_energy(form, k, Part.REAL, theta) * k ** (2 * theta - 3)
        values = np.array(list(scaled.values()))
        assert np.all(values > 0.0)
        assert values.max() / values.min() < 20.0
        for k in (1, 2, 4, 8):
            assert scaled[k, 8] <= scaled[k, 16] + 1e-12 <= scaled[k, 32] + 2e-12
            assert scaled[k, 32] < 1.5 * scaled[k, 16]

    def test_second_energy_scales_with_lower_cutoff(self):
        theta, k = 1.0, 2
        hi = cached_poisson_form(64, 64, theta)
        scaled = [
            expected_dirichlet_energy(hi, k, Part.REAL, theta, minus=cached_poisson_form(64, M, theta))
            * k ** -2 * M ** (2 * theta - 1)
            for M in (4, 8, 16)
        ]
        assert max(scaled) / min(scaled) < 3.0


class TestEnergySums:

    def test_single_pair(self):
        assert i_sum(2, 2, 1.0) == pytest.approx(2.0)

    def test_same_cutoffs(self):
        assert i_sum_diff(3, 16, 16, 1.0) == 0.0

    def test_difference_nonnegative(self):
        assert i_sum_diff(3, 32, 16, 1.0) == pytest.approx(i_sum(3, 32, 1.0) - i_sum(3, 16, 1.0))

    def test_burgers_growth(self):
        ks = np.arange(2, 65)
        values = np.array([i_sum(int(k), 512, 1.0) for k in ks])
        slope = np.polyfit(np.log(ks), np.log(values), 1)[0]
        assert slope == pytest.approx(1.0, abs=0.15)
        assert np.max(values / ks) < 10.0

    def test_lattice_coefficient_matches_unit_theta(self):
        ss = i_sum(4, 256, kind=CoefficientKind.SS)
        burgers = i_sum(4, 256, 1.0)
        assert ss == pytest.approx(burgers, rel=0.1)

    def test_ns_sum_decays(self):
        small = i_sum((1, 0), 16, kind=CoefficientKind.NS, sigma=0.5)
        large = i_sum((8, 0), 16, kind=CoefficientKind.NS, sigma=0.5)
        assert large < small

    def test_outside_cutoff(self):
        assert i_sum(9, 8, 1.0) == 0.0

    @pytest.mark.parametrize("theta", [0.75, 1.0, 1.5])
    def test_monotone_in_cutoff(self, theta):
        values = [i_sum(3, N, theta) for N in (3, 4, 8, 16, 32, 64)]
        assert all(a <= b for a, b in zip(values, values[1:]))
        assert values[-1] > values[0]

    @pytest.mark.parametrize("k, N, M", [(2, 16, 4), (3, 32, 8), (5, 8, 6)])
    def test_difference_below_sum(self, k, N, M):
        assert i_sum_diff(k, N, M, 1.0) <= i_sum(k, N, 1.0) + i_sum(k, M, 1.0)
        assert i_sum_diff(k, N, M, 1.0) == i_sum_diff(k, M, N, 1.0)


class TestAccumulators:

    def test_constant_path(self, random_field):
        x = random_field(4, seed=3)
        acc = accumulate_drift(constant_path(x, 10, 0.1), 4, [1, 2, 3])
        F = burgers_flat(x.flat, 4, 4)
        np.testing.assert_allclose(acc.values[-1], 1.0 * F[[5, 6, 7]], rtol=1e-12)

    def test_zero_path(self):
        acc = accumulate_drift(constant_path(SpectralField.zeros(4), 5, 0.1), 4, [1, 2])
        assert np.all(acc.values == 0.0)

    def test_mild_constant_path(self, random_field):
        x = random_field(4, seed=5)
        dt, steps = 0.01, 50
        acc = accumulate_mild_drift(constant_path(x, steps, dt), 4, 1.0, [1, 3])
        F = burgers_flat(x.flat, 4, 4)
        t = steps * dt
        for j, k in enumerate([1, 3]):
            lam = float(k * k)
            expected = (1.0 - np.exp(-lam * t)) / lam * F[k + 4]
            assert acc.values[-1, j] == pytest.approx(expected, rel=1e-10)

    def test_mollifier_identity_band(self, random_field):
        x = random_field(8, seed=6)
        path = constant_path(x, 4, 0.1)
        np.testing.assert_allclose(
            mollified_drift(path, 1.0 / 8, [1, 2, 5]).values, accumulate_drift(path, 8, [1, 2, 5]).values
        )

    def test_cutoff_above_lattice(self, random_field):
        with pytest.raises(ValueError):
            accumulate_drift(constant_path(random_field(4), 2, 0.1), 8, [1])

    def test_mild_drift_bounded_by_plain_drift(self):
        # the drift covariance along a stationary OU path is pointwise positive,
        # so weights in [e^{-lam T}, 1] bound the mild second moment on both sides
        cfg = ModelConfig(model="ou", N=8, dt=1e-3, T=0.5)
        k, lam = 2, 4.0
        plain, mild = [], []
        for p in range(128):
            traj = simulate_path(cfg, RngStream(0, "mild", p))
            plain.append(accumulate_drift(traj, 8, [k]).values[-1, 0])
            mild.append(accumulate_mild_drift(traj, 8, 1.0, [k]).values[-1, 0])
        plain_m2 = np.mean(np.abs(plain) ** 2)
        mild_m2 = np.mean(np.abs(mild) ** 2)
        assert np.exp(-2 * lam * 0.5) * plain_m2 < mild_m2 < plain_m2


class TestMartingaleDecomposition:

    def _path(self, noise_scale: float, dt: float, T: float, seed: int = 0):
        cfg = ModelConfig(model="ou", N=4, dt=dt, T=T, noise_scale=noise_scale, record_noise=True)
        return simulate_path(cfg, RngStream(seed, "ito"))

    def test_requires_noise(self):
        cfg = ModelConfig(model="ou", N=4, dt=1e-3, T=1e-2)
        with pytest.raises(TrajectoryError):
            martingale_decompose(simulate_path(cfg, RngStream(0, "ito")), cached_poisson_form(4, 4, 1.0), 2, Part.REAL, 1.0)

    def test_noise_free_has_no_martingale(self):
        form = cached_poisson_form(4, 4, 1.0)
        quiet = martingale_decompose(self._path(0.0, 1e-3, 0.1), form, 2, Part.REAL, 1.0)
        noisy = martingale_decompose(self._path(1.0, 1e-3, 0.1), form, 2, Part.REAL, 1.0)
        assert quiet.qv_forward < 1e-3 * noisy.qv_forward

    def test_noise_free_backward_variation_is_first_order(self):
        # reversed increments carry -2 dt L0h, so their squares sum to O(dt)
        form = cached_poisson_form(4, 4, 1.0)
        coarse = martingale_decompose(self._path(0.0, 2e-3, 0.1), form, 2, Part.REAL, 1.0).qv_backward
        fine = martingale_decompose(self._path(0.0, 1e-3, 0.1), form, 2, Part.REAL, 1.0).qv_backward
        assert coarse / fine == pytest.approx(2.0, rel=0.2)

    def test_key_residual_first_order(self):
        form = cached_poisson_form(4, 4, 1.0)
        coarse = martingale_decompose(self._path(0.0, 2e-3, 0.1), form, 2, Part.REAL, 1.0).sup_key_residual
        fine = martingale_decompose(self._path(0.0, 1e-3, 0.1), form, 2, Part.REAL, 1.0).sup_key_residual
        assert coarse / fine == pytest.approx(2.0, rel=0.2)

    def test_forward_part_is_noise_integral(self):
        pair = martingale_decompose(self._path(1.0, 1e-4, 0.01), cached_poisson_form(4, 4, 1.0), 2, Part.REAL, 1.0)
        assert pair.noise_residual is not None
        assert pair.noise_residual < 0.05 * np.max(np.abs(pair.forward))

    def test_quadratic_variation_matches_energy(self):
        form = cached_poisson_form(4, 4, 1.0)
        qv, energy = [], []
        for seed in range(16):
            pair = martingale_decompose(self._path(1.0, 2e-4, 0.04, seed), form, 2, Part.REAL, 1.0)
            qv.append(pair.qv_forward)
            energy.append(pair.energy_integral)
        assert np.mean(qv) == pytest.approx(np.mean(energy), rel=0.1)
