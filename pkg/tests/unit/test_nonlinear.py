"""
Unit tests for quadratic forms and the model nonlinearities
"""
import numpy as np
import pytest

from sbelab.spectral.field import SpectralField, flat_index, mode_norms, project, support_mask, wavevectors
from sbelab.spectral.forms import (
    QuadraticForm,
    burgers_form,
    ddt_form,
    ns_coefficient,
    ns_form,
    ss_form,
)
from sbelab.spectral.nonlinear import (
    burgers_flat,
    burgers_nonlinearity,
    ddt_nonlinearity,
    ns_flat,
    ns_nonlinearity,
    ss_flat,
    ss_nonlinearity,
)


def brute_force_burgers(x: SpectralField, N: int) -> np.ndarray:
    """Triple loop over k1 + k2 = k with |k|, |k1|, |k2| <= N"""
    K = x.K
    out = np.zeros(2 * K + 1, dtype=complex)
    for k in range(-N, N + 1):
        for k1 in range(-N, N + 1):
            k2 = k - k1
            if 0 in (k, k1, k2) or abs(k2) > N:
                continue
            out[k + K] += 1j * k * x.coeff(k1) * x.coeff(k2)
    return out


class TestBurgers:

    def test_single_pair(self):
        x = SpectralField.from_modes(2, {1: 1.0})
        F = burgers_nonlinearity(x, 2)
        assert F.coeff(2) == pytest.approx(2j)
        assert F.coeff(-2) == pytest.approx(-2j)
        assert F.coeff(1) == 0.0

    def test_zero(self):
        assert np.all(burgers_nonlinearity(SpectralField.zeros(4), 4).flat == 0.0)

    @pytest.mark.parametrize("N", [1, 2, 3, 4])
    def test_matches_triple_loop(self, random_field, N):
        x = random_field(4, seed=N)
        np.testing.assert_allclose(burgers_flat(x.flat, 4, N), brute_force_burgers(x, N), atol=1e-12)

    def test_matches_sparse_form(self, random_field):
        x = random_field(6, seed=11)
        np.testing.assert_allclose(burgers_form(6, 4)(x).flat, burgers_flat(x.flat, 6, 4), atol=1e-12)

    @pytest.mark.parametrize("N", [3, 8, 16])
    def test_conserves_pairing(self, random_field, N):
        x = random_field(16, seed=N)
        F = burgers_nonlinearity(x, N)
        scale = np.sum(np.abs(x.flat)) ** 3
        assert abs(x.pairing(F)) <= 1e-12 * scale

    def test_output_is_real_field(self, random_field):
        F = burgers_nonlinearity(random_field(8), 8)
        np.testing.assert_allclose(F.flat, np.conj(F.flat[::-1]), atol=1e-12)

    def test_cutoff_above_lattice_rejected(self, random_field):
        with pytest.raises(ValueError, match="exceeds"):
            burgers_nonlinearity(random_field(4), 5)


class TestSmoothedBurgers:

    def test_sigma_zero_is_burgers(self, random_field):
        for seed in range(10):
            x = random_field(6, seed=seed)
            np.testing.assert_array_equal(ddt_nonlinearity(x, 6, 0.0).flat, burgers_nonlinearity(x, 6).flat)

    def test_half_sigma_single_pair(self):
        # |k|^{-2 sigma} = 1/2 at k = 2
        x = SpectralField.from_modes(2, {1: 1.0})
        assert ddt_nonlinearity(x, 2, 0.5).coeff(2) == pytest.approx(1j)

    def test_unit_sigma_single_pair(self):
        x = SpectralField.from_modes(2, {1: 1.0})
        assert ddt_nonlinearity(x, 2, 1.0).coeff(2) == pytest.approx(0.5j)

    def test_matches_weighted_triple_loop(self, random_field):
        x = random_field(4, seed=5)
        sigma = 0.3
        w = np.where(mode_norms(4, 1) > 0, mode_norms(4, 1), 1.0) ** (-2 * sigma)
        y = SpectralField(w * x.flat * support_mask(4, 1))
        expected = w * brute_force_burgers(y, 4) * support_mask(4, 1)
        np.testing.assert_allclose(ddt_nonlinearity(x, 4, sigma).flat, expected, atol=1e-12)
        np.testing.assert_allclose(ddt_form(4, 4, sigma)(x).flat, expected, atol=1e-12)

    def test_pairing_conserved(self, random_field):
        # sum x_{-k} F_sigma(x)_k = sum y_{-k} F(y)_k with y = A^{-sigma} x
        x = random_field(8, seed=2)
        F = ddt_nonlinearity(x, 8, 0.25)
        assert abs(x.pairing(F)) <= 1e-12 * np.sum(np.abs(x.flat)) ** 3

    def test_negative_sigma_rejected(self, random_field):
        with pytest.raises(ValueError):
            ddt_nonlinearity(random_field(2), 2, -0.1)


class TestLatticeDrift:

    @pytest.mark.parametrize("N", [2, 4, 8])
    def test_conserves_pairing(self, random_field, N):
        x = random_field(N, seed=N)
        F = ss_nonlinearity(x, N)
        assert abs(x.pairing(F)) <= 1e-12 * np.sum(np.abs(x.flat)) ** 3

    def test_matches_sparse_form(self, random_field):
        x = random_field(5, seed=9)
        np.testing.assert_allclose(ss_form(5)(x).flat, ss_flat(x.flat, 5), atol=1e-12)

    def test_zero(self):
        assert np.all(ss_nonlinearity(SpectralField.zeros(3), 3).flat == 0.0)

    def test_continuum_limit(self):
        N = 1000
        x = SpectralField.from_modes(N, {1: 1.0})
        assert ss_flat(x.flat, N)[flat_index(2, N)] == pytest.approx(6j, abs=1e-3)

    def test_needs_exact_lattice(self, random_field):
        with pytest.raises(ValueError, match="K == N"):
            ss_nonlinearity(random_field(6), 4)


class TestNavierStokes:

    def test_coefficient_by_hand(self):
        b = ns_coefficient(np.array([[1, 0]]), np.array([[0, 1]]), np.array([[1, -1]]))
        assert b[0] == pytest.approx(-1.0)

    @pytest.mark.parametrize("N", [3, 4, 6])
    def test_kinetic_energy_conserved(self, random_field, N):
        x = random_field(N, seed=N, dim=2)
        B = ns_nonlinearity(x, N)
        k2 = mode_norms(N, 2) ** 2
        rate = np.sum(k2 * (x.flat[::-1] * B.flat).real)
        assert abs(rate) <= 1e-11 * np.sum(k2 * np.abs(x.flat)) * np.sum(np.abs(x.flat)) ** 2

    def test_own_coordinate_absent(self, random_field):
        N = 4
        x = random_field(N, seed=1, dim=2)
        form = ns_form(N, N)
        for slot in np.flatnonzero(support_mask(N, 2)):
            assert form.gradient_flat(x.flat, int(slot))[slot] == 0.0

    def test_finite_difference_in_own_coordinate(self, random_field):
        N = 3
        x = random_field(N, seed=4, dim=2)
        slot = flat_index((1, 2), N)
        bumped = x.flat.copy()
        bumped[slot] += 0.1
        assert ns_flat(bumped, N, N)[slot] == pytest.approx(ns_flat(x.flat, N, N)[slot], abs=1e-12)

    def test_rejects_1d_field(self, random_field):
        with pytest.raises(ValueError, match="2d"):
            ns_nonlinearity(random_field(3), 3)


class TestTruncationConsistency:
    """F_M only sees the modes inside its own cutoff"""

    @pytest.mark.parametrize("M", [1, 3, 5, 8])
    def test_burgers(self, random_field, M):
        x = random_field(8, seed=21)
        np.testing.assert_allclose(burgers_nonlinearity(project(x, M), M).flat, burgers_nonlinearity(x, M).flat, atol=1e-12)

    @pytest.mark.parametrize("M", [2, 6])
    def test_smoothed_burgers(self, random_field, M):
        x = random_field(8, seed=22)
        np.testing.assert_allclose(
            ddt_nonlinearity(project(x, M), M, 0.5).flat, ddt_nonlinearity(x, M, 0.5).flat, atol=1e-12,
        )

    @pytest.mark.parametrize("M", [2, 3])
    def test_navier_stokes(self, random_field, M):
        y = random_field(4, seed=23, dim=2)
        np.testing.assert_allclose(ns_nonlinearity(project(y, M), M).flat, ns_nonlinearity(y, M).flat, atol=1e-12)

    def test_output_supported_inside_cutoff(self, random_field):
        x = random_field(8, seed=24)
        out = burgers_nonlinearity(x, 3).flat
        assert np.all(out[~support_mask(8, 1, 3.0)] == 0.0)


class TestQuadraticForm:

    def test_non_real_coefficient_rejected(self):
        with pytest.raises(ValueError, match="real fields"):
            QuadraticForm(3, 3, lambda k, k1, k2: np.ones(len(k)) * 1j, "bad")

    def test_linear_only(self, random_field):
        x = random_field(3)
        form = QuadraticForm.linear_only(3, np.ones(7) * support_mask(3, 1), "id")
        np.testing.assert_allclose(form(x).flat, x.flat)

    def test_gradient_matches_finite_difference(self, random_field):
        x = random_field(4, seed=8)
        form = burgers_form(4, 4)
        k, q = 3, 1
        grad = form.gradient(x, k)
        h = 1e-6
        e = np.zeros(9, dtype=complex)
        e[flat_index(q, 4)] = h
        numeric = (form.evaluate_flat(x.flat + e)[flat_index(k, 4)] - form.evaluate_flat(x.flat)[flat_index(k, 4)]) / h
        assert grad[flat_index(q, 4)] == pytest.approx(numeric, abs=1e-5)

    def test_wavevectors_shape(self):
        assert wavevectors(2, 2).shape == (25, 2)
