"""
The four model nonlinearities.

Each has an array-level ``*_flat`` form used by the integrators (no
validation, flat coefficient array in, flat array out) and a
SpectralField-level wrapper.
"""
from functools import lru_cache

import numpy as np

from sbelab.spectral.field import (
    SpectralField,
    inverse_power,
    lattice_gradient,
    shape_of,
)
from sbelab.spectral.forms import QuadraticForm, ns_form


def _check_cutoff(x: SpectralField, N: int, dim: int):
    if x.dim != dim:
        raise ValueError(f"expected a {dim}d field, got {x.dim}d")
    if N < 1:
        raise ValueError("cutoff N must be >= 1")
    if N > x.K:
        raise ValueError(f"cutoff N={N} exceeds the field cutoff K={x.K}")


def _band_convolve(a: np.ndarray, b: np.ndarray, K: int, N: int) -> np.ndarray:
    """
    sum_{k1 + k2 = k} a_{k1} b_{k2} over |k1|, |k2|, |k| <= N, embedded at K
    """
    ca = a[K - N:K + N + 1]
    cb = b[K - N:K + N + 1]
    full = np.convolve(ca, cb)
    out = np.zeros(2 * K + 1, dtype=np.complex128)
    out[K - N:K + N + 1] = full[N:3 * N + 1]
    out[K] = 0.0
    return out


@lru_cache(maxsize=64)
def _ik(K: int) -> np.ndarray:
    k = 1j * np.arange(-K, K + 1, dtype=float)
    k.setflags(write=False)
    return k


@lru_cache(maxsize=64)
def _ddt_weights(K: int, sigma: float) -> np.ndarray:
    w = inverse_power(sigma).values(K).real
    w.setflags(write=False)
    return w


@lru_cache(maxsize=16)
def _ss_symbols(N: int):
    g = lattice_gradient(N).values(N)
    two_i_im = 2j * g.imag
    for a in (g, two_i_im):
        a.setflags(write=False)
    return g, two_i_im


def burgers_flat(a: np.ndarray, K: int, N: int) -> np.ndarray:
    """F_N(x)_k = ik sum x_{k1} x_{k2}, all three modes within |.| <= N"""
    return _ik(K) * _band_convolve(a, a, K, N)


def ddt_flat(a: np.ndarray, K: int, N: int, sigma: float) -> np.ndarray:
    if sigma == 0.0:
        return burgers_flat(a, K, N)
    w = _ddt_weights(K, float(sigma))
    return w * burgers_flat(w * a, K, N)


def ss_flat(a: np.ndarray, N: int) -> np.ndarray:
    """
    F_N(x)_k = sum x_{k1} x_{k2} [g(k) - g(k)* + g(k1) - g(k2)*] on Z_0 cap [-N, N]

    Split as 2i Im g(k) (x*x)_k + ((g x)*x)_k - (x*(g* x))_k.
    """
    g, two_i_im = _ss_symbols(N)
    return (
        two_i_im * _band_convolve(a, a, N, N)
        + _band_convolve(g * a, a, N, N)
        - _band_convolve(a, np.conj(g) * a, N, N)
    )


@lru_cache(maxsize=8)
def _ns_form(K: int, N: float) -> QuadraticForm:
    return ns_form(K, N)


def ns_flat(a: np.ndarray, K: int, N: int) -> np.ndarray:
    return _ns_form(K, float(N)).evaluate_flat(a)


def _wrap(values: np.ndarray, K: int, dim: int = 1) -> SpectralField:
    return SpectralField(values.reshape(shape_of(K, dim)), dim=dim, validate=False)


def burgers_nonlinearity(x: SpectralField, N: int) -> SpectralField:
    _check_cutoff(x, N, 1)
    return _wrap(burgers_flat(x.flat, x.K, N), x.K)


def ddt_nonlinearity(x: SpectralField, N: int, sigma: float) -> SpectralField:
    """F_sigma(x) = A^{-sigma} F_N(A^{-sigma} x)"""
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    _check_cutoff(x, N, 1)
    return _wrap(ddt_flat(x.flat, x.K, N, sigma), x.K)


def ss_nonlinearity(x: SpectralField, N: int) -> SpectralField:
    """Lattice drift; the field must live exactly on Z_0 cap [-N, N]"""
    _check_cutoff(x, N, 1)
    if x.K != N:
        raise ValueError(f"lattice drift needs K == N, got K={x.K}, N={N}")
    return _wrap(ss_flat(x.flat, N), N)


def ns_nonlinearity(x: SpectralField, N: int) -> SpectralField:
    """B^N_k(x) = sum b(k, k1, k2) x_{k1} x_{k2} over the Euclidean ball |.| <= N"""
    _check_cutoff(x, N, 2)
    return _wrap(ns_flat(x.flat, x.K, N), x.K, dim=2)
