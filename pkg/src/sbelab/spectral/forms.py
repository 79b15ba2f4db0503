"""
Sparse quadratic polynomials in the Fourier coordinates.

A form Q on a lattice of cutoff K stores every admissible triple
(k, k1, k2) with k = k1 + k2 as flat slot indices together with the
coefficient q(k, k1, k2), so that

    (Q x)_k = sum_{k1 + k2 = k} q(k, k1, k2) x_{k1} x_{k2}  [+ l_k x_k].

Truncation indicators are absorbed by simply not storing excluded triples.
"""
from functools import lru_cache
from typing import Callable, Optional

import numpy as np

from sbelab.spectral.field import (
    SpectralField,
    flat_index,
    lattice_gradient_symbol,
    mode_norms,
    shape_of,
    support_mask,
    wavevectors,
)

# coefficient(k, k1, k2) -> complex array; k, k1, k2 have shape (n,) or (n, 2)
Coefficient = Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]


@lru_cache(maxsize=32)
def pair_table(K: int, dim: int, N: float):
    """
    All (out, i1, i2) slot triples with k1 + k2 = k and 0 < |k|, |k1|, |k2| <= N.

    Returned arrays are read-only and shared.
    """
    side = 2 * K + 1
    kv = wavevectors(K, dim)
    active = np.flatnonzero(support_mask(K, dim, float(N)))
    i1, i2 = np.meshgrid(active, active, indexing="ij")
    i1, i2 = i1.ravel(), i2.ravel()
    ksum = kv[i1] + kv[i2]
    if dim == 1:
        inside = np.abs(ksum) <= K
        out = np.where(inside, ksum + K, 0)
    else:
        inside = np.all(np.abs(ksum) <= K, axis=1)
        out = np.where(inside, (ksum[:, 0] + K) * side + (ksum[:, 1] + K), 0)
    keep = inside & support_mask(K, dim, float(N))[out]
    tables = (out[keep], i1[keep], i2[keep])
    for a in tables:
        a.setflags(write=False)
    return tables


class QuadraticForm:
    """Quadratic (optionally plus diagonal linear) map between spectral fields"""

    def __init__(
        self,
        K: int,
        N: float,
        coefficient: Optional[Coefficient],
        label: str,
        dim: int = 1,
        linear: Optional[np.ndarray] = None,
    ):
        self.K = K
        self.N = N
        self.dim = dim
        self.label = label
        if coefficient is None:
            self.out = self.i1 = self.i2 = np.zeros(0, dtype=np.intp)
            q = np.zeros(0, dtype=np.complex128)
        else:
            self.out, self.i1, self.i2 = pair_table(K, dim, float(N))
            kv = wavevectors(K, dim)
            with np.errstate(divide="ignore", invalid="ignore"):
                q = np.asarray(coefficient(kv[self.out], kv[self.i1], kv[self.i2]), dtype=np.complex128)
        self.q = np.broadcast_to(q, self.out.shape).copy()
        self.q.setflags(write=False)
        L = support_mask(K, dim).size
        if linear is not None:
            linear = np.asarray(linear, dtype=np.complex128).ravel()
            if linear.size != L:
                raise ValueError("linear part does not match the lattice")
        self.linear = linear
        self._slot_terms = {}
        self._check_hermitian()

    @classmethod
    def linear_only(cls, K: int, coefficients: np.ndarray, label: str, dim: int = 1) -> "QuadraticForm":
        return cls(K, K, None, label, dim=dim, linear=coefficients)

    def _check_hermitian(self):
        # q(-k, -k1, -k2) == conj(q(k, k1, k2)); negation reverses slots
        L = support_mask(self.K, self.dim).size
        if self.q.size:
            key = (self.out * L + self.i1) * L + self.i2
            neg_key = ((L - 1 - self.out) * L + (L - 1 - self.i1)) * L + (L - 1 - self.i2)
            order = np.argsort(key)
            pos = np.searchsorted(key[order], neg_key)
            partner = order[np.clip(pos, 0, key.size - 1)]
            if not np.all(key[partner] == neg_key) or not np.allclose(
                self.q[partner], np.conj(self.q), rtol=1e-12, atol=1e-14
            ):
                raise ValueError(f"quadratic form {self.label!r} does not map real fields to real fields")
        if self.linear is not None and not np.allclose(self.linear[::-1], np.conj(self.linear)):
            raise ValueError(f"linear part of {self.label!r} does not preserve real fields")

    @property
    def size(self) -> int:
        return support_mask(self.K, self.dim).size

    def evaluate_flat(self, a: np.ndarray) -> np.ndarray:
        """Apply to a flat coefficient array (no validation)"""
        terms = self.q * a[self.i1] * a[self.i2]
        out = np.bincount(self.out, weights=terms.real, minlength=self.size) + 1j * np.bincount(
            self.out, weights=terms.imag, minlength=self.size
        )
        if self.linear is not None:
            out = out + self.linear * a
        return out

    def __call__(self, x: SpectralField) -> SpectralField:
        self._check_field(x)
        return SpectralField(self.evaluate_flat(x.flat).reshape(shape_of(self.K, self.dim)), dim=self.dim, validate=False)

    def gradient(self, x: SpectralField, k) -> np.ndarray:
        """D_q (Q x)_k for every slot q, as a flat array"""
        self._check_field(x)
        return self.gradient_flat(x.flat, flat_index(k, self.K))

    def terms_of(self, slot: int):
        """(q, i1, i2) of the terms feeding output slot"""
        if slot not in self._slot_terms:
            sel = self.out == slot
            self._slot_terms[slot] = (self.q[sel], self.i1[sel], self.i2[sel])
        return self._slot_terms[slot]

    def gradient_flat(self, a: np.ndarray, slot: int) -> np.ndarray:
        q, i1, i2 = self.terms_of(slot)
        grad = np.zeros(self.size, dtype=np.complex128)
        np.add.at(grad, i1, q * a[i2])
        np.add.at(grad, i2, q * a[i1])
        if self.linear is not None:
            grad[slot] += self.linear[slot]
        return grad

    def _check_field(self, x: SpectralField):
        if x.K != self.K or x.dim != self.dim:
            raise ValueError(f"form {self.label!r} lives on K={self.K}, dim={self.dim}; field has K={x.K}, dim={x.dim}")

    def __repr__(self) -> str:
        return f"QuadraticForm({self.label!r}, K={self.K}, N={self.N}, terms={self.q.size})"


def _norm(k: np.ndarray) -> np.ndarray:
    k = np.asarray(k, dtype=float)
    return np.abs(k) if k.ndim == 1 else np.hypot(k[:, 0], k[:, 1])


def burgers_form(K: int, N: float) -> QuadraticForm:
    """F_N: q = ik"""
    return QuadraticForm(K, N, lambda k, k1, k2: 1j * k, f"F_{N}")


def poisson_form(K: int, N: float, theta: float) -> QuadraticForm:
    """H_N = -int_0^inf F_N(e^{-A^theta t} x) dt: q = -ik/(|k1|^{2theta} + |k2|^{2theta})"""
    if theta <= 0:
        raise ValueError("theta must be > 0 for the Poisson solution")
    return QuadraticForm(
        K, N,
        lambda k, k1, k2: -1j * k / (_norm(k1) ** (2 * theta) + _norm(k2) ** (2 * theta)),
        f"H_{N}(theta={theta:g})",
    )


def ddt_form(K: int, N: float, sigma: float) -> QuadraticForm:
    """F_sigma = A^{-sigma} F(A^{-sigma} x)"""
    return QuadraticForm(
        K, N,
        lambda k, k1, k2: 1j * k * (_norm(k) * _norm(k1) * _norm(k2)) ** (-2 * sigma),
        f"F_sigma({sigma:g})_{N}",
    )


def ss_form(N: int) -> QuadraticForm:
    """Sasamoto-Spohn drift on Z_0 cap [-N, N]"""
    def coefficient(k, k1, k2):
        gk = lattice_gradient_symbol(N, k)
        return gk - np.conj(gk) + lattice_gradient_symbol(N, k1) - np.conj(lattice_gradient_symbol(N, k2))
    return QuadraticForm(N, N, coefficient, f"Fflat_{N}")


def ns_coefficient(k: np.ndarray, k1: np.ndarray, k2: np.ndarray) -> np.ndarray:
    """b(k, k1, k2) = (k_perp . k1)(k . k2)/|k|^2 with (a, b)_perp = (b, -a)"""
    k, k1, k2 = (np.asarray(v, dtype=float) for v in (k, k1, k2))
    perp_dot = k[:, 1] * k1[:, 0] - k[:, 0] * k1[:, 1]
    return perp_dot * np.einsum("ij,ij->i", k, k2) / np.einsum("ij,ij->i", k, k)


def ns_form(K: int, N: float) -> QuadraticForm:
    return QuadraticForm(K, N, ns_coefficient, f"B_{N}", dim=2)


def diagonal_linear(K: int, dim: int, values) -> np.ndarray:
    """Linear coefficients for a handful of modes, Hermitian-completed"""
    a = np.zeros(support_mask(K, dim).size, dtype=np.complex128)
    for k, v in values.items():
        i = flat_index(k, K)
        a[i] = v
        a[a.size - 1 - i] = np.conj(v)
    return a


def mode_weights(K: int, dim: int, exponent: float) -> np.ndarray:
    """|k|^exponent on the support, 0 at the zero mode"""
    norms = mode_norms(K, dim)
    out = np.zeros_like(norms)
    mask = norms > 0
    out[mask] = norms[mask] ** exponent
    return out
