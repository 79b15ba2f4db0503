"""
Mode-indexed fields on the 1d and 2d torus.

A 1d field with cutoff K is stored as a complex array of length 2K+1 whose
entry i holds the coefficient of mode k = i - K.  A 2d field is stored as a
(2K+1, 2K+1) array, entry (i, j) holding mode (i - K, j - K).  In both cases
reversing the flattened array maps k to -k, so Hermitian symmetry reads
``a == conj(a.ravel()[::-1])``.
"""
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Dict, Iterable, Tuple, Union

import numpy as np

ModeIndex = Union[int, Tuple[int, int]]

HERMITIAN_RTOL = 1e-12


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@lru_cache(maxsize=64)
def wavevectors(K: int, dim: int) -> np.ndarray:
    """Integer wavevectors of every stored slot, shape (L,) or (L, 2)"""
    k = np.arange(-K, K + 1)
    if dim == 1:
        return _frozen(k)
    kx, ky = np.meshgrid(k, k, indexing="ij")
    return _frozen(np.stack([kx.ravel(), ky.ravel()], axis=1))


@lru_cache(maxsize=64)
def mode_norms(K: int, dim: int) -> np.ndarray:
    """|k| for every stored slot (flattened)"""
    k = wavevectors(K, dim)
    if dim == 1:
        return _frozen(np.abs(k).astype(float))
    return _frozen(np.hypot(k[:, 0], k[:, 1]))


@lru_cache(maxsize=64)
def support_mask(K: int, dim: int, N: float = None) -> np.ndarray:
    """Slots with 0 < |k| <= N (N defaults to K)"""
    N = K if N is None else N
    norms = mode_norms(K, dim)
    return _frozen((norms > 0) & (norms <= N))


def shape_of(K: int, dim: int) -> Tuple[int, ...]:
    return (2 * K + 1,) if dim == 1 else (2 * K + 1, 2 * K + 1)


def flat_index(k: ModeIndex, K: int) -> int:
    if isinstance(k, (tuple, list, np.ndarray)):
        kx, ky = int(k[0]), int(k[1])
        if max(abs(kx), abs(ky)) > K:
            raise IndexError(f"mode {k} outside the stored lattice (K={K})")
        return (kx + K) * (2 * K + 1) + (ky + K)
    if abs(int(k)) > K:
        raise IndexError(f"mode {k} outside the stored lattice (K={K})")
    return int(k) + K


def is_hermitian(a: np.ndarray) -> bool:
    flat = a.ravel()
    scale = max(float(np.max(np.abs(flat))) if flat.size else 0.0, 1.0)
    return bool(np.max(np.abs(flat - np.conj(flat[::-1]))) <= HERMITIAN_RTOL * scale)


class SpectralField:
    """
    Truncated Fourier coefficients of a real, mean-zero field.

    Instances are immutable: the coefficient array is stored read-only.
    """

    __slots__ = ("_coeffs", "K", "dim")

    def __init__(self, coeffs: np.ndarray, dim: int = 1, validate: bool = True):
        coeffs = np.array(coeffs, dtype=np.complex128)
        if dim not in (1, 2):
            raise ValueError(f"dim must be 1 or 2, got {dim}")
        if coeffs.ndim != dim or any(n != coeffs.shape[0] for n in coeffs.shape) or coeffs.shape[0] % 2 != 1:
            raise ValueError(f"coefficient array of shape {coeffs.shape} is not a {dim}d lattice")
        K = (coeffs.shape[0] - 1) // 2
        mask = support_mask(K, dim).reshape(coeffs.shape)
        if validate:
            if np.any(coeffs[~mask] != 0):
                raise ValueError("coefficients outside 0 < |k| <= K must vanish")
            if not is_hermitian(coeffs):
                raise ValueError("coefficients are not Hermitian: x(-k) != conj(x(k))")
        else:
            coeffs[~mask] = 0.0
        coeffs.setflags(write=False)
        self._coeffs = coeffs
        self.K = K
        self.dim = dim

    @classmethod
    def zeros(cls, K: int, dim: int = 1) -> "SpectralField":
        return cls(np.zeros(shape_of(K, dim), dtype=np.complex128), dim=dim)

    @classmethod
    def from_modes(cls, K: int, values: Dict[ModeIndex, complex], dim: int = 1) -> "SpectralField":
        """Build from coefficients of some modes; conjugate partners are filled in"""
        a = np.zeros(shape_of(K, dim), dtype=np.complex128).ravel()
        for k, value in values.items():
            i = flat_index(k, K)
            a[i] = value
            a[a.size - 1 - i] = np.conj(value)
        return cls(a.reshape(shape_of(K, dim)), dim=dim)

    @property
    def coeffs(self) -> np.ndarray:
        return self._coeffs

    @property
    def flat(self) -> np.ndarray:
        return self._coeffs.ravel()

    def coeff(self, k: ModeIndex) -> complex:
        return complex(self.flat[flat_index(k, self.K)])

    def with_cutoff(self, K: int) -> "SpectralField":
        """Re-embed on a lattice of cutoff K (truncating or zero padding)"""
        if K == self.K:
            return self
        out = np.zeros(shape_of(K, self.dim), dtype=np.complex128)
        m = min(K, self.K)
        src = tuple(slice(self.K - m, self.K + m + 1) for _ in range(self.dim))
        dst = tuple(slice(K - m, K + m + 1) for _ in range(self.dim))
        out[dst] = self._coeffs[src]
        return SpectralField(out, dim=self.dim, validate=False)

    def pairing(self, other: "SpectralField") -> complex:
        """sum_k x_{-k} y_k"""
        return complex(np.sum(self.flat[::-1] * other.flat))

    def _check_compatible(self, other: "SpectralField"):
        if self.K != other.K or self.dim != other.dim:
            raise ValueError("fields live on different lattices")

    def __add__(self, other: "SpectralField") -> "SpectralField":
        self._check_compatible(other)
        return SpectralField(self._coeffs + other._coeffs, dim=self.dim, validate=False)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        self._check_compatible(other)
        return SpectralField(self._coeffs - other._coeffs, dim=self.dim, validate=False)

    def __mul__(self, scalar: float) -> "SpectralField":
        return SpectralField(self._coeffs * float(scalar), dim=self.dim, validate=False)

    __rmul__ = __mul__

    def __repr__(self) -> str:
        return f"SpectralField(dim={self.dim}, K={self.K}, |x|={np.linalg.norm(self.flat):.4g})"


@dataclass(frozen=True)
class Multiplier:
    """
    Fourier multiplier k -> symbol(k).

    ``symbol`` receives the integer wavevectors (shape (L,) in 1d, (L, 2) in
    2d) and must return one complex value per row.
    """
    symbol: Callable[[np.ndarray], np.ndarray]
    label: str
    dim: int = 1

    def __post_init__(self):
        check_cutoff = 8
        values = self.values(check_cutoff)
        if not np.allclose(values[::-1], np.conj(values), rtol=1e-12, atol=1e-14, equal_nan=True):
            raise ValueError(f"multiplier {self.label!r} does not preserve real fields")

    def values(self, K: int) -> np.ndarray:
        k = wavevectors(K, self.dim)
        mask = support_mask(K, self.dim)
        out = np.zeros(mask.shape, dtype=np.complex128)
        with np.errstate(divide="ignore", invalid="ignore"):
            out[mask] = np.asarray(self.symbol(k[mask]), dtype=np.complex128)
        return out


def _norm(k: np.ndarray) -> np.ndarray:
    k = np.asarray(k, dtype=float)
    return np.abs(k) if k.ndim == 1 else np.hypot(k[:, 0], k[:, 1])


def fractional_power(theta: float, dim: int = 1) -> Multiplier:
    """A^theta: |k|^{2 theta}"""
    return Multiplier(lambda k: _norm(k) ** (2.0 * theta), f"A^{theta:g}", dim)


def derivative() -> Multiplier:
    """B = d/dxi: ik"""
    return Multiplier(lambda k: 1j * np.asarray(k, dtype=float), "B")


def inverse_power(sigma: float, dim: int = 1) -> Multiplier:
    """A^{-sigma}: |k|^{-2 sigma}"""
    return Multiplier(lambda k: _norm(k) ** (-2.0 * sigma), f"A^-{sigma:g}", dim)


def heat_semigroup(theta: float, t: float, dim: int = 1) -> Multiplier:
    """e^{-A^theta t}"""
    return Multiplier(lambda k: np.exp(-(_norm(k) ** (2.0 * theta)) * t), f"exp(-A^{theta:g} {t:g})", dim)


def mollifier_profile(xi: np.ndarray) -> np.ndarray:
    """1 on |xi| <= 1, smooth monotone decay on (1, 2), 0 beyond"""
    xi = np.abs(np.asarray(xi, dtype=float))
    out = np.where(xi <= 1.0, 1.0, 0.0)
    band = (xi > 1.0) & (xi < 2.0)
    s = xi[band] - 1.0
    out[band] = np.exp(1.0 - 1.0 / (1.0 - s * s))
    return out


def mollifier_symbol(eps: float, k: Union[ModeIndex, np.ndarray]) -> Union[float, np.ndarray]:
    """rho_hat(eps k)"""
    if eps <= 0:
        raise ValueError("eps must be > 0")
    k_arr = np.asarray(k, dtype=float)
    if k_arr.ndim == 0:
        return float(mollifier_profile(np.array([eps * abs(float(k_arr))]))[0])
    if k_arr.ndim == 1 and isinstance(k, tuple):
        return float(mollifier_profile(np.array([eps * np.hypot(*k_arr)]))[0])
    return mollifier_profile(eps * _norm(k_arr))


def mollifier(eps: float, dim: int = 1) -> Multiplier:
    return Multiplier(lambda k: mollifier_profile(eps * _norm(k)), f"rho({eps:g})", dim)


def lattice_spacing(N: int) -> float:
    return 2.0 * np.pi / (2 * N + 1)


def lattice_gradient_symbol(N: int, k: np.ndarray) -> np.ndarray:
    """g_N(k) = (e^{ikh} - 1)/h with h = 2 pi/(2N+1)"""
    h = lattice_spacing(N)
    return (np.exp(1j * h * np.asarray(k, dtype=float)) - 1.0) / h


def lattice_gradient(N: int) -> Multiplier:
    return Multiplier(lambda k: lattice_gradient_symbol(N, k), f"g_{N}")


def lattice_laplacian(N: int) -> Multiplier:
    """|g_N(k)|^2 = 2 h^{-2}(1 - cos kh)"""
    h = lattice_spacing(N)
    return Multiplier(lambda k: 2.0 * (1.0 - np.cos(h * np.asarray(k, dtype=float))) / h ** 2, f"|g_{N}|^2")


def project(x: SpectralField, N: float) -> SpectralField:
    """Pi_N: keep modes with |k| <= N"""
    if N < 1:
        raise ValueError("projection cutoff must be >= 1")
    keep = support_mask(x.K, x.dim, float(N)).reshape(x.coeffs.shape)
    return SpectralField(np.where(keep, x.coeffs, 0.0), dim=x.dim, validate=False)


def apply_multiplier(x: SpectralField, m: Multiplier) -> SpectralField:
    if m.dim != x.dim:
        raise ValueError(f"multiplier {m.label!r} is {m.dim}d, field is {x.dim}d")
    values = m.values(x.K).reshape(x.coeffs.shape)
    return SpectralField(values * x.coeffs, dim=x.dim, validate=False)


def fl_norm(x: SpectralField, p: float, alpha: float) -> float:
    """[sum_k (|k|^alpha |x_k|)^p]^{1/p}; p = inf gives the weighted sup"""
    mask = support_mask(x.K, x.dim)
    weighted = mode_norms(x.K, x.dim)[mask] ** alpha * np.abs(x.flat[mask])
    if weighted.size == 0:
        return 0.0
    if np.isinf(p):
        return float(np.max(weighted))
    if p < 1:
        raise ValueError("p must be >= 1")
    return float(np.sum(weighted ** p) ** (1.0 / p))


def h_norm(x: SpectralField) -> float:
    return fl_norm(x, 2.0, 0.0)


def positive_modes(K: int, dim: int, N: float = None) -> Iterable[int]:
    """Flat indices of one representative of each {k, -k} pair"""
    mask = support_mask(K, dim, N)
    L = mask.size
    idx = np.flatnonzero(mask)
    return idx[idx > (L - 1) // 2]
