"""
Invariant Gaussian measures: exact samplers, random streams and Wick moments
"""
from dataclasses import dataclass, replace
from functools import lru_cache
from typing import Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from sbelab.common.utils import stable_hash
from sbelab.models.schemas import MeasureKind
from sbelab.spectral.field import (
    ModeIndex,
    SpectralField,
    mode_norms,
    positive_modes,
    shape_of,
    support_mask,
    wavevectors,
)

MAX_WICK_DEGREE = 8


def _zigzag(k: int) -> int:
    return 2 * k if k >= 0 else -2 * k - 1


@dataclass(frozen=True)
class RngStream:
    """
    Reproducible random stream identified by (seed, experiment, path, purpose).

    ``generator(*key)`` returns a fresh counter-based generator for a
    substream; the same key always replays the same draws, and different
    keys are independent. Per-mode substreams are keyed by the mode alone.
    """
    seed: int
    experiment: str
    path: int = 0
    purpose: str = "default"

    def entropy(self, *key: int) -> List[int]:
        return [
            int(self.seed),
            stable_hash(self.experiment),
            int(self.path),
            stable_hash(self.purpose),
            *(_zigzag(int(k)) for k in key),
        ]

    def generator(self, *key: int) -> np.random.Generator:
        return np.random.Generator(np.random.Philox(np.random.SeedSequence(self.entropy(*key))))

    def fork(self, purpose: str) -> "RngStream":
        return replace(self, purpose=purpose)

    @property
    def stream_id(self) -> Tuple[str, int, str]:
        return (self.experiment, self.path, self.purpose)


def mode_key(K: int, dim: int, slot: int) -> Tuple[int, ...]:
    """Substream key of a flat slot: the integer wavevector"""
    k = wavevectors(K, dim)[slot]
    return (int(k),) if dim == 1 else (int(k[0]), int(k[1]))


@dataclass(frozen=True)
class MeasureSpec:
    """Per-mode variance rule of an invariant Gaussian measure"""
    kind: MeasureKind
    N: int

    @property
    def dim(self) -> int:
        return 2 if self.kind == MeasureKind.NS_GIBBS_2D else 1

    def variance_of(self, k: ModeIndex) -> float:
        norm = float(np.hypot(*k)) if isinstance(k, tuple) else abs(float(k))
        if norm == 0.0 or norm > self.N:
            return 0.0
        return 1.0 if self.kind == MeasureKind.WHITE_NOISE_1D else 1.0 / norm ** 2

    def variances(self, K: Optional[int] = None) -> np.ndarray:
        """E|x_k|^2 for every flat slot of a lattice with cutoff K"""
        return _variances(self.kind, self.N, self.N if K is None else K)


@lru_cache(maxsize=64)
def _variances(kind: MeasureKind, N: int, K: int) -> np.ndarray:
    dim = 2 if kind == MeasureKind.NS_GIBBS_2D else 1
    mask = support_mask(K, dim, float(N))
    v = np.zeros(mask.shape)
    if kind == MeasureKind.WHITE_NOISE_1D:
        v[mask] = 1.0
    else:
        v[mask] = 1.0 / mode_norms(K, dim)[mask] ** 2
    v.setflags(write=False)
    return v


def hermitian_complete(a: np.ndarray, slots: Iterable[int], values: np.ndarray) -> np.ndarray:
    """Write values at slots and their conjugates at the mirrored slots"""
    slots = np.asarray(list(slots), dtype=np.intp)
    a[slots] = values
    a[a.size - 1 - slots] = np.conj(values)
    return a


def circular_normals(gen: np.random.Generator, size) -> np.ndarray:
    """Complex Gaussians with independent parts of variance 1/2 each"""
    z = gen.standard_normal(size=(*np.atleast_1d(size), 2))
    return (z[..., 0] + 1j * z[..., 1]) * np.sqrt(0.5)


def sample(spec: MeasureSpec, rng: RngStream, K: Optional[int] = None) -> SpectralField:
    """
    Exact draw from the measure, embedded on a lattice of cutoff K >= N.

    Each representative mode draws from its own substream, so two lattices
    sharing modes get identical values on them.
    """
    K = spec.N if K is None else K
    if K < spec.N:
        raise ValueError(f"lattice cutoff K={K} is below the measure cutoff N={spec.N}")
    dim = spec.dim
    std = np.sqrt(spec.variances(K))
    slots = positive_modes(K, dim, float(spec.N))
    values = np.array(
        [circular_normals(rng.generator(*mode_key(K, dim, s)), 1)[0] for s in slots],
        dtype=np.complex128,
    )
    a = np.zeros(std.size, dtype=np.complex128)
    hermitian_complete(a, slots, values * std[slots])
    return SpectralField(a.reshape(shape_of(K, dim)), dim=dim, validate=False)


def sample_ensemble(
    spec: MeasureSpec, seed: int, experiment: str, paths: int, K: Optional[int] = None,
    purpose: str = "initial",
) -> np.ndarray:
    """Flat coefficient arrays of ``paths`` independent draws, shape (paths, L)"""
    return np.stack([
        sample(spec, RngStream(seed, experiment, p, purpose), K).flat for p in range(paths)
    ])


def complex_bm_increment(
    delta: float, rng: Union[RngStream, np.random.Generator], size=None
) -> Union[complex, np.ndarray]:
    """
    Increment of a unit-rate complex Brownian motion over a step delta.

    A stream replays the same draws on every call; pass ``size`` to draw many.
    """
    if delta <= 0:
        raise ValueError("delta must be > 0")
    gen = rng.generator() if isinstance(rng, RngStream) else rng
    z = circular_normals(gen, 1 if size is None else size) * np.sqrt(delta)
    return complex(z[0]) if size is None else z


Factor = Union[ModeIndex, Tuple[ModeIndex, bool]]


def _as_mode(factor: Factor) -> Tuple[int, ...]:
    """x_k -> k, conj(x_k) = x_{-k} -> -k"""
    if isinstance(factor, tuple) and len(factor) == 2 and isinstance(factor[1], bool):
        k, conj = factor
    else:
        k, conj = factor, False
    k = tuple(int(c) for c in k) if isinstance(k, tuple) else (int(k),)
    return tuple(-c for c in k) if conj else k


def _wick(modes: Sequence[Tuple[int, ...]], spec: MeasureSpec) -> float:
    if not modes:
        return 1.0
    first, rest = modes[0], modes[1:]
    total = 0.0
    for j, partner in enumerate(rest):
        if all(a == -b for a, b in zip(first, partner)):
            v = spec.variance_of(first if len(first) == 2 else first[0])
            if v:
                total += v * _wick(rest[:j] + rest[j + 1:], spec)
    return total


def wick_moment_oracle(spec: MeasureSpec, monomial: Sequence[Factor]) -> float:
    """
    E[prod of factors] under the measure by summing over pairings.

    Factors are modes (x_k) or (mode, conjugate) pairs; only pairs k, -k
    correlate, with E[x_k x_{-k}] = v(k).
    """
    if len(monomial) > MAX_WICK_DEGREE:
        raise ValueError(f"monomial degree {len(monomial)} exceeds {MAX_WICK_DEGREE}")
    if len(monomial) % 2:
        return 0.0
    return _wick([_as_mode(f) for f in monomial], spec)
