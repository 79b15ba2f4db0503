"""
Poisson solution, generator, Dirichlet energies, energy sums, drift
accumulators and the forward/backward martingale decomposition.

Generator convention (the OU dynamics is normalized so the invariant
Gaussian measure with per-mode variance v is exactly stationary):

    L0 phi = sum_k lam_k ( -x_k D_k phi + v_k D_{-k} D_k phi ),  lam_k = |k|^{2 theta}

so a martingale M(h) built from a real observable h has
d[M]/dt = 2 sum_k lam_k v_k |D_k h|^2, i.e. 4 times the energy below when v = 1.
"""
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Iterable, List, Optional, Sequence

import numpy as np

from sbelab.common.errors import TrajectoryError
from sbelab.dynamics.trajectory import TrajectoryRecorder
from sbelab.measures.gaussian import MeasureSpec, wick_moment_oracle
from sbelab.models.schemas import CoefficientKind, MeasureKind, Part
from sbelab.spectral.field import (
    ModeIndex,
    SpectralField,
    flat_index,
    lattice_gradient_symbol,
    mode_norms,
    mollifier_profile,
    shape_of,
    support_mask,
    wavevectors,
)
from sbelab.spectral.forms import QuadraticForm, mode_weights, poisson_form
from sbelab.spectral.nonlinear import burgers_flat

FlatMap = Callable[[np.ndarray], np.ndarray]


# ---------------------------------------------------------------------------
# Poisson solution and generator
# ---------------------------------------------------------------------------

@lru_cache(maxsize=32)
def cached_poisson_form(K: int, N: int, theta: float) -> QuadraticForm:
    return poisson_form(K, N, theta)


def h_poisson(x: SpectralField, N: int, theta: float) -> SpectralField:
    """(H_N x)_k = -ik sum x_{k1} x_{k2} / (|k1|^{2 theta} + |k2|^{2 theta})"""
    if N > x.K:
        raise ValueError(f"cutoff N={N} exceeds the field cutoff K={x.K}")
    return cached_poisson_form(x.K, N, float(theta))(x)


def unit_variance(K: int, dim: int) -> np.ndarray:
    return support_mask(K, dim).astype(float)


def generator_flat(form: QuadraticForm, a: np.ndarray, theta: float, variance: Optional[np.ndarray] = None) -> np.ndarray:
    """
    L0 applied to every output coordinate of ``form`` at the flat point a.

    For a term c x_{k1} x_{k2} the first-order part is -(lam_{k1} + lam_{k2}) c x_{k1} x_{k2};
    the second-order part only survives on pairs k1 = -k2, which feed the zero mode.
    """
    lam = mode_weights(form.K, form.dim, 2.0 * theta)
    v = unit_variance(form.K, form.dim) if variance is None else variance
    terms = -(lam[form.i1] + lam[form.i2]) * form.q * a[form.i1] * a[form.i2]
    out = np.bincount(form.out, weights=terms.real, minlength=form.size) + 1j * np.bincount(
        form.out, weights=terms.imag, minlength=form.size
    )
    diagonal = form.i1 == form.size - 1 - form.i2
    if np.any(diagonal):
        const = 2.0 * form.q[diagonal] * lam[form.i1[diagonal]] * v[form.i1[diagonal]]
        out += np.bincount(form.out[diagonal], weights=const.real, minlength=form.size) + 1j * np.bincount(
            form.out[diagonal], weights=const.imag, minlength=form.size
        )
    if form.linear is not None:
        out = out - lam * form.linear * a
    return out


def generator_apply(form: QuadraticForm, x: SpectralField, theta: float) -> SpectralField:
    if x.K != form.K or x.dim != form.dim:
        raise ValueError("field and form live on different lattices")
    return SpectralField(generator_flat(form, x.flat, theta).reshape(shape_of(x.K, x.dim)), dim=x.dim, validate=False)


def observable_gradient(form: QuadraticForm, a: np.ndarray, slot: int, part: Part) -> np.ndarray:
    """
    D_q h for h = Re (Q x)_k (part +) or Im (Q x)_k (part -), all q.

    Uses conj (Q x)_k = (Q x)_{-k}.
    """
    g_k = form.gradient_flat(a, slot)
    g_mk = form.gradient_flat(a, form.size - 1 - slot)
    if Part(part) == Part.REAL:
        return 0.5 * (g_k + g_mk)
    return (g_k - g_mk) / 2j


def observable_value(form: QuadraticForm, a: np.ndarray, slot: int, part: Part) -> float:
    q, i1, i2 = form.terms_of(slot)
    value = np.sum(q * a[i1] * a[i2])
    if form.linear is not None:
        value += form.linear[slot] * a[slot]
    return float(value.real if Part(part) == Part.REAL else value.imag)


def dirichlet_energy(form: QuadraticForm, k: ModeIndex, part: Part, x: SpectralField, theta: float) -> float:
    """E^theta(h)(x) = 1/2 sum_q |q|^{2 theta} |D_q h(x)|^2"""
    lam = mode_weights(form.K, form.dim, 2.0 * theta)
    grad = observable_gradient(form, x.flat, flat_index(k, form.K), part)
    return float(0.5 * np.sum(lam * np.abs(grad) ** 2))


def gradient_matrix(form: QuadraticForm, slot: int, part: Part) -> np.ndarray:
    """G with D_q h(x) = sum_j G[q, j] x_j (quadratic part only)"""
    L = form.size
    G = np.zeros((L, L), dtype=np.complex128)
    for s, weight in ((slot, 1.0), (L - 1 - slot, 1.0 if Part(part) == Part.REAL else -1.0)):
        q, i1, i2 = form.terms_of(s)
        np.add.at(G, (i1, i2), weight * q)
        np.add.at(G, (i2, i1), weight * q)
    return G / 2.0 if Part(part) == Part.REAL else G / 2j


def expected_dirichlet_energy(
    form: QuadraticForm,
    k: ModeIndex,
    part: Part,
    theta: float,
    spec: Optional[MeasureSpec] = None,
    minus: Optional[QuadraticForm] = None,
) -> float:
    """
    E_mu[E^theta(h)] for a quadratic observable, by Gaussian pairing.

    ``minus`` subtracts a second form on the same lattice (h = Q - Q').
    """
    spec = MeasureSpec(MeasureKind.WHITE_NOISE_1D, form.K) if spec is None else spec
    slot = flat_index(k, form.K)
    G = gradient_matrix(form, slot, part)
    if minus is not None:
        G = G - gradient_matrix(minus, slot, part)
    kv = wavevectors(form.K, form.dim)
    mask = support_mask(form.K, form.dim)
    second = np.zeros(form.size)
    for j in np.flatnonzero(mask):
        mode = int(kv[j]) if form.dim == 1 else (int(kv[j][0]), int(kv[j][1]))
        second[j] = wick_moment_oracle(spec, [mode, (mode, True)])
    lam = mode_weights(form.K, form.dim, 2.0 * theta)
    return float(0.5 * np.sum(lam[:, None] * np.abs(G) ** 2 * second[None, :]))


# ---------------------------------------------------------------------------
# Energy sums I_N(k), I_{N,M}(k)
# ---------------------------------------------------------------------------

def _pairs(k: ModeIndex, N: int):
    """All (k1, k2) with k1 + k2 = k, 0 < |k1|, |k2| <= N"""
    if isinstance(k, tuple):
        r = np.arange(-N, N + 1)
        kx, ky = np.meshgrid(r, r, indexing="ij")
        k1 = np.stack([kx.ravel(), ky.ravel()], axis=1)
        k2 = np.asarray(k)[None, :] - k1
        n1, n2 = np.hypot(*k1.T), np.hypot(*k2.T)
    else:
        k1 = np.arange(-N, N + 1)
        k2 = k - k1
        n1, n2 = np.abs(k1).astype(float), np.abs(k2).astype(float)
    keep = (n1 > 0) & (n2 > 0) & (n1 <= N) & (n2 <= N)
    return k1[keep], k2[keep], n1[keep], n2[keep]


def energy_coefficient(
    kind: CoefficientKind, k: ModeIndex, k1: np.ndarray, k2: np.ndarray,
    n1: np.ndarray, n2: np.ndarray, N: int, theta: float, sigma: float,
) -> np.ndarray:
    kind = CoefficientKind(kind)
    nk = float(np.hypot(*k)) if isinstance(k, tuple) else abs(float(k))
    if kind == CoefficientKind.BURGERS:
        return nk ** 2 / (n1 ** (2 * theta) + n2 ** (2 * theta))
    if kind == CoefficientKind.DDT:
        return nk ** (2 - 4 * sigma) / (n1 ** (4 * sigma) * n2 ** (4 * sigma) * (n1 ** 2 + n2 ** 2))
    if kind == CoefficientKind.SS:
        g = lambda q: np.abs(lattice_gradient_symbol(N, q)) ** 2
        return g(np.asarray(k)) / (g(k1) + g(k2))
    # 2d Navier-Stokes energy weight, |k2|^{-2} folded in
    return n1 ** (2 * sigma) * n1 ** 2 / (n1 ** (2 + 2 * sigma) + n2 ** (2 + 2 * sigma)) ** 2


def i_sum(
    k: ModeIndex, N: int, theta: float = 1.0,
    kind: CoefficientKind = CoefficientKind.BURGERS, sigma: float = 0.0,
) -> float:
    """I_N(k) = sum over k1 + k2 = k with |k|, |k1|, |k2| <= N of c(k, k1, k2)"""
    nk = float(np.hypot(*k)) if isinstance(k, tuple) else abs(float(k))
    if nk == 0 or nk > N:
        return 0.0
    k1, k2, n1, n2 = _pairs(k, N)
    return float(np.sum(energy_coefficient(kind, k, k1, k2, n1, n2, N, theta, sigma)))


def i_sum_diff(
    k: ModeIndex, N: int, M: int, theta: float = 1.0,
    kind: CoefficientKind = CoefficientKind.BURGERS, sigma: float = 0.0,
) -> float:
    """I_{N,M}(k): the sum weighted by |1_N - 1_M| of the triple indicators"""
    hi, lo = max(N, M), min(N, M)
    nk = float(np.hypot(*k)) if isinstance(k, tuple) else abs(float(k))
    if hi == lo or nk == 0 or nk > hi:
        return 0.0
    k1, k2, n1, n2 = _pairs(k, hi)
    inside_lo = (n1 <= lo) & (n2 <= lo) & (nk <= lo)
    c = energy_coefficient(kind, k, k1, k2, n1, n2, hi, theta, sigma)
    return float(np.sum(c[~inside_lo]))


# ---------------------------------------------------------------------------
# Drift accumulators
# ---------------------------------------------------------------------------

@dataclass
class DriftAccumulator:
    """Time-integrated drift at recorded times for a set of tracked modes"""
    label: str
    times: np.ndarray
    modes: List[ModeIndex]
    values: np.ndarray  # (records, modes), complex

    def sup_abs(self) -> np.ndarray:
        """sup over recorded times of |value|, per mode"""
        return np.max(np.abs(self.values), axis=0) if len(self.times) else np.zeros(len(self.modes))

    def abs_at_end(self) -> np.ndarray:
        return np.abs(self.values[-1])

    def component(self, j: int, part: Part = Part.REAL) -> np.ndarray:
        v = self.values[:, j]
        return v.real if Part(part) == Part.REAL else v.imag

    def __sub__(self, other: "DriftAccumulator") -> "DriftAccumulator":
        if self.modes != other.modes or not np.array_equal(self.times, other.times):
            raise ValueError("accumulators track different modes or times")
        return DriftAccumulator(f"{self.label}-{other.label}", self.times, self.modes, self.values - other.values)


def _slots(traj: TrajectoryRecorder, modes: Iterable[ModeIndex]) -> np.ndarray:
    return np.array([flat_index(k, traj.K) for k in modes], dtype=np.intp)


def _integrate(traj: TrajectoryRecorder, modes: Sequence[ModeIndex], integrand: FlatMap, label: str) -> DriftAccumulator:
    modes = list(modes)
    slots = _slots(traj, modes)
    fields = traj.fields
    dt = traj.record_dt
    values = np.zeros((len(fields), len(slots)), dtype=np.complex128)
    for j in range(1, len(fields)):
        values[j] = values[j - 1] + dt * integrand(fields[j - 1])[slots]
    return DriftAccumulator(label, traj.times, modes, values)


def accumulate_drift(
    traj: TrajectoryRecorder, M: int, modes: Sequence[ModeIndex], drift: Optional[FlatMap] = None,
) -> DriftAccumulator:
    """G^M_t = int_0^t F_M(u_s) ds, left-endpoint rule on the recorded grid"""
    if M > traj.K:
        raise ValueError(f"M={M} exceeds the trajectory cutoff K={traj.K}")
    drift = drift or (lambda a: burgers_flat(a, traj.K, M))
    return _integrate(traj, modes, drift, f"G^{M}")


def accumulate_mild_drift(
    traj: TrajectoryRecorder, M: int, theta: float, modes: Sequence[ModeIndex],
    drift: Optional[FlatMap] = None,
) -> DriftAccumulator:
    """G~^M_t = int_0^t e^{-A^theta (t-s)} F_M(u_s) ds by the exact one-step recursion"""
    if M > traj.K:
        raise ValueError(f"M={M} exceeds the trajectory cutoff K={traj.K}")
    drift = drift or (lambda a: burgers_flat(a, traj.K, M))
    modes = list(modes)
    slots = _slots(traj, modes)
    lam = mode_norms(traj.K, traj.dim)[slots] ** (2.0 * theta)
    dt = traj.record_dt
    decay = np.exp(-lam * dt)
    phi1 = -np.expm1(-lam * dt) / lam
    fields = traj.fields
    values = np.zeros((len(fields), len(slots)), dtype=np.complex128)
    for j in range(1, len(fields)):
        values[j] = decay * values[j - 1] + phi1 * drift(fields[j - 1])[slots]
    return DriftAccumulator(label=f"G~^{M}", times=traj.times, modes=modes, values=values)


def mollified_drift(traj: TrajectoryRecorder, eps: float, modes: Sequence[ModeIndex]) -> DriftAccumulator:
    """B^eps_t = int_0^t F(rho^eps * u_s) ds"""
    if eps <= 0:
        raise ValueError("eps must be > 0")
    rho = mollifier_profile(eps * mode_norms(traj.K, traj.dim))
    return _integrate(traj, modes, lambda a: burgers_flat(rho * a, traj.K, traj.K), f"B^{eps:g}")


# ---------------------------------------------------------------------------
# Martingale decomposition
# ---------------------------------------------------------------------------

@dataclass
class MartingalePair:
    """Forward and backward martingales of one observable along one path"""
    times: np.ndarray
    forward: np.ndarray
    backward: np.ndarray
    qv_forward: float
    qv_backward: float
    key_residual: np.ndarray
    energy_integral: float
    noise_residual: Optional[float] = None
    extra: dict = field(default_factory=dict)

    @property
    def sup_key_residual(self) -> float:
        return float(np.max(np.abs(self.key_residual))) if self.key_residual.size else 0.0


def martingale_decompose(
    traj: TrajectoryRecorder,
    form: QuadraticForm,
    k: ModeIndex,
    part: Part,
    theta: float,
    drift: Optional[FlatMap] = None,
    variance: Optional[np.ndarray] = None,
) -> MartingalePair:
    """
    Split h(u_t) - h(u_0) into forward and backward martingale parts.

    h = Re/Im of coordinate k of ``form``; ``drift`` is the model's
    nonlinearity (None for the pure OU dynamics). Forward increments use
    L = L0 + F.D, backward increments run on the reversed path with L0 - F.D.
    """
    noise = traj.require_noise()
    if form.K != traj.K or form.dim != traj.dim:
        raise TrajectoryError("observable and trajectory live on different lattices")
    slot = flat_index(k, form.K)
    v = unit_variance(form.K, form.dim) if variance is None else variance
    lam = mode_weights(form.K, form.dim, 2.0 * theta)
    fields = traj.fields
    n = len(fields) - 1
    dt = traj.record_dt

    h = np.empty(n + 1)
    l0h = np.empty(n + 1)
    fdh = np.zeros(n + 1)
    qv_rate = np.empty(n + 1)
    grads = []
    for j, a in enumerate(fields):
        h[j] = observable_value(form, a, slot, part)
        gen = generator_flat(form, a, theta, v)
        l0h[j] = gen[slot].real if Part(part) == Part.REAL else gen[slot].imag
        grad = observable_gradient(form, a, slot, part)
        grads.append(grad)
        if drift is not None:
            fdh[j] = float(np.sum(drift(a) * grad).real)
        qv_rate[j] = 2.0 * float(np.sum(lam * v * np.abs(grad) ** 2))

    forward = np.zeros(n + 1)
    backward = np.zeros(n + 1)
    forward[1:] = np.cumsum(np.diff(h) - dt * (l0h[:-1] + fdh[:-1]))
    h_rev, gen_rev = h[::-1], (l0h - fdh)[::-1]
    backward[1:] = np.cumsum(np.diff(h_rev) - dt * gen_rev[:-1])

    lhs = np.concatenate([[0.0], np.cumsum(2.0 * dt * l0h[:-1])])
    rhs = -forward + backward[::-1] - backward[-1]
    noise_residual = None
    if traj.stride == 1 and len(noise) == n:
        ito = np.concatenate([[0.0], np.cumsum([float(np.sum(grads[i] * noise[i]).real) for i in range(n)])])
        noise_residual = float(np.max(np.abs(forward - ito)))

    return MartingalePair(
        times=traj.times,
        forward=forward,
        backward=backward,
        qv_forward=float(np.sum(np.diff(forward) ** 2)),
        qv_backward=float(np.sum(np.diff(backward) ** 2)),
        key_residual=lhs - rhs,
        energy_integral=float(dt * np.sum(qv_rate[:-1])),
        noise_residual=noise_residual,
    )
