"""
Exponential Euler integrators for the five models.

Every model is advanced on its mild form

    u_k <- e^{-lam_k dt} u_k + phi1(lam_k, dt) D_k(u) + eta_k,

with eta the exact Ornstein-Uhlenbeck noise term, so the linear part is
integrated exactly and the stated invariant measure is stationary for it.
"""
import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Optional

import numpy as np

from sbelab.common.config import get_settings
from sbelab.common.errors import NumericBlowUpError
from sbelab.common.utils import RunAuditLogger
from sbelab.dynamics.trajectory import PathState, TrajectoryRecorder
from sbelab.measures.gaussian import (
    MeasureSpec,
    RngStream,
    circular_normals,
    mode_key,
    sample,
)
from sbelab.models.schemas import ModelConfig, ModelKind
from sbelab.spectral.field import (
    SpectralField,
    lattice_laplacian,
    mode_norms,
    positive_modes,
    project,
    shape_of,
    support_mask,
)
from sbelab.spectral.nonlinear import burgers_flat, ddt_flat, ns_flat, ss_flat

NOISE_BLOCK = 512

audit_logger = RunAuditLogger("dynamics")


def dissipation_rates(cfg: ModelConfig, K: Optional[int] = None) -> np.ndarray:
    """lam_k per flat slot (0 off the support)"""
    K = cfg.N if K is None else K
    norms = mode_norms(K, cfg.dim)
    mask = support_mask(K, cfg.dim, float(cfg.N))
    lam = np.zeros(norms.shape)
    if cfg.model == ModelKind.SS_LATTICE:
        lam[mask] = lattice_laplacian(cfg.N).values(K).real[mask]
    elif cfg.model == ModelKind.NS2D:
        lam[mask] = norms[mask] ** (2.0 + 2.0 * cfg.sigma)
    else:
        lam[mask] = norms[mask] ** (2.0 * cfg.theta)
    return lam


class NoiseSource:
    """
    Unit circular Gaussians xi_k per step, Hermitian-completed.

    Mode k at step n reads row n % NOISE_BLOCK of the block drawn from the
    substream keyed (k, n // NOISE_BLOCK), so the draws depend on the mode
    and step only, never on the lattice they are used in.
    """

    def __init__(self, rng: RngStream, K: int, dim: int, N: float):
        self.rng = rng
        self.K = K
        self.dim = dim
        self.slots = positive_modes(K, dim, N)
        self.keys = [mode_key(K, dim, s) for s in self.slots]
        self.size = support_mask(K, dim).size
        self._block_index = -1
        self._block = None

    def _load(self, block: int):
        self._block = np.stack(
            [circular_normals(self.rng.generator(*key, block), NOISE_BLOCK) for key in self.keys],
            axis=1,
        ) if self.keys else np.zeros((NOISE_BLOCK, 0), dtype=np.complex128)
        self._block_index = block

    def draw(self, step: int) -> np.ndarray:
        block, row = divmod(step, NOISE_BLOCK)
        if block != self._block_index:
            self._load(block)
        xi = np.zeros(self.size, dtype=np.complex128)
        values = self._block[row]
        xi[self.slots] = values
        xi[self.size - 1 - self.slots] = np.conj(values)
        return xi


@dataclass(frozen=True)
class Stepper:
    """Precomputed per-mode factors of one model on one lattice"""
    cfg: ModelConfig
    K: int
    decay: np.ndarray
    phi1: np.ndarray
    amplitude: np.ndarray
    drift: Optional[Callable[[np.ndarray], np.ndarray]]

    def advance(self, a: np.ndarray, xi: np.ndarray):
        """One step on a flat array; returns (new array, noise term)"""
        eta = self.amplitude * xi
        if self.drift is None:
            return self.decay * a + eta, eta
        return self.decay * a + self.phi1 * self.drift(a) + eta, eta


def model_drift(cfg: ModelConfig, K: Optional[int] = None) -> Optional[Callable[[np.ndarray], np.ndarray]]:
    """Flat-array drift of the model on a lattice of cutoff K (None for OU)"""
    K = cfg.N if K is None else K
    N = cfg.N
    if cfg.model in (ModelKind.SBE, ModelKind.DDT):
        if cfg.model == ModelKind.DDT and cfg.sigma > 0:
            return lambda a: ddt_flat(a, K, N, cfg.sigma)
        return lambda a: burgers_flat(a, K, N)
    if cfg.model == ModelKind.SS_LATTICE:
        return lambda a: ss_flat(a, N)
    if cfg.model == ModelKind.NS2D:
        return lambda a: ns_flat(a, K, N)
    return None


@lru_cache(maxsize=32)
def build_stepper(cfg: ModelConfig, K: Optional[int] = None) -> Stepper:
    K = cfg.N if K is None else K
    if K < cfg.N:
        raise ValueError(f"lattice cutoff K={K} is below the model cutoff N={cfg.N}")
    if cfg.model == ModelKind.SS_LATTICE and K != cfg.N:
        raise ValueError("the lattice model lives exactly on [-N, N]")
    mask = support_mask(K, cfg.dim, float(cfg.N))
    variance = MeasureSpec(cfg.measure, cfg.N).variances(K)
    if cfg.linear:
        lam = dissipation_rates(cfg, K)
        decay = np.where(mask, np.exp(-lam * cfg.dt), 0.0)
        phi1 = np.zeros_like(lam)
        phi1[mask] = -np.expm1(-lam[mask] * cfg.dt) / lam[mask]
        amplitude = cfg.noise_scale * np.sqrt((1.0 - decay ** 2) * variance)
    else:
        decay = mask.astype(float)
        phi1 = np.where(mask, cfg.dt, 0.0)
        amplitude = np.zeros(mask.shape)
    amplitude = np.where(mask, amplitude, 0.0)
    drift = model_drift(cfg, K) if cfg.drift and cfg.model != ModelKind.OU else None
    return Stepper(cfg, K, decay, phi1, amplitude, drift)


def _check_norm(a: np.ndarray, t: float):
    norm = float(np.sqrt(np.sum(np.abs(a) ** 2)))
    threshold = get_settings().blowup_threshold
    if not np.isfinite(norm) or norm > threshold:
        raise NumericBlowUpError(
            f"H-norm {norm:.3e} exceeded {threshold:.1e} at t={t:.6g}", time=t, norm=norm
        )


def _step(state: PathState, cfg: ModelConfig, rng: RngStream, noise: Optional[NoiseSource]):
    stepper = build_stepper(cfg, state.u.K)
    if noise is None:
        noise = NoiseSource(rng.fork("noise"), state.u.K, cfg.dim, float(cfg.N))
    a, _ = stepper.advance(state.u.flat, noise.draw(state.step))
    t = state.t + cfg.dt
    _check_norm(a, t)
    u = SpectralField(a.reshape(shape_of(state.u.K, cfg.dim)), dim=cfg.dim, validate=False)
    return PathState(t=t, u=u, step=state.step + 1)


def _require(cfg: ModelConfig, *kinds: ModelKind):
    if cfg.model not in kinds:
        raise ValueError(f"model {cfg.model.value} is not handled here (expected {[k.value for k in kinds]})")


def ou_step(state: PathState, cfg: ModelConfig, rng: RngStream, noise: Optional[NoiseSource] = None) -> PathState:
    """Exact Ornstein-Uhlenbeck transition over one step"""
    _require(cfg, ModelKind.OU)
    return _step(state, cfg, rng, noise)


def sbe_step(state: PathState, cfg: ModelConfig, rng: RngStream, noise: Optional[NoiseSource] = None) -> PathState:
    """Galerkin Burgers (or its smoothed variant) with the OU noise term"""
    _require(cfg, ModelKind.SBE, ModelKind.DDT)
    return _step(state, cfg, rng, noise)


def ss_step(state: PathState, cfg: ModelConfig, rng: RngStream, noise: Optional[NoiseSource] = None) -> PathState:
    _require(cfg, ModelKind.SS_LATTICE)
    return _step(state, cfg, rng, noise)


def ns_step(state: PathState, cfg: ModelConfig, rng: RngStream, noise: Optional[NoiseSource] = None) -> PathState:
    _require(cfg, ModelKind.NS2D)
    return _step(state, cfg, rng, noise)


def initial_field(cfg: ModelConfig, rng: RngStream, K: Optional[int] = None) -> SpectralField:
    """Fresh draw from the model's invariant measure"""
    return sample(MeasureSpec(cfg.measure, cfg.N), rng.fork("initial"), cfg.N if K is None else K)


def simulate_path(
    cfg: ModelConfig,
    rng: RngStream,
    initial: Optional[SpectralField] = None,
) -> TrajectoryRecorder:
    """
    Run one path from an invariant sample (or ``initial``), recording every
    ``cfg.stride`` steps
    """
    u0 = initial_field(cfg, rng) if initial is None else initial
    if u0.dim != cfg.dim:
        raise ValueError(f"initial field is {u0.dim}d, model {cfg.model.value} is {cfg.dim}d")
    if u0.K > cfg.N:
        u0 = project(u0, cfg.N).with_cutoff(cfg.N)
    elif u0.K < cfg.N:
        u0 = u0.with_cutoff(cfg.N)
    K = cfg.N
    stepper = build_stepper(cfg, K)
    noise = NoiseSource(rng.fork("noise"), K, cfg.dim, float(cfg.N))
    recorder = TrajectoryRecorder(K=K, dim=cfg.dim, dt=cfg.dt, stride=cfg.stride, record_noise=cfg.record_noise)
    a = np.array(u0.flat, dtype=np.complex128)
    recorder.append(0.0, a)
    for n in range(cfg.n_steps):
        a, eta = stepper.advance(a, noise.draw(n))
        t = (n + 1) * cfg.dt
        try:
            _check_norm(a, t)
        except NumericBlowUpError as e:
            audit_logger.log_event(
                rng.experiment, "simulate_path", "blow_up",
                {"path": rng.path, "model": cfg.model.value, "N": cfg.N, "time": e.time, "norm": e.norm},
                level=logging.ERROR,
            )
            raise
        recorder.append_noise(eta)
        if (n + 1) % cfg.stride == 0:
            recorder.append(t, a)
    return recorder
