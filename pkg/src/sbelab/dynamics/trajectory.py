"""
Path state and trajectory recording
"""
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from sbelab.common.errors import TrajectoryError
from sbelab.spectral.field import SpectralField, shape_of


@dataclass(frozen=True)
class PathState:
    """Time, field and step counter of one path"""
    t: float
    u: SpectralField
    step: int = 0


@dataclass
class TrajectoryRecorder:
    """
    Fields sampled every ``stride`` steps, first record at t = 0.

    When noise recording is on, every step's additive noise term is kept
    (one flat array per step, independent of the stride).
    """
    K: int
    dim: int
    dt: float
    stride: int = 1
    record_noise: bool = False
    _times: List[float] = field(default_factory=list, repr=False)
    _fields: List[np.ndarray] = field(default_factory=list, repr=False)
    _noise: List[np.ndarray] = field(default_factory=list, repr=False)

    def append(self, t: float, a: np.ndarray):
        if self._times and t <= self._times[-1]:
            raise TrajectoryError(f"record time {t} does not increase past {self._times[-1]}")
        if not self._times and t != 0.0:
            raise TrajectoryError("first record must be at t = 0")
        self._times.append(float(t))
        self._fields.append(np.array(a, dtype=np.complex128).ravel())

    def append_noise(self, eta: np.ndarray):
        if self.record_noise:
            self._noise.append(np.array(eta, dtype=np.complex128).ravel())

    def __len__(self) -> int:
        return len(self._times)

    @property
    def times(self) -> np.ndarray:
        return np.asarray(self._times)

    @property
    def fields(self) -> np.ndarray:
        """Shape (records, L)"""
        return np.stack(self._fields) if self._fields else np.zeros((0, (2 * self.K + 1) ** self.dim), complex)

    @property
    def noise(self) -> Optional[np.ndarray]:
        """Per-step noise terms, shape (steps, L), or None when not recorded"""
        if not self.record_noise:
            return None
        return np.stack(self._noise) if self._noise else np.zeros((0, (2 * self.K + 1) ** self.dim), complex)

    @property
    def record_dt(self) -> float:
        return self.dt * self.stride

    def field_at(self, j: int) -> SpectralField:
        return SpectralField(self._fields[j].reshape(shape_of(self.K, self.dim)), dim=self.dim, validate=False)

    def require_noise(self) -> np.ndarray:
        if not self.record_noise:
            raise TrajectoryError("trajectory was recorded without noise increments")
        return self.noise
