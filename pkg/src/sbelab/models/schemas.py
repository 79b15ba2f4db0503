"""
Common data models for the sbelab experiment suite
"""
import math
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Dict, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator


class ModelKind(str, Enum):
    """Supported dynamics"""
    OU = "ou"
    SBE = "sbe"
    DDT = "ddt"
    SS_LATTICE = "ss_lattice"
    NS2D = "ns2d"


class ExperimentKind(str, Enum):
    """Experiments the CLI can run"""
    SIMULATE = "simulate"
    INVARIANCE = "invariance"
    DRIFT_SCALING = "drift-scaling"
    CAUCHY = "cauchy"
    MOLLIFIER_CAUCHY = "mollifier-cauchy"
    ITO_CHECK = "ito-check"
    UNIQUENESS = "uniqueness"
    NS2D_INVARIANCE = "ns2d-invariance"


class MeasureKind(str, Enum):
    """Invariant Gaussian measures"""
    WHITE_NOISE_1D = "white_noise_1d"
    NS_GIBBS_2D = "ns_gibbs_2d"


class Part(str, Enum):
    """Real (+) or imaginary (-) part of a complex coordinate"""
    REAL = "+"
    IMAG = "-"


class CoefficientKind(str, Enum):
    """Energy-sum coefficient families"""
    BURGERS = "burgers"
    DDT = "ddt"
    SS = "ss"
    NS = "ns"


STEP_SAFETY = 0.1


def drift_scale(model: ModelKind, N: int) -> float:
    """
    Stationary size of the explicit drift; the linear part is exact and
    does not restrict the step
    """
    if model == ModelKind.OU:
        return 0.0
    if model in (ModelKind.SBE, ModelKind.DDT):
        return N ** 1.5
    if model == ModelKind.SS_LATTICE:
        return 3.0 * N ** 1.5
    return float(N) ** 2


def max_stable_dt(model: ModelKind, N: int) -> float:
    scale = drift_scale(model, N)
    return math.inf if scale == 0.0 else STEP_SAFETY / scale


class ModelConfig(BaseModel):
    """Parameters of one model run"""
    model_config = ConfigDict(frozen=True)

    model: ModelKind
    theta: float = Field(default=1.0, ge=0.0)
    sigma: float = Field(default=0.0, ge=0.0)
    N: int = Field(ge=1)
    dt: float = Field(gt=0.0)
    T: float = Field(ge=0.0)
    stride: int = Field(default=1, ge=1)
    drift: bool = True
    linear: bool = True
    noise_scale: float = Field(default=1.0, ge=0.0)
    record_noise: bool = False

    @model_validator(mode="after")
    def check_consistency(self):
        if 0.0 < self.T < self.dt:
            raise ValueError(f"T={self.T} is shorter than one step dt={self.dt}")
        if self.model == ModelKind.NS2D and self.sigma <= 0.0:
            raise ValueError("sigma must be > 0 for ns2d")
        if self.drift:
            limit = max_stable_dt(self.model, self.N)
            if self.dt > limit:
                raise ValueError(
                    f"dt={self.dt:g} violates the step-size rule dt <= {limit:.3e} "
                    f"for model={self.model.value}, N={self.N}"
                )
        return self

    @property
    def dim(self) -> int:
        return 2 if self.model == ModelKind.NS2D else 1

    @property
    def n_steps(self) -> int:
        return int(round(self.T / self.dt))

    @property
    def measure(self) -> MeasureKind:
        return MeasureKind.NS_GIBBS_2D if self.model == ModelKind.NS2D else MeasureKind.WHITE_NOISE_1D


class ExperimentSpec(BaseModel):
    """Validated experiment configuration"""
    model_config = ConfigDict(frozen=True)

    experiment: ExperimentKind
    config: ModelConfig
    paths: int = Field(default=256, ge=1)
    modes: Tuple[int, ...] = (1, 2, 4, 8)
    M_list: Tuple[int, ...] = ()
    eps_list: Tuple[float, ...] = ()
    N_list: Tuple[int, ...] = ()
    N_ref: Optional[int] = None
    T_list: Tuple[float, ...] = ()
    dt_list: Tuple[float, ...] = ()
    lambda_list: Tuple[float, ...] = (0.01, 0.02, 0.05, 0.1)
    weight_eps: float = Field(default=0.05, gt=0.0, lt=0.5)
    p: float = Field(default=2.0, ge=1.0)
    mode_k: int = Field(default=2, ge=1)
    seed: int = Field(default=0, ge=0)
    out: Path = Path("runs/latest")

    @model_validator(mode="after")
    def check_lists(self):
        if any(m < 1 or m > self.config.N for m in self.M_list):
            raise ValueError(f"M_list entries must lie in [1, N={self.config.N}]")
        if any(e <= 0 for e in self.eps_list):
            raise ValueError("eps_list entries must be > 0")
        if any(abs(k) < 1 for k in self.modes):
            raise ValueError("modes must be nonzero")
        if self.N_ref is not None and any(n > self.N_ref for n in self.N_list):
            raise ValueError("N_list entries must not exceed N_ref")
        return self

    def physical_columns(self) -> Dict[str, object]:
        """Columns carried by every CSV row"""
        return {
            "experiment": self.experiment.value,
            "seed": self.seed,
            "model": self.config.model.value,
            "theta": self.config.theta,
            "N": self.config.N,
            "dt": self.config.dt,
            "T": self.config.T,
        }


class ScalingFit(BaseModel):
    """Log-log regression result"""
    abscissa: str
    slope: float
    intercept: float
    slope_se: float
    fit_range: Tuple[float, float]
    n_points: int


class QVReport(BaseModel):
    """Discrete quadratic variation across dyadic meshes"""
    levels: List[int]
    meshes: List[float]
    qv: List[float]
    decay_exponent: float


class UniquenessRow(BaseModel):
    """One Galerkin resolution of one path"""
    path: int
    N: int
    A_N: float = Field(ge=0.0)
    Phi_N: float = Field(ge=0.0)
    Q_T: float = Field(ge=0.0)
    Q_T_holder: float = Field(ge=0.0)
    holder_p: float

    @property
    def contraction_holds(self) -> bool:
        return self.Q_T < 0.5


class UniquenessReport(BaseModel):
    """Decay of the Galerkin error against a reference resolution"""
    theta: float
    weight_eps: float
    N_ref: int
    rows: List[UniquenessRow]
    decreasing_fraction: float
    median_slope: float


class RunManifest(BaseModel):
    """Provenance of one run"""
    spec: Dict[str, object]
    code_version: str
    seed: int
    started_at: datetime = Field(default_factory=lambda: datetime.now(timezone.utc))
    wall_time_s: float = 0.0
    files: Dict[str, str] = {}
    gates: Dict[str, bool] = {}
