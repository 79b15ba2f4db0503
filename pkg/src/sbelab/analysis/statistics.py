"""
Ensemble estimators and log-log regression
"""
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import stats
from scipy.special import logsumexp
from sklearn.linear_model import LinearRegression

from sbelab.analysis.drift import DriftAccumulator
from sbelab.common.config import get_settings
from sbelab.common.errors import EstimatorError
from sbelab.common.utils import get_logger
from sbelab.measures.gaussian import MeasureSpec, wick_moment_oracle
from sbelab.models.schemas import QVReport, ScalingFit
from sbelab.spectral.field import ModeIndex, flat_index

logger = get_logger(__name__)

MIN_BATCH_PATHS = 16
RECOMMENDED_PATHS = 32
STATIONARITY_PATHS = 256
TOP_SHARE_LIMIT = 0.5


def batch_means(samples: np.ndarray, batches: Optional[int] = None) -> Tuple[float, float]:
    """Mean and its batch-means standard error"""
    samples = np.asarray(samples, dtype=float).ravel()
    batches = batches or get_settings().batch_count
    if samples.size < batches:
        raise EstimatorError(
            f"{samples.size} samples cannot fill {batches} batches",
            detail={"samples": int(samples.size), "batches": batches},
        )
    means = np.array([b.mean() for b in np.array_split(samples, batches)])
    return float(samples.mean()), float(means.std(ddof=1) / np.sqrt(batches))


def lp_norm(samples: np.ndarray, p: float = 2.0) -> Tuple[float, float]:
    """(E|S|^p)^{1/p} with a delta-method batch-means error"""
    samples = np.abs(np.asarray(samples, dtype=float))
    if samples.size < MIN_BATCH_PATHS:
        raise EstimatorError(f"need at least {MIN_BATCH_PATHS} paths, got {samples.size}")
    if samples.size < RECOMMENDED_PATHS:
        logger.warning("small ensemble", extra={"paths": int(samples.size), "recommended": RECOMMENDED_PATHS})
    moment, moment_se = batch_means(samples ** p)
    if moment == 0.0:
        return 0.0, 0.0
    estimate = moment ** (1.0 / p)
    return float(estimate), float(moment_se * estimate / (p * moment))


def lp_sup_norm(ensemble: Sequence[DriftAccumulator], k: ModeIndex, p: float = 2.0) -> Tuple[float, float]:
    """|| sup_t |(G_t)_k| ||_{L^p} over the ensemble, with standard error"""
    if not ensemble:
        raise EstimatorError("empty ensemble")
    j = ensemble[0].modes.index(k)
    return lp_norm(np.array([acc.sup_abs()[j] for acc in ensemble]), p)


def scaling_regression(
    points: Sequence[Tuple[float, float, float]],
    abscissa: str = "|k|",
    min_points: int = 5,
) -> ScalingFit:
    """
    Weighted least squares of log estimate on log abscissa.

    Weights are 1/var(log y) with var(log y) = (se/y)^2; equal weights when
    no point carries an error.
    """
    if len(points) < min_points:
        raise EstimatorError(f"scaling fit needs at least {min_points} points, got {len(points)}")
    x, y, se = (np.asarray(c, dtype=float) for c in zip(*points))
    if np.any(y <= 0) or np.any(x <= 0):
        raise EstimatorError("scaling fit needs positive abscissae and estimates", detail={"y": y.tolist()})
    X, Y = np.log(x), np.log(y)
    rel = se / y
    if np.all(rel > 0):
        w = 1.0 / rel ** 2
    else:
        w = np.ones_like(X)
    w = w * (len(w) / w.sum())

    reg = LinearRegression()
    reg.fit(X.reshape(-1, 1), Y, sample_weight=w)
    slope, intercept = float(reg.coef_[0]), float(reg.intercept_)

    resid = Y - reg.predict(X.reshape(-1, 1))
    xbar = np.sum(w * X) / np.sum(w)
    sxx = float(np.sum(w * (X - xbar) ** 2))
    dof = max(len(X) - 2, 1)
    slope_se = float(np.sqrt(np.sum(w * resid ** 2) / dof / sxx)) if sxx > 0 else float("inf")

    return ScalingFit(
        abscissa=abscissa,
        slope=slope,
        intercept=intercept,
        slope_se=slope_se,
        fit_range=(float(x.min()), float(x.max())),
        n_points=len(points),
    )


def stationarity_test(
    fields: np.ndarray,
    spec: MeasureSpec,
    modes: Sequence[ModeIndex],
    K: Optional[int] = None,
) -> pd.DataFrame:
    """
    Per-mode z-scores of E|x_k|^2 and E|x_k|^4 against the Gaussian oracle.

    The standard errors are the exact null ones, sqrt((E|x|^{2q} - (E|x|^q)^2)/n)
    from the Wick oracle, so a low sample moment cannot shrink its own error
    bar. ``fields`` holds flat coefficient arrays, shape (paths, L).
    """
    fields = np.asarray(fields)
    paths = fields.shape[0]
    if paths < STATIONARITY_PATHS:
        logger.warning("stationarity test below recommended ensemble size", extra={"paths": paths})
    K = spec.N if K is None else K
    rows = []
    for k in modes:
        mode = tuple(k) if isinstance(k, (tuple, list)) else int(k)
        sq = np.abs(fields[:, flat_index(mode, K)]) ** 2
        oracle2, oracle4, oracle8 = (
            wick_moment_oracle(spec, [mode] * q + [(mode, True)] * q) for q in (1, 2, 4)
        )
        z2 = _zscore(sq, oracle2, oracle4 - oracle2 ** 2)
        z4 = _zscore(sq ** 2, oracle4, oracle8 - oracle4 ** 2)
        rows.append({
            "mode": str(mode),
            "norm": float(np.hypot(*mode)) if isinstance(mode, tuple) else abs(mode),
            "m2": float(sq.mean()),
            "oracle2": oracle2,
            "z2": z2,
            "p2": float(2.0 * stats.norm.sf(abs(z2))),
            "m4": float((sq ** 2).mean()),
            "oracle4": oracle4,
            "z4": z4,
            "p4": float(2.0 * stats.norm.sf(abs(z4))),
        })
    return pd.DataFrame(rows)


def _zscore(samples: np.ndarray, oracle: float, null_variance: float) -> float:
    se = np.sqrt(max(null_variance, 0.0) / samples.size)
    if se == 0.0:
        return 0.0 if samples.mean() == oracle else float(np.sign(samples.mean() - oracle) * np.inf)
    return float((samples.mean() - oracle) / se)


def dyadic_prefix(path: np.ndarray) -> Tuple[np.ndarray, int]:
    """Longest prefix with 2^L + 1 points, and L"""
    L = int(np.floor(np.log2(max(len(path) - 1, 1))))
    return np.asarray(path)[: 2 ** L + 1], L


def quadratic_variation(path: np.ndarray, levels: Sequence[int], T: float = 1.0) -> QVReport:
    """
    QV_l = sum of squared increments at mesh 2^{-l} T, and the fitted decay
    exponent of QV_l against the mesh
    """
    path = np.asarray(path, dtype=float)
    L_max = int(round(np.log2(len(path) - 1))) if len(path) > 1 else -1
    if L_max < 0 or 2 ** L_max + 1 != len(path):
        raise EstimatorError(f"path of {len(path)} points is not on a dyadic grid of 2^L + 1 points")
    levels = list(levels)
    if any(b <= a for a, b in zip(levels, levels[1:])):
        raise EstimatorError("mesh levels must strictly refine")
    if levels and (levels[0] < 0 or levels[-1] > L_max):
        raise EstimatorError(f"levels must lie in [0, {L_max}]")
    qv, meshes = [], []
    for level in levels:
        coarse = path[:: 2 ** (L_max - level)]
        qv.append(float(np.sum(np.diff(coarse) ** 2)))
        meshes.append(T * 2.0 ** (-level))
    exponent = float("nan")
    if len(levels) >= 2 and all(q > 0 for q in qv):
        reg = LinearRegression().fit(np.log(meshes).reshape(-1, 1), np.log(qv))
        exponent = float(reg.coef_[0])
    elif len(levels) >= 2:
        logger.warning("zero quadratic variation at some level; exponent undefined", extra={"qv": qv})
    return QVReport(levels=levels, meshes=meshes, qv=qv, decay_exponent=exponent)


def exp_moment_probe(samples: np.ndarray, lambdas: Sequence[float]) -> pd.DataFrame:
    """
    Empirical E exp(lambda Q) per lambda, computed in log space, flagged when
    the top 1% of samples carries more than half of the mean
    """
    samples = np.asarray(samples, dtype=float).ravel()
    n = samples.size
    if n < STATIONARITY_PATHS:
        logger.warning("exponential moments from a small sample", extra={"samples": int(n)})
    top = max(1, int(np.ceil(0.01 * n)))
    rows = []
    for lam in lambdas:
        z = lam * samples
        log_total = logsumexp(z)
        log_top = logsumexp(np.sort(z)[-top:])
        share = float(np.exp(log_top - log_total))
        rows.append({
            "lambda": float(lam),
            "log_moment": float(log_total - np.log(n)),
            "moment": float(np.exp(log_total - np.log(n))),
            "top_share": share,
            "unreliable": bool(share > TOP_SHARE_LIMIT),
        })
    return pd.DataFrame(rows)


@dataclass
class EnsembleSummary:
    """Per-mode, per-time moments of an ensemble of recorded paths"""
    times: np.ndarray
    modes: List[ModeIndex]
    m2: np.ndarray
    m2_se: np.ndarray
    m4: np.ndarray
    m4_se: np.ndarray
    paths: int

    @classmethod
    def from_fields(cls, fields: np.ndarray, times: np.ndarray, modes: Sequence[ModeIndex], K: int) -> "EnsembleSummary":
        """``fields`` has shape (paths, records, L)"""
        paths = fields.shape[0]
        slots = [flat_index(k, K) for k in modes]
        sq = np.abs(fields[:, :, slots]) ** 2
        shape = sq.shape[1:]
        m2, m2_se, m4, m4_se = (np.zeros(shape) for _ in range(4))
        for idx in np.ndindex(*shape):
            m2[idx], m2_se[idx] = batch_means(sq[(slice(None),) + idx])
            m4[idx], m4_se[idx] = batch_means(sq[(slice(None),) + idx] ** 2)
        return cls(np.asarray(times), list(modes), m2, m2_se, m4, m4_se, paths)

    def to_frame(self) -> pd.DataFrame:
        rows = []
        for i, t in enumerate(self.times):
            for j, k in enumerate(self.modes):
                rows.append({
                    "t": float(t), "mode": str(k),
                    "m2": self.m2[i, j], "m2_se": self.m2_se[i, j],
                    "m4": self.m4[i, j], "m4_se": self.m4_se[i, j],
                    "paths": self.paths,
                })
        return pd.DataFrame(rows)
