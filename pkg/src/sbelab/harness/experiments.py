"""
Experiment commands.

Every command runs its ensemble through ``run_ensemble``, reduces in path
order, writes its tables through the RunWriter and records its gates.
"""
import math
from functools import partial
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from pydantic import ValidationError

from sbelab.analysis.drift import (
    accumulate_drift,
    accumulate_mild_drift,
    cached_poisson_form,
    dirichlet_energy,
    expected_dirichlet_energy,
    i_sum,
    martingale_decompose,
    mollified_drift,
)
from sbelab.analysis.statistics import (
    MIN_BATCH_PATHS,
    EnsembleSummary,
    dyadic_prefix,
    exp_moment_probe,
    lp_norm,
    lp_sup_norm,
    quadratic_variation,
    scaling_regression,
    stationarity_test,
)
from sbelab.common.errors import ConfigError, EstimatorError, StreamMismatchError
from sbelab.common.utils import RunAuditLogger
from sbelab.dynamics.ensemble import run_ensemble
from sbelab.dynamics.integrators import NoiseSource, initial_field, model_drift, simulate_path
from sbelab.dynamics.trajectory import TrajectoryRecorder
from sbelab.harness.output import RunWriter
from sbelab.measures.gaussian import MeasureSpec, RngStream, mode_key
from sbelab.models.schemas import (
    CoefficientKind,
    ExperimentKind,
    ExperimentSpec,
    ModelConfig,
    ModelKind,
    Part,
    ScalingFit,
    UniquenessReport,
    UniquenessRow,
)
from sbelab.spectral.field import ModeIndex, flat_index, mode_norms, positive_modes
from sbelab.spectral.nonlinear import burgers_flat

audit_logger = RunAuditLogger("harness")

Z_LIMIT = 3.0
PASS_FRACTION = 0.95
EXPONENT_TOL = 0.2
T_EXPONENT_TOL = 0.1
QV_MIN_EXPONENT = 0.1
ITO_MIN_SLOPE = 0.4
QV_MATCH_TOL = 0.10
UNIQUENESS_THETA = 1.25
DECREASING_FRACTION = 0.9
UNIQUENESS_MAX_SLOPE = -0.5
TOP_MODE_RESOLUTION = 1.0
CONTRACTION_Q = 0.5


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------

def tracked_modes(spec: ExperimentSpec) -> List[ModeIndex]:
    cfg = spec.config
    if cfg.dim == 2:
        return [mode_key(cfg.N, 2, s) for s in positive_modes(cfg.N, 2)]
    modes = sorted({abs(k) for k in spec.modes if 1 <= abs(k) <= cfg.N})
    if not modes:
        raise ConfigError(f"no tracked mode lies in 1..N={cfg.N}")
    return modes


def path_stream(spec: ExperimentSpec, path: int) -> RngStream:
    return RngStream(spec.seed, spec.experiment.value, path)


def revalidate(cfg: ModelConfig, **update) -> ModelConfig:
    """Copy with changes, re-running every config check"""
    try:
        return ModelConfig(**{**cfg.model_dump(), **update})
    except ValidationError as e:
        raise ConfigError(f"derived configuration is invalid: {e.errors()[0]['msg']}", detail=update) from e


def fit(points: Sequence[Tuple[float, float, float]], abscissa: str) -> ScalingFit:
    points = [pt for pt in points if pt[1] > 0]
    return scaling_regression(points, abscissa=abscissa, min_points=max(2, min(5, len(points))))


def fit_row(name: str, result: ScalingFit, expected: Optional[float], tol: Optional[float]) -> Dict[str, object]:
    ok = None if expected is None else abs(result.slope - expected) <= tol
    return {
        "quantity": name,
        "abscissa": result.abscissa,
        "slope": result.slope,
        "intercept": result.intercept,
        "slope_se": result.slope_se,
        "fit_min": result.fit_range[0],
        "fit_max": result.fit_range[1],
        "n_points": result.n_points,
        "expected": expected,
        "tolerance": tol,
        "pass": ok,
    }


def require_model(spec: ExperimentSpec, *kinds: ModelKind):
    if spec.config.model not in kinds:
        raise ConfigError(
            f"{spec.experiment.value} needs model in {[k.value for k in kinds]}, got {spec.config.model.value}"
        )


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------

def _simulate_task(spec: ExperimentSpec, modes: List[ModeIndex], path: int) -> List[dict]:
    traj = simulate_path(spec.config, path_stream(spec, path))
    fields = traj.fields
    slots = [flat_index(k, traj.K) for k in modes]
    rows = []
    for t, a in zip(traj.times, fields):
        row = {"path": path, "t": t, "l2_norm": float(np.sqrt(np.sum(np.abs(a) ** 2)))}
        for k, s in zip(modes, slots):
            row[f"abs2_{k}"] = float(abs(a[s]) ** 2)
        rows.append(row)
    return rows


def cmd_simulate(spec: ExperimentSpec, writer: RunWriter):
    modes = tracked_modes(spec)
    results = run_ensemble(partial(_simulate_task, spec, modes), range(spec.paths))
    writer.write_table("simulate", pd.DataFrame([row for rows in results for row in rows]))


# ---------------------------------------------------------------------------
# invariance
# ---------------------------------------------------------------------------

def _checkpoints(n_steps: int) -> Tuple[int, List[int]]:
    """Stride and record indices landing on steps 0, n/2, n"""
    if n_steps == 0:
        return 1, [0]
    if n_steps % 2 == 0:
        return n_steps // 2, [0, 1, 2]
    return 1, [0, n_steps // 2, n_steps]


def _invariance_task(cfg: ModelConfig, spec: ExperimentSpec, records: List[int], path: int) -> np.ndarray:
    traj = simulate_path(cfg, path_stream(spec, path))
    return traj.fields[records]


def invariance_modes(spec: ExperimentSpec) -> List[ModeIndex]:
    """Every positive mode up to N (the positive half ball in 2d)"""
    cfg = spec.config
    if cfg.dim == 2:
        return tracked_modes(spec)
    return list(range(1, cfg.N + 1))


def cmd_invariance(spec: ExperimentSpec, writer: RunWriter):
    if spec.experiment == ExperimentKind.NS2D_INVARIANCE:
        require_model(spec, ModelKind.NS2D)
    base = spec.config
    stride, records = _checkpoints(base.n_steps)
    cfg = base.model_copy(update={"stride": stride, "record_noise": False})
    modes = invariance_modes(spec)
    fields = np.stack(run_ensemble(partial(_invariance_task, cfg, spec, records), range(spec.paths)))
    measure = MeasureSpec(cfg.measure, cfg.N)
    times = np.array([record * stride * cfg.dt for record in records])

    frames = []
    for i, t in enumerate(times):
        frame = stationarity_test(fields[:, i], measure, modes, K=cfg.N)
        frame.insert(0, "t", t)
        frames.append(frame)
    table = pd.concat(frames, ignore_index=True)
    if spec.paths >= MIN_BATCH_PATHS:
        summary = EnsembleSummary.from_fields(fields, times, modes, K=cfg.N).to_frame()
        table["m2_batch_se"] = summary["m2_se"].to_numpy()
        table["m4_batch_se"] = summary["m4_se"].to_numpy()
    table["pass"] = (table["z2"].abs() < Z_LIMIT) & (table["z4"].abs() < Z_LIMIT)
    writer.write_table("invariance", table)

    per_mode = table.groupby("mode", sort=False)["pass"].all()
    fraction = float(per_mode.mean())
    writer.gate("invariance_modes_pass", fraction >= PASS_FRACTION)
    audit_logger.log_event(writer.run_id, "invariance", "evaluated", {
        "pass_fraction": fraction, "modes": len(per_mode), "failing": [m for m, ok in per_mode.items() if not ok],
    })


# ---------------------------------------------------------------------------
# drift scaling
# ---------------------------------------------------------------------------

def _drift_task(spec: ExperimentSpec, modes: List[ModeIndex], M: int, M_list: List[int], path: int) -> dict:
    cfg = spec.config
    traj = simulate_path(cfg, path_stream(spec, path))
    G = accumulate_drift(traj, M, modes)
    Gt = accumulate_mild_drift(traj, M, cfg.theta, modes)
    times = traj.times
    tsup = np.zeros((len(M_list), len(spec.T_list)))
    for i, m in enumerate(M_list):
        acc = np.abs(accumulate_drift(traj, m, [spec.mode_k]).values[:, 0])
        for j, T in enumerate(spec.T_list):
            tsup[i, j] = acc[times <= T + 1e-12].max()
    qv_path = accumulate_drift(traj, max(M_list), [spec.mode_k]).component(0, Part.REAL)
    return {"G": G, "Gt_abs": np.abs(Gt.values), "tsup": tsup, "qv_path": qv_path, "dt": traj.record_dt}


def _sup_of_lp(values: np.ndarray, p: float) -> Tuple[float, float]:
    """sup over time of the L^p norm; values has shape (paths, times)"""
    moments = np.mean(values ** p, axis=0)
    j = int(np.argmax(moments))
    return lp_norm(values[:, j], p)


def cmd_drift_scaling(spec: ExperimentSpec, writer: RunWriter):
    require_model(spec, ModelKind.OU, ModelKind.SBE)
    cfg = spec.config
    theta = cfg.theta
    modes = tracked_modes(spec)
    if spec.mode_k > cfg.N:
        raise ConfigError(f"mode_k={spec.mode_k} exceeds N={cfg.N}")
    if any(T > cfg.T for T in spec.T_list):
        raise ConfigError("T_list entries must not exceed T")
    M_list = sorted(spec.M_list) or [cfg.N]
    M = max(M_list)
    results = run_ensemble(partial(_drift_task, spec, modes, M, M_list), range(spec.paths))

    G = [r["G"] for r in results]
    Gt_abs = np.stack([r["Gt_abs"] for r in results])
    rows, G_points, Gt_points = [], [], []
    for j, k in enumerate(modes):
        g, g_se = lp_sup_norm(G, k, spec.p)
        gt, gt_se = _sup_of_lp(Gt_abs[:, :, j], spec.p)
        rows.append({"mode": k, "M": M, "G_norm": g, "G_se": g_se, "Gt_sup_norm": gt, "Gt_se": gt_se})
        G_points.append((abs(k), g, g_se))
        Gt_points.append((abs(k), gt, gt_se))
    writer.write_table("drift_norms", pd.DataFrame(rows))

    fits = [
        fit_row("G_sup_norm", fit(G_points, "|k|"), 1.5 - theta, EXPONENT_TOL),
        fit_row("Gt_sup_norm", fit(Gt_points, "|k|"), 1.5 - 2 * theta, EXPONENT_TOL),
    ]

    if spec.T_list:
        tsup = np.stack([r["tsup"] for r in results])  # (paths, M, T)
        t_rows, t_points = [], []
        for j, T in enumerate(spec.T_list):
            norms = [lp_norm(tsup[:, i, j], spec.p) for i in range(len(M_list))]
            best = int(np.argmax([n for n, _ in norms]))
            t_rows.append({"T_sub": T, "sup_M_norm": norms[best][0], "se": norms[best][1], "argmax_M": M_list[best]})
            t_points.append((T, norms[best][0], norms[best][1]))
        writer.write_table("t_scaling", pd.DataFrame(t_rows))
        if len(t_points) >= 2:
            fits.append(fit_row("sup_M_T_exponent", fit(t_points, "T"), 2 * theta / (1 + 2 * theta), T_EXPONENT_TOL))

    qv_table, qv_exponent = _qv_fingerprint(results)
    writer.write_table("qv", qv_table)
    writer.write_table("i_sum", _i_sum_table(cfg, modes))

    fit_table = pd.DataFrame(fits)
    writer.write_table("fits", fit_table)
    for row in fits:
        if row["pass"] is not None:
            writer.gate(row["quantity"], bool(row["pass"]))
    if theta > 0.5 and not math.isnan(qv_exponent):
        writer.gate("zero_qv_exponent", qv_exponent >= QV_MIN_EXPONENT)
    audit_logger.log_event(writer.run_id, "drift-scaling", "evaluated", {
        "slopes": {row["quantity"]: row["slope"] for row in fits}, "qv_exponent": qv_exponent,
    })


def _qv_fingerprint(results: List[dict]) -> Tuple[pd.DataFrame, float]:
    """Ensemble-mean dyadic QV of (G^{M*})_k and its decay exponent in the mesh"""
    prefix, L = dyadic_prefix(results[0]["qv_path"])
    if L < 1:
        return pd.DataFrame(columns=["level", "mesh", "qv"]), float("nan")
    T = (len(prefix) - 1) * results[0]["dt"]
    levels = list(range(L + 1))
    reports = [quadratic_variation(dyadic_prefix(r["qv_path"])[0], levels, T) for r in results]
    qv = np.mean([rep.qv for rep in reports], axis=0)
    meshes = reports[0].meshes
    table = pd.DataFrame({"level": levels, "mesh": meshes, "qv": qv})
    usable = [(m, q, 0.0) for m, q in zip(meshes, qv) if q > 0]
    if len(usable) < 2:
        return table, float("nan")
    return table, fit(usable, "mesh").slope


def _i_sum_table(cfg: ModelConfig, modes: List[ModeIndex]) -> pd.DataFrame:
    kind = {ModelKind.DDT: CoefficientKind.DDT, ModelKind.SS_LATTICE: CoefficientKind.SS}.get(cfg.model, CoefficientKind.BURGERS)
    rows = []
    for k in modes:
        value = i_sum(k, cfg.N, cfg.theta, kind, cfg.sigma)
        rows.append({
            "mode": k,
            "kind": kind.value,
            "I_N": value,
            "scaled": value / abs(k) ** (3 - 2 * cfg.theta),
            "note": "symmetric reading of the smoothed-model coefficient" if kind == CoefficientKind.DDT else "",
        })
    return pd.DataFrame(rows)


# ---------------------------------------------------------------------------
# Cauchy properties
# ---------------------------------------------------------------------------

def _cauchy_task(spec: ExperimentSpec, modes: List[ModeIndex], path: int) -> np.ndarray:
    cfg = spec.config
    traj = simulate_path(cfg, path_stream(spec, path))
    if spec.experiment == ExperimentKind.MOLLIFIER_CAUCHY:
        eps_sorted = sorted(spec.eps_list)
        ref = mollified_drift(traj, eps_sorted[0], modes)
        return np.stack([(mollified_drift(traj, e, modes) - ref).sup_abs() for e in eps_sorted[1:]])
    ref = accumulate_drift(traj, cfg.N, modes)
    return np.stack([(accumulate_drift(traj, M, modes) - ref).sup_abs() for M in sorted(spec.M_list)])


def cmd_cauchy(spec: ExperimentSpec, writer: RunWriter):
    require_model(spec, ModelKind.OU, ModelKind.SBE)
    cfg = spec.config
    mollified = spec.experiment == ExperimentKind.MOLLIFIER_CAUCHY
    if mollified:
        if len(spec.eps_list) < 2:
            raise ConfigError("mollifier-cauchy needs at least two eps values")
        levels, label, expected = sorted(spec.eps_list)[1:], "eps", cfg.theta - 0.5
    else:
        if len(spec.M_list) < 2:
            raise ConfigError("cauchy needs at least two M values")
        levels, label, expected = sorted(spec.M_list), "M", 0.5 - cfg.theta
    modes = tracked_modes(spec)
    diffs = np.stack(run_ensemble(partial(_cauchy_task, spec, modes), range(spec.paths)))  # (paths, levels, modes)

    rows, slopes, fits = [], [], []
    for j, k in enumerate(modes):
        points = []
        for i, level in enumerate(levels):
            norm, se = lp_norm(diffs[:, i, j], spec.p)
            rows.append({"mode": k, label: level, "diff_norm": norm, "se": se})
            if norm > 0:
                points.append((level, norm, se))
        if len(points) >= 2:
            result = fit(points, label)
            slopes.append(result.slope)
            fits.append(fit_row(f"diff_norm[k={k}]", result, expected, EXPONENT_TOL))
    writer.write_table("cauchy", pd.DataFrame(rows))
    if not slopes:
        raise EstimatorError("no mode has enough nonzero differences to fit")
    median = float(np.median(slopes))
    fits.append({"quantity": "median_slope", "abscissa": label, "slope": median, "expected": expected,
                 "tolerance": EXPONENT_TOL, "pass": abs(median - expected) <= EXPONENT_TOL})
    writer.write_table("fits", pd.DataFrame(fits))
    writer.gate(f"cauchy_{label}_median_slope", abs(median - expected) <= EXPONENT_TOL)
    audit_logger.log_event(writer.run_id, spec.experiment.value, "evaluated", {"median_slope": median, "expected": expected})


# ---------------------------------------------------------------------------
# Ito trick
# ---------------------------------------------------------------------------

def _ito_task(spec: ExperimentSpec, cfg: ModelConfig, path: int) -> dict:
    k, theta = spec.mode_k, cfg.theta
    rng = path_stream(spec, path)
    traj = simulate_path(cfg, rng)
    form = cached_poisson_form(cfg.N, cfg.N, float(theta))
    drift = model_drift(cfg) if cfg.model == ModelKind.SBE and cfg.drift else None
    pair = martingale_decompose(traj, form, k, Part.REAL, theta, drift=drift)
    u0 = traj.field_at(0)
    mild = accumulate_mild_drift(traj, cfg.N, theta, [k])
    return {
        "residual": pair.sup_key_residual,
        "qv_forward": pair.qv_forward,
        "qv_backward": pair.qv_backward,
        "energy_integral": pair.energy_integral,
        "noise_residual": np.nan if pair.noise_residual is None else pair.noise_residual,
        "energy_probe": abs(k) ** (2 * theta - 3) * dirichlet_energy(form, k, Part.REAL, u0, theta),
        "mild_probe": abs(k) ** (2 * theta - 1.5) * float(mild.values[-1, 0].real),
    }


def cmd_ito_check(spec: ExperimentSpec, writer: RunWriter):
    require_model(spec, ModelKind.OU, ModelKind.SBE)
    base = spec.config
    k, theta = spec.mode_k, base.theta
    if not 1 <= k <= base.N:
        raise ConfigError(f"mode_k={k} must lie in 1..N={base.N}")
    if theta <= 0:
        raise ConfigError("ito-check needs theta > 0")
    dts = sorted(spec.dt_list or (base.dt,), reverse=True)
    form = cached_poisson_form(base.N, base.N, float(theta))
    oracle_rate = 4.0 * expected_dirichlet_energy(form, k, Part.REAL, theta) * base.noise_scale ** 2

    rows, last = [], None
    for dt in dts:
        cfg = revalidate(base, dt=dt, stride=1, record_noise=True)
        results = pd.DataFrame(run_ensemble(partial(_ito_task, spec, cfg), range(spec.paths)))
        T = cfg.n_steps * cfg.dt
        qv_rate = float(results["qv_forward"].mean() / T) if T > 0 else 0.0
        rows.append({
            "dt": dt,
            "residual_mean": float(results["residual"].mean()),
            "residual_max": float(results["residual"].max()),
            "qv_forward_rate": qv_rate,
            "qv_backward_rate": float(results["qv_backward"].mean() / T) if T > 0 else 0.0,
            "energy_rate_path": float(results["energy_integral"].mean() / T) if T > 0 else 0.0,
            "energy_rate_oracle": oracle_rate,
            "qv_ratio": qv_rate / oracle_rate if oracle_rate > 0 else np.nan,
            "noise_residual_mean": float(results["noise_residual"].mean()),
        })
        last = results
    table = pd.DataFrame(rows)
    writer.write_table("ito_check", table)

    residual_points = [(r["dt"], r["residual_mean"], 0.0) for r in rows if r["residual_mean"] > 0]
    if len(residual_points) >= 2:
        writer.gate("key_residual_order", fit(residual_points, "dt").slope >= ITO_MIN_SLOPE)
    finest = rows[-1]
    if base.noise_scale > 0 and not np.isnan(finest["qv_ratio"]):
        writer.gate("qv_matches_energy", abs(finest["qv_ratio"] - 1.0) <= QV_MATCH_TOL)
    audit_logger.log_event(writer.run_id, "ito-check", "evaluated", {"qv_ratio": finest["qv_ratio"], "levels": len(rows)})

    moments = []
    for name in ("energy_probe", "mild_probe"):
        frame = exp_moment_probe(last[name].to_numpy(), spec.lambda_list)
        frame.insert(0, "observable", name)
        moments.append(frame)
    writer.write_table("exp_moments", pd.concat(moments, ignore_index=True))


# ---------------------------------------------------------------------------
# uniqueness
# ---------------------------------------------------------------------------

def check_coupling(ref_rng: RngStream, rng: RngStream, ref_cfg: ModelConfig, cfg: ModelConfig):
    """Two resolutions must consume the same Brownian increments on shared modes"""
    if (ref_rng.seed, ref_rng.stream_id) != (rng.seed, rng.stream_id):
        raise StreamMismatchError(
            "resolutions are driven by different noise streams",
            detail={"reference": list(ref_rng.stream_id), "run": list(rng.stream_id)},
        )
    if ref_cfg.dt != cfg.dt or ref_cfg.stride != cfg.stride or ref_cfg.theta != cfg.theta:
        raise StreamMismatchError("resolutions use different time grids or dissipation")
    shared = min(ref_cfg.N, cfg.N)
    a = NoiseSource(ref_rng.fork("noise"), ref_cfg.N, 1, float(ref_cfg.N)).draw(0)
    b = NoiseSource(rng.fork("noise"), cfg.N, 1, float(cfg.N)).draw(0)
    if not np.array_equal(a[ref_cfg.N - shared:ref_cfg.N + shared + 1], b[cfg.N - shared:cfg.N + shared + 1]):
        raise StreamMismatchError("noise increments differ on shared modes")


def holder_exponent(theta: float, weight_eps: float) -> float:
    return float(max(2, math.ceil(2 * theta / (0.5 + 2 * weight_eps))))


def uniqueness_quantities(
    ref: TrajectoryRecorder, run: TrajectoryRecorder, theta: float, weight_eps: float,
) -> Dict[str, float]:
    """
    A_N, Phi_N and the contraction diagnostic Q_T (direct and Holder-bound
    forms) of a resolution-N run against the reference path
    """
    if len(ref) != len(run) or not np.allclose(ref.times, run.times):
        raise StreamMismatchError("reference and run are recorded on different time grids")
    K, N = ref.K, run.K
    dt = ref.record_dt
    ref_fields = ref.fields
    proj = ref_fields[:, K - N:K + N + 1]
    run_fields = run.fields
    norms_N = mode_norms(N, 1)
    norms_K = mode_norms(K, 1)
    active_N = norms_N > 0
    active_K = norms_K > 0

    weight = 2 * theta - 1.5 - 2 * weight_eps
    w_N = np.where(active_N, norms_N, 1.0) ** weight * active_N
    w_K = np.where(active_K, norms_K, 1.0) ** weight * active_K
    A_N = float(np.max(w_N * np.abs(proj - run_fields)))

    lam_K = norms_K ** (2 * theta)
    decay_K = np.exp(-lam_K * dt)
    phi1_K = np.where(active_K, -np.expm1(-lam_K * dt) / np.where(active_K, lam_K, 1.0), 0.0)
    phi = np.zeros(2 * K + 1, dtype=np.complex128)
    Phi_N = 0.0
    for j in range(1, len(ref_fields)):
        a = ref_fields[j - 1]
        phi = decay_K * phi + phi1_K * (burgers_flat(a, K, K) - burgers_flat(a, K, N))
        Phi_N = max(Phi_N, float(np.max(w_K * np.abs(phi))))

    outer = 2 * theta - 0.5 - 2 * weight_eps
    beta = 1.5 - 2 * theta + 2 * weight_eps
    m = np.abs(np.arange(-2 * N, 2 * N + 1)).astype(float)
    kernel = np.where(m > 0, np.where(m > 0, m, 1.0) ** beta, 0.0)
    lam_N = norms_N ** (2 * theta)
    decay_N = np.exp(-lam_N * dt)
    phi1_N = np.where(active_N, -np.expm1(-lam_N * dt) / np.where(active_N, lam_N, 1.0), 0.0)
    w_out = np.where(active_N, norms_N, 1.0) ** outer * active_N

    p = holder_exponent(theta, weight_eps)
    p_conj = p / (p - 1)
    I = np.zeros(2 * N + 1)
    Q_T = 0.0
    power_sum = np.zeros(2 * N + 1)
    for j in range(1, len(ref_fields)):
        s = np.convolve(np.abs(proj[j - 1] + run_fields[j - 1]), kernel)[2 * N:4 * N + 1]
        I = decay_N * I + phi1_N * s
        power_sum += dt * s ** p
        Q_T = max(Q_T, float(np.max(w_out * I)))
    holder_factor = np.where(active_N, (p_conj * np.where(active_N, lam_N, 1.0)) ** (-1.0 / p_conj), 0.0)
    Q_holder = float(np.max(w_out * holder_factor * power_sum ** (1.0 / p)))
    return {"A_N": A_N, "Phi_N": Phi_N, "Q_T": Q_T, "Q_T_holder": Q_holder, "holder_p": p}


def _uniqueness_task(spec: ExperimentSpec, ref_cfg: ModelConfig, N_list: List[int], path: int) -> List[UniquenessRow]:
    rng = path_stream(spec, path)
    u0 = initial_field(ref_cfg, rng)
    ref = simulate_path(ref_cfg, rng, initial=u0)
    rows = []
    for N in N_list:
        cfg = ref_cfg.model_copy(update={"N": N})
        run_rng = path_stream(spec, path)
        check_coupling(rng, run_rng, ref_cfg, cfg)
        run = simulate_path(cfg, run_rng, initial=u0)
        q = uniqueness_quantities(ref, run, ref_cfg.theta, spec.weight_eps)
        rows.append(UniquenessRow(path=path, N=N, **q))
    return rows


def doubling_ladder(N_ref: int, smallest: int = 16) -> List[int]:
    ladder, N = [], N_ref // 2
    while N >= min(smallest, max(N_ref // 2, 1)):
        ladder.append(N)
        N //= 2
    return sorted(ladder)


def summarize_uniqueness(theta: float, weight_eps: float, N_ref: int, rows: List[UniquenessRow]) -> UniquenessReport:
    by_path: Dict[int, List[UniquenessRow]] = {}
    for row in rows:
        by_path.setdefault(row.path, []).append(row)
    decreasing, slopes = [], []
    for path_rows in by_path.values():
        ladder = sorted((r for r in path_rows if r.N < N_ref), key=lambda r: r.N)
        A = [r.A_N for r in ladder]
        decreasing.append(all(b < a for a, b in zip(A, A[1:])))
        points = [(r.N, r.A_N, 0.0) for r in ladder if r.A_N > 0]
        if len(points) >= 2:
            slopes.append(fit(points, "N").slope)
    return UniquenessReport(
        theta=theta,
        weight_eps=weight_eps,
        N_ref=N_ref,
        rows=rows,
        decreasing_fraction=float(np.mean(decreasing)) if decreasing else 0.0,
        median_slope=float(np.median(slopes)) if slopes else float("nan"),
    )


def uniqueness_conditions(theta: float, N_ref: int, dt: float, median_q: float) -> Tuple[bool, str]:
    """
    Whether the A_N decay claim is testable on this run, and the reason when
    it is not: the contraction condition Q_T < 1/2 must hold and the fastest
    reference mode must be resolved by the step (N_ref^{2 theta} dt <= 1)
    """
    if theta <= UNIQUENESS_THETA:
        return False, f"theta={theta:g} <= 5/4: no uniqueness claim, reported only"
    rate_dt = N_ref ** (2 * theta) * dt
    if rate_dt > TOP_MODE_RESOLUTION:
        return False, (
            f"cutoff modes unresolved: N_ref^(2 theta) dt = {rate_dt:.3g} > {TOP_MODE_RESOLUTION:g}; "
            "A_N decay is not tested"
        )
    if math.isnan(median_q) or median_q >= CONTRACTION_Q:
        return False, f"contraction condition fails: median Q_T = {median_q:.3g} >= {CONTRACTION_Q:g}"
    return True, ""


def cmd_uniqueness(spec: ExperimentSpec, writer: RunWriter):
    require_model(spec, ModelKind.SBE)
    base = spec.config
    N_ref = spec.N_ref or base.N
    ref_cfg = revalidate(base, N=N_ref, record_noise=False)
    N_list = sorted(spec.N_list) or doubling_ladder(N_ref)
    if any(N > N_ref for N in N_list):
        raise ConfigError("N_list entries must not exceed N_ref")
    rows = [r for rs in run_ensemble(partial(_uniqueness_task, spec, ref_cfg, N_list), range(spec.paths)) for r in rs]
    report = summarize_uniqueness(base.theta, spec.weight_eps, N_ref, rows)

    table = pd.DataFrame([{**r.model_dump(), "contraction": r.contraction_holds, "bound_holds": r.A_N <= 2 * r.Phi_N}
                          for r in rows])
    writer.write_table("uniqueness", table)
    median_q = float(np.median([r.Q_T for r in rows])) if rows else float("nan")
    ratios = [r.A_N / (2 * r.Phi_N) for r in rows if r.Phi_N > 0 and r.N < N_ref]
    median_ratio = float(np.median(ratios)) if ratios else float("nan")
    testable, note = uniqueness_conditions(base.theta, N_ref, ref_cfg.dt, median_q)
    writer.write_table("uniqueness_summary", pd.DataFrame([{
        "N_ref": N_ref,
        "weight_eps": spec.weight_eps,
        "decreasing_fraction": report.decreasing_fraction,
        "median_slope": report.median_slope,
        "median_Q_T": median_q,
        "median_A_over_2Phi": median_ratio,
        "top_mode_rate_dt": N_ref ** (2 * base.theta) * ref_cfg.dt,
        "gated": testable,
        "note": note,
    }]))
    audit_logger.log_event(writer.run_id, "uniqueness", "evaluated", {
        "decreasing_fraction": report.decreasing_fraction, "median_slope": report.median_slope,
        "median_Q_T": median_q, "gated": testable, "note": note,
    })
    if testable:
        writer.gate("A_N_decreasing", report.decreasing_fraction >= DECREASING_FRACTION)
        writer.gate("A_N_slope", report.median_slope <= UNIQUENESS_MAX_SLOPE)
        if not math.isnan(median_ratio):
            writer.gate("contraction_bound", median_ratio <= 1.0)


COMMANDS: Dict[ExperimentKind, Callable[[ExperimentSpec, RunWriter], None]] = {
    ExperimentKind.SIMULATE: cmd_simulate,
    ExperimentKind.INVARIANCE: cmd_invariance,
    ExperimentKind.NS2D_INVARIANCE: cmd_invariance,
    ExperimentKind.DRIFT_SCALING: cmd_drift_scaling,
    ExperimentKind.CAUCHY: cmd_cauchy,
    ExperimentKind.MOLLIFIER_CAUCHY: cmd_cauchy,
    ExperimentKind.ITO_CHECK: cmd_ito_check,
    ExperimentKind.UNIQUENESS: cmd_uniqueness,
}
