"""Experiment runner: simulate, estimate, score, sweep, and write CSV.

The estimation loop pairs each step's measurement frame with the system
built from that same frame: frame k yields A(k), B(k), u(k), and z(k).
Ground truth never depends on filter tuning, so sweeps materialize one
truth trajectory and reuse it for every tuning point.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .kalman import FilterState, KalmanConfig, filter_step, output_measurement, reconstruct_totals
from .ltv import LtvSystem, build_system_measured, build_system_unmeasured_offramps, check_observability
from .metanet import TruthRun, TruthSimulator
from .scenario import Scenario


@dataclass(frozen=True)
class EstimateRun:
    """Filter outputs over a run; row k is the estimate at step k."""

    x_hat: np.ndarray          # (M+1, N) inverse-share estimates
    rho_hat: np.ndarray        # (M+1, N) reconstructed total densities
    q_hat: np.ndarray          # (M+1, N) reconstructed total flows
    innovation: np.ndarray     # (M,) scalar innovations
    gain_norm: np.ndarray      # (M,) Euclidean norms of the gain
    min_p_eigenvalue: float    # most negative covariance eigenvalue seen
    g_clamp_count: int
    z_fallback_count: int


@dataclass(frozen=True)
class RunResult:
    scenario: Scenario
    truth: TruthRun
    estimate: EstimateRun | None
    p_r: float | None
    runtime_s: float


def simulate_truth(sc: Scenario) -> TruthRun:
    """Ground-truth trajectory over the scenario horizon."""
    sim = TruthSimulator(
        geom=sc.geometry, params=sc.params, layout=sc.layout, noise=sc.noise,
        entry_demand=sc.entry_demand, onramp_demand=sc.onramp_demand,
        penetration_profile=sc.penetration_profile, init_state=sc.initial_state())
    return sim.run(sc.n_steps)


def build_systems(sc: Scenario, truth: TruthRun) -> list[LtvSystem]:
    """One realization per transition, from the estimator-visible frames."""
    frames = truth.frames[:truth.n_steps]
    if sc.offramp_mode == "unmeasured":
        beta_a = sc.layout.exit_rate_vector(sc.geometry.n_segments, connected=True)
        return [build_system_unmeasured_offramps(f, sc.geometry, beta_a) for f in frames]
    return [build_system_measured(f, sc.geometry) for f in frames]


def run_filter(sc: Scenario, truth: TruthRun,
               systems: Sequence[LtvSystem] | None = None,
               config: KalmanConfig | None = None) -> EstimateRun:
    """Run the filter along a truth trajectory and reconstruct totals."""
    if systems is None:
        systems = build_systems(sc, truth)
    if config is None:
        config = sc.filter_config()
    m = truth.n_steps
    n = sc.geometry.n_segments
    fs = FilterState.initial(config)

    x_hat = np.empty((m + 1, n))
    rho_hat = np.empty((m + 1, n))
    q_hat = np.empty((m + 1, n))
    innovation = np.empty(m)
    gain_norm = np.empty(m)
    x_hat[0] = fs.x_hat
    rho_hat[0], q_hat[0] = reconstruct_totals(fs.x_hat, truth.frames[0])

    min_eig = float(np.min(np.linalg.eigvalsh(fs.p_cov)))
    g_clamps = 0
    fallbacks = 0
    last_z: float | None = None
    for k in range(m):
        sys_k = systems[k]
        g_clamps += sys_k.n_clamped
        z, used_fallback = output_measurement(truth.frames[k], last_z)
        fallbacks += used_fallback
        last_z = z
        innovation[k] = z - sys_k.c_vec @ fs.x_hat
        fs = filter_step(fs, sys_k, z, config)
        gain_norm[k] = float(np.linalg.norm(fs.k_gain))
        min_eig = min(min_eig, float(np.min(np.linalg.eigvalsh(fs.p_cov))))
        x_hat[k + 1] = fs.x_hat
        rho_hat[k + 1], q_hat[k + 1] = reconstruct_totals(fs.x_hat, truth.frames[k + 1])

    return EstimateRun(x_hat=x_hat, rho_hat=rho_hat, q_hat=q_hat,
                       innovation=innovation, gain_norm=gain_norm,
                       min_p_eigenvalue=min_eig, g_clamp_count=g_clamps,
                       z_fallback_count=fallbacks)


def performance_index(rho: np.ndarray, rho_a: np.ndarray, x_hat: np.ndarray) -> float:
    """Relative density-estimation error over a horizon of M transitions:

        sqrt( (1/(M N)) sum_k sum_i (rho - rho_a * x_hat)^2 )
        -----------------------------------------------------
               (1/(M N)) sum_k sum_i rho

    Sums run over all M+1 recorded steps; the 1/(M N) normalization follows
    the index's definition.  Dimensionless (multiply by 100 for percent).
    """
    rho = np.asarray(rho, dtype=float)
    if rho.ndim != 2 or rho.shape[0] < 2:
        raise ValueError("need an (M+1) x N trajectory with M >= 1")
    if rho.shape != np.shape(rho_a) or rho.shape != np.shape(x_hat):
        raise ValueError("trajectory shapes must match")
    m = rho.shape[0] - 1
    n = rho.shape[1]
    mean_rho = float(np.sum(rho)) / (m * n)
    if mean_rho <= 0:
        raise ValueError("mean density is zero; index undefined")
    rms = math.sqrt(float(np.sum((rho - rho_a * x_hat) ** 2)) / (m * n))
    return rms / mean_rho


def run_experiment(sc: Scenario) -> RunResult:
    """Full pipeline: truth, measurements, filter, reconstruction, score."""
    start = time.perf_counter()
    truth = simulate_truth(sc)
    estimate = run_filter(sc, truth)
    p_r = performance_index(truth.rho_matrix(), truth.rho_a_matrix(), estimate.x_hat)
    return RunResult(scenario=sc, truth=truth, estimate=estimate, p_r=p_r,
                     runtime_s=time.perf_counter() - start)


def simulate_only(sc: Scenario) -> RunResult:
    start = time.perf_counter()
    truth = simulate_truth(sc)
    return RunResult(scenario=sc, truth=truth, estimate=None, p_r=None,
                     runtime_s=time.perf_counter() - start)


@dataclass(frozen=True)
class SweepPoint:
    sigma: float
    p_r: float


def q_sweep(sc: Scenario, sigmas: Sequence[float]) -> list[SweepPoint]:
    """Rerun the filter with Q = sigma*I per point; R stays at the scenario value.

    The truth trajectory and the per-step systems are generated once and
    shared, so every point scores against identical data.
    """
    if any(s <= 0 for s in sigmas):
        raise ValueError("sigma values must be > 0")
    truth = simulate_truth(sc)
    systems = build_systems(sc, truth)
    rho = truth.rho_matrix()
    rho_a = truth.rho_a_matrix()
    points = []
    for sigma in sigmas:
        config = KalmanConfig.scaled_identity(
            sc.geometry.n_segments, q_sigma=float(sigma), r_cov=sc.r_cov,
            x0_value=sc.x0_value, p0_sigma=sc.p0_sigma)
        est = run_filter(sc, truth, systems=systems, config=config)
        points.append(SweepPoint(sigma=float(sigma),
                                 p_r=performance_index(rho, rho_a, est.x_hat)))
    return points


@dataclass(frozen=True)
class ObservabilityWindow:
    start_step: int
    observable: bool
    min_anti_diag: float
    max_anti_diag: float


def observability_trace(sc: Scenario, truth: TruthRun | None = None,
                        stride: int = 1) -> list[ObservabilityWindow]:
    """Sliding-window observability report over a run."""
    if truth is None:
        truth = simulate_truth(sc)
    systems = build_systems(sc, truth)
    window = sc.geometry.n_segments - 1
    out = []
    for k0 in range(0, len(systems) - window + 1, stride):
        report = check_observability(systems[k0:k0 + window])
        mags = np.abs(report.anti_diag)
        out.append(ObservabilityWindow(start_step=k0, observable=report.observable,
                                       min_anti_diag=float(np.min(mags)),
                                       max_anti_diag=float(np.max(mags))))
    return out


# --- CSV output -----------------------------------------------------------
# Floats are written with repr(), which round-trips float64 exactly.

TRAJECTORY_COLUMNS = ("step", "segment", "rho", "rho_a", "v", "q", "q_a",
                      "rho_hat", "q_hat", "p_bar_hat", "innovation")


def _fmt(value: float) -> str:
    return repr(float(value))


def write_trajectory(path, result: RunResult) -> None:
    """One row per (step, segment); estimate columns empty for truth-only runs.

    The scalar innovation of step k is repeated on each of the step's rows
    and left empty on the final step, which has no measurement update.
    """
    truth = result.truth
    est = result.estimate
    m = truth.n_steps
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(TRAJECTORY_COLUMNS)
        for k, state in enumerate(truth.states):
            innov = _fmt(est.innovation[k]) if est is not None and k < m else ""
            for i in range(state.n_segments):
                row = [str(k), str(i + 1), _fmt(state.rho[i]), _fmt(state.rho_a[i]),
                       _fmt(state.v[i]), _fmt(state.q[i]), _fmt(state.q_a[i])]
                if est is not None:
                    row += [_fmt(est.rho_hat[k, i]), _fmt(est.q_hat[k, i]),
                            _fmt(est.x_hat[k, i]), innov]
                else:
                    row += ["", "", "", ""]
                writer.writerow(row)


def read_trajectory(path) -> dict[str, np.ndarray]:
    """Parse a trajectory CSV back into (M+1, N) arrays keyed by column."""
    with open(path, "r", newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        rows = list(reader)
    steps = sorted({int(r["step"]) for r in rows})
    segs = sorted({int(r["segment"]) for r in rows})
    out: dict[str, np.ndarray] = {}
    for col in TRAJECTORY_COLUMNS[2:]:
        values = np.full((len(steps), len(segs)), np.nan)
        for r in rows:
            if r[col] != "":
                values[int(r["step"]), int(r["segment"]) - 1] = float(r[col])
        out[col] = values
    return out


def write_metrics(path, result: RunResult) -> None:
    rows = [("runtime_s", _fmt(result.runtime_s)),
            ("n_steps", str(result.truth.n_steps)),
            ("seed", str(result.scenario.seed)),
            ("offramp_mode", result.scenario.offramp_mode)]
    if result.p_r is not None:
        rows.insert(0, ("p_r", _fmt(result.p_r)))
    if result.estimate is not None:
        rows += [("g_clamp_count", str(result.estimate.g_clamp_count)),
                 ("z_fallback_count", str(result.estimate.z_fallback_count)),
                 ("min_p_eigenvalue", _fmt(result.estimate.min_p_eigenvalue))]
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(("metric", "value"))
        writer.writerows(rows)


def write_sweep(path, points: Sequence[SweepPoint]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(("sigma", "p_r"))
        for point in points:
            writer.writerow((_fmt(point.sigma), _fmt(point.p_r)))


def read_sweep(path) -> list[SweepPoint]:
    with open(path, "r", newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        return [SweepPoint(sigma=float(r["sigma"]), p_r=float(r["p_r"])) for r in reader]


def write_observability(path, windows: Sequence[ObservabilityWindow]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(("start_step", "observable", "min_anti_diag", "max_anti_diag"))
        for w in windows:
            writer.writerow((str(w.start_step), str(int(w.observable)),
                             _fmt(w.min_anti_diag), _fmt(w.max_anti_diag)))
