"""Linear time-varying realization of the connected-share dynamics.

The state is the per-segment ratio of total to connected density.  Its
one-step dynamics are linear in the state once the connected-vehicle
aggregates are treated as known time-varying coefficients:

    x(k+1) = A(k) x(k) + B(k) u(k),      y(k) = C x(k),

with A lower bidiagonal and C selecting the last segment.  Two builders are
provided: one consuming measured total ramp outflows, one substituting
exit-rate fractions for unmeasured off-ramp flows.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import HighwayGeometry, _as_float_array
from .metanet import MeasurementFrame

# Floor for the denominator sequence; measurement noise can push it
# nonpositive on a near-empty segment, where the ratio dynamics degenerate.
EPS_G = 1e-6


@dataclass(frozen=True)
class LtvSystem:
    """One step's realization: x(k+1) = a_mat x(k) + b_mat u_vec, y = c_vec x.

    ``g_vec`` holds the (clamped) denominators; ``n_clamped`` counts entries
    that hit the floor, for run diagnostics.
    """

    a_mat: np.ndarray
    b_mat: np.ndarray
    u_vec: np.ndarray
    c_vec: np.ndarray
    g_vec: np.ndarray
    n_clamped: int = 0

    def __post_init__(self):
        n = self.a_mat.shape[0]
        if self.a_mat.shape != (n, n) or self.b_mat.shape != (n, n + 1):
            raise ValueError("a_mat must be NxN and b_mat Nx(N+1)")
        if self.u_vec.shape != (n + 1,) or self.c_vec.shape != (n,) or self.g_vec.shape != (n,):
            raise ValueError("u_vec, c_vec, g_vec sizes inconsistent with a_mat")

    @property
    def n(self) -> int:
        return self.a_mat.shape[0]

    def propagate(self, x: np.ndarray) -> np.ndarray:
        return self.a_mat @ x + self.b_mat @ self.u_vec


def last_segment_output(n: int) -> np.ndarray:
    """Output row selecting the last segment: [0, ..., 0, 1]."""
    c = np.zeros(n)
    c[-1] = 1.0
    return c


def selector_output(n: int, segment: int) -> np.ndarray:
    """Output row selecting an arbitrary segment (1-based)."""
    if not 1 <= segment <= n:
        raise ValueError(f"segment {segment} outside 1..{n}")
    c = np.zeros(n)
    c[segment - 1] = 1.0
    return c


def _g_raw(frame: MeasurementFrame, geom: HighwayGeometry) -> np.ndarray:
    td = geom.t_over_delta
    q_a_up = np.concatenate(([frame.q0_a], frame.q_a_seg[:-1]))
    return frame.rho_a_seg + td * (q_a_up - frame.q_a_seg + frame.r_a - frame.s_a)


def _clamp_g(g: np.ndarray) -> tuple[np.ndarray, int]:
    low = g <= EPS_G
    return np.where(low, EPS_G, g), int(np.count_nonzero(low))


def build_g(frame: MeasurementFrame, geom: HighwayGeometry) -> np.ndarray:
    """Denominators g_i = rho_a_i + (T/Delta_i)(q_a_{i-1} - q_a_i + r_a_i - s_a_i).

    Equals the next-step connected density predicted from the frame; clamped
    below at EPS_G.
    """
    if frame.n_segments != geom.n_segments:
        raise ValueError("frame size does not match geometry")
    g, _ = _clamp_g(_g_raw(frame, geom))
    return g


def _assemble(frame: MeasurementFrame, geom: HighwayGeometry, g: np.ndarray,
              sub_flow: np.ndarray, u: np.ndarray, n_clamped: int) -> LtvSystem:
    """Common A/B assembly given denominators and the subdiagonal flow terms."""
    n = geom.n_segments
    td = geom.t_over_delta
    a = np.diag((frame.rho_a_seg - td * frame.q_a_seg) / g)
    rows = np.arange(1, n)
    a[rows, rows - 1] = td[1:] * sub_flow[1:] / g[1:]
    b = np.zeros((n, n + 1))
    b[np.arange(n), np.arange(1, n + 1)] = td / g
    b[0, 0] = td[0] / g[0]
    return LtvSystem(a_mat=a, b_mat=b, u_vec=u, c_vec=last_segment_output(n),
                     g_vec=g, n_clamped=n_clamped)


def build_system_measured(frame: MeasurementFrame, geom: HighwayGeometry) -> LtvSystem:
    """Realization consuming measured ramp totals.

    The input vector is [entry total flow, r_1 - s_1, ..., r_N - s_N] from
    the frame's detector readings.
    """
    if frame.n_segments != geom.n_segments:
        raise ValueError("frame size does not match geometry")
    g, n_clamped = _clamp_g(_g_raw(frame, geom))
    q_a_up = np.concatenate(([frame.q0_a], frame.q_a_seg[:-1]))
    u = np.concatenate(([frame.q0_meas], frame.r_meas - frame.s_meas))
    return _assemble(frame, geom, g, q_a_up, u, n_clamped)


def build_system_unmeasured_offramps(frame: MeasurementFrame, geom: HighwayGeometry,
                                     exit_rates_a) -> LtvSystem:
    """Realization with off-ramp totals replaced by exit-rate fractions.

    ``exit_rates_a`` is the per-segment connected exit-rate vector (zero off
    the ramps).  Assumes total and connected exit rates coincide, which
    turns the unknown off-ramp outflow into a rescaling of the upstream-flow
    coupling; the input vector drops to [entry total flow, r_1, ..., r_N]
    and no off-ramp detector readings are consumed.
    """
    if frame.n_segments != geom.n_segments:
        raise ValueError("frame size does not match geometry")
    beta = _as_float_array(exit_rates_a, geom.n_segments, "exit_rates_a")
    if np.any(beta < 0) or np.any(beta >= 1):
        raise ValueError("exit rates must lie in [0, 1)")
    td = geom.t_over_delta
    q_a_up = np.concatenate(([frame.q0_a], frame.q_a_seg[:-1]))
    scaled_up = (1.0 - beta) * q_a_up
    g_raw = frame.rho_a_seg + td * (scaled_up - frame.q_a_seg) + td * frame.r_a
    g, n_clamped = _clamp_g(g_raw)
    u = np.concatenate(([frame.q0_meas], frame.r_meas))
    return _assemble(frame, geom, g, scaled_up, u, n_clamped)


def observability_matrix(systems: Sequence[LtvSystem],
                         output_row: np.ndarray | None = None) -> np.ndarray:
    """Stack output rows over a window: C, C A(k0), ..., C A(k0+N-2)...A(k0).

    Needs N-1 consecutive systems for state dimension N.  With the
    last-segment output and lower-bidiagonal A the result is anti-lower
    triangular: zero above the anti-diagonal.
    """
    if not systems:
        raise ValueError("need at least one system")
    n = systems[0].n
    if len(systems) < n - 1:
        raise ValueError(f"need {n - 1} consecutive systems for dimension {n}")
    c = systems[0].c_vec if output_row is None else np.asarray(output_row, dtype=float)
    rows = [c]
    prod = np.eye(n)
    for k in range(n - 1):
        prod = systems[k].a_mat @ prod
        rows.append(c @ prod)
    return np.stack(rows)


def anti_diagonal(mat: np.ndarray) -> np.ndarray:
    """Entries O[m, N-1-m], read top row first."""
    n = mat.shape[0]
    return mat[np.arange(n), n - 1 - np.arange(n)]


@dataclass(frozen=True)
class ObservabilityReport:
    observable: bool
    anti_diag: np.ndarray
    tol: float

    @property
    def min_anti_diag(self) -> float:
        return float(np.min(np.abs(self.anti_diag)))


def check_observability(systems: Sequence[LtvSystem], tol: float = 1e-12) -> ObservabilityReport:
    """Observable over the window iff every anti-diagonal entry clears tol.

    The anti-diagonal entries are running products of subdiagonal couplings,
    so this is equivalent to a nonzero determinant but does not underflow
    the way a raw 20x20 determinant threshold would.
    """
    o = observability_matrix(systems)
    diag = anti_diagonal(o)
    return ObservabilityReport(observable=bool(np.all(np.abs(diag) > tol)),
                               anti_diag=diag, tol=tol)


def interior_sensor_dead_columns(systems: Sequence[LtvSystem], segment: int) -> list[int]:
    """Segments (1-based) whose columns of O are identically zero when the
    single output sits at ``segment``.

    The flow of information is strictly downstream, so a detector at segment
    J leaves segments J+1..N unreconstructable for every window length;
    empty only when the detector is at the exit.
    """
    n = systems[0].n
    o = observability_matrix(systems, output_row=selector_output(n, segment))
    return [c + 1 for c in range(n) if not o[:, c].any()]
