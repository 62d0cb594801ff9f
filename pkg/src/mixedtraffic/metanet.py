"""Second-order macroscopic ground-truth simulator with seeded noise.

The simulator advances per-segment densities by exact conservation, speeds
by the second-order relaxation/convection/anticipation dynamics, and flows
as density*speed plus additive process noise.  Detector readings (entry,
exit, and ramp total flows) carry additive Gaussian measurement noise;
connected-vehicle aggregates are reported exactly.

All randomness is derived from (seed, step, purpose) so repeated calls for
the same step are identical and runs are reproducible bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .core import (
    BoundaryInputs,
    HighwayGeometry,
    MetanetParams,
    RampLayout,
    TrafficState,
    _as_float_array,
    nominal_speed,
)

# Stream purposes; one independent generator per (seed, step, purpose).
_STREAM_STATE = 0    # speed/flow process noise inside step_truth
_STREAM_DETECT = 1   # detector measurement noise inside observe
_STREAM_ENTRY = 2    # entry-flow process noise inside the inputs builder


@dataclass(frozen=True)
class NoiseSpec:
    """Standard deviations of all noise sources, plus the run seed.

    Measurement noise: ``std_entry_flow`` (entry/exit detectors),
    ``std_onramp``, ``std_offramp``.  Process noise: ``std_speed`` on the
    speed update, ``std_flow_proc``/``std_flow_proc_a`` on the total and
    connected flow relations.
    """

    std_entry_flow: float = 25.0
    std_onramp: float = 10.0
    std_offramp: float = 5.0
    std_speed: float = 5.0
    std_flow_proc: float = 25.0
    std_flow_proc_a: float = 15.0
    seed: int = 0

    def __post_init__(self):
        for name in ("std_entry_flow", "std_onramp", "std_offramp", "std_speed",
                     "std_flow_proc", "std_flow_proc_a"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be a 64-bit nonnegative integer")

    @classmethod
    def silent(cls, seed: int = 0) -> "NoiseSpec":
        """All noise sources off; useful for exactness checks."""
        return cls(0.0, 0.0, 0.0, 0.0, 0.0, 0.0, seed)


@dataclass(frozen=True)
class MeasurementFrame:
    """Everything the estimator may see at one step.

    Connected-vehicle aggregates (``q0_a``, ``q_a_seg``, ``rho_a_seg``,
    ``r_a``, ``s_a``) are exact; detector fields (``q0_meas``, ``qN_meas``,
    ``r_meas``, ``s_meas``) carry additive noise and are clamped at zero.
    """

    q0_a: float
    q_a_seg: np.ndarray
    rho_a_seg: np.ndarray
    r_a: np.ndarray
    s_a: np.ndarray
    q0_meas: float
    qN_meas: float
    r_meas: np.ndarray
    s_meas: np.ndarray

    def __post_init__(self):
        n = np.asarray(self.q_a_seg).shape[0]
        for name in ("q_a_seg", "rho_a_seg", "r_a", "s_a", "r_meas", "s_meas"):
            object.__setattr__(self, name, _as_float_array(getattr(self, name), n, name))

    @property
    def n_segments(self) -> int:
        return self.q_a_seg.shape[0]


@dataclass(frozen=True)
class PiecewiseLinear:
    """Piecewise-linear profile over time (hours); constant beyond the ends."""

    times_h: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        t = _as_float_array(self.times_h, name="times_h")
        v = _as_float_array(self.values, len(t), "values")
        if len(t) == 0:
            raise ValueError("profile needs at least one breakpoint")
        if np.any(np.diff(t) <= 0):
            raise ValueError("breakpoint times must be strictly increasing")
        object.__setattr__(self, "times_h", t)
        object.__setattr__(self, "values", v)

    @classmethod
    def constant(cls, value: float) -> "PiecewiseLinear":
        return cls(np.array([0.0]), np.array([float(value)]))

    @classmethod
    def from_pairs(cls, pairs) -> "PiecewiseLinear":
        pts = [(float(t), float(v)) for t, v in pairs]
        return cls(np.array([p[0] for p in pts]), np.array([p[1] for p in pts]))

    def __call__(self, t_h: float) -> float:
        if t_h < 0:
            raise ValueError("t_h must be >= 0")
        return float(np.interp(t_h, self.times_h, self.values))


def _stream(noise: NoiseSpec, step: int, purpose: int) -> np.random.Generator:
    return np.random.default_rng((noise.seed, step, purpose))


def offramp_outflows(state: TrafficState, q0: float, q0_a: float,
                     layout: RampLayout) -> tuple[np.ndarray, np.ndarray]:
    """Off-ramp outflows as exit-rate fractions of the upstream flow.

    s_i = beta_i * q_{i-1} and s_a_i = beta_a_i * q_a_{i-1}, with the entry
    flow standing in for q_0 at segment 1.
    """
    n = state.n_segments
    s = np.zeros(n)
    s_a = np.zeros(n)
    for seg, beta, beta_a in zip(layout.off_ramp_segments, layout.exit_rate,
                                 layout.exit_rate_a):
        idx = seg - 1
        up_q = state.q[idx - 1] if idx >= 1 else q0
        up_q_a = state.q_a[idx - 1] if idx >= 1 else q0_a
        s[idx] = beta * up_q
        s_a[idx] = beta_a * up_q_a
    return s, s_a


def step_truth(state: TrafficState, inputs: BoundaryInputs, geom: HighwayGeometry,
               params: MetanetParams, noise: NoiseSpec, step: int) -> TrafficState:
    """Advance the ground truth one step.

    Densities update by exact conservation; the speed update uses the
    upstream-copy convention at the entry (v_0 = v_1) and the flat-density
    convention at the exit (rho_{N+1} = rho_N).  Process noise perturbs the
    speed update and the flow relations; densities and speeds are clamped
    nonnegative afterwards and the connected density at or below the total.
    """
    n = geom.n_segments
    if state.n_segments != n or inputs.r.shape[0] != n:
        raise ValueError("state/inputs size does not match geometry")
    td = geom.t_over_delta
    rng = _stream(noise, step, _STREAM_STATE)
    xi_v = noise.std_speed * rng.standard_normal(n)
    xi_q = noise.std_flow_proc * rng.standard_normal(n)
    xi_q_a = noise.std_flow_proc_a * rng.standard_normal(n)

    q_up = np.concatenate(([inputs.q0], state.q[:-1]))
    q_a_up = np.concatenate(([inputs.q0_a], state.q_a[:-1]))
    rho_next = state.rho + td * (q_up - state.q + inputs.r - inputs.s)
    rho_a_next = state.rho_a + td * (q_a_up - state.q_a + inputs.r_a - inputs.s_a)
    rho_next = np.maximum(rho_next, 0.0)
    rho_a_next = np.clip(rho_a_next, 0.0, rho_next)

    v = state.v
    v_up = np.concatenate(([v[0]], v[:-1]))
    rho_down = np.concatenate((state.rho[1:], [state.rho[-1]]))
    rho_k = state.rho + params.kappa
    t = geom.step_h
    v_next = (
        v
        + (t / params.tau_h) * (nominal_speed(state.rho, params) - v)
        + td * v * (v_up - v)
        - (params.nu * t / params.tau_h) / geom.seg_len_km * (rho_down - state.rho) / rho_k
        - params.delta_ramp * td * inputs.r * v / rho_k
        + xi_v
    )
    v_next = np.clip(v_next, 0.0, 1.5 * params.v_free)

    q_next = np.maximum(rho_next * v_next + xi_q, 0.0)
    q_a_next = np.clip(rho_a_next * v_next + xi_q_a, 0.0, q_next)

    for arr in (rho_next, rho_a_next, v_next, q_next, q_a_next):
        if not np.all(np.isfinite(arr)):
            raise FloatingPointError(f"non-finite state at step {step}")
    return TrafficState(rho=rho_next, rho_a=rho_a_next, v=v_next, q=q_next, q_a=q_a_next)


def observe(state: TrafficState, inputs: BoundaryInputs, layout: RampLayout,
            noise: NoiseSpec, step: int) -> MeasurementFrame:
    """Produce the step's measurement frame.

    Detector noise applies only where detectors exist: entry, exit, and the
    layout's ramp segments.  Noisy flows are clamped at zero.
    """
    n = state.n_segments
    rng = _stream(noise, step, _STREAM_DETECT)
    gamma_0 = noise.std_entry_flow * rng.standard_normal()
    gamma_n = noise.std_entry_flow * rng.standard_normal()
    gamma_r = noise.std_onramp * rng.standard_normal(n)
    gamma_s = noise.std_offramp * rng.standard_normal(n)

    r_meas = np.zeros(n)
    for seg in layout.on_ramp_segments:
        r_meas[seg - 1] = max(inputs.r[seg - 1] + gamma_r[seg - 1], 0.0)
    s_meas = np.zeros(n)
    for seg in layout.off_ramp_segments:
        s_meas[seg - 1] = max(inputs.s[seg - 1] + gamma_s[seg - 1], 0.0)

    return MeasurementFrame(
        q0_a=inputs.q0_a,
        q_a_seg=state.q_a,
        rho_a_seg=state.rho_a,
        r_a=inputs.r_a,
        s_a=inputs.s_a,
        q0_meas=max(inputs.q0 + gamma_0, 0.0),
        qN_meas=max(state.q[-1] + gamma_n, 0.0),
        r_meas=r_meas,
        s_meas=s_meas,
    )


@dataclass(frozen=True)
class TruthRun:
    """A simulated trajectory: M+1 states with per-step inputs and frames."""

    states: tuple[TrafficState, ...]
    inputs: tuple[BoundaryInputs, ...]
    frames: tuple[MeasurementFrame, ...]

    @property
    def n_steps(self) -> int:
        return len(self.states) - 1

    def rho_matrix(self) -> np.ndarray:
        return np.stack([s.rho for s in self.states])

    def rho_a_matrix(self) -> np.ndarray:
        return np.stack([s.rho_a for s in self.states])


class TruthSimulator:
    """Owns demand profiles, geometry, and the noise stream for one run."""

    def __init__(self, geom: HighwayGeometry, params: MetanetParams,
                 layout: RampLayout, noise: NoiseSpec,
                 entry_demand: PiecewiseLinear,
                 onramp_demand: Mapping[int, PiecewiseLinear],
                 penetration_profile: PiecewiseLinear,
                 init_state: TrafficState):
        layout.validate_against(geom.n_segments)
        for seg in onramp_demand:
            if seg not in layout.on_ramp_segments:
                raise ValueError(f"demand given for segment {seg} without an on-ramp")
        if init_state.n_segments != geom.n_segments:
            raise ValueError("initial state size does not match geometry")
        self.geom = geom
        self.params = params
        self.layout = layout
        self.noise = noise
        self.entry_demand = entry_demand
        self.onramp_demand = dict(onramp_demand)
        self.penetration_profile = penetration_profile
        self.init_state = init_state

    def inputs_at(self, state: TrafficState, step: int) -> BoundaryInputs:
        """Demands at the step's clock time, entry process noise, exit-rate outflows."""
        t = step * self.geom.step_h
        pen = min(max(self.penetration_profile(t), 0.0), 1.0)
        q0_nom = self.entry_demand(t)
        r = np.zeros(self.geom.n_segments)
        for seg, profile in self.onramp_demand.items():
            r[seg - 1] = profile(t)
        r_a = pen * r

        rng = _stream(self.noise, step, _STREAM_ENTRY)
        q0 = max(q0_nom + self.noise.std_flow_proc * rng.standard_normal(), 0.0)
        q0_a = min(max(pen * q0_nom + self.noise.std_flow_proc_a * rng.standard_normal(), 0.0), q0)
        s, s_a = offramp_outflows(state, q0, q0_a, self.layout)
        return BoundaryInputs(q0=q0, q0_a=q0_a, r=r, r_a=r_a, s=s, s_a=s_a)

    def run(self, n_steps: int) -> TruthRun:
        """Simulate n_steps transitions; returns n_steps+1 states and frames."""
        if n_steps < 1:
            raise ValueError("n_steps must be >= 1")
        states = [self.init_state]
        inputs = []
        frames = []
        for k in range(n_steps):
            inp = self.inputs_at(states[-1], k)
            inputs.append(inp)
            frames.append(observe(states[-1], inp, self.layout, self.noise, k))
            states.append(step_truth(states[-1], inp, self.geom, self.params,
                                     self.noise, k))
        final_inp = self.inputs_at(states[-1], n_steps)
        inputs.append(final_inp)
        frames.append(observe(states[-1], final_inp, self.layout, self.noise, n_steps))
        return TruthRun(states=tuple(states), inputs=tuple(inputs), frames=tuple(frames))
