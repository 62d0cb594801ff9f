"""Time-varying Kalman filter for the inverse connected-share state.

One-step predictor form, with the gain applied through the state matrix:

    K(k)   = P(k) C' (C P(k) C' + R)^-1
    x^(k+1) = A(k) x^(k) + B(k) u(k) + A(k) K(k) (z(k) - C x^(k))
    P(k+1) = A(k) (I - K(k) C) P(k) A(k)' + Q

P is re-symmetrized each step; the update above is not in Joseph form and
drifts over long runs otherwise.  Estimates are deliberately not clamped to
the physical range (ratio >= 1): clamping would hide filter misbehavior.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import EPS_DENSITY
from .ltv import LtvSystem
from .metanet import MeasurementFrame


def _check_spd(mat: np.ndarray, name: str) -> np.ndarray:
    mat = np.asarray(mat, dtype=float)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise ValueError(f"{name} must be square")
    if not np.allclose(mat, mat.T, rtol=0, atol=1e-10):
        raise ValueError(f"{name} must be symmetric")
    if np.min(np.linalg.eigvalsh(mat)) <= 0:
        raise ValueError(f"{name} must be positive definite")
    return mat


@dataclass(frozen=True)
class KalmanConfig:
    """Tuning (Q, R) and initialization (x0, P0) of the filter."""

    q_cov: np.ndarray
    r_cov: float
    x0: np.ndarray
    p0: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "q_cov", _check_spd(self.q_cov, "q_cov"))
        object.__setattr__(self, "p0", _check_spd(self.p0, "p0"))
        object.__setattr__(self, "x0", np.asarray(self.x0, dtype=float))
        n = self.x0.shape[0]
        if self.q_cov.shape != (n, n) or self.p0.shape != (n, n):
            raise ValueError("q_cov/p0 dimensions must match x0")
        if self.r_cov <= 0:
            raise ValueError("r_cov must be > 0")

    @classmethod
    def scaled_identity(cls, n: int, q_sigma: float = 1.0, r_cov: float = 100.0,
                        x0_value: float = 10.0, p0_sigma: float = 1.0) -> "KalmanConfig":
        """Q = q_sigma*I, P0 = p0_sigma*I, x0 constant; the stock tuning."""
        return cls(q_cov=q_sigma * np.eye(n), r_cov=float(r_cov),
                   x0=np.full(n, float(x0_value)), p0=p0_sigma * np.eye(n))


@dataclass(frozen=True)
class FilterState:
    """Estimate, covariance, and the gain used in the most recent step."""

    x_hat: np.ndarray
    p_cov: np.ndarray
    k_gain: np.ndarray

    def __post_init__(self):
        if not np.all(np.isfinite(self.x_hat)):
            raise FloatingPointError("non-finite estimate")

    @classmethod
    def initial(cls, config: KalmanConfig) -> "FilterState":
        return cls(x_hat=config.x0.copy(), p_cov=config.p0.copy(),
                   k_gain=np.zeros(config.x0.shape[0]))


def filter_step(fs: FilterState, sys: LtvSystem, z: float,
                config: KalmanConfig) -> FilterState:
    """One filter step against the scalar output measurement z at the same k."""
    p = fs.p_cov
    c = sys.c_vec
    pc = p @ c
    gain = pc / (c @ pc + config.r_cov)
    innovation = z - c @ fs.x_hat
    x_next = sys.a_mat @ fs.x_hat + sys.b_mat @ sys.u_vec \
        + (sys.a_mat @ gain) * innovation
    p_post = p - np.outer(gain, pc)          # (I - K C) P with C = c as a row
    p_next = sys.a_mat @ p_post @ sys.a_mat.T + config.q_cov
    p_next = 0.5 * (p_next + p_next.T)
    if not (np.all(np.isfinite(x_next)) and np.all(np.isfinite(p_next))):
        raise FloatingPointError("non-finite filter state")
    return FilterState(x_hat=x_next, p_cov=p_next, k_gain=gain)


def output_measurement(frame: MeasurementFrame, last_z: float | None = None,
                       floor: float = EPS_DENSITY) -> tuple[float, bool]:
    """Scalar output: noisy total exit flow over exact connected exit flow.

    When the connected exit flow is at or below the floor the ratio is
    meaningless; falls back to ``last_z`` and flags it, or raises when no
    fallback is available.
    """
    q_a_exit = frame.q_a_seg[-1]
    if q_a_exit <= floor:
        if last_z is None:
            raise ValueError("connected exit flow is empty and no fallback given")
        return last_z, True
    return frame.qN_meas / q_a_exit, False


def reconstruct_totals(x_hat: np.ndarray, frame: MeasurementFrame) -> tuple[np.ndarray, np.ndarray]:
    """Totals from the estimate: rho_hat = rho_a * x_hat, q_hat = q_a * x_hat."""
    x_hat = np.asarray(x_hat, dtype=float)
    return frame.rho_a_seg * x_hat, frame.q_a_seg * x_hat
