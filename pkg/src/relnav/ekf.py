"""Extended Kalman filter on second-order CW dynamics with LOS measurements."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from relnav.covariance import propagate_covariance, symmetrize
from relnav.dynamics import ImpulseSequence, OrbitParams, cw2_acceleration, cw2_jacobian, propagate_linear
from relnav.errors import DegenerateGeometryError
from relnav.measurement import measurement_covariance


@dataclass(frozen=True)
class EkfState:
    x_hat: np.ndarray
    P: np.ndarray
    Q_proc: np.ndarray  # per filter step
    R_meas: np.ndarray
    dt: float = 1.0

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")


def default_process_noise() -> np.ndarray:
    return np.diag([1e-10] * 3 + [1e-12] * 3)


def isotropic_measurement_noise(sigma_theta: float, inflation: float = 500.0) -> np.ndarray:
    return inflation * sigma_theta**2 * np.eye(3)


def euler_step(x: np.ndarray, u: np.ndarray, dt: float, params: OrbitParams) -> np.ndarray:
    """Explicit Euler step of the second-order model: r += v dt, v += (a + u) dt."""
    out = np.empty(6)
    out[:3] = x[:3] + x[3:] * dt
    out[3:] = x[3:] + (cw2_acceleration(x, params) + u) * dt
    return out


def transition_jacobian(x: np.ndarray, dt: float, params: OrbitParams) -> np.ndarray:
    return np.eye(6) + dt * cw2_jacobian(x, params)


def measurement_jacobian(x: np.ndarray) -> np.ndarray:
    r = np.asarray(x[:3], dtype=float)
    rn = np.linalg.norm(r)
    if rn == 0.0:
        raise DegenerateGeometryError("predicted range is zero")
    H = np.zeros((3, 6))
    H[:, :3] = (np.eye(3) - np.outer(r, r) / rn**2) / rn
    return H


def ekf_predict(s: EkfState, u, params: OrbitParams, impulsive: bool = False) -> EkfState:
    """Euler prediction. With ``impulsive`` the command acts as a velocity jump
    ``u * dt`` at the start of the step (how the simulator applies it)."""
    u = np.zeros(3) if u is None else np.asarray(u, dtype=float)
    x0 = s.x_hat
    if impulsive:
        x0 = x0.copy()
        x0[3:] += u * s.dt
        u = np.zeros(3)
    F = transition_jacobian(x0, s.dt, params)
    x = euler_step(x0, u, s.dt, params)
    P = symmetrize(F @ s.P @ F.T + s.Q_proc)
    return replace(s, x_hat=x, P=P)


def ekf_update(s: EkfState, y, joseph: bool = True) -> EkfState:
    y = np.asarray(y, dtype=float)
    H = measurement_jacobian(s.x_hat)
    r = s.x_hat[:3]
    innov = y - r / np.linalg.norm(r)
    S = H @ s.P @ H.T + s.R_meas
    L = s.P @ H.T @ np.linalg.pinv(S, hermitian=True)
    x = s.x_hat + L @ innov
    I_LH = np.eye(6) - L @ H
    if joseph:
        P = I_LH @ s.P @ I_LH.T + L @ s.R_meas @ L.T
    else:
        P = I_LH @ s.P
    return replace(s, x_hat=x, P=symmetrize(P))


def tangent_measurement_noise(x_hat: np.ndarray, sigma_theta: float) -> np.ndarray:
    """Alternative R from the tangent-plane model at the predicted LOS."""
    r = x_hat[:3]
    return measurement_covariance(r / np.linalg.norm(r), sigma_theta)


def ekf_initialize_from_irod(x0_hat, P0, t_handover: float, Q_proc: np.ndarray,
                             R_meas: np.ndarray, params: OrbitParams,
                             impulses: ImpulseSequence | None = None, dt: float = 1.0,
                             riemann_step: float | None = None) -> EkfState:
    """Propagate the batch estimate to ``t_handover`` and install it as the filter prior.

    ``Q_proc`` is per filter step; the covariance propagation uses the rate
    ``Q_proc / dt``.
    """
    x = propagate_linear(x0_hat, impulses, t_handover, params)
    P = propagate_covariance(np.asarray(P0, dtype=float), t_handover, Q_proc / dt, params, riemann_step)
    return EkfState(x, P, Q_proc, R_meas, dt)
