"""First-order covariance of the batch IROD estimate and handover logic."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from relnav.dynamics import OrbitParams, cw_stm_matrix
from relnav.irod import IrodSolution, IrodSystem, reconstruction_matrix
from relnav.measurement import measurement_covariance

KAPPA_FLOOR = 1e-300


@dataclass(frozen=True)
class CovarianceReport:
    P0: np.ndarray
    P_norm: np.ndarray
    singular_values: np.ndarray
    kappa: float
    lam_max_pos: float
    lam_max_vel: float


@dataclass(frozen=True)
class TransitionThresholds:
    sigma2_pos: float = 2000.0  # m^2
    sigma2_vel: float = 0.005  # m^2/s^2

    def __post_init__(self):
        if self.sigma2_pos <= 0 or self.sigma2_vel <= 0:
            raise ValueError("thresholds must be positive")


def symmetrize(P: np.ndarray) -> np.ndarray:
    return 0.5 * (P + P.T)


def _d_Ak_d_los(system: IrodSystem, k: np.ndarray, i: int) -> np.ndarray:
    """Derivative of ``A_N k`` with respect to ``LOS_i`` (3(N-2) x 3)."""
    N = system.N
    out = np.zeros((3 * (N - 2), 3))
    rv_inv = system.phi_rv_T_inv
    rr_T = system.stms[1].phi_rr
    if i == 0:
        for m in range(2, N):
            m2 = system.stms[m].phi_rv @ rv_inv
            out[3 * (m - 2):3 * (m - 1)] = k[0] * (system.stms[m].phi_rr - m2 @ rr_T)
    elif i == 1:
        for m in range(2, N):
            out[3 * (m - 2):3 * (m - 1)] = k[1] * (system.stms[m].phi_rv @ rv_inv)
    else:
        out[3 * (i - 2):3 * (i - 1)] = -k[i] * np.eye(3)
    return out


def _d_C_Jk_d_los(system: IrodSystem, k: np.ndarray, i: int) -> np.ndarray:
    out = np.zeros((6, 3))
    rv_inv = system.phi_rv_T_inv
    if i == 0:
        out[:3] = k[0] * np.eye(3)
        out[3:] = -k[0] * rv_inv @ system.stms[1].phi_rr
    elif i == 1:
        out[3:] = k[1] * rv_inv
    return out


def sensitivity_matrices(system: IrodSystem, solution: IrodSolution) -> list[np.ndarray]:
    """Sensitivity ``S_i`` (6x3) of ``x0_hat`` to a perturbation of ``LOS_i``."""
    rec = reconstruction_matrix(system)
    CJ_pinv = rec.C @ rec.J @ solution.pinv
    k = solution.k
    return [_d_C_Jk_d_los(system, k, i) - CJ_pinv @ _d_Ak_d_los(system, k, i)
            for i in range(system.N)]


def irod_covariance(S_list, los, sigma_theta: float) -> np.ndarray:
    """``P0 = sum_i S_i Sigma_i S_i^T`` with tangent-plane measurement covariance."""
    P = np.zeros((6, 6))
    for S, l in zip(S_list, np.asarray(los, dtype=float)):
        P += S @ measurement_covariance(l, sigma_theta) @ S.T
    return symmetrize(P)


def normalization_matrix(params: OrbitParams) -> np.ndarray:
    L = params.a
    V = params.n * params.a
    return np.diag([1 / L] * 3 + [1 / V] * 3)


def normalize_and_analyze(P0: np.ndarray, params: OrbitParams) -> CovarianceReport:
    P0 = symmetrize(np.asarray(P0, dtype=float))
    Tm = normalization_matrix(params)
    P_norm = symmetrize(Tm @ P0 @ Tm.T)
    sv = np.linalg.svd(P_norm, compute_uv=False)
    kappa = math.inf if sv[-1] < KAPPA_FLOOR else float(sv[0] / sv[-1])
    lam_pos = float(np.linalg.eigvalsh(P0[:3, :3])[-1])
    lam_vel = float(np.linalg.eigvalsh(P0[3:, 3:])[-1])
    return CovarianceReport(P0, P_norm, sv, kappa, lam_pos, lam_vel)


def analyze(system: IrodSystem, solution: IrodSolution, sigma_theta: float,
            params: OrbitParams) -> CovarianceReport:
    S = sensitivity_matrices(system, solution)
    return normalize_and_analyze(irod_covariance(S, system.los, sigma_theta), params)


def transition_check(report: CovarianceReport, thresholds: TransitionThresholds) -> bool:
    return report.lam_max_pos < thresholds.sigma2_pos and report.lam_max_vel < thresholds.sigma2_vel


def integrated_process_noise(dt: float, Q: np.ndarray, params: OrbitParams,
                             riemann_step: float | None = None) -> np.ndarray:
    """Left Riemann sum of ``int_0^dt Phi(dt - tau) Q Phi(dt - tau)^T dtau``."""
    if dt == 0:
        return np.zeros((6, 6))
    h = dt / 200.0 if riemann_step is None else riemann_step
    if h <= 0:
        raise ValueError("riemann_step must be positive")
    Q_int = np.zeros((6, 6))
    tau = 0.0
    while tau < dt - 1e-12 * dt:
        w = min(h, dt - tau)
        phi = cw_stm_matrix(dt - tau, params)
        Q_int += phi @ Q @ phi.T * w
        tau += w
    return symmetrize(Q_int)


def propagate_covariance(P0: np.ndarray, dt: float, Q: np.ndarray, params: OrbitParams,
                         riemann_step: float | None = None) -> np.ndarray:
    """``Phi P0 Phi^T + Q_int``; ``Q`` is a process-noise rate (per second)."""
    if dt < 0:
        raise ValueError("dt must be non-negative")
    phi = cw_stm_matrix(dt, params)
    P = phi @ P0 @ phi.T
    if np.any(Q):
        P = P + integrated_process_noise(dt, Q, params, riemann_step)
    return symmetrize(P)


def chebyshev_halfwidth(variance, alpha: float = 0.05) -> np.ndarray:
    """Distribution-free ``1 - alpha`` half-width ``sqrt(var / alpha)``."""
    return np.sqrt(np.asarray(variance, dtype=float) / alpha)
