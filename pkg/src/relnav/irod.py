"""Angles-only initial relative orbit determination with known impulsive inputs.

Scale factors ``k_i = |r(t_i)|`` solve the linear system ``A_N k = B_N`` built
from the LOS history; the initial state follows from ``k_0`` and ``k_1``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from relnav.dynamics import ImpulseSequence, OrbitParams, StmSet, cw_stm
from relnav.errors import SingularStmError, UnobservableError
from relnav.measurement import LosMeasurement

RANK_TOL = 1e-10
SPACING_TOL = 1e-6


@dataclass(frozen=True)
class IrodSystem:
    A: np.ndarray  # 3(N-2) x N
    B: np.ndarray  # 3(N-2)
    los: np.ndarray  # N x 3
    T: float
    stms: tuple[StmSet, ...]  # stms[i] = Phi(i*T), i = 0..N-1
    phi_rv_T_inv: np.ndarray

    @property
    def N(self) -> int:
        return self.los.shape[0]


@dataclass(frozen=True)
class IrodSolution:
    k: np.ndarray
    x0_hat: np.ndarray
    residual_norm: float
    condition_A: float
    pinv: np.ndarray  # (A^T A)^-1 A^T from the SVD of A


@dataclass(frozen=True)
class ReconstructionMatrix:
    C: np.ndarray  # 6 x 2
    J: np.ndarray  # 2 x N


def _inv_phi_rv(stm: StmSet) -> np.ndarray:
    phi = stm.phi_rv
    s = np.linalg.svd(phi, compute_uv=False)
    if s[-1] <= 1e-12 * max(s[0], 1.0):
        raise SingularStmError(
            f"phi_rv({stm.dt:g} s) is singular (smallest singular value {s[-1]:.3e}); "
            "is T a multiple of the orbital period?")
    return np.linalg.inv(phi)


def _los_array(measurements) -> tuple[np.ndarray, np.ndarray | None]:
    if len(measurements) and isinstance(measurements[0], LosMeasurement):
        los = np.array([m.los for m in measurements])
        times = np.array([m.epoch_time for m in measurements])
        return los, times
    return np.asarray(measurements, dtype=float).reshape(-1, 3), None


def build_system(measurements: Sequence[LosMeasurement] | np.ndarray, impulses: ImpulseSequence | None,
                 params: OrbitParams, T: float | None = None) -> IrodSystem:
    """Assemble ``A_N`` and ``B_N``.

    ``measurements`` is a list of :class:`LosMeasurement` (equally spaced) or an
    ``(N, 3)`` array of unit vectors, in which case ``T`` (or the impulse
    period) fixes the spacing.
    """
    los, times = _los_array(measurements)
    N = los.shape[0]
    if N < 3:
        raise ValueError("at least three LOS measurements are required")
    if times is not None:
        gaps = np.diff(times)
        T_meas = float(gaps[0])
        if T_meas <= 0 or np.any(np.abs(gaps - T_meas) > SPACING_TOL * T_meas):
            raise ValueError("measurement epochs must be equally spaced")
        T = T_meas if T is None else T
    if T is None:
        if impulses is None:
            raise ValueError("epoch spacing T is unknown")
        T = impulses.period
    if impulses is not None and abs(impulses.period - T) > SPACING_TOL * T:
        raise ValueError("impulse period must equal the measurement spacing")

    stms = tuple(cw_stm(i * T, params) for i in range(N))
    rv_inv = _inv_phi_rv(stms[1])
    dv = impulses.dense(N) if impulses is not None else np.zeros((N, 3))

    rows = 3 * (N - 2)
    A = np.zeros((rows, N))
    B = np.zeros(rows)
    rr_T = stms[1].phi_rr
    for i in range(2, N):
        blk = slice(3 * (i - 2), 3 * (i - 1))
        m2 = stms[i].phi_rv @ rv_inv
        m1 = stms[i].phi_rr - m2 @ rr_T
        A[blk, 0] = m1 @ los[0]
        A[blk, 1] = m2 @ los[1]
        A[blk, i] = -los[i]
        acc = np.zeros(3)
        for j in range(1, i + 1):
            acc += stms[i - j].phi_rv @ dv[j]
        B[blk] = -acc
    return IrodSystem(A, B, los, float(T), stms, rv_inv)


def solve_scale_factors(system: IrodSystem) -> IrodSolution:
    """Least-squares scale factors via SVD; raises if the scale is unobservable."""
    if not np.any(system.B):
        # noisy LOS can make A full rank, but without forcing the only solution is k = 0
        raise UnobservableError("scale ambiguity unresolved: no known forcing")
    U, s, Vt = np.linalg.svd(system.A, full_matrices=False)
    if s[-1] <= RANK_TOL * s[0]:
        raise UnobservableError(
            f"scale ambiguity unresolved: sigma_min/sigma_max = {s[-1] / s[0]:.3e}")
    pinv = (Vt.T / s) @ U.T
    k = pinv @ system.B
    resid = float(np.linalg.norm(system.A @ k - system.B))
    x0 = reconstruct_initial_state(k[0], k[1], system.los[0], system.los[1], system.stms[1],
                                   rv_inv=system.phi_rv_T_inv)
    return IrodSolution(k, x0, resid, float(s[0] / s[-1]), pinv)


def reconstruct_initial_state(k0: float, k1: float, los0, los1, stm_T: StmSet,
                              rv_inv: np.ndarray | None = None) -> np.ndarray:
    rv_inv = _inv_phi_rv(stm_T) if rv_inv is None else rv_inv
    r0 = k0 * np.asarray(los0, dtype=float)
    v0 = rv_inv @ (k1 * np.asarray(los1, dtype=float) - stm_T.phi_rr @ r0)
    return np.concatenate([r0, v0])


def reconstruction_matrix(system: IrodSystem) -> ReconstructionMatrix:
    rv_inv = system.phi_rv_T_inv
    l0, l1 = system.los[0], system.los[1]
    C = np.zeros((6, 2))
    C[:3, 0] = l0
    C[3:, 0] = -rv_inv @ system.stms[1].phi_rr @ l0
    C[3:, 1] = rv_inv @ l1
    J = np.zeros((2, system.N))
    J[0, 0] = J[1, 1] = 1.0
    return ReconstructionMatrix(C, J)


def estimate_initial_state(measurements, impulses: ImpulseSequence | None, params: OrbitParams,
                           T: float | None = None) -> np.ndarray:
    """Convenience: full map from LOS history to ``x0_hat``."""
    return solve_scale_factors(build_system(measurements, impulses, params, T)).x0_hat


def observability_margin(los0, los1, los2, u1, stm_T: StmSet, stm_2T: StmSet,
                         tol: float = 1e-9) -> tuple[bool, float]:
    """Three-measurement observability test.

    Returns ``(observable, sigma_min(W))``. The margin is reported as 0 when
    ``u1`` lies in the span of the unforced directions, since the scale is
    then not fixed by the input.
    """
    rv_inv = _inv_phi_rv(stm_T)
    m2 = stm_2T.phi_rv @ rv_inv
    m1 = stm_2T.phi_rr - m2 @ stm_T.phi_rr
    l0, l1, l2 = (np.asarray(v, dtype=float) for v in (los0, los1, los2))
    W = np.column_stack([m1 @ l0, m2 @ l1, -l2])
    sigma_min = float(np.linalg.svd(W, compute_uv=False)[-1])

    u1 = np.asarray(u1, dtype=float)
    span = np.column_stack([rv_inv @ m1 @ l0, rv_inv @ m2 @ l1])
    u_norm = np.linalg.norm(u1)
    if u_norm == 0.0:
        return False, 0.0
    coef, *_ = np.linalg.lstsq(span, u1, rcond=None)
    off_span = np.linalg.norm(u1 - span @ coef) / u_norm
    if off_span <= tol or sigma_min <= tol:
        return False, 0.0
    return True, sigma_min
