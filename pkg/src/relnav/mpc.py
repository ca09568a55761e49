"""Finite-horizon MPC for terminal rendezvous on the discretised CW model.

The QP is posed in normalised variables (positions / s_r, velocities / s_v,
inputs / u_max) and solved with Clarabel (default) or OSQP; a saturated PD
law is the fallback.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import clarabel
import osqp
import scipy.sparse as sp

from relnav.dynamics import OrbitParams, discretize_semi_implicit


@dataclass(frozen=True)
class Tier:
    """Bounds that apply once the range drops below ``range_below`` (m)."""

    range_below: float
    u_max: float | None = None
    r_max: float | None = None
    v_max: float | None = None


def braking_tiers(start: float = 4000.0, ratio: float = 0.7, floor: float = 0.05,
                  near: float = 100.0, u_far: float = 0.02, u_near: float = 0.01,
                  decel_fraction: float = 0.25) -> tuple[Tier, ...]:
    """Geometric range table with ``v_max = sqrt(2 * decel_fraction * u_max * range)``.

    Below ``near`` the input bound drops to ``u_near``.
    """
    if not (0 < ratio < 1 and start > floor > 0):
        raise ValueError("need 0 < ratio < 1 and start > floor > 0")
    tiers = []
    r = start
    while r > floor:
        u = u_far if r > near else u_near
        tiers.append(Tier(r, u_max=None if r > near else u_near,
                          v_max=float(np.sqrt(2 * decel_fraction * u * r))))
        r *= ratio
    return tuple(tiers)


@dataclass(frozen=True)
class MpcConfig:
    H: int = 30
    w_pos: float = 10.0
    w_vel: float = 1e-5
    w_u: float = 1e-4
    w_term: float = 1.0
    u_max: float = 0.02  # m/s^2
    r_max: float = 1.0e4  # m
    v_max: float = 5.0  # m/s
    dt: float = 1.0
    tol: float = 1e-8
    max_iter: int = 20000
    pd_gains: tuple[float, float] = (1e-4, 2e-2)
    brake_fraction: float = 0.8
    solver: str = "clarabel"  # or "osqp"
    tiers: tuple[Tier, ...] = field(default_factory=braking_tiers)

    def __post_init__(self):
        if self.H < 1:
            raise ValueError("horizon must be at least 1")
        if min(self.u_max, self.r_max, self.v_max, self.dt) <= 0:
            raise ValueError("bounds and dt must be positive")
        if self.solver not in ("clarabel", "osqp"):
            raise ValueError(f"unknown solver {self.solver!r}")
        if not 0 < self.brake_fraction <= 1:
            raise ValueError("brake_fraction must lie in (0, 1]")
        if min(self.w_pos, self.w_vel, self.w_u, self.w_term) < 0:
            raise ValueError("weights must be non-negative")


@dataclass
class MpcSolution:
    u_plan: np.ndarray  # (H, 3)
    states: np.ndarray  # (H+1, 6)
    objective: float
    status: str  # "optimal" | "fallback"
    solver_status: str = ""
    iterations: int = 0


def scales(x_hat) -> tuple[float, float]:
    x_hat = np.asarray(x_hat, dtype=float)
    return max(float(np.linalg.norm(x_hat[:3])), 1.0), max(float(np.linalg.norm(x_hat[3:])), 0.1)


def rollout(x0, u_plan, cfg: MpcConfig, params: OrbitParams) -> np.ndarray:
    Ad, Bd = discretize_semi_implicit(params, cfg.dt)
    xs = [np.asarray(x0, dtype=float)]
    for u in np.asarray(u_plan, dtype=float).reshape(-1, 3):
        xs.append(Ad @ xs[-1] + Bd @ (u * cfg.dt))
    return np.array(xs)


def mpc_objective(x0, u_plan, cfg: MpcConfig, params: OrbitParams) -> float:
    """Cost of a plan in physical units, normalised by the scales of ``x0``."""
    s_r, s_v = scales(x0)
    xs = rollout(x0, u_plan, cfg, params)
    u = np.asarray(u_plan, dtype=float).reshape(-1, 3)
    H = u.shape[0]
    J = 0.0
    for j in range(H):
        J += (cfg.w_pos * xs[j, :3] @ xs[j, :3] / s_r**2 + cfg.w_vel * xs[j, 3:] @ xs[j, 3:] / s_v**2
              + cfg.w_u * u[j] @ u[j] / cfg.u_max**2)
    J += cfg.w_term * (xs[H, :3] @ xs[H, :3] / s_r**2 + xs[H, 3:] @ xs[H, 3:] / s_v**2)
    return float(J)


def pd_fallback(x_hat, gains: tuple[float, float], u_max: float) -> np.ndarray:
    kp, kd = gains
    if kp <= 0 or kd <= 0:
        raise ValueError("PD gains must be positive")
    x_hat = np.asarray(x_hat, dtype=float)
    return np.clip(-kp * x_hat[:3] - kd * x_hat[3:], -u_max, u_max)


def adapt_config(rng: float, base: MpcConfig) -> MpcConfig:
    """Tighten bounds for every tier whose trigger range exceeds ``rng``; never loosens."""
    if rng < 0:
        raise ValueError("range must be non-negative")
    cfg = base
    for tier in base.tiers:
        if rng < tier.range_below:
            cfg = replace(
                cfg,
                u_max=min(cfg.u_max, tier.u_max) if tier.u_max is not None else cfg.u_max,
                r_max=min(cfg.r_max, tier.r_max) if tier.r_max is not None else cfg.r_max,
                v_max=min(cfg.v_max, tier.v_max) if tier.v_max is not None else cfg.v_max,
            )
    return cfg


@dataclass(frozen=True)
class ScaledQp:
    P: sp.csc_matrix
    q: np.ndarray
    A: sp.csc_matrix
    l: np.ndarray
    u: np.ndarray
    s_r: float
    s_v: float
    n_x: int  # number of state variables (6H) preceding the inputs


def state_bounds(x_hat, cfg: MpcConfig) -> np.ndarray:
    """Per-step box bounds (H, 6) on predicted positions and velocities.

    A velocity component already above ``v_max`` gets a bound that decays
    towards ``v_max`` at ``brake_fraction * u_max`` per step, so tightening a
    tier never makes the first steps infeasible.
    """
    x_hat = np.asarray(x_hat, dtype=float)
    j = np.arange(1, cfg.H + 1)[:, None]
    v0 = np.abs(x_hat[3:])[None, :]
    vb = np.maximum(cfg.v_max, v0 - cfg.brake_fraction * cfg.u_max * cfg.dt * j)
    rb = np.full((cfg.H, 3), cfg.r_max)
    return np.hstack([rb, vb])


def build_qp(x_hat, cfg: MpcConfig, params: OrbitParams) -> ScaledQp:
    """Sparse QP in ``z = [x~_1..x~_H, u~_0..u~_{H-1}]`` (normalised)."""
    H = cfg.H
    s_r, s_v = scales(x_hat)
    D = np.diag([s_r] * 3 + [s_v] * 3)
    Dinv = np.diag([1 / s_r] * 3 + [1 / s_v] * 3)
    Ad, Bd = discretize_semi_implicit(params, cfg.dt)
    At = Dinv @ Ad @ D
    Bt = Dinv @ Bd * (cfg.dt * cfg.u_max)
    x0t = Dinv @ np.asarray(x_hat, dtype=float)

    nx, nu = 6 * H, 3 * H
    wx = np.tile([cfg.w_pos] * 3 + [cfg.w_vel] * 3, H).astype(float)
    wx[-6:] = cfg.w_term
    P = sp.diags(np.concatenate([2 * wx, np.full(nu, 2 * cfg.w_u)]), format="csc")
    q = np.zeros(nx + nu)

    # dynamics: x_{j+1} - At x_j - Bt u_j = 0 (x_0 known)
    Ax = sp.kron(sp.eye(H), -sp.eye(6)) + sp.kron(sp.eye(H, k=-1), sp.csc_matrix(At))
    Bu = sp.kron(sp.eye(H), sp.csc_matrix(Bt))
    Aeq = sp.hstack([Ax, Bu])
    leq = np.zeros(nx)
    leq[:6] = -At @ x0t
    ueq = leq.copy()

    xb = (state_bounds(x_hat, cfg) / np.array([s_r] * 3 + [s_v] * 3)).ravel()
    Aineq = sp.eye(nx + nu)
    lineq = np.concatenate([-xb, -np.ones(nu)])
    uineq = np.concatenate([xb, np.ones(nu)])

    A = sp.vstack([Aeq, Aineq], format="csc")
    return ScaledQp(P, q, A, np.concatenate([leq, lineq]), np.concatenate([ueq, uineq]),
                    s_r, s_v, nx)


def _fallback(x_hat, cfg, params, solver_status=""):
    u0 = pd_fallback(x_hat, cfg.pd_gains, cfg.u_max)
    u_plan = np.tile(u0, (cfg.H, 1))
    return MpcSolution(u_plan, rollout(x_hat, u_plan, cfg, params),
                       mpc_objective(x_hat, u_plan, cfg, params), "fallback", solver_status)


def constraints_satisfied(sol: MpcSolution, cfg: MpcConfig, rtol: float = 1e-6) -> bool:
    ok_u = np.all(np.abs(sol.u_plan) <= cfg.u_max * (1 + 1e-12))
    bounds = state_bounds(sol.states[0], cfg)
    ok_x = np.all(np.abs(sol.states[1:]) <= bounds * (1 + rtol))
    return bool(ok_u and ok_x)


def _shifted_plan(warm_start, cfg: MpcConfig) -> np.ndarray:
    prev = np.asarray(warm_start, dtype=float).reshape(-1, 3)
    shifted = np.vstack([prev[1:], prev[-1:]])[: cfg.H]
    if shifted.shape[0] < cfg.H:
        shifted = np.vstack([shifted, np.repeat(shifted[-1:], cfg.H - shifted.shape[0], 0)])
    return np.clip(shifted, -cfg.u_max, cfg.u_max)


def _solve_osqp(qp: ScaledQp, x_hat, cfg: MpcConfig, params: OrbitParams, warm_start):
    solver = osqp.OSQP()
    solver.setup(qp.P, qp.q, qp.A, qp.l, qp.u, verbose=False, eps_abs=cfg.tol, eps_rel=cfg.tol,
                 polishing=True, max_iter=cfg.max_iter, warm_starting=True)
    if warm_start is not None:
        shifted = _shifted_plan(warm_start, cfg)
        xs = rollout(x_hat, shifted, cfg, params)[1:]
        xs_t = xs / np.array([qp.s_r] * 3 + [qp.s_v] * 3)
        solver.warm_start(x=np.concatenate([xs_t.ravel(), (shifted / cfg.u_max).ravel()]))
    res = solver.solve(raise_error=False)
    ok = res.info.status_val == 1  # OSQP_SOLVED
    return ok, res.x, str(res.info.status), int(res.info.iter)


def _solve_clarabel(qp: ScaledQp, cfg: MpcConfig):
    neq = qp.n_x
    A_in = qp.A[neq:]
    A = sp.vstack([qp.A[:neq], A_in, -A_in], format="csc")
    b = np.concatenate([qp.u[:neq], qp.u[neq:], -qp.l[neq:]])
    cones = [clarabel.ZeroConeT(neq), clarabel.NonnegativeConeT(2 * A_in.shape[0])]
    st = clarabel.DefaultSettings()
    st.verbose = False
    # primal accuracy of the interior point scales like sqrt(gap); tighten the gap
    st.tol_gap_abs = st.tol_gap_rel = cfg.tol * 1e-2
    st.tol_feas = cfg.tol
    st.max_iter = min(cfg.max_iter, 500)
    res = clarabel.DefaultSolver(sp.triu(qp.P, format="csc"), qp.q, A, b, cones, st).solve()
    ok = str(res.status) == "Solved"
    return ok, np.asarray(res.x), str(res.status), int(res.iterations)


def solve_mpc(x_hat, cfg: MpcConfig, params: OrbitParams,
              warm_start: np.ndarray | None = None) -> MpcSolution:
    """Solve the normalised QP; the warm start (shifted previous plan) is used by OSQP."""
    x_hat = np.asarray(x_hat, dtype=float)
    if not np.all(np.isfinite(x_hat)):
        return _fallback(np.nan_to_num(x_hat), cfg, params, "non-finite state")
    qp = build_qp(x_hat, cfg, params)
    if cfg.solver == "osqp":
        ok, z, status, iters = _solve_osqp(qp, x_hat, cfg, params, warm_start)
    else:
        ok, z, status, iters = _solve_clarabel(qp, cfg)
    if not ok:
        return _fallback(x_hat, cfg, params, status)
    u_plan = np.clip(z[qp.n_x:].reshape(cfg.H, 3), -1.0, 1.0) * cfg.u_max
    states = rollout(x_hat, u_plan, cfg, params)
    sol = MpcSolution(u_plan, states, mpc_objective(x_hat, u_plan, cfg, params), "optimal",
                      status, iters)
    if not constraints_satisfied(sol, cfg, rtol=1e-5):
        return _fallback(x_hat, cfg, params, "constraint violation")
    return sol
