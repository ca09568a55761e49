"""Active-learning input design: Greedy-y batch objective, PSO, sequential selection.

Input sequences are per-step accelerations (m/s^2). On the design grid of
spacing ``dt`` an input ``u_k`` acts as the velocity increment ``u_k * dt``
applied at epoch ``k``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import lsq_linear

from relnav.dynamics import ImpulseSequence, OrbitParams, discretize_semi_implicit
from relnav.errors import EmptyInputSetError

PLAN_SCHEMA_VERSION = 1

DEFAULT_Q_TRACK = (250.0, 25.0, 25.0, 1.0, 1.0, 1.0)


def vbar_samples(distances: Sequence[float]) -> list[np.ndarray]:
    return [np.array([d, 0.0, 0.0, 0.0, 0.0, 0.0]) for d in distances]


@dataclass
class DesignConfig:
    N_off: int = 10
    dt: float = 600.0
    gamma: float = 1e3
    rho: float = 1e8
    tau: float = 1e-2
    Q_track: np.ndarray = field(default_factory=lambda: np.diag(DEFAULT_Q_TRACK))
    u_lower: np.ndarray = field(default_factory=lambda: np.full(3, -1e-4))
    u_upper: np.ndarray = field(default_factory=lambda: np.full(3, 1e-4))
    epsilon: float = 1e-12
    samples: list[np.ndarray] = field(
        default_factory=lambda: vbar_samples([4800.0, 4900.0, 5000.0, 5100.0, 5200.0]))
    references: list[np.ndarray] | None = None  # default: hold each sample's x0

    def __post_init__(self):
        self.Q_track = np.asarray(self.Q_track, dtype=float)
        if self.Q_track.ndim == 1:
            self.Q_track = np.diag(self.Q_track)
        self.u_lower = np.broadcast_to(np.asarray(self.u_lower, dtype=float), (3,)).copy()
        self.u_upper = np.broadcast_to(np.asarray(self.u_upper, dtype=float), (3,)).copy()
        self.samples = [np.asarray(s, dtype=float) for s in self.samples]
        if np.any(self.u_lower > self.u_upper):
            raise ValueError("u_lower must not exceed u_upper")
        if min(self.gamma, self.rho, self.tau, self.epsilon) < 0:
            raise ValueError("weights must be non-negative")
        if self.N_off < 2:
            raise ValueError("N_off must be at least 2")
        if not self.samples:
            raise ValueError("at least one design sample is required")

    def sample_matrix(self) -> np.ndarray:
        return np.vstack(self.samples)

    def reference_matrix(self) -> np.ndarray:
        refs = self.samples if self.references is None else self.references
        return np.vstack([np.asarray(r, dtype=float) for r in refs])


@dataclass
class InputPlan:
    u: np.ndarray  # (N_off, 3) m/s^2, u[0] == 0
    objective_value: float
    provenance: str  # "AL" | "MPC-only" | "Dither"
    period: float
    seed: int | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=float).reshape(-1, 3)

    @property
    def N_off(self) -> int:
        return self.u.shape[0]

    def impulse_dv(self) -> np.ndarray:
        """Velocity increments (m/s) per epoch, row ``k`` applied at ``k * period``."""
        return self.u * self.period

    def impulses(self, upto: int | None = None) -> ImpulseSequence:
        dv = self.impulse_dv()
        if upto is not None:
            dv = dv[: upto + 1]
        return ImpulseSequence.from_dense(self.period, dv)

    def within_bounds(self, lower, upper, tol: float = 0.0) -> bool:
        return bool(np.all(self.u >= np.asarray(lower) - tol) and np.all(self.u <= np.asarray(upper) + tol))

    def to_dict(self) -> dict:
        return {
            "schema_version": PLAN_SCHEMA_VERSION,
            "provenance": self.provenance,
            "seed": self.seed,
            "period_s": self.period,
            "objective_value": self.objective_value,
            "u_mps2": self.u.tolist(),
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "InputPlan":
        if d.get("schema_version") != PLAN_SCHEMA_VERSION:
            raise ValueError(f"unsupported plan schema_version {d.get('schema_version')!r}")
        return cls(np.array(d["u_mps2"], dtype=float), float(d["objective_value"]), d["provenance"],
                   float(d["period_s"]), d.get("seed"), d.get("meta", {}))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    @classmethod
    def load(cls, path) -> "InputPlan":
        return cls.from_dict(json.loads(Path(path).read_text()))


# --- objective --------------------------------------------------------------------

def simulate_design_outputs(U: np.ndarray, cfg: DesignConfig, params: OrbitParams
                            ) -> tuple[np.ndarray, np.ndarray]:
    """Noiseless design-model rollout for every sample.

    Returns ``(Y, X)`` with shapes ``(M, N+1, 3)`` and ``(M, N+1, 6)``.
    """
    U = np.asarray(U, dtype=float).reshape(-1, 3)
    Ad, Bd = discretize_semi_implicit(params, cfg.dt)
    X = cfg.sample_matrix()
    xs = [X]
    for u in U:
        X = X @ Ad.T + Bd @ (u * cfg.dt)
        xs.append(X)
    Xs = np.stack(xs, axis=1)
    R = Xs[:, :, :3]
    Y = R / np.linalg.norm(R, axis=2, keepdims=True)
    return Y, Xs


def exploration_sum(Y: np.ndarray, epsilon: float) -> float:
    """Sum over samples and ordered pairs ``k != h`` of ``1/(|y_k - y_h|^2 + eps)``."""
    diff = Y[:, :, None, :] - Y[:, None, :, :]
    d2 = np.einsum("mkhi,mkhi->mkh", diff, diff)
    inv = 1.0 / (d2 + epsilon)
    n = Y.shape[1]
    inv[:, np.arange(n), np.arange(n)] = 0.0
    return float(inv.sum())


def greedy_y_objective(U: np.ndarray, cfg: DesignConfig, params: OrbitParams) -> float:
    U = np.asarray(U, dtype=float).reshape(-1, 3)
    N = U.shape[0]
    Y, X = simulate_design_outputs(U, cfg, params)
    M = Y.shape[0]
    J = 0.0
    if cfg.gamma:
        J += cfg.gamma / (M * N * (N + 1)) * exploration_sum(Y, cfg.epsilon)
    if cfg.rho:
        dev = X[:, 1:, :] - cfg.reference_matrix()[:, None, :]
        J += cfg.rho / (M * N) * float(np.einsum("mki,ij,mkj->", dev, cfg.Q_track, dev))
    if cfg.tau:
        J += cfg.tau / N * float(np.sum(U * U))
    return J


# --- particle swarm ---------------------------------------------------------------

@dataclass(frozen=True)
class PsoSettings:
    swarm: int = 8
    iters: int = 20
    seed: int = 0
    inertia: float = 0.729
    cognitive: float = 1.49445
    social: float = 1.49445


@dataclass
class PsoResult:
    x: np.ndarray
    f: float
    history: list[float]


def particle_swarm(func: Callable[[np.ndarray], float], lower: np.ndarray, upper: np.ndarray,
                   settings: PsoSettings, initial: np.ndarray | None = None) -> PsoResult:
    """Global-best PSO with clamped velocities and positions.

    ``initial`` rows replace the first particles of the random initial swarm.
    Random draws come from a generator keyed on ``(seed, iteration, particle)``
    so results do not depend on evaluation order.
    """
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    dim = lower.size
    swarm = settings.swarm
    if initial is not None:
        initial = np.atleast_2d(np.asarray(initial, dtype=float))
        swarm = max(swarm, initial.shape[0])
    width = upper - lower
    vmax = 0.5 * width

    X = np.empty((swarm, dim))
    V = np.empty((swarm, dim))
    for p in range(swarm):
        rng = np.random.default_rng([settings.seed, 0, p])
        X[p] = lower + rng.random(dim) * width
        V[p] = (rng.random(dim) - 0.5) * vmax
    if initial is not None:
        X[: initial.shape[0]] = np.clip(initial, lower, upper)

    F = np.array([func(x) for x in X])
    P, PF = X.copy(), F.copy()
    g = int(np.argmin(PF))
    best_x, best_f = P[g].copy(), float(PF[g])
    history = [best_f]
    for it in range(1, settings.iters + 1):
        for p in range(swarm):
            rng = np.random.default_rng([settings.seed, it, p])
            r1, r2 = rng.random(dim), rng.random(dim)
            V[p] = (settings.inertia * V[p] + settings.cognitive * r1 * (P[p] - X[p])
                    + settings.social * r2 * (best_x - X[p]))
        V = np.clip(V, -vmax, vmax)
        X = np.clip(X + V, lower, upper)
        F = np.array([func(x) for x in X])
        improved = F < PF
        P[improved], PF[improved] = X[improved], F[improved]
        g = int(np.argmin(PF))
        if PF[g] < best_f:
            best_x, best_f = P[g].copy(), float(PF[g])
        history.append(best_f)
    return PsoResult(best_x, best_f, history)


def _unpack(z: np.ndarray, N: int) -> np.ndarray:
    return np.vstack([np.zeros((1, 3)), np.asarray(z, dtype=float).reshape(N - 1, 3)])


def optimize_offline_inputs(cfg: DesignConfig, pso: PsoSettings, params: OrbitParams,
                            provenance: str = "AL", initial: np.ndarray | None = None) -> InputPlan:
    """Minimise the Greedy-y objective over ``u_1..u_{N-1}`` with ``u_0 = 0``.

    ``initial`` holds candidate full sequences ``(K, N_off, 3)``; the zero
    sequence is always part of the initial swarm.
    """
    N = cfg.N_off
    lo = np.tile(cfg.u_lower, N - 1)
    hi = np.tile(cfg.u_upper, N - 1)
    seeds = [np.zeros(3 * (N - 1))]
    if initial is not None:
        seeds += [np.asarray(c, dtype=float).reshape(N, 3)[1:].ravel() for c in initial]
    res = particle_swarm(lambda z: greedy_y_objective(_unpack(z, N), cfg, params), lo, hi, pso,
                         initial=np.vstack(seeds))
    U = _unpack(res.x, N)
    return InputPlan(U, res.f, provenance, cfg.dt, pso.seed,
                     {"swarm": pso.swarm, "iters": pso.iters, "gamma": cfg.gamma,
                      "history": res.history})


# --- sequential AL ----------------------------------------------------------------

@dataclass(frozen=True)
class BoxSet:
    lower: np.ndarray
    upper: np.ndarray


def _sequential_cost(u, x_hat, y_hist, x_ref, cfg, Ad, Bd):
    x_next = Ad @ x_hat + Bd @ (u * cfg.dt)
    r = x_next[:3]
    y = r / np.linalg.norm(r)
    J = 0.0
    if cfg.gamma:
        d2 = np.sum((y_hist - y) ** 2, axis=1)
        J += cfg.gamma / len(y_hist) * float(np.sum(1.0 / (d2 + cfg.epsilon)))
    dev = x_next - x_ref
    J += cfg.rho * float(dev @ cfg.Q_track @ dev) + cfg.tau * float(u @ u)
    return J


def sequential_input(x_hat, y_history, x_ref_next, cfg: DesignConfig,
                     omega_u: BoxSet | np.ndarray, params: OrbitParams,
                     grid: int = 5) -> np.ndarray:
    """One-step active-learning input.

    ``omega_u`` is either a :class:`BoxSet` or a ``(K, 3)`` array of admissible
    inputs. Boxes are searched on a ``grid**3`` lattice refined once around the
    incumbent; with ``gamma == 0`` the problem is a bounded least squares and
    is solved exactly.
    """
    x_hat = np.asarray(x_hat, dtype=float)
    x_ref = np.asarray(x_ref_next, dtype=float)
    y_hist = np.atleast_2d(np.asarray(y_history, dtype=float))
    Ad, Bd = discretize_semi_implicit(params, cfg.dt)
    cost = lambda u: _sequential_cost(u, x_hat, y_hist, x_ref, cfg, Ad, Bd)

    if not isinstance(omega_u, BoxSet):
        cands = np.atleast_2d(np.asarray(omega_u, dtype=float))
        if cands.size == 0:
            raise EmptyInputSetError("admissible input set is empty")
        costs = [cost(u) for u in cands]
        return cands[int(np.argmin(costs))].copy()

    lo, hi = np.asarray(omega_u.lower, dtype=float), np.asarray(omega_u.upper, dtype=float)
    if np.any(lo > hi):
        raise EmptyInputSetError("admissible input box is empty")
    if cfg.gamma == 0.0:
        return _tracking_lsq(x_hat, x_ref, cfg, Ad, Bd, lo, hi)

    def search(center_lo, center_hi):
        axes = [np.linspace(a, b, grid) for a, b in zip(center_lo, center_hi)]
        pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
        costs = np.array([cost(u) for u in pts])
        return pts[int(np.argmin(costs))], float(costs.min())

    best, _ = search(lo, hi)
    step = (hi - lo) / (grid - 1)
    refined, _ = search(np.maximum(best - step, lo), np.minimum(best + step, hi))
    return refined


def _tracking_lsq(x_hat, x_ref, cfg, Ad, Bd, lo, hi):
    # rho |Ad x + Bd dt u - x_ref|_Q^2 + tau |u|^2 as a bounded least squares
    w, V = np.linalg.eigh(cfg.Q_track)
    Lq = (V * np.sqrt(np.clip(w, 0.0, None))).T
    G = np.sqrt(cfg.rho) * Lq @ (Bd * cfg.dt)
    h = -np.sqrt(cfg.rho) * Lq @ (Ad @ x_hat - x_ref)
    if cfg.tau:
        G = np.vstack([G, np.sqrt(cfg.tau) * np.eye(3)])
        h = np.concatenate([h, np.zeros(3)])
    if np.allclose(lo, hi):
        return lo.copy()
    return lsq_linear(G, h, bounds=(lo, hi), method="bvls", tol=1e-14).x


# --- baselines --------------------------------------------------------------------

def mpc_only_config(cfg: DesignConfig, bound: float | None = None) -> DesignConfig:
    new = replace(cfg, gamma=0.0, Q_track=np.eye(6))
    if bound is not None:
        new.u_lower = np.full(3, -bound)
        new.u_upper = np.full(3, bound)
    return new


def baseline_mpc_only(cfg: DesignConfig, pso: PsoSettings, params: OrbitParams) -> InputPlan:
    return optimize_offline_inputs(mpc_only_config(cfg), pso, params, provenance="MPC-only")


def baseline_dither(cfg: DesignConfig, pso: PsoSettings, params: OrbitParams, seed: int,
                    base_bound: float = 9e-5, dither: float = 1e-5) -> InputPlan:
    """MPC-only design with tightened bounds plus a seeded uniform dither."""
    base = optimize_offline_inputs(mpc_only_config(cfg, base_bound), pso, params,
                                   provenance="Dither")
    rng = np.random.default_rng(seed)
    noise = rng.uniform(-dither, dither, size=base.u.shape)
    noise[0] = 0.0
    u = base.u + noise
    obj = greedy_y_objective(u, mpc_only_config(cfg), params)
    return InputPlan(u, obj, "Dither", cfg.dt, seed,
                     {**base.meta, "base_bound": base_bound, "dither": dither})
