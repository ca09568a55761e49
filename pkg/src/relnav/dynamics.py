"""Relative orbital dynamics: Clohessy-Wiltshire models and a two-body truth propagator.

Axis convention (target-centred LVLH): ``z`` along the target position vector,
``y`` along the orbital angular momentum, ``x = y x z`` (V-bar, roughly along
the target velocity). States are ``[x, y, z, vx, vy, vz]`` in SI units.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from relnav.errors import DegenerateGeometryError, SurfaceImpactError

MU_EARTH = 3.986004418e14  # m^3/s^2
R_EARTH = 6378137.0  # m

State6 = np.ndarray


@dataclass(frozen=True)
class OrbitParams:
    """Circular reference orbit of the target."""

    a: float
    mu: float = MU_EARTH

    def __post_init__(self):
        if self.a <= 0 or self.mu <= 0:
            raise ValueError("a and mu must be positive")

    @property
    def n(self) -> float:
        return math.sqrt(self.mu / self.a**3)

    @property
    def c(self) -> float:
        """Curvature coefficient of the second-order model, n^2/a."""
        return self.n**2 / self.a

    @property
    def period(self) -> float:
        return 2.0 * math.pi / self.n


@dataclass(frozen=True)
class StmSet:
    phi_rr: np.ndarray
    phi_rv: np.ndarray
    phi_vr: np.ndarray
    phi_vv: np.ndarray
    dt: float

    @property
    def full(self) -> np.ndarray:
        return np.block([[self.phi_rr, self.phi_rv], [self.phi_vr, self.phi_vv]])


@dataclass(frozen=True)
class ImpulseSequence:
    """Velocity impulses ``u_j`` (m/s, LVLH) applied at ``t0 + j*period``."""

    period: float
    indices: tuple[int, ...] = ()
    amplitudes: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=float).reshape(-1, 3)
        object.__setattr__(self, "amplitudes", amps)
        object.__setattr__(self, "indices", tuple(int(j) for j in self.indices))
        if len(self.indices) != len(amps):
            raise ValueError("indices and amplitudes differ in length")
        if any(j < 1 for j in self.indices):
            raise ValueError("impulse indices start at 1")
        if any(b <= a for a, b in zip(self.indices, self.indices[1:])):
            raise ValueError("impulse indices must be strictly increasing")
        if not np.all(np.isfinite(amps)):
            raise ValueError("non-finite impulse amplitude")
        if self.period <= 0:
            raise ValueError("period must be positive")

    @classmethod
    def from_dense(cls, period: float, dv: np.ndarray) -> "ImpulseSequence":
        """Build from a dense array whose row ``j`` is the impulse at epoch ``j``.

        Row 0 must be zero (there is no impulse at ``t0``); all-zero rows are
        dropped.
        """
        dv = np.asarray(dv, dtype=float).reshape(-1, 3)
        if len(dv) and np.any(dv[0] != 0.0):
            raise ValueError("no impulse may be applied at epoch 0")
        idx = [j for j in range(1, len(dv)) if np.any(dv[j] != 0.0)]
        return cls(period, tuple(idx), dv[idx] if idx else np.zeros((0, 3)))

    def dense(self, length: int) -> np.ndarray:
        out = np.zeros((length, 3))
        for j, amp in zip(self.indices, self.amplitudes):
            if j < length:
                out[j] = amp
        return out

    def up_to(self, j_max: int) -> "ImpulseSequence":
        keep = [i for i, j in enumerate(self.indices) if j <= j_max]
        return ImpulseSequence(self.period, tuple(self.indices[i] for i in keep),
                               self.amplitudes[keep])


@dataclass(frozen=True)
class InertialState:
    position: np.ndarray
    velocity: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.position, dtype=float).reshape(3)
        v = np.asarray(self.velocity, dtype=float).reshape(3)
        object.__setattr__(self, "position", r)
        object.__setattr__(self, "velocity", v)
        if not (np.all(np.isfinite(r)) and np.all(np.isfinite(v))):
            raise ValueError("non-finite inertial state")
        if np.linalg.norm(r) <= R_EARTH:
            raise SurfaceImpactError(f"position norm {np.linalg.norm(r):.1f} m is below the Earth radius")

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate([self.position, self.velocity])


def cw_system_matrices(params: OrbitParams | float) -> tuple[np.ndarray, np.ndarray]:
    """Continuous CW matrices ``A`` (6x6) and ``B`` (6x3). Accepts params or ``n`` directly."""
    n = params.n if isinstance(params, OrbitParams) else float(params)
    A = np.zeros((6, 6))
    A[:3, 3:] = np.eye(3)
    A[4, 1] = -n * n
    A[5, 2] = 3.0 * n * n
    A[3, 5] = -2.0 * n
    A[5, 3] = 2.0 * n
    B = np.vstack([np.zeros((3, 3)), np.eye(3)])
    return A, B


def cw_stm(dt: float, params: OrbitParams) -> StmSet:
    """Closed-form CW state transition matrix blocks at elapsed time ``dt`` (may be negative)."""
    n = params.n
    nt = n * dt
    c, s = math.cos(nt), math.sin(nt)
    phi_rr = np.array([
        [1.0, 0.0, 6.0 * (s - nt)],
        [0.0, c, 0.0],
        [0.0, 0.0, 4.0 - 3.0 * c],
    ])
    phi_rv = np.array([
        [(4.0 * s - 3.0 * nt) / n, 0.0, 2.0 * (c - 1.0) / n],
        [0.0, s / n, 0.0],
        [2.0 * (1.0 - c) / n, 0.0, s / n],
    ])
    phi_vr = np.array([
        [0.0, 0.0, 6.0 * n * (c - 1.0)],
        [0.0, -n * s, 0.0],
        [0.0, 0.0, 3.0 * n * s],
    ])
    phi_vv = np.array([
        [4.0 * c - 3.0, 0.0, -2.0 * s],
        [0.0, c, 0.0],
        [2.0 * s, 0.0, c],
    ])
    return StmSet(phi_rr, phi_rv, phi_vr, phi_vv, float(dt))


def cw_stm_matrix(dt: float, params: OrbitParams) -> np.ndarray:
    return cw_stm(dt, params).full


def propagate_linear(x0: State6, impulses: ImpulseSequence | None, t: float,
                     params: OrbitParams) -> State6:
    """Linear CW state at time ``t`` (s after ``t0``) with impulses superposed.

    Only impulses with ``j * period <= t`` contribute; an impulse at exactly
    ``t`` already shows up in the velocity.
    """
    if t < 0:
        raise ValueError("t must be non-negative")
    x = cw_stm_matrix(t, params) @ np.asarray(x0, dtype=float)
    if impulses is not None:
        for j, amp in zip(impulses.indices, impulses.amplitudes):
            tj = j * impulses.period
            if tj > t:
                break
            stm = cw_stm(t - tj, params)
            x[:3] += stm.phi_rv @ amp
            x[3:] += stm.phi_vv @ amp
    return x


def discretize_semi_implicit(params: OrbitParams, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """Semi-implicit Euler discretisation of the CW model.

    ``Bd = [dt*I; I]`` acts on a velocity increment; an acceleration command
    ``u`` held over the step enters as ``Bd @ (u * dt)``.
    """
    if dt < 0:
        raise ValueError("dt must be non-negative")
    A, _ = cw_system_matrices(params)
    a_vr, a_vv = A[3:, :3], A[3:, 3:]
    eye = np.eye(3)
    Ad = np.block([
        [eye + dt**2 * a_vr, dt * (eye + dt * a_vv)],
        [dt * a_vr, eye + dt * a_vv],
    ])
    Bd = np.vstack([dt * eye, eye])
    return Ad, Bd


def cw2_acceleration(x: State6, params: OrbitParams) -> np.ndarray:
    """Second-order CW acceleration (no control), m/s^2."""
    n, c = params.n, params.c
    px, py, pz, vx, vy, vz = x
    return np.array([
        -2.0 * n * vz + 3.0 * c * px * pz,
        -n * n * py + 3.0 * c * py * pz,
        2.0 * n * vx + 3.0 * n * n * pz + c * (px * px + py * py - 2.0 * pz * pz),
    ])


def cw2_jacobian(x: State6, params: OrbitParams) -> np.ndarray:
    """Jacobian of the continuous second-order dynamics ``f(x) = [v; a_cw2(x)]``."""
    n, c = params.n, params.c
    px, py, pz = x[:3]
    J = np.zeros((6, 6))
    J[:3, 3:] = np.eye(3)
    J[3] = [3 * c * pz, 0.0, 3 * c * px, 0.0, 0.0, -2 * n]
    J[4] = [0.0, -n * n + 3 * c * pz, 3 * c * py, 0.0, 0.0, 0.0]
    J[5] = [2 * c * px, 2 * c * py, 3 * n * n - 4 * c * pz, 2 * n, 0.0, 0.0]
    return J


# --- inertial <-> LVLH ----------------------------------------------------------

def lvlh_basis(target: InertialState) -> tuple[np.ndarray, np.ndarray]:
    """Rotation matrix (rows = LVLH axes in inertial coords) and frame angular velocity."""
    r, v = target.position, target.velocity
    h = np.cross(r, v)
    h_norm = np.linalg.norm(h)
    r_norm = np.linalg.norm(r)
    if h_norm < 1e-9 * r_norm * max(np.linalg.norm(v), 1.0):
        raise DegenerateGeometryError("target angular momentum is zero; LVLH undefined")
    z_hat = r / r_norm
    y_hat = h / h_norm
    x_hat = np.cross(y_hat, z_hat)
    omega = h / r_norm**2
    return np.vstack([x_hat, y_hat, z_hat]), omega


def lvlh_from_inertial(target: InertialState, chaser: InertialState) -> State6:
    C, omega = lvlh_basis(target)
    dr = chaser.position - target.position
    dv = chaser.velocity - target.velocity - np.cross(omega, dr)
    return np.concatenate([C @ dr, C @ dv])


def inertial_from_lvlh(target: InertialState, rel: State6) -> InertialState:
    C, omega = lvlh_basis(target)
    dr = C.T @ np.asarray(rel[:3], dtype=float)
    dv = C.T @ np.asarray(rel[3:], dtype=float) + np.cross(omega, dr)
    return InertialState(target.position + dr, target.velocity + dv)


def elements_to_inertial(a: float, e: float, inc_deg: float, raan_deg: float,
                         argp_deg: float, nu_deg: float, mu: float = MU_EARTH) -> InertialState:
    """Classical orbital elements to ECI position/velocity."""
    inc, raan, argp, nu = np.radians([inc_deg, raan_deg, argp_deg, nu_deg])
    p = a * (1.0 - e * e)
    r_pf = p / (1.0 + e * math.cos(nu)) * np.array([math.cos(nu), math.sin(nu), 0.0])
    v_pf = math.sqrt(mu / p) * np.array([-math.sin(nu), e + math.cos(nu), 0.0])
    cO, sO = math.cos(raan), math.sin(raan)
    ci, si = math.cos(inc), math.sin(inc)
    cw, sw = math.cos(argp), math.sin(argp)
    R = np.array([
        [cO * cw - sO * sw * ci, -cO * sw - sO * cw * ci, sO * si],
        [sO * cw + cO * sw * ci, -sO * sw + cO * cw * ci, -cO * si],
        [sw * si, cw * si, ci],
    ])
    return InertialState(R @ r_pf, R @ v_pf)


# --- two-body truth ---------------------------------------------------------------

def _two_body_rates(y: np.ndarray, mu: float) -> np.ndarray:
    # y: (k, 6) stacked spacecraft states
    r = y[:, :3]
    rn = np.sqrt(np.einsum("ij,ij->i", r, r))
    out = np.empty_like(y)
    out[:, :3] = y[:, 3:]
    out[:, 3:] = -mu * r / rn[:, None] ** 3
    return out


def _rk4_step(y: np.ndarray, h: float, mu: float) -> np.ndarray:
    k1 = _two_body_rates(y, mu)
    k2 = _two_body_rates(y + 0.5 * h * k1, mu)
    k3 = _two_body_rates(y + 0.5 * h * k2, mu)
    k4 = _two_body_rates(y + h * k3, mu)
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


class TruthPropagator:
    """Fixed-step RK4 two-body propagation of a target/chaser pair.

    Keeps the clock and both inertial states; impulses are given in LVLH axes
    and applied instantaneously to the chaser.
    """

    def __init__(self, target: InertialState, chaser: InertialState,
                 mu: float = MU_EARTH, step: float = 1.0):
        if not 0 < step <= 1.0:
            raise ValueError("integration step must be in (0, 1] s")
        self.mu = mu
        self.step = step
        self.t = 0.0
        self._y = np.vstack([target.vector, chaser.vector])

    @property
    def target(self) -> InertialState:
        return InertialState(self._y[0, :3], self._y[0, 3:])

    @property
    def chaser(self) -> InertialState:
        return InertialState(self._y[1, :3], self._y[1, 3:])

    def relative_state(self) -> State6:
        return lvlh_from_inertial(self.target, self.chaser)

    def apply_impulse(self, dv_lvlh: np.ndarray) -> None:
        C, _ = lvlh_basis(self.target)
        self._y[1, 3:] += C.T @ np.asarray(dv_lvlh, dtype=float)

    def advance(self, duration: float) -> None:
        if duration < 0:
            raise ValueError("cannot propagate backwards")
        steps = int(math.floor(duration / self.step + 1e-9))
        rest = duration - steps * self.step
        y = self._y
        hs = [self.step] * steps + ([rest] if rest > 1e-12 else [])
        for h in hs:
            y = _rk4_step(y, h, self.mu)
            if np.any(np.einsum("ij,ij->i", y[:, :3], y[:, :3]) <= R_EARTH**2):
                raise SurfaceImpactError("spacecraft propagated below the Earth radius")
        self._y = y
        self.t += duration


def truth_propagate(target: InertialState, chaser: InertialState,
                    impulses: ImpulseSequence | None, horizon: float, step: float = 1.0,
                    mu: float = MU_EARTH, sample_every: float | None = None
                    ) -> tuple[np.ndarray, np.ndarray]:
    """Propagate both spacecraft and return ``(times, lvlh_states)``.

    Relative states are sampled every ``sample_every`` seconds (default: every
    integration step). Impulse ``j`` is applied at ``t = j * period`` after the
    sample at that instant is recorded.
    """
    prop = TruthPropagator(target, chaser, mu=mu, step=step)
    sample_every = step if sample_every is None else sample_every
    events: dict[int, np.ndarray] = {}
    if impulses is not None:
        for j, amp in zip(impulses.indices, impulses.amplitudes):
            events[j] = amp
    period = impulses.period if impulses is not None else None

    marks = set(np.round(np.arange(0.0, horizon + 1e-9, sample_every), 9))
    if period is not None:
        marks |= {round(j * period, 9) for j in events if j * period <= horizon}
    marks.add(round(horizon, 9))
    times, states = [], []
    sample_set = set(np.round(np.arange(0.0, horizon + 1e-9, sample_every), 9))
    for tm in sorted(marks):
        prop.advance(tm - prop.t)
        if tm in sample_set:
            times.append(tm)
            states.append(prop.relative_state())
        if period is not None:
            j = int(round(tm / period))
            if j in events and abs(j * period - tm) < 1e-6:
                prop.apply_impulse(events[j])
    return np.array(times), np.array(states)


def specific_energy(state: InertialState, mu: float = MU_EARTH) -> float:
    return 0.5 * float(state.velocity @ state.velocity) - mu / float(np.linalg.norm(state.position))


def angular_momentum(state: InertialState) -> np.ndarray:
    return np.cross(state.position, state.velocity)


def stack_states(states: Sequence[State6]) -> np.ndarray:
    return np.vstack([np.asarray(s, dtype=float) for s in states])
