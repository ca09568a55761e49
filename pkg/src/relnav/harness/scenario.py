"""Scenario description and its JSON form.

Field names in the file carry their units (``T_s``, ``sigma_theta_rad``, ...).
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from relnav.covariance import TransitionThresholds
from relnav.dynamics import MU_EARTH, OrbitParams, elements_to_inertial, InertialState
from relnav.input_design import DEFAULT_Q_TRACK, DesignConfig, PsoSettings, vbar_samples
from relnav.mpc import MpcConfig, Tier, braking_tiers

SCENARIO_SCHEMA_VERSION = 1

PROFILES = {
    "desk": {"swarm": 8, "iters": 20, "M": 20},
    "paper": {"swarm": 100, "iters": 100, "M": 100},
}


@dataclass(frozen=True)
class TargetOrbit:
    a_m: float = 6790.1e3
    e: float = 0.001
    inc_deg: float = 51.6455
    raan_deg: float = 281.6522
    argp_deg: float = 37.3945
    nu_deg: float = 322.7645
    mu_m3ps2: float = MU_EARTH

    def params(self) -> OrbitParams:
        return OrbitParams(self.a_m, self.mu_m3ps2)

    def initial_state(self) -> InertialState:
        return elements_to_inertial(self.a_m, self.e, self.inc_deg, self.raan_deg,
                                    self.argp_deg, self.nu_deg, self.mu_m3ps2)


@dataclass(frozen=True)
class DesignSpec:
    provenance: str = "AL"  # AL | MPC-only | Dither
    gamma: float = 1e3
    rho: float = 1e8
    tau: float = 1e-2
    Q_track_diag: tuple[float, ...] = DEFAULT_Q_TRACK
    u_bound_mps2: float = 1e-4
    epsilon: float = 1e-12
    sample_distances_m: tuple[float, ...] = (4800.0, 4900.0, 5000.0, 5100.0, 5200.0)
    pso_seed: int = 0
    swarm: int | None = None  # None: taken from the profile
    iters: int | None = None

    def config(self, N_off: int, T: float) -> DesignConfig:
        b = self.u_bound_mps2
        return DesignConfig(N_off=N_off, dt=T, gamma=self.gamma, rho=self.rho, tau=self.tau,
                            Q_track=np.diag(self.Q_track_diag), u_lower=np.full(3, -b),
                            u_upper=np.full(3, b), epsilon=self.epsilon,
                            samples=vbar_samples(self.sample_distances_m))


@dataclass(frozen=True)
class EkfSpec:
    q_pos_m2: float = 1e-10
    q_vel_m2ps2: float = 1e-12
    r_inflation: float = 500.0
    dt_s: float = 1.0
    riemann_step_s: float | None = None


@dataclass(frozen=True)
class Stage2Spec:
    enabled: bool = True
    end_time_s: float = 5000.0  # scenario time (from the first measurement)
    terminal_pos_m: float = 0.05
    terminal_vel_mps: float = 0.01


@dataclass(frozen=True)
class Scenario:
    name: str = "rendezvous_4850m"
    profile: str = "desk"
    orbit: TargetOrbit = field(default_factory=TargetOrbit)
    x0_true: tuple[float, ...] = (4850.0, 0.0, 0.0, 0.0, 0.0, 0.0)
    x0_nominal: tuple[float, ...] = (5000.0, 0.0, 0.0, 0.0, 0.0, 0.0)
    T_s: float = 600.0
    N_max: int = 20
    N_off: int = 10
    sigma_theta_rad: float = 1e-4
    noise_seed: int = 0
    truth_model: str = "kepler"  # kepler | linear
    truth_step_s: float = 1.0
    stop_at_transition: bool = True
    design: DesignSpec = field(default_factory=DesignSpec)
    thresholds: TransitionThresholds = field(default_factory=TransitionThresholds)
    ekf: EkfSpec = field(default_factory=EkfSpec)
    mpc: MpcConfig = field(default_factory=MpcConfig)
    stage2: Stage2Spec = field(default_factory=Stage2Spec)
    rmae_first_epoch: int = 6
    plan_path: str | None = None

    def __post_init__(self):
        if self.T_s <= 0:
            raise ValueError("T_s must be positive")
        if not 2 <= self.N_off <= self.N_max:
            raise ValueError("need 2 <= N_off <= N_max")
        if self.truth_model not in ("kepler", "linear"):
            raise ValueError(f"unknown truth model {self.truth_model!r}")
        if self.profile not in PROFILES:
            raise ValueError(f"unknown profile {self.profile!r}")
        if len(self.x0_true) != 6 or len(self.x0_nominal) != 6:
            raise ValueError("initial states must have six components")

    @property
    def params(self) -> OrbitParams:
        return self.orbit.params()

    def pso_settings(self) -> PsoSettings:
        prof = PROFILES[self.profile]
        return PsoSettings(swarm=self.design.swarm or prof["swarm"],
                           iters=self.design.iters or prof["iters"], seed=self.design.pso_seed)

    def design_config(self) -> DesignConfig:
        return self.design.config(self.N_off, self.T_s)

    def default_runs(self) -> int:
        return PROFILES[self.profile]["M"]

    def with_overrides(self, **kw) -> "Scenario":
        return replace(self, **kw)

    # --- serialisation -----------------------------------------------------

    def to_dict(self) -> dict:
        d = asdict(self)
        d["thresholds"] = {"sigma2_pos_m2": self.thresholds.sigma2_pos,
                           "sigma2_vel_m2ps2": self.thresholds.sigma2_vel}
        d["mpc"] = _mpc_to_dict(self.mpc)
        return {"schema_version": SCENARIO_SCHEMA_VERSION, **_lists(d)}

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        d = dict(d)
        ver = d.pop("schema_version", None)
        if ver != SCENARIO_SCHEMA_VERSION:
            raise ValueError(f"unsupported scenario schema_version {ver!r}")
        kw = dict(d)
        if "orbit" in d:
            kw["orbit"] = TargetOrbit(**d["orbit"])
        if "design" in d:
            des = dict(d["design"])
            for key in ("Q_track_diag", "sample_distances_m"):
                if key in des:
                    des[key] = tuple(des[key])
            kw["design"] = DesignSpec(**des)
        if "thresholds" in d:
            t = d["thresholds"]
            kw["thresholds"] = TransitionThresholds(t["sigma2_pos_m2"], t["sigma2_vel_m2ps2"])
        if "ekf" in d:
            kw["ekf"] = EkfSpec(**d["ekf"])
        if "mpc" in d:
            kw["mpc"] = _mpc_from_dict(d["mpc"])
        if "stage2" in d:
            kw["stage2"] = Stage2Spec(**d["stage2"])
        for key in ("x0_true", "x0_nominal"):
            if key in d:
                kw[key] = tuple(float(v) for v in d[key])
        return cls(**kw)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path) -> "Scenario":
        return cls.from_dict(json.loads(Path(path).read_text()))


_MPC_KEYS = {"u_max": "u_max_mps2", "r_max": "r_max_m", "v_max": "v_max_mps", "dt": "dt_s"}


def _mpc_to_dict(cfg: MpcConfig) -> dict:
    d = asdict(cfg)
    d["pd_gains"] = list(cfg.pd_gains)
    d["tiers"] = [{"range_below_m": t.range_below, "u_max_mps2": t.u_max, "r_max_m": t.r_max,
                   "v_max_mps": t.v_max} for t in cfg.tiers]
    return {_MPC_KEYS.get(k, k): v for k, v in d.items()}


def _mpc_from_dict(d: dict) -> MpcConfig:
    inv = {v: k for k, v in _MPC_KEYS.items()}
    kw = {inv.get(k, k): v for k, v in d.items()}
    if "pd_gains" in kw:
        kw["pd_gains"] = tuple(kw["pd_gains"])
    if "tiers" in kw:
        tiers = kw["tiers"]
        if tiers == "braking":
            kw["tiers"] = braking_tiers()
        else:
            kw["tiers"] = tuple(Tier(t["range_below_m"], t.get("u_max_mps2"), t.get("r_max_m"),
                                     t.get("v_max_mps")) for t in tiers)
    return MpcConfig(**kw)


def _lists(obj):
    if isinstance(obj, dict):
        return {k: _lists(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_lists(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    return obj
