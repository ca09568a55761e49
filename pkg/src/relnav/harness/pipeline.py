"""Two-stage pipeline: batch IROD with designed inputs, then EKF + MPC rendezvous.

The estimators only ever receive LOS measurements and the inputs that were
commanded; the truth simulator is touched for measurements and metrics.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from relnav.covariance import CovarianceReport, analyze, transition_check
from relnav.dynamics import (ImpulseSequence, OrbitParams, TruthPropagator, cw_stm_matrix,
                             inertial_from_lvlh, propagate_linear)
from relnav.ekf import (EkfState, ekf_initialize_from_irod, ekf_predict, ekf_update,
                        isotropic_measurement_noise)
from relnav.errors import UnobservableError
from relnav.harness.scenario import Scenario
from relnav.input_design import (BoxSet, InputPlan, baseline_dither, baseline_mpc_only,
                                 optimize_offline_inputs, sequential_input)
from relnav.irod import IrodSolution, build_system, solve_scale_factors
from relnav.measurement import NoiseModel, perturb_los, los_from_state
from relnav.mpc import adapt_config, solve_mpc


# --- truth ------------------------------------------------------------------------

class TruthSim:
    """Truth relative motion, Keplerian (RK4) or linear CW."""

    def __init__(self, scenario: Scenario):
        self.params = scenario.params
        self.model = scenario.truth_model
        self.t = 0.0
        x0 = np.array(scenario.x0_true, dtype=float)
        if self.model == "kepler":
            target = scenario.orbit.initial_state()
            self._prop = TruthPropagator(target, inertial_from_lvlh(target, x0),
                                         mu=scenario.orbit.mu_m3ps2, step=scenario.truth_step_s)
        else:
            self._x = x0

    def state(self) -> np.ndarray:
        if self.model == "kepler":
            return self._prop.relative_state()
        return self._x.copy()

    def apply_impulse(self, dv) -> None:
        dv = np.asarray(dv, dtype=float)
        if not np.any(dv):
            return
        if self.model == "kepler":
            self._prop.apply_impulse(dv)
        else:
            self._x[3:] += dv

    def advance(self, dt: float) -> None:
        if self.model == "kepler":
            self._prop.advance(dt)
        else:
            self._x = cw_stm_matrix(dt, self.params) @ self._x
        self.t += dt


# --- results ----------------------------------------------------------------------

@dataclass
class EpochRecord:
    k: int  # number of measurements used (y_0 .. y_{k-1})
    t_s: float  # epoch of the newest measurement
    u_mps2: np.ndarray  # input applied at the previous epoch (m/s^2)
    source: str  # plan | sequential
    x0_hat: np.ndarray | None = None
    report: CovarianceReport | None = None
    transition: bool = False
    error: str = ""

    @property
    def step(self) -> int:
        """Index of the newest measurement (``k - 1``)."""
        return self.k - 1


@dataclass
class Stage1Result:
    epochs: list[EpochRecord]
    los: np.ndarray
    dv: np.ndarray  # (K, 3) applied impulses, row j at epoch j
    transition_k: int | None  # measurement count at handover
    solution: IrodSolution | None
    report: CovarianceReport | None

    def estimates(self) -> dict[int, np.ndarray]:
        return {e.k: e.x0_hat for e in self.epochs if e.x0_hat is not None}


@dataclass
class Stage2Result:
    t_handover: float
    times: np.ndarray
    truth: np.ndarray
    estimate: np.ndarray
    P_diag: np.ndarray
    u: np.ndarray
    status: list[str]
    reached: bool
    terminal_pos_m: float
    terminal_vel_mps: float
    est_pos_err_m: float
    est_vel_err_mps: float
    P: np.ndarray | None = field(default=None, repr=False)  # (n, 6, 6) full covariances


@dataclass
class RmaeMetric:
    value: float  # percent
    N_i: int

    def __post_init__(self):
        if self.value < 0:
            raise ValueError("RMAE is non-negative")


@dataclass
class RunResult:
    scenario: Scenario
    plan: InputPlan
    stage1: Stage1Result
    stage2: Stage2Result | None
    rmae: RmaeMetric | None
    x0_truth: np.ndarray
    timings: dict = field(default_factory=dict)

    @property
    def transitioned(self) -> bool:
        return self.stage1.transition_k is not None


# --- metrics ----------------------------------------------------------------------

def rmae(estimates, truth, N_i: int = 6) -> RmaeMetric:
    """Relative mean absolute error (percent) of ``x0_hat`` over epochs ``k >= N_i``.

    ``estimates`` maps epoch index to estimate (dict) or is a sequence indexed by
    epoch; ``None`` entries are skipped. Normalised by the along-track ``x0``.
    """
    truth = np.asarray(truth, dtype=float)
    x0 = abs(float(truth[0]))
    if x0 == 0.0:
        raise ValueError("initial along-track distance is zero; RMAE undefined")
    items = estimates.items() if isinstance(estimates, dict) else enumerate(estimates)
    errs = [np.linalg.norm(np.asarray(x, dtype=float) - truth) for k, x in items
            if k >= N_i and x is not None]
    if not errs:
        raise ValueError(f"no estimates at or after epoch {N_i}")
    return RmaeMetric(float(np.mean(errs)) / x0 * 100.0, N_i)


# --- plans ------------------------------------------------------------------------

def design_plan(scenario: Scenario) -> InputPlan:
    cfg = scenario.design_config()
    pso = scenario.pso_settings()
    params = scenario.params
    prov = scenario.design.provenance
    if prov == "AL":
        return optimize_offline_inputs(cfg, pso, params)
    if prov == "MPC-only":
        return baseline_mpc_only(cfg, pso, params)
    if prov == "Dither":
        return baseline_dither(cfg, pso, params, seed=scenario.design.pso_seed)
    raise ValueError(f"unknown plan provenance {prov!r}")


def resolve_plan(scenario: Scenario, plan: InputPlan | None = None) -> InputPlan:
    if plan is None:
        plan = InputPlan.load(scenario.plan_path) if scenario.plan_path else design_plan(scenario)
    if plan.N_off != scenario.N_off or abs(plan.period - scenario.T_s) > 1e-9:
        raise ValueError("plan horizon/period does not match the scenario")
    return plan


# --- stage 1 ----------------------------------------------------------------------

def _next_input(k: int, plan: InputPlan, last: EpochRecord | None, los: list, dv: np.ndarray,
                scenario: Scenario) -> tuple[np.ndarray, str]:
    if k < scenario.N_off:
        return plan.u[k].copy(), "plan"
    cfg = scenario.design_config()
    if last is None or last.x0_hat is None:
        return np.zeros(3), "sequential"
    T = scenario.T_s
    imp = ImpulseSequence.from_dense(T, dv[: k + 1])
    x_k = propagate_linear(last.x0_hat, imp, k * T, scenario.params)
    if not np.linalg.norm(x_k[:3]) > 0.0:
        return np.zeros(3), "sequential"
    # station keeping about the current estimated position
    x_ref = np.concatenate([x_k[:3], np.zeros(3)])
    u = sequential_input(x_k, np.array(los), x_ref, cfg, BoxSet(cfg.u_lower, cfg.u_upper),
                         scenario.params)
    return u, "sequential"


def estimate_epoch(los: np.ndarray, dv: np.ndarray, scenario: Scenario
                   ) -> tuple[IrodSolution, CovarianceReport]:
    """IROD + analytical covariance from the LOS history and commanded impulses."""
    imp = ImpulseSequence.from_dense(scenario.T_s, dv[: len(los)])
    system = build_system(los, imp, scenario.params, T=scenario.T_s)
    sol = solve_scale_factors(system)
    return sol, analyze(system, sol, scenario.sigma_theta_rad, scenario.params)


def run_stage1(scenario: Scenario, plan: InputPlan, truth: TruthSim,
               rng: np.random.Generator) -> Stage1Result:
    T = scenario.T_s
    sigma = scenario.sigma_theta_rad
    los = [perturb_los(los_from_state(truth.state()), sigma, rng)]
    dv = np.zeros((scenario.N_max + 1, 3))
    epochs: list[EpochRecord] = []
    last: EpochRecord | None = None
    transition_k, solution, report = None, None, None
    for k in range(scenario.N_max):
        u, src = _next_input(k, plan, last, los, dv, scenario)
        dv[k] = u * T
        truth.apply_impulse(dv[k])
        truth.advance(T)
        los.append(perturb_los(los_from_state(truth.state()), sigma, rng))
        rec = EpochRecord(len(los), (k + 1) * T, u, src)
        if len(los) >= 3:
            try:
                sol, rep = estimate_epoch(np.array(los), dv, scenario)
                rec.x0_hat, rec.report = sol.x0_hat, rep
                rec.transition = transition_check(rep, scenario.thresholds)
                if rec.transition and transition_k is None:
                    transition_k, solution, report = rec.k, sol, rep
            except UnobservableError as exc:
                rec.error = exc.code
        epochs.append(rec)
        last = rec if rec.x0_hat is not None else last
        if transition_k is not None and scenario.stop_at_transition:
            break
    n = len(los)
    return Stage1Result(epochs, np.array(los), dv[:n], transition_k, solution, report)


# --- stage 2 ----------------------------------------------------------------------

def run_stage2(scenario: Scenario, stage1: Stage1Result, truth: TruthSim,
               rng: np.random.Generator) -> Stage2Result:
    params: OrbitParams = scenario.params
    es = scenario.ekf
    dt = es.dt_s
    k_tr = stage1.transition_k
    t_h = (k_tr - 1) * scenario.T_s
    imp = ImpulseSequence.from_dense(scenario.T_s, stage1.dv[:k_tr])
    Q = np.diag([es.q_pos_m2] * 3 + [es.q_vel_m2ps2] * 3)
    R = isotropic_measurement_noise(scenario.sigma_theta_rad, es.r_inflation)
    ekf: EkfState = ekf_initialize_from_irod(stage1.solution.x0_hat, stage1.report.P0, t_h, Q, R,
                                             params, imp, dt, es.riemann_step_s)
    st2 = scenario.stage2
    n_steps = max(int(np.floor((st2.end_time_s - t_h) / dt + 1e-9)), 0)
    times, xs, xh, ps, us, status = [t_h], [truth.state()], [ekf.x_hat], [ekf.P], [], []
    prev = None
    reached = False
    for i in range(n_steps):
        cfg = adapt_config(float(np.linalg.norm(ekf.x_hat[:3])), scenario.mpc)
        sol = solve_mpc(ekf.x_hat, cfg, params, prev)
        prev = sol.u_plan
        u = sol.u_plan[0]
        truth.apply_impulse(u * dt)
        truth.advance(dt)
        ekf = ekf_predict(ekf, u, params, impulsive=True)
        x_true = truth.state()
        ekf = ekf_update(ekf, perturb_los(los_from_state(x_true), scenario.sigma_theta_rad, rng))
        times.append(t_h + (i + 1) * dt)
        xs.append(x_true)
        xh.append(ekf.x_hat)
        ps.append(ekf.P)
        us.append(u)
        status.append(sol.status)
        if (np.linalg.norm(x_true[:3]) <= st2.terminal_pos_m
                and np.linalg.norm(x_true[3:]) <= st2.terminal_vel_mps):
            reached = True
            break
    xs, xh = np.array(xs), np.array(xh)
    err = xh[-1] - xs[-1]
    ps = np.array(ps)
    return Stage2Result(t_h, np.array(times), xs, xh, np.diagonal(ps, axis1=1, axis2=2).copy(),
                        np.array(us).reshape(-1, 3), status, reached,
                        float(np.linalg.norm(xs[-1, :3])), float(np.linalg.norm(xs[-1, 3:])),
                        float(np.linalg.norm(err[:3])), float(np.linalg.norm(err[3:])), ps)


# --- orchestration ----------------------------------------------------------------

def run_pipeline(scenario: Scenario, plan: InputPlan | None = None,
                 closed_loop: bool | None = None) -> RunResult:
    """Batch stage, handover and closed loop end to end. ``closed_loop`` overrides ``scenario.stage2.enabled``."""
    t0 = time.perf_counter()
    plan = resolve_plan(scenario, plan)
    t1 = time.perf_counter()
    rng = NoiseModel(scenario.sigma_theta_rad, scenario.noise_seed).rng()
    truth = TruthSim(scenario)
    x0_truth = truth.state()
    s1 = run_stage1(scenario, plan, truth, rng)
    t2 = time.perf_counter()
    metric = None
    try:
        metric = rmae(s1.estimates(), x0_truth, scenario.rmae_first_epoch)
    except ValueError:
        pass
    run2 = scenario.stage2.enabled if closed_loop is None else closed_loop
    s2 = None
    if run2 and s1.transition_k is not None:
        # truth must sit at the handover epoch; stage 1 may have run past it
        if abs(truth.t - (s1.transition_k - 1) * scenario.T_s) > 1e-9:
            raise RuntimeError("stage 1 continued past the transition epoch")
        s2 = run_stage2(scenario, s1, truth, rng)
    t3 = time.perf_counter()
    return RunResult(scenario, plan, s1, s2, metric, x0_truth,
                     {"plan_s": t1 - t0, "stage1_s": t2 - t1, "stage2_s": t3 - t2})


def load_or_design(scenario: Scenario, cache: str | Path | None) -> InputPlan:
    """Use a cached plan file when present, otherwise design and cache it."""
    if cache is not None and Path(cache).exists():
        return resolve_plan(scenario, InputPlan.load(cache))
    plan = design_plan(scenario)
    if cache is not None:
        Path(cache).parent.mkdir(parents=True, exist_ok=True)
        plan.save(cache)
    return plan
