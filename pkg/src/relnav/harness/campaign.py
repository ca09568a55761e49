"""Monte Carlo campaigns and parameter sweeps."""

from __future__ import annotations

import csv
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from relnav.covariance import chebyshev_halfwidth
from relnav.harness.io import write_run
from relnav.harness.pipeline import RunResult, design_plan, resolve_plan, run_pipeline
from relnav.harness.scenario import Scenario
from relnav.input_design import InputPlan, simulate_design_outputs


@dataclass
class CampaignSummary:
    M: int
    seeds: list[int]
    rmae: list[float | None]
    rmae_median: float | None
    rmae_mad: float | None
    transition_k: list[int | None]
    containment: float | None  # fraction of error components inside the Chebyshev bounds
    cov_trace: dict = field(default_factory=dict)  # per measurement count: medians
    stage2_reached: int | None = None
    runs: list[RunResult] = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return {"M": self.M, "seeds": self.seeds, "rmae_pct": self.rmae,
                "rmae_median_pct": self.rmae_median, "rmae_mad_pct": self.rmae_mad,
                "transition_measurements": self.transition_k,
                "chebyshev_containment": self.containment,
                "cov_trace": {str(k): v for k, v in self.cov_trace.items()},
                "stage2_reached": self.stage2_reached}


def median_mad(values) -> tuple[float | None, float | None]:
    v = np.array([x for x in values if x is not None], dtype=float)
    if v.size == 0:
        return None, None
    med = float(np.median(v))
    return med, float(np.median(np.abs(v - med)))


def chebyshev_containment(runs: list[RunResult], alpha: float = 0.05) -> tuple[float | None, dict]:
    """Share of per-component IROD errors inside bounds from the run-averaged covariance.

    Only measurement counts where every run produced an estimate enter.
    """
    by_k: dict[int, list[tuple[np.ndarray, np.ndarray]]] = {}
    for r in runs:
        for e in r.stage1.epochs:
            if e.x0_hat is not None and e.report is not None:
                by_k.setdefault(e.k, []).append((e.x0_hat - r.x0_truth, np.diag(e.report.P0)))
    inside = total = 0
    per_k = {}
    for k, items in sorted(by_k.items()):
        if len(items) < len(runs):
            continue
        errs = np.array([i[0] for i in items])
        bound = chebyshev_halfwidth(np.mean([i[1] for i in items], axis=0), alpha)
        hit = np.abs(errs) <= bound
        inside += int(hit.sum())
        total += hit.size
        per_k[k] = float(hit.mean())
    return (inside / total if total else None), per_k


def covariance_traces(runs: list[RunResult]) -> dict[int, dict]:
    by_k: dict[int, list] = {}
    for r in runs:
        for e in r.stage1.epochs:
            if e.report is not None:
                by_k.setdefault(e.k, []).append((e.report.lam_max_pos, e.report.lam_max_vel,
                                                 e.report.kappa))
    return {k: {"n": len(v),
                "lam_max_pos_m2": float(np.median([x[0] for x in v])),
                "lam_max_vel_m2ps2": float(np.median([x[1] for x in v])),
                "kappa": float(np.median([x[2] for x in v]))}
            for k, v in sorted(by_k.items())}


def _one(args) -> RunResult:
    scenario, plan, closed_loop = args
    return run_pipeline(scenario, plan, closed_loop)


def monte_carlo(scenario: Scenario, M: int | None = None, overrides: dict | None = None,
                plan: InputPlan | None = None, closed_loop: bool | None = False,
                workers: int = 1, out: str | Path | None = None,
                keep_runs: bool = True) -> CampaignSummary:
    """``M`` runs with noise seeds ``noise_seed, noise_seed + 1, ...``.

    The plan is designed (or loaded) once and shared. Runs are independent;
    with ``workers > 1`` they execute in separate processes and results are
    collected in seed order, so the outcome does not depend on scheduling.
    """
    if overrides:
        scenario = scenario.with_overrides(**overrides)
    M = scenario.default_runs() if M is None else M
    if M < 1:
        raise ValueError("M must be at least 1")
    plan = resolve_plan(scenario, plan)
    seeds = [scenario.noise_seed + i for i in range(M)]
    jobs = [(replace(scenario, noise_seed=s), plan, closed_loop) for s in seeds]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            runs = list(ex.map(_one, jobs))
    else:
        runs = [_one(j) for j in jobs]
    if out is not None:
        out = Path(out)
        for s, r in zip(seeds, runs):
            write_run(r, out / f"run_{s:06d}")
    rm = [None if r.rmae is None else r.rmae.value for r in runs]
    med, mad = median_mad(rm)
    cont, _ = chebyshev_containment(runs)
    reached = None
    if any(r.stage2 is not None for r in runs):
        reached = sum(bool(r.stage2 and r.stage2.reached) for r in runs)
    summary = CampaignSummary(M, seeds, rm, med, mad, [r.stage1.transition_k for r in runs], cont,
                              covariance_traces(runs), reached, runs if keep_runs else [])
    if out is not None:
        (out / "campaign.json").write_text(json.dumps(summary.to_dict(), indent=2) + "\n")
    return summary


# --- sweeps -----------------------------------------------------------------------

SWEEP_AXES = ("distance", "interval", "gamma")


def station_keeping_deviation(plan: InputPlan, scenario: Scenario) -> float:
    """Mean position deviation (m) of the design-model samples from their hold points."""
    cfg = scenario.design_config()
    _, X = simulate_design_outputs(plan.u, cfg, scenario.params)
    ref = cfg.reference_matrix()[:, None, :3]
    return float(np.mean(np.linalg.norm(X[:, 1:, :3] - ref, axis=2)))


def _sweep_point(template: Scenario, axis: str, value: float, plan: InputPlan
                 ) -> tuple[Scenario, InputPlan]:
    if axis == "distance":
        x0 = (float(value),) + tuple(template.x0_true[1:])
        return replace(template, x0_true=x0), plan
    if axis == "interval":
        sc = replace(template, T_s=float(value))
        return sc, InputPlan(plan.u, plan.objective_value, plan.provenance, float(value),
                             plan.seed, {**plan.meta, "period_from": plan.period})
    if axis == "gamma":
        sc = replace(template, design=replace(template.design, gamma=float(value)))
        return sc, design_plan(sc)
    raise ValueError(f"unknown sweep axis {axis!r}; expected one of {SWEEP_AXES}")


def sweep(template: Scenario, axis: str, values, M: int | None = None,
          plan: InputPlan | None = None, workers: int = 1,
          out: str | Path | None = None) -> list[dict]:
    """One campaign per value. The plan is shared except along ``gamma``."""
    values = list(values)
    if not values:
        raise ValueError("sweep needs at least one value")
    if axis not in SWEEP_AXES:
        raise ValueError(f"unknown sweep axis {axis!r}; expected one of {SWEEP_AXES}")
    base = resolve_plan(template, plan) if axis != "gamma" else None
    rows = []
    for v in values:
        sc, p = _sweep_point(template, axis, v, base)
        sub = None if out is None else Path(out) / f"{axis}_{v:g}"
        summ = monte_carlo(sc, M, plan=p, workers=workers, out=sub, keep_runs=False)
        tks = [k for k in summ.transition_k if k is not None]
        rows.append({"axis": axis, "value": float(v), "rmae_median_pct": summ.rmae_median,
                     "rmae_mad_pct": summ.rmae_mad,
                     "transition_rate": len(tks) / summ.M,
                     "transition_median": float(np.median(tks)) if tks else None,
                     "deviation_m": station_keeping_deviation(p, sc)})
    if out is not None:
        write_table(rows, Path(out) / f"sweep_{axis}.csv")
    return rows


def write_table(rows: list[dict], path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: ("" if v is None else repr(v) if isinstance(v, float) else v)
                        for k, v in r.items()})
