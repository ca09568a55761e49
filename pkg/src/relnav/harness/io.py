"""Result persistence: per-step CSV traces and a JSON summary per run.

Floats are written with ``repr`` so identical runs give byte-identical files.
Wall-clock timings live in their own file and are excluded from that guarantee.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from relnav.harness.pipeline import RunResult, rmae

RESULT_SCHEMA_VERSION = 1

STAGE1_COLUMNS = (["k", "step", "t_s", "source", "ux_mps2", "uy_mps2", "uz_mps2"]
                  + [f"x0_hat_{c}" for c in ("x_m", "y_m", "z_m", "vx_mps", "vy_mps", "vz_mps")]
                  + [f"P0_{i}{i}" for i in range(6)]
                  + ["lam_max_pos_m2", "lam_max_vel_m2ps2", "kappa", "transition", "error"])

_STATE = ("x_m", "y_m", "z_m", "vx_mps", "vy_mps", "vz_mps")
STAGE2_COLUMNS = (["t_s"] + [f"true_{c}" for c in _STATE] + [f"est_{c}" for c in _STATE]
                  + [f"P_{i}{i}" for i in range(6)] + ["ux_mps2", "uy_mps2", "uz_mps2", "status"])


def _f(x) -> str:
    return repr(float(x))


def _vals(arr) -> list[str]:
    return [_f(v) for v in np.asarray(arr, dtype=float).ravel()]


def _blank(n: int) -> list[str]:
    return [""] * n


def stage1_rows(result: RunResult) -> list[list[str]]:
    rows = []
    for e in result.stage1.epochs:
        row = [str(e.k), str(e.step), _f(e.t_s), e.source] + _vals(e.u_mps2)
        row += _vals(e.x0_hat) if e.x0_hat is not None else _blank(6)
        if e.report is not None:
            row += _vals(np.diag(e.report.P0))
            row += [_f(e.report.lam_max_pos), _f(e.report.lam_max_vel), _f(e.report.kappa)]
        else:
            row += _blank(9)
        row += [str(int(e.transition)), e.error]
        rows.append(row)
    return rows


def stage2_rows(result: RunResult) -> list[list[str]]:
    s2 = result.stage2
    if s2 is None:
        return []
    rows = []
    for i, t in enumerate(s2.times):
        row = [_f(t)] + _vals(s2.truth[i]) + _vals(s2.estimate[i]) + _vals(s2.P_diag[i])
        if i == 0:
            row += _blank(3) + ["handover"]
        else:
            row += _vals(s2.u[i - 1]) + [s2.status[i - 1]]
        rows.append(row)
    return rows


def summary_dict(result: RunResult) -> dict:
    sc = result.scenario
    s1, s2 = result.stage1, result.stage2
    tk = s1.transition_k
    out = {
        "schema_version": RESULT_SCHEMA_VERSION,
        "scenario": sc.name,
        "noise_seed": sc.noise_seed,
        "plan_provenance": result.plan.provenance,
        "x0_truth": [float(v) for v in result.x0_truth],
        "transition": {
            "measurements": tk,
            "k": None if tk is None else tk - 1,
            "t_s": None if tk is None else (tk - 1) * sc.T_s,
            "status": "transition" if tk is not None else "no transition",
        },
        "rmae": None if result.rmae is None else {"value_pct": result.rmae.value,
                                                  "N_i": result.rmae.N_i},
    }
    if tk is not None:
        rep = s1.report
        out["handover"] = {"lam_max_pos_m2": rep.lam_max_pos, "lam_max_vel_m2ps2": rep.lam_max_vel,
                           "kappa": rep.kappa,
                           "x0_hat": [float(v) for v in s1.solution.x0_hat]}
    if s2 is not None:
        out["stage2"] = {
            "reached": s2.reached,
            "t_end_s": float(s2.times[-1]),
            "terminal_pos_m": s2.terminal_pos_m,
            "terminal_vel_mps": s2.terminal_vel_mps,
            "est_pos_err_m": s2.est_pos_err_m,
            "est_vel_err_mps": s2.est_vel_err_mps,
            "fallback_steps": sum(st != "optimal" for st in s2.status),
        }
    return out


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def write_run(result: RunResult, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(out / "stage1.csv", STAGE1_COLUMNS, stage1_rows(result))
    if result.stage2 is not None:
        _write_csv(out / "stage2.csv", STAGE2_COLUMNS, stage2_rows(result))
    (out / "summary.json").write_text(json.dumps(summary_dict(result), indent=2) + "\n")
    (out / "timings.json").write_text(json.dumps(result.timings, indent=2) + "\n")
    result.scenario.save(out / "scenario.json")
    result.plan.save(out / "plan.json")
    return out


def _read_csv(path: Path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def report(run_dir, N_i: int | None = None) -> dict:
    """Recompute run metrics from the stored traces (no re-simulation)."""
    run_dir = Path(run_dir)
    summary = json.loads((run_dir / "summary.json").read_text())
    truth = np.array(summary["x0_truth"])
    rows = _read_csv(run_dir / "stage1.csv")
    est = {int(r["k"]): np.array([float(r[f"x0_hat_{c}"]) for c in _STATE])
           for r in rows if r["x0_hat_x_m"] != ""}
    if N_i is None:
        N_i = summary["rmae"]["N_i"] if summary.get("rmae") else 6
    out: dict = {"run": str(run_dir), "N_i": N_i}
    try:
        out["rmae_pct"] = rmae(est, truth, N_i).value
    except ValueError as exc:
        out["rmae_pct"] = None
        out["rmae_error"] = str(exc)
    trans = [int(r["k"]) for r in rows if r["transition"] == "1"]
    out["transition_measurements"] = trans[0] if trans else None
    s2_path = run_dir / "stage2.csv"
    if s2_path.exists():
        last = _read_csv(s2_path)[-1]
        xt = np.array([float(last[f"true_{c}"]) for c in _STATE])
        xe = np.array([float(last[f"est_{c}"]) for c in _STATE])
        out.update(t_end_s=float(last["t_s"]), terminal_pos_m=float(np.linalg.norm(xt[:3])),
                   terminal_vel_mps=float(np.linalg.norm(xt[3:])),
                   est_pos_err_m=float(np.linalg.norm((xe - xt)[:3])),
                   est_vel_err_mps=float(np.linalg.norm((xe - xt)[3:])))
    return out
