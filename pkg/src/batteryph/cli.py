"""Command-line entry point: ``batteryph <command> [options]``.

Exit codes
  solve-ef    0 optimal, 2 infeasible/unbounded, 3 horizon over the EF cap, 1 input/output
  solve-ph    0 gap target or residual tolerance met, 4 iteration cap, 5 subproblem failure, 1 input/output
  validate    0 feasible, 6 violations found, 1 unreadable solution or config
  export-mps  0 written, 1 input/output
  report      0 written, 1 input/output
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, case_config_path, load_config, load_study
from .lp import SolverOptions
from .lp.mps import write_mps
from .network import NetworkError
from .opf import HorizonTooLong, ModelError, build_extensive_form, build_period_lp
from .ph import PHOptions, PHState, SubproblemFailure, make_partition, run_ph
from .planning import SolveError, solve_extensive_form
from .solution import SolutionFormatError, check_feasibility, read_solution, write_solution

EXIT_OK = 0
EXIT_IO = 1
EXIT_INFEASIBLE = 2
EXIT_GUARDRAIL = 3
EXIT_ITER_CAP = 4
EXIT_SUBPROBLEM = 5
EXIT_VIOLATIONS = 6

_INPUT_ERRORS = (ConfigError, NetworkError, ModelError, OSError, ValueError)


def _err(msg):
    print(f"error: {msg}", file=sys.stderr)


def _num(v):
    return float(v) if np.isfinite(v) else None


def _config_from_args(args):
    path = args.config
    if path is None and args.case:
        path = case_config_path(args.case)
    if path is None:
        raise ConfigError("pass --config PATH or --case NAME")
    overrides = {
        "threshold": args.threshold, "periods": args.periods, "period_hours": args.period_hours,
        "workers": args.workers, "ph.rho": args.rho, "ph.max_iters": args.max_iters,
        "ph.tol": args.tol, "out": args.out, "policy": getattr(args, "policy", None),
    }
    return load_config(path, overrides)


def shed_discharge_rows(sol, schedule=None):
    """Hourly totals of load shed, battery discharge/charge and stored energy."""
    rows = []
    for k in range(sol.hours):
        t = sol.start + k
        off = len(schedule.off(t)) if schedule is not None and t < schedule.hours else 0
        rows.append({
            "hour": t,
            "lines_off": off,
            "load_shed": float(sol.p_ls[:, k].sum()),
            "discharge": float(sol.p_d[:, k].sum()) if len(sol.candidates) else 0.0,
            "charge": float(sol.p_c[:, k].sum()) if len(sol.candidates) else 0.0,
            "stored": float(sol.soc[:, k].sum()) if len(sol.candidates) else 0.0,
        })
    return rows


def write_report(sol, path, schedule=None):
    rows = shed_discharge_rows(sol, schedule)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=["hour", "lines_off", "load_shed", "discharge", "charge", "stored"])
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
    return path


def _print_summary(label, sol):
    print(f"{label}: total cost {sol.cost.total:.6f} (generation {sol.cost.gen:.6f}, "
          f"load shed {sol.cost.loadshed:.6f}, slack {sol.cost.slack:.6f})")
    if len(sol.candidates):
        alloc = ", ".join(f"{n}={v:.4f}" for n, v in sol.placement_dict().items())
        print(f"placement: {alloc}")


def cmd_solve_ef(args) -> int:
    try:
        cfg = _config_from_args(args)
        st = load_study(cfg)
    except _INPUT_ERRORS as exc:
        _err(exc)
        return EXIT_IO
    try:
        res = solve_extensive_form(st.network, st.demand, cfg.battery, cfg.cost, st.schedule,
                                   hour_cap=cfg.ef_hour_cap)
    except HorizonTooLong as exc:
        _err(f"{exc}; use solve-ph to decompose the horizon into periods")
        return EXIT_GUARDRAIL
    except SolveError as exc:
        _err(exc)
        return EXIT_INFEASIBLE
    except ModelError as exc:
        _err(exc)
        return EXIT_IO
    try:
        write_solution(res.solution, cfg.out, "ef_solution",
                       extra={"method": "extensive_form", "objective": res.objective})
        write_report(res.solution, Path(cfg.out) / "ef_report.csv", st.schedule)
    except OSError as exc:
        _err(exc)
        return EXIT_IO
    _print_summary("extensive form", res.solution)
    print(f"objective {res.objective!r}; artifacts in {cfg.out}")
    return EXIT_OK


def ph_options(cfg) -> PHOptions:
    s = cfg.ph
    return PHOptions(rho=s.rho, rho_soc=s.rho_soc, max_iters=s.max_iters, tol=s.tol,
                     breakpoints=s.breakpoints, refine=s.refine, refine_ratio=s.refine_ratio,
                     gap_target=s.gap_target, placement_tol=s.placement_tol, soc_tol=s.soc_tol,
                     incumbent_every=s.incumbent_every,
                     workers=cfg.workers, policy=cfg.policy, solver=SolverOptions())


def cmd_solve_ph(args) -> int:
    try:
        cfg = _config_from_args(args)
        st = load_study(cfg)
        part = make_partition(st.hours, cfg.period_hours, cfg.periods, cfg.hours_per_day)
        opts = ph_options(cfg)
        resume = PHState.load(args.resume) if args.resume else None
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        trace_fh = open(out / "ph_trace.jsonl", "w", encoding="utf-8")
    except (_INPUT_ERRORS + (KeyError,)) as exc:
        _err(exc)
        return EXIT_IO

    def emit(rec):
        trace_fh.write(json.dumps(rec, sort_keys=True) + "\n")
        trace_fh.flush()

    try:
        with trace_fh:
            res = run_ph(st.network, part, cfg.battery, cfg.cost, st.schedule, st.demand, opts,
                         resume=resume, on_iteration=emit, checkpoint=str(out / "ph_state.json"))
    except SubproblemFailure as exc:
        _err(exc)
        return EXIT_SUBPROBLEM
    except _INPUT_ERRORS as exc:
        _err(exc)
        return EXIT_IO
    met = res.converged or res.gap <= cfg.ph.gap_target
    summary = {"periods": [list(b) for b in part.bounds], "LB": _num(res.lb), "UB": _num(res.ub),
               "gap": _num(res.gap), "abs_gap": _num(res.abs_gap), "iterations": res.iterations,
               "converged": res.converged, "residual": res.residual,
               "placement_dev": res.placement_deviation, "soc_mismatch": res.soc_mismatch,
               "notes": res.notes, "timing": {"wall_seconds": res.wall_seconds}}
    try:
        (out / "ph_summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n",
                                            encoding="utf-8")
        if res.solution is not None:
            write_solution(res.solution, out, "ph_solution",
                           extra={"method": "progressive_hedging", "UB": _num(res.ub),
                                  "LB": _num(res.lb), "gap": _num(res.gap)})
            write_report(res.solution, out / "ph_report.csv", st.schedule)
    except OSError as exc:
        _err(exc)
        return EXIT_IO
    if res.solution is not None:
        _print_summary("progressive hedging incumbent", res.solution)
    print(f"iterations {res.iterations}, LB {res.lb:.6f}, UB {res.ub:.6f}, gap {res.gap:.3e}, "
          f"residual {res.residual:.3e}")
    if not met:
        print(f"stopped at the iteration cap ({cfg.ph.max_iters}) before reaching the tolerance")
        return EXIT_ITER_CAP
    return EXIT_OK


def cmd_validate(args) -> int:
    try:
        cfg = _config_from_args(args)
        st = load_study(cfg)
    except _INPUT_ERRORS as exc:
        _err(exc)
        return EXIT_IO
    try:
        sol = read_solution(args.solution)
        rep = check_feasibility(sol, st.network, cfg.battery, cfg.cost, st.schedule, st.demand,
                                tol=args.feas_tol)
    except (SolutionFormatError, ModelError, IndexError, ValueError) as exc:
        _err(exc)
        return EXIT_IO
    print(rep.format())
    return EXIT_OK if rep.ok else EXIT_VIOLATIONS


def cmd_export_mps(args) -> int:
    try:
        cfg = _config_from_args(args)
        st = load_study(cfg)
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        written = []
        if args.per_period:
            part = make_partition(st.hours, cfg.period_hours, cfg.periods, cfg.hours_per_day)
            for s, slc in enumerate(part.slices(st.demand, st.schedule)):
                sub = build_period_lp(st.network, slc, cfg.battery, cfg.cost, name=f"period{s}")
                path = out / f"period_{s:03d}.mps"
                path.write_text(write_mps(sub.lp, name=f"PERIOD{s}"), encoding="utf-8")
                written.append(path)
        else:
            sub = build_extensive_form(st.network, st.demand, cfg.battery, cfg.cost, st.schedule,
                                       hour_cap=cfg.ef_hour_cap)
            path = out / "extensive_form.mps"
            path.write_text(write_mps(sub.lp, name="EF"), encoding="utf-8")
            written.append(path)
    except _INPUT_ERRORS as exc:
        _err(exc)
        return EXIT_IO
    for p in written:
        print(p)
    return EXIT_OK


def cmd_report(args) -> int:
    try:
        cfg = _config_from_args(args)
        st = load_study(cfg)
        sol = read_solution(args.solution)
        path = write_report(sol, Path(cfg.out) / f"{Path(args.solution).stem}_report.csv", st.schedule)
    except (_INPUT_ERRORS + (SolutionFormatError,)) as exc:
        _err(exc)
        return EXIT_IO
    rows = shed_discharge_rows(sol, st.schedule)
    print(f"load shed {sum(r['load_shed'] for r in rows):.6f} p.u.h, "
          f"discharge {sum(r['discharge'] for r in rows):.6f} p.u.h over {len(rows)} h; wrote {path}")
    return EXIT_OK


def _common(p):
    p.add_argument("--config", type=Path, help="JSON run configuration")
    p.add_argument("--case", help="bundled example case (threebus, threebus_psps, ieee14)")
    p.add_argument("--threshold", type=float)
    p.add_argument("--periods", type=int)
    p.add_argument("--period-hours", type=int, dest="period_hours")
    p.add_argument("--workers", type=int)
    p.add_argument("--rho", type=float)
    p.add_argument("--max-iters", type=int, dest="max_iters")
    p.add_argument("--tol", type=float)
    p.add_argument("--out", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="batteryph", description=__doc__.splitlines()[0],
                                 formatter_class=argparse.RawDescriptionHelpFormatter,
                                 epilog="\n".join(__doc__.splitlines()[2:]))
    sub = ap.add_subparsers(dest="command", required=True)
    p = sub.add_parser("solve-ef", help="solve the whole horizon as one LP")
    _common(p)
    p.set_defaults(fn=cmd_solve_ef)
    p = sub.add_parser("solve-ph", help="solve by progressive hedging over time periods")
    _common(p)
    p.add_argument("--policy", choices=["sync", "async-incumbent"])
    p.add_argument("--resume", help="checkpoint written by an earlier solve-ph")
    p.set_defaults(fn=cmd_solve_ph)
    p = sub.add_parser("validate", help="check a written solution against every constraint")
    _common(p)
    p.add_argument("solution", help="solution JSON")
    p.add_argument("--feas-tol", type=float, default=1e-6, dest="feas_tol")
    p.set_defaults(fn=cmd_validate)
    p = sub.add_parser("export-mps", help="write the LP(s) in MPS format")
    _common(p)
    p.add_argument("--per-period", action="store_true", help="one file per period instead of the EF")
    p.set_defaults(fn=cmd_export_mps)
    p = sub.add_parser("report", help="hourly load shed / discharge aggregation as CSV")
    _common(p)
    p.add_argument("solution", help="solution JSON")
    p.set_defaults(fn=cmd_report)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
