import csv
import json
from pathlib import Path

import pytest

from batteryph.cli import main
from batteryph.config import case_config_path
from batteryph.lp import solve_lp
from batteryph.lp.mps import read_mps
from batteryph.ph import TIMING_KEYS


def write_config(tmp_path, case="threebus", **fields):
    """Copy of a bundled config with absolute data paths plus ``fields``."""
    src = case_config_path(case)
    doc = json.loads(src.read_text())
    for key in ("network", "demand", "risk"):
        doc[key] = str(src.parent / doc[key])
    doc.update(fields)
    path = tmp_path / f"{case}_config.json"
    path.write_text(json.dumps(doc))
    return path


def run(*argv):
    return main([str(a) for a in argv])


def test_solve_ef_writes_artifacts(tmp_path):
    out = tmp_path / "ef"
    assert run("solve-ef", "--case", "threebus", "--out", out) == 0
    doc = json.loads((out / "ef_solution.json").read_text())
    assert doc["method"] == "extensive_form" and doc["objective"] > 0
    assert (out / "ef_solution_timeseries.csv").is_file()
    assert (out / "ef_report.csv").is_file()


def test_solve_ef_guardrail(tmp_path, capsys):
    cfg = write_config(tmp_path, ef_hour_cap=48)
    assert run("solve-ef", "--config", cfg, "--out", tmp_path / "o") == 3
    assert "solve-ph" in capsys.readouterr().err


def test_solve_ef_missing_demand(tmp_path):
    cfg = write_config(tmp_path, demand=str(tmp_path / "nope.csv"))
    assert run("solve-ef", "--config", cfg, "--out", tmp_path / "o") == 1


def test_solve_ef_infeasible(tmp_path):
    src = case_config_path("threebus").parent
    net = json.loads((src / "network.json").read_text())
    for g in net["generators"]:
        g["g_min"] = g["g_max"]  # forced output far above demand, nowhere to put it
    (tmp_path / "net.json").write_text(json.dumps(net))
    cfg = write_config(tmp_path, network=str(tmp_path / "net.json"), horizon_hours=24)
    assert run("solve-ef", "--config", cfg, "--out", tmp_path / "o") == 2


def ph_artifacts(out):
    trace = [json.loads(ln) for ln in (out / "ph_trace.jsonl").read_text().splitlines()]
    summary = json.loads((out / "ph_summary.json").read_text())
    return trace, summary


def strip_timing(rec):
    return {k: v for k, v in rec.items() if k not in TIMING_KEYS}


def test_solve_ph_converges_on_small_case(tmp_path):
    cfg = write_config(tmp_path, horizon_hours=48)
    out = tmp_path / "ph"
    assert run("solve-ph", "--config", cfg, "--period-hours", 24, "--out", out) == 0
    trace, summary = ph_artifacts(out)
    assert trace[0]["v"] == 0 and summary["gap"] <= 0.005
    assert (out / "ph_solution.json").is_file() and (out / "ph_state.json").is_file()
    assert run("validate", "--config", cfg, out / "ph_solution.json") == 0


def test_solve_ph_iteration_cap(tmp_path):
    out = tmp_path / "ph"
    code = run("solve-ph", "--case", "threebus", "--max-iters", 1, "--tol", 1e-12, "--out", out)
    assert code == 4
    trace, _ = ph_artifacts(out)
    assert [r["v"] for r in trace] == [0, 1]
    assert (out / "ph_solution.json").is_file()


def test_solve_ph_subproblem_failure(tmp_path):
    src = case_config_path("threebus").parent
    net = json.loads((src / "network.json").read_text())
    for g in net["generators"]:
        g["g_min"] = g["g_max"]
    (tmp_path / "net.json").write_text(json.dumps(net))
    cfg = write_config(tmp_path, network=str(tmp_path / "net.json"))
    assert run("solve-ph", "--config", cfg, "--out", tmp_path / "o") == 5


def test_solve_ph_artifacts_repeatable(tmp_path):
    outs = [tmp_path / "a", tmp_path / "b"]
    for o in outs:
        run("solve-ph", "--case", "threebus", "--max-iters", 5, "--tol", 1e-12, "--out", o)
    ta, sa = ph_artifacts(outs[0])
    tb, sb = ph_artifacts(outs[1])
    assert [strip_timing(r) for r in ta] == [strip_timing(r) for r in tb]
    sa.pop("timing"), sb.pop("timing")
    assert sa == sb
    for name in ("ph_solution.json", "ph_solution_timeseries.csv", "ph_report.csv", "ph_state.json"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()


def test_solve_ph_resume(tmp_path):
    out = tmp_path / "ph"
    run("solve-ph", "--case", "threebus", "--max-iters", 2, "--tol", 1e-12, "--out", out)
    code = run("solve-ph", "--case", "threebus", "--max-iters", 3, "--tol", 1e-12, "--out", out,
               "--resume", out / "ph_state.json")
    assert code == 4
    trace, _ = ph_artifacts(out)
    assert [r["v"] for r in trace] == [3]


@pytest.fixture(scope="module")
def psps_solution(tmp_path_factory):
    out = tmp_path_factory.mktemp("psps")
    assert run("solve-ef", "--case", "threebus_psps", "--out", out) == 0
    return out


def test_validate_accepts_solver_output(psps_solution):
    assert run("validate", "--case", "threebus_psps", psps_solution / "ef_solution.json") == 0


def test_validate_flags_flow_on_shut_off_line(psps_solution, tmp_path, capsys):
    for name in ("ef_solution.json", "ef_solution_timeseries.csv"):
        (tmp_path / name).write_bytes((psps_solution / name).read_bytes())
    ts = tmp_path / "ef_solution_timeseries.csv"
    rows = list(csv.reader(ts.open()))
    col = rows[0].index("flow[L23]")
    rows[1 + 30][col] = "0.25"  # hour 30 falls on a shut-off day
    with ts.open("w", newline="") as fh:
        csv.writer(fh).writerows(rows)
    assert run("validate", "--case", "threebus_psps", tmp_path / "ef_solution.json") == 6
    text = capsys.readouterr().out
    assert "offline_line_flow" in text and "L23" in text


def test_validate_truncated_file(psps_solution, tmp_path):
    bad = tmp_path / "ef_solution.json"
    bad.write_text((psps_solution / "ef_solution.json").read_text()[:40])
    assert run("validate", "--case", "threebus_psps", bad) == 1


def test_export_mps_extensive_form(tmp_path):
    assert run("export-mps", "--case", "threebus", "--out", tmp_path) == 0
    lp = read_mps((tmp_path / "extensive_form.mps").read_text())
    ref = tmp_path / "ef"
    run("solve-ef", "--case", "threebus", "--out", ref)
    obj = json.loads((ref / "ef_solution.json").read_text())["objective"]
    assert solve_lp(lp).objective == pytest.approx(obj, rel=1e-9)


def test_export_mps_per_period(tmp_path):
    assert run("export-mps", "--case", "threebus", "--per-period", "--periods", 4, "--out", tmp_path) == 0
    names = sorted(p.name for p in tmp_path.glob("*.mps"))
    assert len(names) == 4
    assert all(str(i) in n for i, n in enumerate(names))


def test_export_mps_unwritable(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert run("export-mps", "--case", "threebus", "--out", blocker / "sub") == 1


def test_report_from_solution(psps_solution, tmp_path):
    assert run("report", "--case", "threebus_psps", psps_solution / "ef_solution.json", "--out", tmp_path) == 0
    rows = list(csv.DictReader((tmp_path / "ef_solution_report.csv").open()))
    assert len(rows) == 96
    shed = [float(r["load_shed"]) for r in rows]
    assert sum(shed[24:72]) > 0 and sum(shed[:24]) == 0
    assert rows[30]["lines_off"] == "1" and rows[0]["lines_off"] == "0"


def test_no_command_prints_usage():
    with pytest.raises(SystemExit):
        main([])


def test_module_entry_point():
    import subprocess
    import sys
    res = subprocess.run([sys.executable, "-m", "batteryph", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "solve-ph" in res.stdout
