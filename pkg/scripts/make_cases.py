"""Regenerate the bundled study cases under src/batteryph/cases/.

Run from the repository root: ``python3 scripts/make_cases.py``.  Output is
deterministic (no randomness), so rerunning leaves the files unchanged.
"""

import json
from pathlib import Path

import numpy as np

ROOT = Path(__file__).resolve().parents[1] / "src" / "batteryph" / "cases"


def daily_shape(days, hours_per_day=24):
    """Load multiplier per hour: night trough, evening peak, mild day-to-day drift."""
    h = np.arange(days * hours_per_day)
    hod = h % hours_per_day
    day = h // hours_per_day
    shape = 0.72 + 0.28 * np.exp(-((hod - 18.0) / 4.0) ** 2) - 0.12 * np.exp(-((hod - 4.0) / 3.0) ** 2)
    return np.round(shape * (1.0 + 0.04 * np.sin(1.3 * day + 0.4)), 6)


def ph_settings(rho):
    # generation costs are per unit of power, so the penalty has to sit on
    # the scale of the marginal costs (thousands) for consensus to settle
    return {"rho": rho, "refine": 14, "refine_ratio": 2.0, "max_iters": 200, "tol": 1e-5,
            "gap_target": 0.005}


def write_case(name, network, demand_rows, risk_rows, config):
    out = ROOT / name
    out.mkdir(parents=True, exist_ok=True)
    (out / "network.json").write_text(json.dumps(network, indent=2) + "\n", encoding="utf-8")
    with open(out / "demand.csv", "w", encoding="utf-8") as fh:
        hours = len(next(iter(demand_rows.values())))
        fh.write(",".join(["bus"] + [str(t) for t in range(hours)]) + "\n")
        for key, vals in demand_rows.items():
            fh.write(",".join([key] + [f"{v:.6f}" for v in vals]) + "\n")
    with open(out / "risk.csv", "w", encoding="utf-8") as fh:
        days = len(next(iter(risk_rows.values())))
        fh.write(",".join(["line"] + [str(d) for d in range(days)]) + "\n")
        for key, vals in risk_rows.items():
            fh.write(",".join([key] + [f"{v:.3f}" for v in vals]) + "\n")
    (out / "config.json").write_text(json.dumps(config, indent=2) + "\n", encoding="utf-8")


def line(lid, fb, tb, x, limit, ang=0.6):
    return {"id": lid, "from_bus": fb, "to_bus": tb, "susceptance": round(-1.0 / x, 6),
            "flow_limit": limit, "angle_diff_min": -ang, "angle_diff_max": ang}


def three_bus(days=4):
    net = {
        "base_mva": 100.0,
        "reference_bus": "1",
        "buses": [{"id": "1"}, {"id": "2"}, {"id": "3"}],
        "lines": [line("L12", "1", "2", 0.10, 0.55), line("L23", "2", "3", 0.10, 0.45),
                  line("L13", "1", "3", 0.125, 0.60)],
        "generators": [
            {"id": "G1", "bus": "1", "g_min": 0.0, "g_max": 2.0, "cost_coeffs": [0.0, 1500.0]},
            {"id": "G3", "bus": "3", "g_min": 0.0, "g_max": 0.6, "cost_coeffs": [0.0, 4500.0]},
        ],
    }
    shape = daily_shape(days)
    demand = {"1": np.zeros(days * 24), "2": 1.05 * shape, "3": 0.55 * shape}
    risk = {"L12": [0.1] * days, "L23": [0.2] * days, "L13": [0.3] * days}
    cfg = {"network": "network.json", "demand": "demand.csv", "risk": "risk.csv",
           "threshold": 0.5, "horizon_hours": days * 24, "period_hours": 24,
           "ph": ph_settings(30000.0)}
    write_case("threebus", net, demand, risk, cfg)


def three_bus_psps(days=4):
    """Radial load bus 3 fed by a single line that is shut off on days 1 and 2."""
    net = {
        "base_mva": 100.0,
        "reference_bus": "1",
        "buses": [{"id": "1"}, {"id": "2"}, {"id": "3"}],
        "lines": [line("L12", "1", "2", 0.10, 1.5), line("L23", "2", "3", 0.10, 0.8)],
        "generators": [
            {"id": "G1", "bus": "1", "g_min": 0.0, "g_max": 2.5, "cost_coeffs": [0.0, 1500.0]},
        ],
        "battery_candidates": ["2", "3"],
    }
    shape = daily_shape(days)
    demand = {"1": np.zeros(days * 24), "2": 0.8 * shape, "3": 0.3 * shape}
    risk = {"L12": [0.1] * days, "L23": [0.1, 0.9, 0.95, 0.2][:days]}
    cfg = {"network": "network.json", "demand": "demand.csv", "risk": "risk.csv",
           "threshold": 0.5, "horizon_hours": days * 24, "period_hours": 24,
           "battery": {"x_total": 0.0, "x_max": 0.0}}
    write_case("threebus_psps", net, demand, risk, cfg)


# IEEE 14-bus topology and branch reactances; ratings, generator limits and
# costs are chosen here to create congestion worth relieving with storage
IEEE14_BRANCHES = [
    ("1", "2", 0.05917), ("1", "5", 0.22304), ("2", "3", 0.19797), ("2", "4", 0.17632),
    ("2", "5", 0.17388), ("3", "4", 0.17103), ("4", "5", 0.04211), ("4", "7", 0.20912),
    ("4", "9", 0.55618), ("5", "6", 0.25202), ("6", "11", 0.19890), ("6", "12", 0.25581),
    ("6", "13", 0.13027), ("7", "8", 0.17615), ("7", "9", 0.11001), ("9", "10", 0.08450),
    ("9", "14", 0.27038), ("10", "11", 0.19207), ("12", "13", 0.19988), ("13", "14", 0.34802),
]
IEEE14_LOAD_MW = {"2": 21.7, "3": 94.2, "4": 47.8, "5": 7.6, "6": 11.2, "9": 29.5, "10": 9.0,
                  "11": 3.5, "12": 6.1, "13": 13.5, "14": 14.9}
RATINGS = {("1", "2"): 1.6, ("1", "5"): 0.75, ("2", "3"): 0.6, ("2", "4"): 0.55, ("2", "5"): 0.5,
           ("3", "4"): 0.35, ("4", "5"): 0.6, ("4", "7"): 0.4, ("4", "9"): 0.25, ("5", "6"): 0.45,
           ("6", "11"): 0.2, ("6", "12"): 0.2, ("6", "13"): 0.35, ("7", "8"): 0.6, ("7", "9"): 0.45,
           ("9", "10"): 0.25, ("9", "14"): 0.2, ("10", "11"): 0.2, ("12", "13"): 0.2, ("13", "14"): 0.2}


def fourteen_bus(days=4):
    lines = [line(f"L{a}-{b}", a, b, x, RATINGS[(a, b)]) for a, b, x in IEEE14_BRANCHES]
    net = {
        "base_mva": 100.0,
        "reference_bus": "1",
        "buses": [{"id": str(i)} for i in range(1, 15)],
        "lines": lines,
        "generators": [
            {"id": "G1", "bus": "1", "g_min": 0.0, "g_max": 2.2, "cost_coeffs": [0.0, 1800.0]},
            {"id": "G2", "bus": "2", "g_min": 0.0, "g_max": 0.6, "cost_coeffs": [0.0, 2600.0]},
            {"id": "G3", "bus": "3", "g_min": 0.0, "g_max": 0.4, "cost_coeffs": [0.0, 5200.0]},
            {"id": "G6", "bus": "6", "g_min": 0.0, "g_max": 0.3, "cost_coeffs": [0.0, 4800.0]},
            {"id": "G8", "bus": "8", "g_min": 0.0, "g_max": 0.3, "cost_coeffs": [0.0, 4400.0]},
        ],
        "battery_candidates": ["3", "4", "9", "13", "14"],
    }
    shape = daily_shape(days)
    demand = {str(i): np.zeros(days * 24) for i in range(1, 15)}
    for bus, mw in IEEE14_LOAD_MW.items():
        demand[bus] = mw / 100.0 * shape
    # fire risk only in the second half: the lines feeding bus 14 are shut off
    half = days // 2
    risk = {}
    for a, b, _ in IEEE14_BRANCHES:
        lid = f"L{a}-{b}"
        r = [0.05] * days
        if lid in ("L9-14", "L13-14"):
            r = [0.05] * half + [0.8] * (days - half)
        risk[lid] = r
    cfg = {"network": "network.json", "demand": "demand.csv", "risk": "risk.csv",
           "threshold": 0.5, "horizon_hours": days * 24, "period_hours": 24,
           "ph": ph_settings(10000.0)}
    write_case("ieee14", net, demand, risk, cfg)


if __name__ == "__main__":
    three_bus()
    three_bus_psps()
    fourteen_bus()
    print(f"cases written under {ROOT}")
