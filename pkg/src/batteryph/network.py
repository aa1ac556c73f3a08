"""Grid, demand and wildfire-risk data, and risk-thresholded line shutoffs."""

from __future__ import annotations

import csv
import io
import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

BASE_MVA = 100.0


class NetworkError(ValueError):
    """Invalid network, demand or risk data."""


class SchemaError(NetworkError):
    def __init__(self, location, message):
        super().__init__(f"{location}: {message}")
        self.location = location


class DuplicateIdError(NetworkError):
    pass


class DanglingReferenceError(NetworkError):
    def __init__(self, location, ref):
        super().__init__(f"{location}: unknown bus {ref!r}")
        self.location = location
        self.ref = ref


@dataclass(frozen=True)
class Bus:
    id: str
    demand_ref: Optional[str] = None
    candidate_battery: bool = True


@dataclass(frozen=True)
class Line:
    id: str
    from_bus: str
    to_bus: str
    susceptance: float
    flow_limit: float
    angle_diff_min: float
    angle_diff_max: float


@dataclass(frozen=True)
class Generator:
    id: str
    bus: str
    g_min: float
    g_max: float
    cost_coeffs: tuple


@dataclass(frozen=True)
class Network:
    buses: tuple
    lines: tuple
    generators: tuple
    reference_bus: str
    base_mva: float = BASE_MVA
    bus_index: dict = field(init=False, repr=False, compare=False)
    line_index: dict = field(init=False, repr=False, compare=False)
    gen_index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "bus_index", {b.id: i for i, b in enumerate(self.buses)})
        object.__setattr__(self, "line_index", {ln.id: i for i, ln in enumerate(self.lines)})
        object.__setattr__(self, "gen_index", {g.id: i for i, g in enumerate(self.generators)})

    @property
    def candidates(self) -> tuple:
        """Ids of buses that may host batteries, in bus order."""
        return tuple(b.id for b in self.buses if b.candidate_battery)

    def gens_at(self, bus_id) -> list:
        return [g.id for g in self.generators if g.bus == bus_id]

    def lines_from(self, bus_id) -> list:
        return [ln.id for ln in self.lines if ln.from_bus == bus_id]

    def lines_to(self, bus_id) -> list:
        return [ln.id for ln in self.lines if ln.to_bus == bus_id]

    def with_candidates(self, ids: Iterable[str]) -> "Network":
        ids = set(ids)
        unknown = ids - set(self.bus_index)
        if unknown:
            raise DanglingReferenceError("battery_candidates", sorted(unknown)[0])
        buses = tuple(Bus(b.id, b.demand_ref, b.id in ids) for b in self.buses)
        return Network(buses, self.lines, self.generators, self.reference_bus, self.base_mva)


def _require(obj, key, loc, kind=None):
    if not isinstance(obj, dict):
        raise SchemaError(loc, "expected an object")
    if key not in obj:
        raise SchemaError(f"{loc}.{key}", "missing required field")
    val = obj[key]
    if kind is float:
        if isinstance(val, bool) or not isinstance(val, (int, float)) or not math.isfinite(val):
            raise SchemaError(f"{loc}.{key}", f"expected a finite number, got {val!r}")
        return float(val)
    if kind is str:
        if not isinstance(val, (str, int)) or isinstance(val, bool):
            raise SchemaError(f"{loc}.{key}", f"expected an identifier, got {val!r}")
        return str(val)
    return val


def parse_network(document) -> Network:
    """Build a validated Network from a JSON string, bytes, path-free dict."""
    if isinstance(document, (str, bytes)):
        try:
            doc = json.loads(document)
        except json.JSONDecodeError as exc:
            raise SchemaError("document", f"invalid JSON ({exc})") from exc
    else:
        doc = document
    if not isinstance(doc, dict):
        raise SchemaError("document", "top level must be an object")
    for key in ("buses", "lines", "generators", "reference_bus"):
        if key not in doc:
            raise SchemaError(key, "missing required field")
    for key in ("buses", "lines", "generators"):
        if not isinstance(doc[key], list):
            raise SchemaError(key, "expected a list")

    cand_list = doc.get("battery_candidates")
    buses = []
    seen = set()
    for i, b in enumerate(doc["buses"]):
        loc = f"buses[{i}]"
        bid = _require(b, "id", loc, str)
        if bid in seen:
            raise DuplicateIdError(f"{loc}.id: duplicate bus id {bid!r}")
        seen.add(bid)
        ref = b.get("demand_ref", bid)
        ref = None if ref is None else str(ref)
        cand = b.get("candidate_battery", True)
        if not isinstance(cand, bool):
            raise SchemaError(f"{loc}.candidate_battery", "expected true/false")
        buses.append(Bus(bid, ref, cand))
    if cand_list is not None:
        if not isinstance(cand_list, list):
            raise SchemaError("battery_candidates", "expected a list of bus ids")
        cset = {str(c) for c in cand_list}
        for c in cand_list:
            if str(c) not in seen:
                raise DanglingReferenceError("battery_candidates", str(c))
        buses = [Bus(b.id, b.demand_ref, b.id in cset) for b in buses]

    lines = []
    lseen = set()
    for i, ln in enumerate(doc["lines"]):
        loc = f"lines[{i}]"
        lid = _require(ln, "id", loc, str)
        if lid in lseen:
            raise DuplicateIdError(f"{loc}.id: duplicate line id {lid!r}")
        lseen.add(lid)
        fb = _require(ln, "from_bus", loc, str)
        tb = _require(ln, "to_bus", loc, str)
        for key, ref in (("from_bus", fb), ("to_bus", tb)):
            if ref not in seen:
                raise DanglingReferenceError(f"{loc}.{key}", ref)
        if fb == tb:
            raise SchemaError(loc, "from_bus equals to_bus")
        line = Line(lid, fb, tb, _require(ln, "susceptance", loc, float),
                    _require(ln, "flow_limit", loc, float),
                    _require(ln, "angle_diff_min", loc, float),
                    _require(ln, "angle_diff_max", loc, float))
        if line.flow_limit < 0:
            raise SchemaError(f"{loc}.flow_limit", "must be >= 0")
        if line.angle_diff_min > line.angle_diff_max:
            raise SchemaError(loc, "angle_diff_min exceeds angle_diff_max")
        lines.append(line)

    gens = []
    gseen = set()
    for i, g in enumerate(doc["generators"]):
        loc = f"generators[{i}]"
        gid = _require(g, "id", loc, str)
        if gid in gseen:
            raise DuplicateIdError(f"{loc}.id: duplicate generator id {gid!r}")
        gseen.add(gid)
        bus = _require(g, "bus", loc, str)
        if bus not in seen:
            raise DanglingReferenceError(f"{loc}.bus", bus)
        coeffs = _require(g, "cost_coeffs", loc)
        if not isinstance(coeffs, list) or not coeffs:
            raise SchemaError(f"{loc}.cost_coeffs", "expected a non-empty list")
        for k, c in enumerate(coeffs):
            if isinstance(c, bool) or not isinstance(c, (int, float)) or not math.isfinite(c):
                raise SchemaError(f"{loc}.cost_coeffs[{k}]", f"expected a finite number, got {c!r}")
        gen = Generator(gid, bus, _require(g, "g_min", loc, float), _require(g, "g_max", loc, float),
                        tuple(float(c) for c in coeffs))
        if gen.g_min > gen.g_max:
            raise SchemaError(loc, "g_min exceeds g_max")
        gens.append(gen)

    ref = str(doc["reference_bus"])
    if ref not in seen:
        raise DanglingReferenceError("reference_bus", ref)
    base = doc.get("base_mva", BASE_MVA)
    net = Network(tuple(buses), tuple(lines), tuple(gens), ref, float(base))
    if len(energized_components(net, ())) > 1:
        warnings.warn("network is not connected with all lines energized", stacklevel=2)
    return net


def network_document(net: Network) -> dict:
    """Inverse of parse_network."""
    return {
        "base_mva": net.base_mva,
        "reference_bus": net.reference_bus,
        "buses": [{"id": b.id, "demand_ref": b.demand_ref, "candidate_battery": b.candidate_battery}
                  for b in net.buses],
        "lines": [{"id": ln.id, "from_bus": ln.from_bus, "to_bus": ln.to_bus,
                   "susceptance": ln.susceptance, "flow_limit": ln.flow_limit,
                   "angle_diff_min": ln.angle_diff_min, "angle_diff_max": ln.angle_diff_max}
                  for ln in net.lines],
        "generators": [{"id": g.id, "bus": g.bus, "g_min": g.g_min, "g_max": g.g_max,
                        "cost_coeffs": list(g.cost_coeffs)} for g in net.generators],
    }


def load_network(path) -> Network:
    return parse_network(Path(path).read_text(encoding="utf-8"))


# --------------------------------------------------------------------- series

@dataclass(frozen=True)
class DemandSeries:
    """Per-bus hourly demand in p.u.; rows keyed by demand reference."""

    keys: tuple
    values: np.ndarray

    @property
    def hours(self) -> int:
        return self.values.shape[1]

    def matrix(self, net: Network) -> np.ndarray:
        """Bus x hour demand aligned with ``net.buses``."""
        index = {k: i for i, k in enumerate(self.keys)}
        out = np.zeros((len(net.buses), self.hours))
        for i, b in enumerate(net.buses):
            if b.demand_ref is None:
                continue
            if b.demand_ref not in index:
                raise NetworkError(f"bus {b.id!r}: no demand row {b.demand_ref!r}")
            out[i] = self.values[index[b.demand_ref]]
        return out


@dataclass(frozen=True)
class RiskSeries:
    """Per-line daily wildfire risk (unitless)."""

    line_ids: tuple
    values: np.ndarray

    @property
    def days(self) -> int:
        return self.values.shape[1]

    def check_lines(self, net: Network):
        missing = [ln.id for ln in net.lines if ln.id not in self.line_ids]
        if missing:
            raise NetworkError(f"risk series has no row for line {missing[0]!r}")
        unknown = [lid for lid in self.line_ids if lid not in net.line_index]
        if unknown:
            raise DanglingReferenceError("risk", unknown[0])


def _read_table(source, what):
    # a string without a newline is a path; anything else is CSV text
    if isinstance(source, Path) or "\n" not in str(source):
        text = Path(source).read_text(encoding="utf-8")
    else:
        text = str(source)
    reader = csv.reader(io.StringIO(text))
    rows = [r for r in reader if r and any(cell.strip() for cell in r)]
    if not rows:
        raise SchemaError(what, "empty file (header row required)")
    header, body = rows[0], rows[1:]
    width = len(header)
    if width < 2:
        raise SchemaError(f"{what}:1", "header needs an id column and at least one value column")
    keys, vals = [], []
    for lineno, r in enumerate(body, start=2):
        if len(r) != width:
            raise SchemaError(f"{what}:{lineno}", f"expected {width} columns, got {len(r)}")
        key = r[0].strip()
        if key in keys:
            raise DuplicateIdError(f"{what}:{lineno}: duplicate id {key!r}")
        try:
            row = [float(v) for v in r[1:]]
        except ValueError as exc:
            raise SchemaError(f"{what}:{lineno}", str(exc)) from exc
        if any(not math.isfinite(v) or v < 0 for v in row):
            raise SchemaError(f"{what}:{lineno}", "values must be finite and >= 0")
        keys.append(key)
        vals.append(row)
    arr = np.array(vals, dtype=float).reshape(len(keys), width - 1)
    return tuple(keys), arr


def read_demand_csv(source) -> DemandSeries:
    """Parse demand CSV (path or text): id column, then one column per hour."""
    keys, arr = _read_table(source, "demand")
    return DemandSeries(keys, arr)


def read_risk_csv(source) -> RiskSeries:
    """Parse risk CSV (path or text): line id column, then one column per day."""
    keys, arr = _read_table(source, "risk")
    return RiskSeries(keys, arr)


def write_series_csv(path, id_label, keys, values):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow([id_label] + [str(k) for k in range(values.shape[1])])
        for k, row in zip(keys, values):
            w.writerow([k] + [repr(float(v)) for v in row])


# --------------------------------------------------------------- shutoffs

@dataclass(frozen=True)
class DeenergizationSchedule:
    """Per-hour sets of de-energized line ids; hours past the end are all-energized."""

    off_sets: tuple

    @property
    def hours(self) -> int:
        return len(self.off_sets)

    def off(self, t) -> frozenset:
        if 0 <= t < len(self.off_sets):
            return self.off_sets[t]
        return frozenset()

    def check(self, net: Network):
        for t, s in enumerate(self.off_sets):
            for lid in s:
                if lid not in net.line_index:
                    raise DanglingReferenceError(f"schedule hour {t}", lid)

    @staticmethod
    def empty(hours=0) -> "DeenergizationSchedule":
        return DeenergizationSchedule(tuple(frozenset() for _ in range(hours)))


def compute_off_sets(risk: RiskSeries, threshold: float, hours_per_day: int = 24,
                     horizon: Optional[int] = None, fill: float = 0.0) -> DeenergizationSchedule:
    """Lines whose daily risk is strictly above ``threshold`` are off for that whole day.

    Day d covers hours [d*hours_per_day, (d+1)*hours_per_day).  Days beyond
    the risk data take the ``fill`` risk value.
    """
    if threshold < 0:
        raise ValueError("threshold must be >= 0")
    if hours_per_day < 1:
        raise ValueError("hours_per_day must be >= 1")
    if horizon is None:
        horizon = risk.days * hours_per_day
    n_days = -(-horizon // hours_per_day)
    daily = []
    fill_set = frozenset(risk.line_ids) if fill > threshold else frozenset()
    for d in range(n_days):
        if d < risk.days:
            col = risk.values[:, d]
            daily.append(frozenset(lid for lid, r in zip(risk.line_ids, col) if r > threshold))
        else:
            daily.append(fill_set)
    return DeenergizationSchedule(tuple(daily[t // hours_per_day] for t in range(horizon)))


def energized_components(net: Network, off_set) -> list:
    """Connected components (sets of bus ids) of the graph of energized lines."""
    nb = len(net.buses)
    off = set(off_set)
    on = [ln for ln in net.lines if ln.id not in off]
    fr = [net.bus_index[ln.from_bus] for ln in on]
    to = [net.bus_index[ln.to_bus] for ln in on]
    g = coo_matrix((np.ones(len(on)), (fr, to)), shape=(nb, nb))
    _, labels = connected_components(g, directed=False)
    comps = {}
    for i, lab in enumerate(labels):
        comps.setdefault(lab, set()).add(net.buses[i].id)
    return [comps[k] for k in sorted(comps, key=lambda k: int(np.flatnonzero(labels == k)[0]))]
