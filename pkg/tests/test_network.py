import copy
import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from batteryph.network import (DanglingReferenceError, DeenergizationSchedule, DuplicateIdError,
                               NetworkError, RiskSeries, SchemaError, compute_off_sets,
                               energized_components, network_document, parse_network,
                               read_demand_csv, read_risk_csv)

from conftest import TRIANGLE, quiet_parse


def test_counts(triangle):
    assert (len(triangle.buses), len(triangle.lines), len(triangle.generators)) == (3, 3, 2)


def test_candidates_default_to_all_buses(triangle):
    assert triangle.candidates == ("1", "2", "3")


def test_explicit_candidates(triangle_doc):
    triangle_doc["battery_candidates"] = ["3"]
    assert parse_network(triangle_doc).candidates == ("3",)


def test_dangling_bus_reference_named(triangle_doc):
    triangle_doc["lines"][0]["to_bus"] = "b9"
    with pytest.raises(DanglingReferenceError, match="b9"):
        parse_network(triangle_doc)


def test_duplicate_ids_rejected(triangle_doc):
    triangle_doc["lines"][1]["id"] = "A"
    with pytest.raises(DuplicateIdError):
        parse_network(triangle_doc)


@pytest.mark.parametrize("path, value, where", [
    (("lines", 0, "flow_limit"), "big", "lines[0].flow_limit"),
    (("generators", 1, "g_max"), None, "generators[1].g_max"),
    (("buses", 0, "candidate_battery"), "yes", "buses[0].candidate_battery"),
])
def test_schema_errors_name_location(triangle_doc, path, value, where):
    obj = triangle_doc
    for k in path[:-1]:
        obj = obj[k]
    obj[path[-1]] = value
    with pytest.raises(SchemaError) as info:
        parse_network(triangle_doc)
    assert where in str(info.value)


def test_missing_top_level_key(triangle_doc):
    del triangle_doc["reference_bus"]
    with pytest.raises(SchemaError, match="reference_bus"):
        parse_network(triangle_doc)


def test_round_trip_document(triangle):
    again = parse_network(json.dumps(network_document(triangle)))
    assert again == triangle
    assert again.candidates == triangle.candidates


def test_large_generated_network_defaults_all_candidates():
    n = 240
    doc = {"reference_bus": "0", "buses": [{"id": str(i)} for i in range(n)],
           "lines": [{"id": f"l{i}", "from_bus": str(i), "to_bus": str(i + 1), "susceptance": -5.0,
                      "flow_limit": 1.0, "angle_diff_min": -1.0, "angle_diff_max": 1.0} for i in range(n - 1)],
           "generators": [{"id": "g", "bus": "0", "g_min": 0, "g_max": 10, "cost_coeffs": [0, 1]}]}
    net = parse_network(doc)
    assert len(net.buses) == 240 and len(net.candidates) == 240


def test_disconnected_network_warns(triangle_doc):
    triangle_doc["buses"].append({"id": "4"})
    with pytest.warns(UserWarning):
        parse_network(triangle_doc)


def test_demand_csv_alignment(triangle):
    dem = read_demand_csv("bus,0,1\n3,0.3,0.4\n1,0.1,0.2\n2,0,0\n")
    m = dem.matrix(triangle)
    assert m.tolist() == [[0.1, 0.2], [0.0, 0.0], [0.3, 0.4]]


def test_demand_csv_errors():
    with pytest.raises(SchemaError, match="demand:3"):
        read_demand_csv("bus,0,1\n1,0.1,0.2\n2,0.1\n")
    with pytest.raises(SchemaError):
        read_demand_csv("bus,0\n1,-1\n")
    with pytest.raises(DuplicateIdError):
        read_demand_csv("bus,0\n1,1\n1,2\n")


def test_missing_demand_row(triangle):
    with pytest.raises(NetworkError):
        read_demand_csv("bus,0\n1,1\n").matrix(triangle)


def test_risk_rows_checked(triangle):
    risk = read_risk_csv("line,0\nA,0.1\nB,0.2\n")
    with pytest.raises(NetworkError, match="C"):
        risk.check_lines(triangle)


def test_off_sets_whole_day_strict_threshold():
    risk = RiskSeries(("A", "B"), np.array([[0.9, 0.1], [0.5, 0.5]]))
    sched = compute_off_sets(risk, 0.5)
    assert sched.hours == 48
    assert all(sched.off(t) == {"A"} for t in range(24))
    assert all(sched.off(t) == frozenset() for t in range(24, 48))


def test_off_sets_empty_when_all_below():
    risk = RiskSeries(("A",), np.array([[0.1, 0.2]]))
    sched = compute_off_sets(risk, 0.5)
    assert all(not sched.off(t) for t in range(sched.hours))


def test_days_beyond_data_use_fill():
    risk = RiskSeries(("A",), np.array([[0.9]]))
    sched = compute_off_sets(risk, 0.5, horizon=72)
    assert sched.off(30) == frozenset()
    sched = compute_off_sets(risk, 0.5, horizon=72, fill=1.0)
    assert sched.off(30) == {"A"}


def test_negative_threshold_rejected():
    with pytest.raises(ValueError):
        compute_off_sets(RiskSeries(("A",), np.zeros((1, 1))), -0.1)


def test_components_triangle(triangle):
    assert energized_components(triangle, set()) == [{"1", "2", "3"}]
    comps = energized_components(triangle, {"B", "C"})
    assert sorted(map(sorted, comps)) == [["1", "2"], ["3"]]
    assert len(energized_components(triangle, {"A", "B", "C"})) == 3


def test_schedule_check_unknown_line(triangle):
    sched = DeenergizationSchedule((frozenset({"Z"}),))
    with pytest.raises(DanglingReferenceError):
        sched.check(triangle)


risk_matrix = st.lists(st.lists(st.floats(0, 1), min_size=3, max_size=3), min_size=1, max_size=4)


@settings(max_examples=50, deadline=None)
@given(risk_matrix, st.floats(0, 1), st.floats(0, 1))
def test_raising_threshold_never_grows_off_sets(rows, t1, t2):
    lo, hi = sorted((t1, t2))
    risk = RiskSeries(("A", "B", "C"), np.array(rows).T)
    a, b = compute_off_sets(risk, lo, 4), compute_off_sets(risk, hi, 4)
    assert all(b.off(t) <= a.off(t) for t in range(a.hours))


@settings(max_examples=50, deadline=None)
@given(risk_matrix, st.floats(0, 1), st.integers(1, 24))
def test_off_sets_constant_within_a_day(rows, thr, hpd):
    risk = RiskSeries(("A", "B", "C"), np.array(rows).T)
    s = compute_off_sets(risk, thr, hpd)
    for t in range(s.hours):
        assert s.off(t) == s.off((t // hpd) * hpd)


@settings(max_examples=50, deadline=None)
@given(st.sets(st.sampled_from(["A", "B", "C"])))
def test_components_partition_buses(off):
    net = quiet_parse(copy.deepcopy(TRIANGLE))
    comps = energized_components(net, off)
    seen = [b for c in comps for b in c]
    assert sorted(seen) == ["1", "2", "3"]
    assert len(seen) == len(set(seen))
