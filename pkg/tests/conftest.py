import copy
import warnings

import numpy as np
import pytest

from batteryph.config import case_config_path, load_config, load_study
from batteryph.network import parse_network

TRIANGLE = {
    "reference_bus": "1",
    "buses": [{"id": "1"}, {"id": "2"}, {"id": "3"}],
    "lines": [
        {"id": "A", "from_bus": "1", "to_bus": "2", "susceptance": -10.0, "flow_limit": 1.0,
         "angle_diff_min": -0.5, "angle_diff_max": 0.5},
        {"id": "B", "from_bus": "2", "to_bus": "3", "susceptance": -10.0, "flow_limit": 1.0,
         "angle_diff_min": -0.5, "angle_diff_max": 0.5},
        {"id": "C", "from_bus": "1", "to_bus": "3", "susceptance": -10.0, "flow_limit": 1.0,
         "angle_diff_min": -0.5, "angle_diff_max": 0.5},
    ],
    "generators": [
        {"id": "G1", "bus": "1", "g_min": 0.0, "g_max": 3.0, "cost_coeffs": [0.0, 1000.0]},
        {"id": "G3", "bus": "3", "g_min": 0.0, "g_max": 1.0, "cost_coeffs": [5.0, 3000.0]},
    ],
}

# two buses, one line, one generator, one candidate bus
TWO_BUS = {
    "reference_bus": "1",
    "battery_candidates": ["2"],
    "buses": [{"id": "1"}, {"id": "2"}],
    "lines": [{"id": "L", "from_bus": "1", "to_bus": "2", "susceptance": -5.0, "flow_limit": 0.8,
               "angle_diff_min": -1.0, "angle_diff_max": 1.0}],
    "generators": [{"id": "G", "bus": "1", "g_min": 0.0, "g_max": 2.0, "cost_coeffs": [0.0, 100.0]}],
}


@pytest.fixture
def triangle_doc():
    return copy.deepcopy(TRIANGLE)


@pytest.fixture
def triangle():
    return parse_network(copy.deepcopy(TRIANGLE))


@pytest.fixture
def two_bus():
    return parse_network(copy.deepcopy(TWO_BUS))


def quiet_parse(doc):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return parse_network(doc)


_STUDIES = {}


def case_study(name, **overrides):
    """Bundled case loaded once per (name, overrides)."""
    key = (name, tuple(sorted(overrides.items())))
    if key not in _STUDIES:
        _STUDIES[key] = load_study(load_config(case_config_path(name), overrides or None))
    return _STUDIES[key]


ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)


def flat_demand(net, hours, level):
    return np.full((len(net.buses), hours), float(level))
