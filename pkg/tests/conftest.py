import copy
import json
from importlib import resources

import pytest
from hypothesis import HealthCheck, settings

from lutpower import synthetic

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

# Acceptance verdicts, echoed in the terminal summary so they survive output capture.
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


SMALL_SPEC = {
    "platform": "tiny",
    "core_count": 2,
    "nominal_period_s": 0.1,
    "jitter": 0.05,
    "noise_sigma": 0.01,
    "quantization_w": 0.0,
    "workloads": {"count": 3, "samples": 60, "phase_min": 5, "phase_max": 15},
    "validation": {"samples": 50},
    "regimes": {
        "idle": {"level": [0.02, 0.1], "compute": 1.0, "memory": 1.0, "active_cores": [0, 1]},
        "compute": {"level": [0.6, 1.0], "compute": 1.0, "memory": 0.35, "active_cores": [1, 2]},
        "memory": {"level": [0.5, 0.9], "compute": 0.35, "memory": 1.0, "active_cores": [1, 2]},
    },
    "cpu": {
        "frequencies_hz": [1000000000, 2000000000],
        "voltage": [0.7, 1.0],
        "base_w": 1.0,
        "gate_w": 0.1,
        "events": [
            {"name": "inst", "kind": "compute", "peak_rate": 2e9, "weight": 2e-10},
            {"name": "mem", "kind": "memory", "peak_rate": 1e9, "weight": 1e-10,
             "freq_exponent": 0.5},
        ],
        "decoys": 1,
        "decoy_rate": 5e7,
        "pmu": {"max_simultaneous": 2, "exclusive_groups": []},
    },
    "gpu": {
        "frequencies_hz": [300000000, 600000000, 900000000],
        "voltage": [0.6, 1.0],
        "base_w": 1.5,
        "events": [
            {"name": "sm", "kind": "compute", "peak_rate": 1.4e9, "weight": 1e-9},
            {"name": "warp", "kind": "compute", "peak_rate": 3e10, "weight": 4e-11},
            {"name": "l2", "kind": "memory", "peak_rate": 8e8, "weight": 1.5e-9,
             "freq_exponent": 0.5},
        ],
        "decoys": 2,
        "decoy_rate": 2e8,
        "pmu": {"max_simultaneous": 3, "exclusive_groups": [["sm", "decoy_01"]]},
    },
}


@pytest.fixture
def small_spec_dict():
    return copy.deepcopy(SMALL_SPEC)


@pytest.fixture
def small_spec():
    return synthetic.spec_from_dict(copy.deepcopy(SMALL_SPEC))


@pytest.fixture(scope="session")
def small_corpus():
    return synthetic.generate(synthetic.spec_from_dict(copy.deepcopy(SMALL_SPEC)), seed=7)


@pytest.fixture(scope="session")
def xavier_dict():
    return json.loads(resources.files("lutpower").joinpath("data/xavier.json").read_text())
