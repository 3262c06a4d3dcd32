import json
import os
import pathlib

import pytest

ROOT = pathlib.Path(os.environ.get("HIERTMLE_SOURCE_DIR", pathlib.Path(__file__).parents[2]))


@pytest.fixture(scope="session")
def root():
    return ROOT


@pytest.fixture(scope="session")
def report_schema():
    return json.loads((ROOT / "schemas" / "report.schema.json").read_text())


@pytest.fixture
def small_config():
    return {
        "seed": 11,
        "dgp": {"preset": "well_specified", "communities": 60, "n": 8},
        "interventions": [
            {"name": "a0", "kind": "static", "a_star": 0},
            {"name": "a1", "kind": "static", "a_star": 1},
        ],
        "contrasts": [{"first": "a0", "second": "a1"}],
        "outcome": {"level": "pooled_individual"},
        "benchmark": {"replicates": 4, "oracle_draws": 20000},
    }
