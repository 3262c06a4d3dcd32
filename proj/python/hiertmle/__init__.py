"""Python front end for the hiertmle estimator.

Configs may be given as JSON text or as dicts. Reports come back as dicts.
"""

import json as _json

from . import _core
from ._core import (
    AllWeightsZero,
    ConfigError,
    DegenerateSupport,
    DimensionMismatch,
    Error,
    InsufficientData,
    InvariantError,
    IoError,
    MismatchedRuns,
    NonConvergence,
    OutcomeOutOfBounds,
    ParseError,
    SchemaError,
    SeparationError,
    SpecError,
    UnfittedReference,
    UnsupportedValue,
    WeightError,
    dataset_fingerprint,
    dgp_presets,
    format_report,
    make_grid,
    unscale_estimate,
)

__version__ = "0.1.0"


def _text(config):
    return config if isinstance(config, str) else _json.dumps(config)


def estimate(config, data_csv=None, *, base_dir="", seed=None, raw=False):
    """Estimate every intervention in the config. With raw=True the JSON text is returned."""
    text = _core.estimate(_text(config), data_csv, base_dir, seed)
    return text if raw else _json.loads(text)


def simulate(config, *, base_dir="", seed=None):
    return _core.simulate(_text(config), base_dir, seed)


def benchmark(config, *, base_dir="", seed=None, threads=None):
    return _core.benchmark(_text(config), base_dir, seed, threads)


def oracle(config, draws=None, *, seed=None, threads=None):
    return _core.oracle(_text(config), draws, seed, threads)
