"""Minimax instrumental-variable estimators.

Thin Python layer over the compiled core. Configurations are passed as
dicts and forwarded as JSON, so they use exactly the keys accepted by the
command-line tool's ``--config`` files.
"""

from __future__ import annotations

import json
from typing import Any, Mapping, Optional

import numpy as np

from . import _core
from ._core import (
    InvalidInput,
    Model,
    ParseError,
    SingularMatrix,
    estimator_names,
    function_names,
    generate,
    load_model,
    pav,
    preset_names,
    true_function,
)

__all__ = [
    "InvalidInput",
    "Model",
    "ParseError",
    "SingularMatrix",
    "estimator_names",
    "evaluate_mse",
    "fit",
    "function_names",
    "generate",
    "load_model",
    "pav",
    "preset",
    "preset_names",
    "run_benchmark",
    "true_function",
]


def fit(estimator: str, y, x, z, config: Optional[Mapping[str, Any]] = None, seed: int = 0) -> Model:
    """Fits ``estimator`` (one of :func:`estimator_names`) to outcome y, treatments x, instruments z."""
    return _core.fit(
        estimator,
        np.asarray(y, dtype=float),
        np.asarray(x, dtype=float),
        np.asarray(z, dtype=float),
        None if config is None else json.dumps(dict(config)),
        seed,
    )


def evaluate_mse(model: Model, fname: str, *, n_x: int = 1, n_z: int = 1, strength: float = 0.6,
                 data_seed: int = 0, n_test: int = 10000, seed: int = 0) -> float:
    """Mean squared error against the true function on fresh treatment draws."""
    return _core.evaluate_mse(model, fname, n_x, n_z, strength, data_seed, n_test, seed)


def preset(name: str) -> dict:
    """The benchmark specification shipped under ``name`` as a dict."""
    return json.loads(_core.preset_json(name))


def run_benchmark(spec: Mapping[str, Any], jobs: int = 0) -> str:
    """Runs a benchmark spec and returns the long-format results CSV (timing omitted)."""
    return _core.run_benchmark(json.dumps(dict(spec)), jobs)
