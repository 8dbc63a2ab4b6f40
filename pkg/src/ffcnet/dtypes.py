"""Global numeric precision for a run.

Precision is a property of a run, not of individual tensors: float32 for
training, float64 for oracle and gradient tests.  Everything that creates
arrays from scratch (data loading, parameter init, synthetic generation)
consults the current default; operations preserve the dtype of their inputs.
"""
from __future__ import annotations

import contextlib

import numpy as np

_NAMES = {"f32": np.float32, "f64": np.float64}

_default = np.float32


def set_default_dtype(name: str) -> None:
    """Set the run-wide float dtype, either "f32" or "f64"."""
    global _default
    if name not in _NAMES:
        raise ValueError(f"unknown precision {name!r}, expected one of {sorted(_NAMES)}")
    _default = _NAMES[name]


def default_dtype() -> np.dtype:
    return np.dtype(_default)


@contextlib.contextmanager
def precision(name: str):
    """Temporarily switch the default dtype (used heavily by tests)."""
    global _default
    old = _default
    set_default_dtype(name)
    try:
        yield
    finally:
        _default = old
