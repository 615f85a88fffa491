"""Shared plumbing: error hierarchy, estimator parameter protocol, validation helpers."""
from __future__ import annotations

import inspect
import json
from typing import Any

import numpy as np


class SitStandError(Exception):
    """Base class for all errors raised by this package."""


class OverRange(SitStandError):
    """A calibrated reading exceeds the gauge's rated load."""


class InsufficientSamples(SitStandError):
    """A calibration procedure was given fewer readings than it needs."""


class NonPositiveScale(SitStandError):
    """Scale calibration produced a non-positive counts/kg factor."""


class EmptyChannel(SitStandError):
    """A trial window contains no samples for at least one channel."""


class NoOverlap(SitStandError):
    """The four channel streams share no common time window."""


class SchemaViolation(SitStandError):
    """A wire payload failed validation; carries the offending field path."""

    def __init__(self, path: str, reason: str = "invalid"):
        self.path = path
        self.reason = reason
        super().__init__(f"{path}: {reason}")


class DimensionMismatch(SitStandError):
    """Two feature series disagree on column count."""


class EmptyTrainingSet(SitStandError):
    """Classification requested against an empty training set."""


class EmptyTestSet(SitStandError):
    """Evaluation requested against an empty test set."""


class ModeMismatch(SitStandError):
    """A packet's mode does not match the service it was submitted to."""


class ConflictingResubmission(SitStandError):
    """A trial_id was resubmitted with a different payload."""


class UnknownTrial(SitStandError):
    """No stored trial with the requested id."""


class NotFitted(SitStandError):
    """Estimator used before fit()."""


class ParamsMixin:
    """get_params/set_params in the scikit-learn convention.

    Constructor arguments must be stored under attributes of the same name,
    which makes any subclass clonable and grid-searchable by sklearn tooling
    without depending on sklearn itself.
    """

    @classmethod
    def _param_names(cls) -> list[str]:
        sig = inspect.signature(cls.__init__)
        return [
            name
            for name, p in sig.parameters.items()
            if name != "self" and p.kind not in (p.VAR_POSITIONAL, p.VAR_KEYWORD)
        ]

    def get_params(self, deep: bool = True) -> dict[str, Any]:
        return {name: getattr(self, name) for name in self._param_names()}

    def set_params(self, **params: Any) -> "ParamsMixin":
        valid = set(self._param_names())
        for name, value in params.items():
            if name not in valid:
                raise ValueError(f"unknown parameter {name!r} for {type(self).__name__}")
            setattr(self, name, value)
        return self

    def __repr__(self) -> str:
        args = ", ".join(f"{k}={v!r}" for k, v in self.get_params().items())
        return f"{type(self).__name__}({args})"


def check_matrix(x: Any, name: str = "X", min_rows: int = 1) -> np.ndarray:
    """Coerce to a 2-D float array and validate shape/finiteness."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got ndim={arr.ndim}")
    if arr.shape[0] < min_rows:
        raise ValueError(f"{name} needs at least {min_rows} rows, got {arr.shape[0]}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def check_vector(x: Any, name: str = "x", min_len: int = 1) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be 1-D, got ndim={arr.ndim}")
    if arr.size < min_len:
        raise ValueError(f"{name} needs at least {min_len} elements, got {arr.size}")
    return arr


def round_half_away(x: float) -> int:
    """Round half away from zero, the fixed rounding rule for count math."""
    return int(np.sign(x) * np.floor(np.abs(x) + 0.5))


def canonical_json(obj: Any) -> bytes:
    """Canonical JSON bytes: sorted keys, compact separators, UTF-8.

    Defines byte-exactness wherever the package compares serialized payloads.
    """
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode("utf-8")
