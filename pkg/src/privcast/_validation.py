"""Exceptions and small argument checkers shared by all modules."""

from __future__ import annotations

import numbers

import numpy as np


class ParameterError(ValueError):
    """An argument is outside the documented domain."""


class DegenerateFitError(ValueError):
    """A histogram has too little spread to fit a distribution."""


class InfeasibleDiscretizationError(ValueError):
    """The closed-form masses at distance 0 and 1 leave nothing for the tail."""


class InfeasibleScheduleError(ValueError):
    """Some target transition cannot be realised by a stay-or-advance step.

    ``violations`` lists the offending ``(t, i)`` pairs.
    """

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__(f"infeasible transitions at {self.violations}")


class FitFailure(RuntimeError):
    """Least-squares fitting did not converge or was underdetermined."""

    def __init__(self, message, constants=None, residual=None):
        super().__init__(message)
        self.constants = constants
        self.residual = residual


class NoDataError(ValueError):
    """An attack was asked to run without any observation."""


class ConfigurationError(ValueError):
    """A simulation configuration cannot be executed."""


def check_count(value, name, minimum=0):
    if isinstance(value, bool) or not isinstance(value, numbers.Integral):
        raise ParameterError(f"{name} must be an integer, got {value!r}")
    if value < minimum:
        raise ParameterError(f"{name} must be >= {minimum}, got {value}")
    return int(value)


def check_real(value, name, low=None, high=None, low_open=False, high_open=False):
    try:
        value = float(value)
    except (TypeError, ValueError):
        raise ParameterError(f"{name} must be a real number, got {value!r}") from None
    if not np.isfinite(value):
        raise ParameterError(f"{name} must be finite, got {value}")
    if low is not None and (value < low or (low_open and value == low)):
        raise ParameterError(f"{name}={value} below allowed range")
    if high is not None and (value > high or (high_open and value == high)):
        raise ParameterError(f"{name}={value} above allowed range")
    return value


def check_probability_vector(values, name, atol=1e-9):
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1 or arr.size == 0:
        raise ParameterError(f"{name} must be a non-empty 1-d vector")
    if np.any(~np.isfinite(arr)) or np.any(arr < -atol):
        raise ParameterError(f"{name} has negative or non-finite entries")
    if abs(arr.sum() - 1.0) > atol:
        raise ParameterError(f"{name} sums to {arr.sum()!r}, expected 1")
    return arr


def check_counts(counts, name="counts"):
    arr = np.asarray(counts)
    if arr.ndim != 1 or arr.size == 0:
        raise ParameterError(f"{name} must be a non-empty 1-d vector")
    if np.any(arr < 0):
        raise ParameterError(f"{name} must be non-negative")
    return arr


def check_nk(n, k):
    return check_count(n, "n", 2), check_count(k, "k", 1)
