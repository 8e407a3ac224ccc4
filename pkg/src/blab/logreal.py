"""Non-negative reals stored by their logarithm.

Weights such as ``exp(-1/(1-|z|^2))`` leave the double range long before the
boundary, so every product of weights and kernels is formed here first and only
converted back to a float at the very end.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# exp(x) underflows to a subnormal/zero below this
UNDERFLOW_LOG = math.log(np.finfo(float).tiny) - 52 * math.log(2.0)


@dataclass(frozen=True)
class LogReal:
    zero_flag: bool = False
    log_magnitude: float = 0.0

    @classmethod
    def from_float(cls, x: float) -> "LogReal":
        if x < 0:
            raise ValueError("LogReal holds non-negative numbers only")
        if x == 0:
            return cls(True, -math.inf)
        return cls(False, math.log(x))

    @classmethod
    def from_log(cls, log_x: float) -> "LogReal":
        if log_x == -math.inf:
            return cls(True, -math.inf)
        return cls(False, float(log_x))

    @property
    def log(self) -> float:
        return -math.inf if self.zero_flag else self.log_magnitude

    def __float__(self) -> float:
        if self.zero_flag or self.log_magnitude < UNDERFLOW_LOG:
            return 0.0
        return math.exp(self.log_magnitude)

    def __mul__(self, other: "LogReal") -> "LogReal":
        other = _coerce(other)
        if self.zero_flag or other.zero_flag:
            return LogReal(True, -math.inf)
        return LogReal(False, self.log_magnitude + other.log_magnitude)

    __rmul__ = __mul__

    def __truediv__(self, other: "LogReal") -> "LogReal":
        other = _coerce(other)
        if other.zero_flag:
            raise ZeroDivisionError("division by a zero LogReal")
        if self.zero_flag:
            return self
        return LogReal(False, self.log_magnitude - other.log_magnitude)

    def __add__(self, other: "LogReal") -> "LogReal":
        other = _coerce(other)
        if self.zero_flag:
            return other
        if other.zero_flag:
            return self
        hi, lo = sorted((self.log_magnitude, other.log_magnitude), reverse=True)
        return LogReal(False, hi + math.log1p(math.exp(lo - hi)))

    __radd__ = __add__

    def __pow__(self, p: float) -> "LogReal":
        if self.zero_flag:
            if p <= 0:
                raise ZeroDivisionError("non-positive power of zero")
            return self
        return LogReal(False, self.log_magnitude * p)

    def __lt__(self, other: "LogReal") -> bool:
        return self.log < _coerce(other).log

    def __le__(self, other: "LogReal") -> bool:
        return self.log <= _coerce(other).log


def _coerce(x) -> LogReal:
    if isinstance(x, LogReal):
        return x
    return LogReal.from_float(float(x))


def logsumexp(logs, weights=None, axis=None, precision=None):
    """Max-shifted ``log(sum(weights * exp(logs)))`` for positive weights.

    ``precision="extended"`` accumulates in ``np.longdouble``.
    """
    logs = np.asarray(logs, dtype=float)
    if weights is not None:
        logs = logs + np.log(np.asarray(weights, dtype=float))
    m = np.max(logs, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    dtype = np.longdouble if precision == "extended" else float
    s = np.sum(np.exp((logs - m).astype(dtype)), axis=axis, keepdims=True)
    with np.errstate(divide="ignore"):
        out = (np.log(s) + m).astype(float)
    if axis is None:
        return float(out.reshape(()))
    return np.squeeze(out, axis=axis)


def log_complex_sum(logs, phases, axis=None):
    """Sum ``exp(logs + i*phases)`` and return ``(log|S|, arg S)``."""
    logs = np.asarray(logs, dtype=float)
    m = np.max(logs, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    s = np.sum(np.exp(logs - m + 1j * np.asarray(phases)), axis=axis, keepdims=True)
    with np.errstate(divide="ignore"):
        lm = np.log(np.abs(s)) + m
    ph = np.angle(s)
    if axis is None:
        return float(lm.reshape(())), float(ph.reshape(()))
    return np.squeeze(lm, axis=axis), np.squeeze(ph, axis=axis)
