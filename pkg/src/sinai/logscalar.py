"""Nonnegative reals stored by their logarithm.

Sums of ``n^(S^n_j - S^n_l) = exp(S_j - S_l)`` overflow doubles as soon as the
potential varies by more than ~709 over the summation range; these helpers keep
everything in log space.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

_NEG_INF = -math.inf


@dataclass(frozen=True, order=True)
class LogScalar:
    """Represents ``exp(log)``; ``log = -inf`` is the exact zero."""

    log: float = _NEG_INF

    @classmethod
    def from_float(cls, x: float) -> "LogScalar":
        if x < 0:
            raise ValueError("LogScalar holds nonnegative values only")
        return cls(math.log(x)) if x > 0 else ZERO

    @classmethod
    def sum(cls, logs) -> "LogScalar":
        return cls(logsumexp(logs))

    @property
    def is_zero(self) -> bool:
        return self.log == _NEG_INF

    def __add__(self, other: "LogScalar") -> "LogScalar":
        a, b = self.log, other.log
        if a < b:
            a, b = b, a
        if b == _NEG_INF:
            return LogScalar(a)
        return LogScalar(a + math.log1p(math.exp(b - a)))

    def __mul__(self, other: "LogScalar") -> "LogScalar":
        if self.is_zero or other.is_zero:
            return ZERO
        return LogScalar(self.log + other.log)

    def __truediv__(self, other: "LogScalar") -> "LogScalar":
        if other.is_zero:
            raise ZeroDivisionError("LogScalar division by zero")
        if self.is_zero:
            return ZERO
        return LogScalar(self.log - other.log)

    def __pow__(self, p: float) -> "LogScalar":
        if self.is_zero:
            return ZERO if p > 0 else ONE
        return LogScalar(self.log * p)

    def sub(self, other: "LogScalar") -> tuple["LogScalar", float]:
        """``self - other`` for ``self >= other``, plus the decimal digits cancelled."""
        if other.is_zero:
            return self, 0.0
        d = other.log - self.log
        if d > 0:
            raise ValueError("difference would be negative")
        if d == 0:
            return ZERO, math.inf
        frac = -math.expm1(d)  # 1 - other/self
        return LogScalar(self.log + math.log(frac)), -math.log10(frac)

    def __float__(self) -> float:
        return math.exp(self.log) if self.log < 709.78 else math.inf


ZERO = LogScalar(_NEG_INF)
ONE = LogScalar(0.0)


def logsumexp(logs) -> float:
    """log(sum(exp(logs))), factoring out the max; empty input gives -inf."""
    x = np.asarray(logs, float)
    if x.size == 0:
        return _NEG_INF
    m = float(np.max(x))
    if m == _NEG_INF or m == math.inf:
        return m
    return m + math.log(float(np.sum(np.exp(x - m))))


def logcumsumexp(logs) -> np.ndarray:
    """Running log-sum-exp: out[k] = log(sum(exp(logs[:k+1])))."""
    x = np.asarray(logs, float)
    if x.size == 0:
        return x.copy()
    return np.logaddexp.accumulate(x)
