"""Declarative descriptions of measure sequences and normalizer schedules.

A SequenceSpec fixes the step measures mu_1, mu_2, ... (an iid family, a
variance-scaled family, or an explicit list) together with the strictly
increasing normalizers b_1 < b_2 < ... used to rescale the running sums.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .measures import (
    AtomicMeasure,
    ConfigError,
    MeasureSpec,
    dilate,
    materialize,
    mean,
    variance,
)


@dataclass(frozen=True)
class IidMeasures:
    """Every step uses the same base measure."""

    base: MeasureSpec

    @cached_property
    def _measure(self) -> AtomicMeasure:
        return materialize(self.base)

    def measure(self, n: int) -> AtomicMeasure:
        return self._measure

    def mean(self, n: int) -> float:
        return mean(self._measure)

    def variance(self, n: int) -> float:
        return variance(self._measure)

    def describe(self) -> str:
        return f"iid {self.base}"


@dataclass(frozen=True)
class ScaledMeasures:
    """Step n dilates the base by n**(alpha/2), so variances grow like
    n**alpha.  Intended for a centered base."""

    base: MeasureSpec
    alpha: float

    @cached_property
    def _base_measure(self) -> AtomicMeasure:
        return materialize(self.base)

    def _factor(self, n: int) -> float:
        return float(n) ** (self.alpha / 2.0)

    def measure(self, n: int) -> AtomicMeasure:
        return dilate(self._base_measure, self._factor(n))

    def mean(self, n: int) -> float:
        return self._factor(n) * mean(self._base_measure)

    def variance(self, n: int) -> float:
        return self._factor(n) ** 2 * variance(self._base_measure)

    def describe(self) -> str:
        return f"scaled alpha={self.alpha:.17g} {self.base}"


@dataclass(frozen=True)
class ExplicitMeasures:
    specs: tuple[MeasureSpec, ...]

    @cached_property
    def _measures(self) -> tuple[AtomicMeasure, ...]:
        return tuple(materialize(s) for s in self.specs)

    def measure(self, n: int) -> AtomicMeasure:
        if not 1 <= n <= len(self._measures):
            raise ConfigError(f"step {n} outside the explicit list of "
                              f"{len(self._measures)} measures")
        return self._measures[n - 1]

    def mean(self, n: int) -> float:
        return mean(self.measure(n))

    def variance(self, n: int) -> float:
        return variance(self.measure(n))

    def describe(self) -> str:
        return "explicit " + "; ".join(str(s) for s in self.specs)


@dataclass(frozen=True)
class PowerNormalizers:
    """b_n = n**exponent with exponent > 0 (exponent 1 is plain b_n = n)."""

    exponent: float = 1.0

    def value(self, n: int) -> float:
        return float(n) ** self.exponent

    def describe(self) -> str:
        return f"n^{self.exponent:.17g}"


@dataclass(frozen=True)
class GeometricNormalizers:
    """b_n = 2**n."""

    def value(self, n: int) -> float:
        return 2.0 ** n

    def describe(self) -> str:
        return "2^n"


@dataclass(frozen=True)
class ExplicitNormalizers:
    values: tuple[float, ...]

    def value(self, n: int) -> float:
        if not 1 <= n <= len(self.values):
            raise ConfigError(f"step {n} outside the explicit list of "
                              f"{len(self.values)} normalizers")
        return float(self.values[n - 1])

    def describe(self) -> str:
        return "explicit " + ",".join(f"{v:.17g}" for v in self.values)


@dataclass(frozen=True)
class SequenceSpec:
    """Measure sequence, normalizer schedule and experiment horizon.

    The normalizer schedule may be omitted, in which case only operations
    that never rescale (plain simulation, conditional-moment checks) are
    available.
    """

    measures: IidMeasures | ScaledMeasures | ExplicitMeasures
    normalizers: PowerNormalizers | GeometricNormalizers | ExplicitNormalizers | None
    horizon: int

    def __post_init__(self):
        if self.horizon < 1:
            raise ConfigError(f"horizon must be >= 1, got {self.horizon}")
        if isinstance(self.measures, ExplicitMeasures):
            if len(self.measures.specs) < self.horizon:
                raise ConfigError(
                    f"explicit measure list has {len(self.measures.specs)} entries "
                    f"for horizon {self.horizon}")
        if isinstance(self.measures, ScaledMeasures):
            self.measures.measure(1)  # validate the base eagerly
        if isinstance(self.measures, IidMeasures):
            self.measures.measure(1)
        if isinstance(self.normalizers, PowerNormalizers):
            if not self.normalizers.exponent > 0.0:
                raise ConfigError("normalizer exponent must be positive")
        if isinstance(self.normalizers, GeometricNormalizers) and self.horizon > 1023:
            raise ConfigError("2^n normalizers overflow beyond horizon 1023")
        if self.normalizers is not None:
            b = self.normalizer_array(self.horizon)
            if not b[0] > 0.0:
                raise ConfigError(f"normalizers must be positive, b_1 = {b[0]}")
            if b.size > 1 and not np.all(np.diff(b) > 0.0):
                k = int(np.argmin(np.diff(b) > 0.0)) + 1
                raise ConfigError(
                    f"normalizers must be strictly increasing; violated at n={k + 1}")

    def measure(self, n: int) -> AtomicMeasure:
        if n < 1:
            raise ConfigError(f"step index must be >= 1, got {n}")
        return self.measures.measure(n)

    def mean(self, n: int) -> float:
        return self.measures.mean(n)

    def variance(self, n: int) -> float:
        return self.measures.variance(n)

    def b(self, n: int) -> float:
        if self.normalizers is None:
            raise ConfigError("this sequence has no normalizer schedule")
        return self.normalizers.value(n)

    def normalizer_array(self, n_max: int) -> np.ndarray:
        return np.array([self.b(n) for n in range(1, n_max + 1)])

    def mean_array(self, n_max: int) -> np.ndarray:
        return np.array([self.mean(n) for n in range(1, n_max + 1)])

    def variance_array(self, n_max: int) -> np.ndarray:
        return np.array([self.variance(n) for n in range(1, n_max + 1)])

    def describe(self) -> dict[str, str]:
        out = {"measures": self.measures.describe(), "horizon": str(self.horizon)}
        if self.normalizers is not None:
            out["normalizers"] = self.normalizers.describe()
        return out


def running_sums(values: np.ndarray) -> np.ndarray:
    """Partial sums with Neumaier compensation, exact to one rounding each."""
    out = np.empty(len(values))
    total = 0.0
    comp = 0.0
    for i, v in enumerate(values):
        t = total + v
        if abs(total) >= abs(v):
            comp += (total - t) + v
        else:
            comp += (v - t) + total
        total = t
        out[i] = total + comp
    return out
