"""Finitely-atomic probability measures on the real line.

Atomic measures are the exact computational class everything else in this
package is built on: dilation, moments, sampling, the classical-convolution
baseline, and the textual measure grammar used by the CLI.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from functools import cached_property
from statistics import NormalDist

import numpy as np

WEIGHT_SUM_TOL = 1e-12
VARIANCE_CLAMP = 1e-14
DEFAULT_MERGE_TOL = 1e-9
DEFAULT_PRUNE_TOL = 1e-15


class ConfigError(ValueError):
    """Invalid measure or experiment parameters."""


class SpecParseError(ConfigError):
    """Measure grammar parse failure; carries the 0-based offset."""

    def __init__(self, message: str, text: str, position: int):
        super().__init__(f"{message} at position {position}: {text!r}")
        self.position = position
        self.text = text


@dataclass(frozen=True, eq=False)
class AtomicMeasure:
    """Probability measure with finitely many weighted atoms.

    Positions are strictly increasing (exactly coincident atoms are merged
    on construction), weights are strictly positive and sum to one within
    1e-12.  Instances are immutable and safe to share across threads.
    """

    positions: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        pos = np.atleast_1d(np.asarray(self.positions, dtype=float)).ravel()
        wts = np.atleast_1d(np.asarray(self.weights, dtype=float)).ravel()
        if pos.size == 0:
            raise ValueError("a measure needs at least one atom")
        if pos.shape != wts.shape:
            raise ValueError(f"positions {pos.shape} and weights {wts.shape} differ")
        if not (np.all(np.isfinite(pos)) and np.all(np.isfinite(wts))):
            raise ValueError("atom positions and weights must be finite")
        order = np.argsort(pos, kind="stable")
        pos, wts = pos[order], wts[order]
        if pos.size > 1:
            fresh = np.concatenate(([True], np.diff(pos) != 0.0))
            if not fresh.all():
                idx = np.cumsum(fresh) - 1
                merged = np.zeros(int(fresh.sum()))
                np.add.at(merged, idx, wts)
                pos, wts = pos[fresh], merged
        if np.any(wts <= 0.0):
            raise ValueError("all weights must be strictly positive")
        total = math.fsum(wts.tolist())
        if abs(total - 1.0) > WEIGHT_SUM_TOL:
            raise ValueError(f"weights sum to {total!r}, expected 1 within {WEIGHT_SUM_TOL}")
        pos.setflags(write=False)
        wts.setflags(write=False)
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "weights", wts)

    @property
    def size(self) -> int:
        return self.positions.size

    @cached_property
    def cumulative_weights(self) -> np.ndarray:
        cum = np.cumsum(self.weights)
        cum[-1] = 1.0  # guard inverse-CDF lookups against rounding below 1
        cum.setflags(write=False)
        return cum

    def __repr__(self) -> str:
        pairs = ", ".join(f"({t:g}, {w:g})" for t, w in zip(self.positions, self.weights))
        return f"AtomicMeasure[{pairs}]"


def point_mass(t: float) -> AtomicMeasure:
    return AtomicMeasure(np.array([float(t)]), np.array([1.0]))


def almost_equal(a: AtomicMeasure, b: AtomicMeasure, pos_tol: float = 1e-10,
                 weight_tol: float = 1e-10) -> bool:
    """Atom-by-atom comparison after the canonical sort."""
    if a.size != b.size:
        return False
    return bool(
        np.all(np.abs(a.positions - b.positions) <= pos_tol)
        and np.all(np.abs(a.weights - b.weights) <= weight_tol)
    )


# ---------------------------------------------------------------------------
# measure families and the textual grammar


@dataclass(frozen=True)
class MeasureSpec:
    """Declarative description of one measure family instance.

    Families: ``point(t)``, ``two_point(t1,t2,p)`` (p is the weight of t1),
    ``uniform_atoms(a,b,K)``, ``gaussian_quantile(m,s,K)`` and
    ``explicit[(t1,w1),...]``.
    """

    family: str
    params: tuple[float, ...]

    @staticmethod
    def point(t: float) -> "MeasureSpec":
        return MeasureSpec("point", (float(t),))

    @staticmethod
    def two_point(t1: float, t2: float, p: float) -> "MeasureSpec":
        return MeasureSpec("two_point", (float(t1), float(t2), float(p)))

    @staticmethod
    def uniform_atoms(a: float, b: float, k: int) -> "MeasureSpec":
        return MeasureSpec("uniform_atoms", (float(a), float(b), float(k)))

    @staticmethod
    def gaussian_quantile(m: float, s: float, k: int) -> "MeasureSpec":
        return MeasureSpec("gaussian_quantile", (float(m), float(s), float(k)))

    @staticmethod
    def explicit(pairs) -> "MeasureSpec":
        flat: list[float] = []
        for t, w in pairs:
            flat.extend((float(t), float(w)))
        return MeasureSpec("explicit", tuple(flat))

    def __str__(self) -> str:
        if self.family == "explicit":
            pairs = ",".join(
                f"({self.params[i]:.17g},{self.params[i + 1]:.17g})"
                for i in range(0, len(self.params), 2)
            )
            return f"explicit[{pairs}]"
        args = ",".join(f"{p:.17g}" for p in self.params)
        return f"{self.family}({args})"


def _require_count(spec: MeasureSpec, n: int) -> None:
    if len(spec.params) != n:
        raise ConfigError(f"{spec.family} takes {n} parameters, got {len(spec.params)}")


def _as_count(value: float, name: str) -> int:
    k = int(value)
    if k != value or k < 1:
        raise ConfigError(f"{name} must be a positive integer, got {value!r}")
    return k


def materialize(spec: MeasureSpec) -> AtomicMeasure:
    """Build the atomic measure a MeasureSpec describes."""
    fam = spec.family
    if fam == "point":
        _require_count(spec, 1)
        return point_mass(spec.params[0])
    if fam == "two_point":
        _require_count(spec, 3)
        t1, t2, p = spec.params
        if not 0.0 < p < 1.0:
            raise ConfigError(f"two_point weight must lie in (0,1), got {p}")
        return AtomicMeasure(np.array([t1, t2]), np.array([p, 1.0 - p]))
    if fam == "uniform_atoms":
        _require_count(spec, 3)
        a, b, kf = spec.params
        k = _as_count(kf, "uniform_atoms count")
        if not a < b:
            raise ConfigError(f"uniform_atoms needs a < b, got a={a}, b={b}")
        q = (np.arange(1, k + 1) - 0.5) / k
        return AtomicMeasure(a + (b - a) * q, np.full(k, 1.0 / k))
    if fam == "gaussian_quantile":
        _require_count(spec, 3)
        m, s, kf = spec.params
        k = _as_count(kf, "gaussian_quantile count")
        if not s > 0.0:
            raise ConfigError(f"gaussian_quantile needs s > 0, got {s}")
        norm = NormalDist(m, s)
        pos = np.array([norm.inv_cdf((i - 0.5) / k) for i in range(1, k + 1)])
        return AtomicMeasure(pos, np.full(k, 1.0 / k))
    if fam == "explicit":
        if len(spec.params) < 2 or len(spec.params) % 2:
            raise ConfigError("explicit needs a nonempty list of (position, weight) pairs")
        pos = np.array(spec.params[0::2])
        wts = np.array(spec.params[1::2])
        try:
            return AtomicMeasure(pos, wts)
        except ValueError as exc:
            raise ConfigError(f"explicit atom list invalid: {exc}") from exc
    raise ConfigError(f"unknown measure family {fam!r}")


_NUMBER = re.compile(r"[+-]?(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?")
_NAME = re.compile(r"[A-Za-z_][A-Za-z_0-9]*")


class _Cursor:
    def __init__(self, text: str):
        self.text = text
        self.i = 0

    def skip_ws(self):
        while self.i < len(self.text) and self.text[self.i].isspace():
            self.i += 1

    def fail(self, message: str):
        raise SpecParseError(message, self.text, self.i)

    def expect(self, ch: str):
        self.skip_ws()
        if self.i >= len(self.text) or self.text[self.i] != ch:
            self.fail(f"expected {ch!r}")
        self.i += 1

    def peek(self) -> str:
        self.skip_ws()
        return self.text[self.i] if self.i < len(self.text) else ""

    def number(self) -> float:
        self.skip_ws()
        m = _NUMBER.match(self.text, self.i)
        if m is None:
            self.fail("expected a number")
        self.i = m.end()
        return float(m.group(0))

    def name(self) -> str:
        self.skip_ws()
        m = _NAME.match(self.text, self.i)
        if m is None:
            self.fail("expected a family name")
        self.i = m.end()
        return m.group(0)


def parse_measure_spec(text: str) -> MeasureSpec:
    """Parse the textual measure grammar, attributing errors by position."""
    cur = _Cursor(text)
    fam = cur.name()
    if fam == "explicit":
        cur.expect("[")
        pairs: list[tuple[float, float]] = []
        while True:
            cur.expect("(")
            t = cur.number()
            cur.expect(",")
            w = cur.number()
            cur.expect(")")
            pairs.append((t, w))
            if cur.peek() == ",":
                cur.expect(",")
                continue
            break
        cur.expect("]")
        spec = MeasureSpec.explicit(pairs)
    else:
        cur.expect("(")
        params = [cur.number()]
        while cur.peek() == ",":
            cur.expect(",")
            params.append(cur.number())
        cur.expect(")")
        spec = MeasureSpec(fam, tuple(params))
    cur.skip_ws()
    if cur.i != len(cur.text):
        cur.fail("trailing input after measure")
    materialize(spec)  # validate parameters eagerly
    return spec


# ---------------------------------------------------------------------------
# elementary calculus


def dilate(mu: AtomicMeasure, b: float) -> AtomicMeasure:
    """Pushforward of mu under t -> b*t, b > 0."""
    if not b > 0.0:
        raise ValueError(f"dilation factor must be positive, got {b}")
    return AtomicMeasure(mu.positions * b, mu.weights)


def mean(mu: AtomicMeasure) -> float:
    return float(np.dot(mu.weights, mu.positions))


def second_moment(mu: AtomicMeasure) -> float:
    return float(np.dot(mu.weights, mu.positions * mu.positions))


def variance(mu: AtomicMeasure) -> float:
    # Two-pass form: immune to the cancellation m2 - mean^2 suffers for
    # narrow measures far from the origin.
    m = mean(mu)
    dev = mu.positions - m
    var = float(np.dot(mu.weights, dev * dev))
    if -VARIANCE_CLAMP < var < 0.0:
        return 0.0
    return var


def classical_convolve(mu: AtomicMeasure, nu: AtomicMeasure,
                       merge_tol: float = DEFAULT_MERGE_TOL) -> AtomicMeasure:
    """Independent-sum convolution: atoms at all pairwise sums."""
    pos = np.add.outer(mu.positions, nu.positions).ravel()
    wts = np.multiply.outer(mu.weights, nu.weights).ravel()
    out = AtomicMeasure(pos, wts)
    return merge_atoms(out, merge_tol)


def sample(mu: AtomicMeasure, rng: np.random.Generator) -> float:
    """Draw one atom position; consumes exactly one uniform variate."""
    u = rng.random()
    idx = int(np.searchsorted(mu.cumulative_weights, u, side="right"))
    return float(mu.positions[idx])


def sample_many(mu: AtomicMeasure, rng: np.random.Generator, size: int) -> np.ndarray:
    u = rng.random(size)
    idx = np.searchsorted(mu.cumulative_weights, u, side="right")
    return mu.positions[idx]


def merge_atoms(mu: AtomicMeasure, tol: float,
                prune_tol: float = DEFAULT_PRUNE_TOL) -> AtomicMeasure:
    """Merge atoms closer than tol at their weight-weighted mean, then drop
    atoms below prune_tol and renormalize."""
    if tol < 0.0 or prune_tol < 0.0:
        raise ValueError("tolerances must be nonnegative")
    pos, wts = mu.positions, mu.weights
    if tol > 0.0 and pos.size > 1:
        fresh = np.concatenate(([True], np.diff(pos) >= tol))
        if not fresh.all():
            idx = np.cumsum(fresh) - 1
            n_clusters = int(fresh.sum())
            w_sum = np.zeros(n_clusters)
            wt_sum = np.zeros(n_clusters)
            np.add.at(w_sum, idx, wts)
            np.add.at(wt_sum, idx, wts * pos)
            pos, wts = wt_sum / w_sum, w_sum
    if prune_tol > 0.0:
        keep = wts >= prune_tol
        if not keep.any():
            keep = wts == wts.max()
        if not keep.all():
            pos, wts = pos[keep], wts[keep]
            wts = wts / math.fsum(wts.tolist())
    return AtomicMeasure(pos, wts)


def random_atomic(rng: np.random.Generator, n_atoms: int | None = None,
                  max_atoms: int = 8, span: float = 5.0,
                  min_gap: float = 1e-4) -> AtomicMeasure:
    """Random well-separated measure for property checks and the selftest."""
    d = n_atoms if n_atoms is not None else int(rng.integers(1, max_atoms + 1))
    while True:
        pos = np.sort(rng.uniform(-span, span, d))
        if d == 1 or np.diff(pos).min() > min_gap:
            break
    wts = rng.uniform(0.05, 1.0, d)
    wts = wts / math.fsum(wts.tolist())
    return AtomicMeasure(pos, wts)
