"""Cauchy transforms, reciprocal F-transforms and their pole data.

For an atomic measure with atoms t_1 < ... < t_d and weights w_i the Cauchy
transform is G(z) = sum_i w_i / (z - t_i), and F = 1/G maps the upper
half-plane into itself.  F is rational with d - 1 real poles, one strictly
between each pair of consecutive atoms; those poles and their masses give the
representation F(z) = z - m + sum_j c_j / (p_j - z) whose total pole mass
equals the variance of the measure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .measures import AtomicMeasure, mean, variance

REAL_AXIS_GUARD = 1e-10
BISECT_WIDTH = 1e-13
MAX_BISECT = 130
NEWTON_POLISH = 5
HALF_PLANE_TOL = 1e-12


class PoleError(ValueError):
    """Evaluation requested at (or too close to) a pole."""


class RootFindError(RuntimeError):
    """A bracketed root search failed to converge; carries the interval."""

    def __init__(self, message: str, interval=None):
        super().__init__(message)
        self.interval = interval


class HalfPlaneError(RuntimeError):
    """An F-composition left the closed upper half-plane - numerically
    impossible for valid inputs, so it signals a bug upstream."""


# ---------------------------------------------------------------------------
# raw evaluations (no guards); atoms are looped so intermediates stay O(n)


def _g_value(z, pos, wts):
    g = np.zeros_like(np.asarray(z, dtype=np.result_type(z, float)))
    with np.errstate(divide="ignore"):
        for t, w in zip(pos, wts):
            g = g + w / (z - t)
    return g


def _g_derivative(z, pos, wts):
    gp = np.zeros_like(np.asarray(z, dtype=np.result_type(z, float)))
    with np.errstate(divide="ignore"):
        for t, w in zip(pos, wts):
            d = z - t
            gp = gp - w / (d * d)
    return gp


def _f_value(z, pos, wts):
    if len(pos) == 1:
        return z - pos[0]  # F of a point mass is exactly a translation
    with np.errstate(divide="ignore"):
        return 1.0 / _g_value(z, pos, wts)


def _f_derivative_value(z, pos, wts):
    if len(pos) == 1:
        return np.ones_like(np.asarray(z, dtype=np.result_type(z, float)))
    g = _g_value(z, pos, wts)
    gp = _g_derivative(z, pos, wts)
    with np.errstate(divide="ignore", invalid="ignore"):
        return -gp / (g * g)


# ---------------------------------------------------------------------------
# bracketed root solves, vectorized over arbitrarily shaped bracket arrays


def _bisect_newton(func, dfunc, lo, hi, context: str):
    """Solve func = 0 on brackets where func(lo) <= 0 <= func(hi).

    Bisection runs to width BISECT_WIDTH * (1 + |hi - lo|) (or until the
    midpoint is no longer representable strictly inside the bracket), then a
    few clipped Newton steps polish the roots.  func must be strictly
    increasing on each bracket.
    """
    lo = np.array(lo, dtype=float)
    hi = np.array(hi, dtype=float)
    width_tol = BISECT_WIDTH * (1.0 + np.abs(hi - lo))
    for _ in range(MAX_BISECT):
        mid = 0.5 * (lo + hi)
        stuck = (mid <= lo) | (mid >= hi)
        done = ((hi - lo) <= width_tol) | stuck
        if done.all():
            break
        fmid = func(mid)
        go_up = fmid < 0.0
        lo = np.where(done, lo, np.where(go_up, mid, lo))
        hi = np.where(done, hi, np.where(go_up, hi, mid))
    else:
        raise RootFindError(f"bisection failed to converge for {context}",
                            (float(np.min(lo)), float(np.max(hi))))
    z = 0.5 * (lo + hi)
    for _ in range(NEWTON_POLISH):
        f = func(z)
        df = dfunc(z)
        with np.errstate(divide="ignore", invalid="ignore"):
            step = np.where(df != 0.0, f / df, 0.0)
        step = np.where(np.isfinite(step), step, 0.0)
        z = np.clip(z - step, lo, hi)
    return z


def _f_pole_positions(pos, wts) -> np.ndarray:
    """The d-1 real poles of F (zeros of G), one per inter-atom gap."""
    d = len(pos)
    if d == 1:
        return np.empty(0)
    if d == 2:
        # G = w0/(z-t0) + w1/(z-t1) vanishes at the weighted midpoint.
        return np.array([wts[0] * pos[1] + wts[1] * pos[0]])
    left, right = pos[:-1], pos[1:]
    gap = right - left

    # G decreases from +inf to -inf across each gap; creep the bracket ends
    # off the atoms until the adjacent atom's term dominates the sign.
    delta = gap * 1e-6
    for _ in range(80):
        bad = _g_value(left + delta, pos, wts) <= 0.0
        if not bad.any():
            break
        delta = np.where(bad, delta * 0.25, delta)
    else:
        raise RootFindError("could not bracket a zero of G from the left")
    lo = left + delta
    delta = gap * 1e-6
    for _ in range(80):
        bad = _g_value(right - delta, pos, wts) >= 0.0
        if not bad.any():
            break
        delta = np.where(bad, delta * 0.25, delta)
    else:
        raise RootFindError("could not bracket a zero of G from the right")
    hi = right - delta

    # -G is increasing on each gap, matching the _bisect_newton contract.
    roots = _bisect_newton(lambda z: -_g_value(z, pos, wts),
                           lambda z: -_g_derivative(z, pos, wts),
                           lo, hi, "pole extraction")
    return roots


# ---------------------------------------------------------------------------
# public surface


def _check_real_point(mu: AtomicMeasure, x: float, check_poles: bool) -> None:
    if np.min(np.abs(mu.positions - x)) < REAL_AXIS_GUARD:
        raise PoleError(f"z={x} is within {REAL_AXIS_GUARD} of an atom")
    if check_poles and mu.size > 1:
        poles = _f_pole_positions(mu.positions, mu.weights)
        if np.min(np.abs(poles - x)) < REAL_AXIS_GUARD:
            raise PoleError(f"z={x} is within {REAL_AXIS_GUARD} of a pole of F")


def cauchy_transform(mu: AtomicMeasure, z):
    """G(z) = sum_i w_i/(z - t_i) for Im z > 0 or real z off the support."""
    zc = complex(z)
    if zc.imag < 0.0:
        raise ValueError("cauchy_transform is defined for Im z >= 0")
    if zc.imag == 0.0:
        _check_real_point(mu, zc.real, check_poles=False)
        return float(_g_value(zc.real, mu.positions, mu.weights))
    return complex(_g_value(zc, mu.positions, mu.weights))


def f_transform(mu: AtomicMeasure, z):
    """F(z) = 1/G(z); on the real axis z must stay clear of atoms and of
    the poles of F."""
    zc = complex(z)
    if zc.imag < 0.0:
        raise ValueError("f_transform is defined for Im z >= 0")
    if zc.imag == 0.0:
        _check_real_point(mu, zc.real, check_poles=True)
        return float(_f_value(zc.real, mu.positions, mu.weights))
    return complex(_f_value(zc, mu.positions, mu.weights))


def f_derivative(mu: AtomicMeasure, z):
    """F'(z) = -G'(z)/G(z)^2, computed analytically; >= 1 on the real axis."""
    zc = complex(z)
    if zc.imag < 0.0:
        raise ValueError("f_derivative is defined for Im z >= 0")
    if zc.imag == 0.0:
        _check_real_point(mu, zc.real, check_poles=True)
        return float(_f_derivative_value(zc.real, mu.positions, mu.weights))
    return complex(_f_derivative_value(zc, mu.positions, mu.weights))


@dataclass(frozen=True)
class NevanlinnaForm:
    """Pole representation F(z) = z - mean_shift + sum_j masses_j/(poles_j - z).

    Poles strictly interlace the atoms of the source measure and the total
    pole mass equals its variance.
    """

    mean_shift: float
    pole_positions: np.ndarray
    pole_masses: np.ndarray
    total_mass: float

    def evaluate(self, z):
        acc = z - self.mean_shift
        for p, c in zip(self.pole_positions, self.pole_masses):
            acc = acc + c / (p - z)
        return acc


def nevanlinna_form(mu: AtomicMeasure) -> NevanlinnaForm:
    """Extract the pole representation of F for an atomic measure."""
    m = mean(mu)
    var = variance(mu)
    if mu.size == 1:
        return NevanlinnaForm(m, np.empty(0), np.empty(0), 0.0)
    poles = _f_pole_positions(mu.positions, mu.weights)
    masses = -1.0 / _g_derivative(poles, mu.positions, mu.weights)
    total = math.fsum(masses.tolist())

    t = mu.positions
    if not (np.all(t[:-1] < poles) and np.all(poles < t[1:])):
        raise RootFindError("extracted poles do not interlace the atoms")
    if np.any(masses <= 0.0):
        raise RootFindError("extracted pole masses are not all positive")
    if abs(total - var) > 1e-8 * max(var, 1e-12):
        raise RootFindError(
            f"pole mass {total!r} disagrees with variance {var!r} beyond 1e-8")
    poles.setflags(write=False)
    masses.setflags(write=False)
    return NevanlinnaForm(m, poles, masses, total)


def compose_f_chain(measures, z) -> complex:
    """Evaluate F_1(F_2(...F_n(z)...)) for Im z > 0.

    Every intermediate must stay in the closed upper half-plane; leaving it
    by more than 1e-12 raises, since that cannot happen in exact arithmetic.
    """
    measures = list(measures)
    if not measures:
        raise ValueError("compose_f_chain needs at least one measure")
    w = complex(z)
    if not w.imag > 0.0:
        raise ValueError("compose_f_chain requires Im z > 0")
    for mu in reversed(measures):
        w = complex(_f_value(w, mu.positions, mu.weights))
        if w.imag < -HALF_PLANE_TOL:
            raise HalfPlaneError(
                f"F-composition produced Im w = {w.imag!r} below the real axis")
    return w
