"""Exact monotone convolution of atomic measures.

The one-point kernel law for a point at x against a d-atom measure nu is
again a d-atom measure: its atoms are the d real solutions of F_nu(z) = x
(one per branch of F_nu, which increases from -inf to +inf between
consecutive poles) and its weights are 1/F_nu'(z_i).  General convolutions
are weight-mixtures of kernel laws, and sequence convolutions fold that
mixture step by step.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .measures import (
    AtomicMeasure,
    DEFAULT_MERGE_TOL,
    DEFAULT_PRUNE_TOL,
    mean,
    merge_atoms,
)
from .transforms import (
    RootFindError,
    _bisect_newton,
    _f_pole_positions,
    _f_value,
    _f_derivative_value,
    _g_value,
)

WEIGHT_CLOSURE_TOL = 1e-10
POLE_OFFSET = 1e-13
IDENTITY_CHECK_TOL = 1e-8
_IDENTITY_CHECK_SEED = 29


class AtomBudgetError(RuntimeError):
    """A convolution would exceed the configured atom budget."""


class ConsistencyError(RuntimeError):
    """An always-on numerical cross-check failed."""


@dataclass(frozen=True)
class ConvolutionOptions:
    merge_tol: float = DEFAULT_MERGE_TOL
    prune_tol: float = DEFAULT_PRUNE_TOL
    max_atoms: int = 2_000_000
    identity_check_points: int = 0

    def __post_init__(self):
        if self.merge_tol < 0.0 or self.prune_tol < 0.0:
            raise ValueError("tolerances must be nonnegative")
        if self.max_atoms < 1:
            raise ValueError("max_atoms must be at least 1")
        if self.identity_check_points < 0:
            raise ValueError("identity_check_points must be nonnegative")


DEFAULT_OPTIONS = ConvolutionOptions()


# ---------------------------------------------------------------------------
# kernel root system, vectorized over a vector of shift points x


def _two_atom_kernel(xs: np.ndarray, pos, wts):
    """Closed-form branch roots and weights for a 2-atom measure.

    F(z) = x reduces to z^2 - (t0+t1+x) z + (t0 t1 + x (w0 t1 + w1 t0)) = 0,
    solved in the cancellation-safe form; weights use F' = 1 + c/(z-p)^2
    with the single pole p and pole mass c known in closed form.
    """
    t0, t1 = pos
    w0, w1 = wts
    p = w0 * t1 + w1 * t0
    c = w0 * w1 * (t1 - t0) ** 2

    b = t0 + t1 + xs
    cc = t0 * t1 + xs * p
    disc = b * b - 4.0 * cc
    s = np.sqrt(np.maximum(disc, 0.0))
    q = 0.5 * (b + np.copysign(s, b))
    with np.errstate(divide="ignore", invalid="ignore"):
        r_alt = np.where(q != 0.0, cc / q, 0.0)
    roots = np.stack([np.minimum(q, r_alt), np.maximum(q, r_alt)])

    dp = roots - p
    weights = 1.0 / (1.0 + c / (dp * dp))
    return roots, weights


def _expand_bracket(start, step_sign, func, target, what):
    """Double an offset from `start` until func crosses `target` (outer
    branches of F are unbounded, so the bracket end must be searched)."""
    h = np.ones_like(start)
    for _ in range(200):
        end = start + step_sign * h
        if step_sign > 0:
            short = func(end) < target
        else:
            short = func(end) > target
        if not short.any():
            return end
        h = np.where(short, 2.0 * h, h)
    raise RootFindError(f"could not expand a bracket for {what}")


def _creep_to_pole(pole, side, func, target, what):
    """Move from `pole` toward the branch interior until func clears
    `target`; the first offset already sits POLE_OFFSET-scaled off the
    pole, where F is astronomically large."""
    delta = POLE_OFFSET * (1.0 + np.abs(pole))
    for _ in range(60):
        end = pole + side * delta
        if side < 0:
            short = func(end) < target
        else:
            short = func(end) > target
        if not short.any():
            return end
        delta = np.where(short, delta * 0.25, delta)
    raise RootFindError(f"root pinned against a pole of F for {what}",
                        (float(np.min(pole)), float(np.max(pole))))


def _kernel_system(xs: np.ndarray, nu: AtomicMeasure):
    """Roots (d, P) and normalized weights (d, P) of the kernel law at each
    shift in xs.  Roots are ascending along axis 0; the weight closure
    sum_i 1/F'(z_i) = 1 is asserted to 1e-10 before normalizing."""
    xs = np.asarray(xs, dtype=float)
    pos, wts = nu.positions, nu.weights
    d = nu.size

    if d == 1:
        roots = (pos[0] + xs)[None, :]
        weights = np.ones_like(roots)
        return roots, weights

    if d == 2:
        roots, weights = _two_atom_kernel(xs, pos, wts)
    else:
        poles = _f_pole_positions(pos, wts)

        def f_shift(z):
            return _f_value(z, pos, wts) - xs

        def f_prime(z):
            return _f_derivative_value(z, pos, wts)

        lo = np.tile(pos[:, None], (1, xs.size)).astype(float)
        hi = lo.copy()
        positive = xs > 0.0
        negative = xs < 0.0
        n_pos, n_neg = int(positive.sum()), int(negative.sum())

        def shifted_by_positive(z):
            return _f_value(z, pos, wts) - xs[positive]

        def shifted_by_negative(z):
            return _f_value(z, pos, wts) - xs[negative]

        # each branch holds its atom, where F vanishes: for x > 0 the root
        # sits between the atom and the right branch end, for x < 0 between
        # the left end and the atom; only the far end needs searching
        for i in range(d):
            if n_pos:
                if i < d - 1:
                    hi[i, positive] = _creep_to_pole(
                        np.full(n_pos, poles[i]), -1.0, shifted_by_positive,
                        0.0, f"branch {i}")
                else:
                    hi[i, positive] = _expand_bracket(
                        np.full(n_pos, pos[-1]), +1.0, shifted_by_positive,
                        0.0, f"branch {i}")
            if n_neg:
                if i > 0:
                    lo[i, negative] = _creep_to_pole(
                        np.full(n_neg, poles[i - 1]), +1.0, shifted_by_negative,
                        0.0, f"branch {i}")
                else:
                    lo[i, negative] = _expand_bracket(
                        np.full(n_neg, pos[0]), -1.0, shifted_by_negative,
                        0.0, f"branch {i}")
        roots = _bisect_newton(f_shift, f_prime, lo, hi, "kernel roots")

        # weights 1/F' = G^2 / sum_j w_j/(z-t_j)^2, patched where a root
        # lands exactly on an atom (the x = 0 branch solution)
        g = np.zeros_like(roots)
        s2 = np.zeros_like(roots)
        hit = np.full_like(roots, np.nan)
        with np.errstate(divide="ignore", invalid="ignore"):
            for t_j, w_j in zip(pos, wts):
                dz = roots - t_j
                g += w_j / dz
                s2 += w_j / (dz * dz)
                exact = dz == 0.0
                if exact.any():
                    hit[exact] = w_j
            weights = np.where(np.isnan(hit), (g * g) / s2, hit)

    sums = weights.sum(axis=0)
    worst = float(np.max(np.abs(sums - 1.0)))
    if worst > WEIGHT_CLOSURE_TOL:
        raise ConsistencyError(
            f"kernel weight closure violated: |sum - 1| = {worst:.3e}")
    weights = weights / sums

    zero = xs == 0.0
    if zero.any():
        # F(z) = 0 is solved exactly by the atoms of nu with their own
        # weights; preserve that identity bit-for-bit.
        roots[:, zero] = pos[:, None]
        weights[:, zero] = wts[:, None]
    return roots, weights


# ---------------------------------------------------------------------------
# public operations


def delta_convolve(x: float, nu: AtomicMeasure,
                   opts: ConvolutionOptions = DEFAULT_OPTIONS) -> AtomicMeasure:
    """Kernel law of a point mass at x convolved onto nu (exact)."""
    if nu.size > opts.max_atoms:
        raise AtomBudgetError(
            f"kernel law would have {nu.size} atoms, budget is {opts.max_atoms}")
    roots, weights = _kernel_system(np.array([float(x)]), nu)
    out = AtomicMeasure(roots[:, 0], weights[:, 0])
    return merge_atoms(out, opts.merge_tol, opts.prune_tol)


def convolve(mu: AtomicMeasure, nu: AtomicMeasure,
             opts: ConvolutionOptions = DEFAULT_OPTIONS) -> AtomicMeasure:
    """Monotone convolution: the mu-weighted mixture of kernel laws on nu."""
    if mu.size * nu.size > opts.max_atoms:
        raise AtomBudgetError(
            f"convolution would project {mu.size * nu.size} atoms, "
            f"budget is {opts.max_atoms}")
    roots, kernel_w = _kernel_system(mu.positions, nu)
    weights = mu.weights[None, :] * kernel_w
    out = AtomicMeasure(roots.T.ravel(), weights.T.ravel())
    out = merge_atoms(out, opts.merge_tol, opts.prune_tol)

    m_expect = mean(mu) + mean(nu)
    m_got = mean(out)
    if abs(m_got - m_expect) > 1e-9 * max(1.0, abs(m_expect)):
        raise ConsistencyError(
            f"convolution mean {m_got!r} drifted from {m_expect!r}")
    if opts.identity_check_points > 0:
        _identity_check(mu, nu, out, opts.identity_check_points)
    return out


def _identity_check(mu, nu, out, k: int) -> None:
    """Spot-check G_out(z) = G_mu(F_nu(z)) at k points with Im z = 1."""
    rng = np.random.default_rng(_IDENTITY_CHECK_SEED)
    z = rng.uniform(-3.0, 3.0, k) + 1.0j
    lhs = _g_value(z, out.positions, out.weights)
    rhs = _g_value(_f_value(z, nu.positions, nu.weights),
                   mu.positions, mu.weights)
    worst = float(np.max(np.abs(lhs - rhs)))
    if worst > IDENTITY_CHECK_TOL:
        raise ConsistencyError(
            f"composition identity violated: |G_out - G_mu(F_nu)| = {worst:.3e}")


def convolve_sequence(measures, opts: ConvolutionOptions = DEFAULT_OPTIONS) -> AtomicMeasure:
    """Fold a list of measures into their ordered monotone convolution.

    The fold is left-associated (the running result is the mixture side),
    which keeps every step a cheap batch of small kernel solves; the
    operation is associative, so the bracketing does not change the result.
    """
    measures = list(measures)
    if not measures:
        raise ValueError("convolve_sequence needs at least one measure")
    rho = measures[0]
    total_mean = mean(rho)
    for k, mu_k in enumerate(measures[1:], start=2):
        if rho.size * mu_k.size > opts.max_atoms:
            raise AtomBudgetError(
                f"atom budget {opts.max_atoms} exceeded at step {k}: "
                f"{rho.size} x {mu_k.size} atoms projected")
        rho = convolve(rho, mu_k, opts)
        total_mean += mean(mu_k)
    if abs(mean(rho) - total_mean) > 1e-8 * max(1.0, abs(total_mean)):
        raise ConsistencyError(
            f"sequence mean {mean(rho)!r} drifted from {total_mean!r}")
    return rho
