"""Fast randomized invariant suite behind the `selftest` CLI command.

Each check runs a seeded batch of random measures through one core
invariant; the whole suite stays well under a minute.  The ``fault``
argument exists so harness tests can verify that a broken invariant is
actually reported; it is never exposed on the command line.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .measures import mean, random_atomic, variance
from .monotone import _kernel_system, convolve
from .transforms import _f_pole_positions, _f_value, _g_value, nevanlinna_form

_SELFTEST_SEED = 20130328


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float


def _check_weight_closure(rng, tol):
    worst = 0.0
    for _ in range(200):
        nu = random_atomic(rng, max_atoms=12)
        x = rng.uniform(-4.0, 4.0)
        _, weights = _kernel_system(np.array([x]), nu)
        worst = max(worst, abs(float(weights.sum()) - 1.0))
    return worst <= tol, f"max |sum w - 1| = {worst:.3e}"


def _check_interlacing(rng, tol):
    for _ in range(200):
        nu = random_atomic(rng, max_atoms=12)
        if nu.size == 1:
            continue
        poles = _f_pole_positions(nu.positions, nu.weights)
        t = nu.positions
        if not (np.all(t[:-1] < poles) and np.all(poles < t[1:])):
            return False, "pole escaped its atom gap"
        x = rng.uniform(-4.0, 4.0)
        roots, _ = _kernel_system(np.array([x]), nu)
        r = roots[:, 0]
        if not (np.all(r[:-1] < poles + tol) and np.all(poles - tol < r[1:])):
            return False, "kernel root escaped its branch"
    return True, "poles and kernel roots interlace"


def _check_mean_shift(rng, tol):
    worst = 0.0
    for _ in range(200):
        nu = random_atomic(rng, max_atoms=12)
        x = rng.uniform(-4.0, 4.0)
        roots, weights = _kernel_system(np.array([x]), nu)
        m = float(np.dot(weights[:, 0], roots[:, 0]))
        v = float(np.dot(weights[:, 0], (roots[:, 0] - m) ** 2))
        worst = max(worst, abs(m - mean(nu) - x), abs(v - variance(nu)))
    return worst <= tol, f"max moment drift = {worst:.3e}"


def _check_nevanlinna_mass(rng, tol):
    worst = 0.0
    for _ in range(200):
        mu = random_atomic(rng, max_atoms=12)
        form = nevanlinna_form(mu)
        var = variance(mu)
        worst = max(worst, abs(form.total_mass - var) / max(var, 1e-12))
    return worst <= tol, f"max relative mass error = {worst:.3e}"


def _check_composition_identity(rng, tol):
    worst = 0.0
    for _ in range(100):
        mu = random_atomic(rng, max_atoms=6)
        nu = random_atomic(rng, max_atoms=6)
        out = convolve(mu, nu)
        z = rng.uniform(-3.0, 3.0) + 1.0j
        lhs = _g_value(z, out.positions, out.weights)
        rhs = _g_value(_f_value(z, nu.positions, nu.weights), mu.positions, mu.weights)
        worst = max(worst, abs(lhs - rhs))
    return worst <= tol, f"max |G_out - G_mu(F_nu)| = {worst:.3e}"


_CHECKS = (
    ("weight-closure", _check_weight_closure, 1e-10),
    ("interlacing", _check_interlacing, 1e-12),
    ("mean-shift", _check_mean_shift, 1e-9),
    ("nevanlinna-mass", _check_nevanlinna_mass, 1e-8),
    ("composition-identity", _check_composition_identity, 1e-8),
)


def run_selftest(fault: str | None = None) -> list[CheckResult]:
    """Run every invariant check; `fault` inverts the named check's outcome
    (test harness hook only, for verifying that failures are reported)."""
    results = []
    for name, func, tol in _CHECKS:
        rng = np.random.default_rng(_SELFTEST_SEED)
        start = time.perf_counter()
        passed, detail = func(rng, tol)
        if fault == name:
            passed = not passed
            detail += " [fault injected]"
        results.append(CheckResult(name, passed, detail, time.perf_counter() - start))
    return results
