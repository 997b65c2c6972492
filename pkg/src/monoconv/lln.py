"""Stability experiments for normalized sequence convolutions.

Given a measure sequence and normalizers, the harness computes the centers
a_n (mean sums over b_n), the partial sums of var(mu_k)/b_k^2 that decide
convergence, and the outside mass P(|t - a_n| >= eps) of the rescaled
sequence convolution - exactly where the atom budget allows, by Monte Carlo
otherwise - next to a classical-convolution baseline.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .chain import RngPolicy, simulate
from .measures import AtomicMeasure, ConfigError, classical_convolve, dilate
from .monotone import AtomBudgetError, ConvolutionOptions, DEFAULT_OPTIONS, convolve_sequence
from .sequences import (
    GeometricNormalizers,
    IidMeasures,
    PowerNormalizers,
    ScaledMeasures,
    SequenceSpec,
    running_sums,
)

DEFAULT_EPS_GRID = (0.05, 0.1, 0.25, 0.5)
DEFAULT_MC_CHECKPOINTS = (10, 100, 1000)
DEFAULT_EXACT_CHECKPOINTS = (4, 8, 12)
HEURISTIC_TAIL_TOL = 1e-3
MC_AGREEMENT_SIGMAS = 4.0
CHEBYSHEV_SLACK = 1.05
CHEBYSHEV_EXACT_TOL = 1e-12


def centers(spec: SequenceSpec, n: int) -> float:
    """a_n: the exact sum of the first n step means divided by b_n."""
    if not 1 <= n <= spec.horizon:
        raise ConfigError(f"n must lie in 1..{spec.horizon}, got {n}")
    return math.fsum(spec.mean(k) for k in range(1, n + 1)) / spec.b(n)


def condition_partial_sums(spec: SequenceSpec, n_max: int) -> np.ndarray:
    """Partial sums of var(mu_k)/b_k^2 for n = 1..n_max (compensated)."""
    if n_max < 1:
        raise ConfigError(f"n_max must be >= 1, got {n_max}")
    b = np.array([spec.b(k) for k in range(1, n_max + 1)])
    var = np.array([spec.variance(k) for k in range(1, n_max + 1)])
    return running_sums(var / (b * b))


@dataclass(frozen=True)
class ConditionReport:
    """Convergence assessment of the variance/normalizer series.

    ``analytic`` is the closed-form answer for the built-in families (None
    when no closed form applies); ``heuristic`` flags a last-decade
    increment below 1e-3 and is advisory only.
    """

    n_max: int
    partial_sums: np.ndarray
    analytic: bool | None
    heuristic: bool | None

    @property
    def convergent(self) -> bool | None:
        return self.analytic if self.analytic is not None else self.heuristic


def _condition_analytic(spec: SequenceSpec) -> bool | None:
    measures = spec.measures
    normalizers = spec.normalizers
    if isinstance(measures, (IidMeasures, ScaledMeasures)):
        alpha = measures.alpha if isinstance(measures, ScaledMeasures) else 0.0
        if isinstance(measures, IidMeasures) and measures.variance(1) == 0.0:
            return True
        if isinstance(measures, ScaledMeasures) and measures.variance(1) == 0.0:
            return True
        if isinstance(normalizers, PowerNormalizers):
            # sum n^alpha / n^(2p) converges iff alpha - 2p < -1
            return alpha - 2.0 * normalizers.exponent < -1.0
        if isinstance(normalizers, GeometricNormalizers):
            return True
    return None


def condition_report(spec: SequenceSpec, n_max: int) -> ConditionReport:
    sums = condition_partial_sums(spec, n_max)
    heuristic = None
    if n_max >= 10:
        heuristic = bool(sums[-1] - sums[n_max // 10 - 1] < HEURISTIC_TAIL_TOL)
    return ConditionReport(n_max, sums, _condition_analytic(spec), heuristic)


# ---------------------------------------------------------------------------
# outside-mass statistics


def _outside_mass(mu: AtomicMeasure, center: float, eps: float) -> float:
    tail = np.abs(mu.positions - center) >= eps
    return math.fsum(mu.weights[tail].tolist())


def stability_exact(spec: SequenceSpec, n: int, eps_list,
                    opts: ConvolutionOptions = DEFAULT_OPTIONS) -> list[float]:
    """Exact outside masses of the rescaled n-fold convolution.

    Raises AtomBudgetError when the exact route is infeasible; callers
    should fall back to Monte Carlo."""
    mus = [spec.measure(k) for k in range(1, n + 1)]
    rho = convolve_sequence(mus, opts)
    scaled = dilate(rho, 1.0 / spec.b(n))
    a_n = centers(spec, n)
    return [_outside_mass(scaled, a_n, eps) for eps in eps_list]


def classical_baseline(spec: SequenceSpec, n: int, eps_list,
                       opts: ConvolutionOptions = DEFAULT_OPTIONS) -> list[float]:
    """Same statistic for the classical (independent sum) convolution."""
    rho = spec.measure(1)
    for k in range(2, n + 1):
        mu_k = spec.measure(k)
        if rho.size * mu_k.size > opts.max_atoms:
            raise AtomBudgetError(
                f"classical atom budget {opts.max_atoms} exceeded at step {k}")
        rho = classical_convolve(rho, mu_k, opts.merge_tol)
    scaled = dilate(rho, 1.0 / spec.b(n))
    a_n = centers(spec, n)
    return [_outside_mass(scaled, a_n, eps) for eps in eps_list]


@dataclass(frozen=True)
class McMassRow:
    n: int
    eps: float
    fraction: float
    se: float


@dataclass(frozen=True)
class DecayAssessment:
    eps: float
    first: float
    last: float
    combined_se: float
    nonincreasing: bool
    separated: bool

    @property
    def decreasing(self) -> bool:
        return self.nonincreasing and self.separated


def stability_mc(spec: SequenceSpec, checkpoints, eps_list, n_paths: int,
                 rng: RngPolicy | int) -> tuple[list[McMassRow], list[DecayAssessment]]:
    """Monte Carlo outside masses at each checkpoint from one batch.

    The decay assessments are advisory: non-increasing fractions across
    checkpoints plus a two-combined-SE separation between first and last.
    """
    checkpoints = sorted(set(int(n) for n in checkpoints))
    if n_paths < 10_000:
        raise ConfigError(f"stability_mc needs at least 10000 paths, got {n_paths}")
    batch = simulate(spec, checkpoints[-1], n_paths, rng, keep_steps=checkpoints)
    rows: list[McMassRow] = []
    by_eps: dict[float, list[McMassRow]] = {eps: [] for eps in eps_list}
    for n in checkpoints:
        values = batch.column(n) / spec.b(n) - centers(spec, n)
        for eps in eps_list:
            frac = float(np.mean(np.abs(values) >= eps))
            se = math.sqrt(frac * (1.0 - frac) / n_paths)
            row = McMassRow(n=n, eps=eps, fraction=frac, se=se)
            rows.append(row)
            by_eps[eps].append(row)
    assessments = []
    for eps in eps_list:
        seq = by_eps[eps]
        first, last = seq[0], seq[-1]
        combined = math.sqrt(first.se ** 2 + last.se ** 2)
        nonincreasing = all(b.fraction <= a.fraction for a, b in zip(seq, seq[1:]))
        assessments.append(DecayAssessment(
            eps=eps, first=first.fraction, last=last.fraction,
            combined_se=combined, nonincreasing=nonincreasing,
            separated=first.fraction - last.fraction >= 2.0 * combined))
    return rows, assessments


# ---------------------------------------------------------------------------
# report assembly


@dataclass(frozen=True)
class StabilityRow:
    n: int
    b_n: float
    a_n: float
    eps: float
    outside_mass: float
    method: str                      # "exact" | "mc"
    std_err: float | None
    cheb_bound: float
    cond_partial_sum: float
    classical_outside_mass: float | None


@dataclass(frozen=True)
class GateResult:
    name: str
    passed: bool
    detail: str


@dataclass(frozen=True)
class StabilityReport:
    config_echo: tuple[tuple[str, str], ...]
    rows: tuple[StabilityRow, ...]
    condition: ConditionReport
    verdicts: tuple[tuple[float, str], ...]   # (eps, "decreasing"|"not-decreasing"|"not-assessed")
    gates: tuple[GateResult, ...]

    @property
    def ok(self) -> bool:
        return all(g.passed for g in self.gates)


def build_stability_report(spec: SequenceSpec, *,
                           mc_checkpoints=DEFAULT_MC_CHECKPOINTS,
                           exact_checkpoints=DEFAULT_EXACT_CHECKPOINTS,
                           eps_list=DEFAULT_EPS_GRID,
                           n_paths: int = 100_000,
                           rng: RngPolicy | int = 0,
                           include_classical: bool = True,
                           opts: ConvolutionOptions = DEFAULT_OPTIONS,
                           extra_echo=()) -> StabilityReport:
    """Run the full experiment and collect every per-(n, eps) statistic.

    Gates (exit-code material for the CLI): per-eps Monte Carlo decay when
    the condition series converges, exact/MC agreement at shared
    checkpoints, and Chebyshev domination of every mass estimate.
    """
    if isinstance(rng, int):
        rng = RngPolicy(rng)
    mc_checkpoints = tuple(sorted(set(int(n) for n in mc_checkpoints)))
    exact_checkpoints = tuple(sorted(set(int(n) for n in exact_checkpoints)))
    eps_list = tuple(float(e) for e in eps_list)
    if not mc_checkpoints:
        raise ConfigError("at least one Monte Carlo checkpoint is required")
    top = max(mc_checkpoints + exact_checkpoints)
    if top > spec.horizon:
        raise ConfigError(f"checkpoint {top} exceeds horizon {spec.horizon}")

    cond = condition_report(spec, top)
    var_sums = cond.partial_sums
    plain_var_sums = running_sums(spec.variance_array(top))
    b_of = {n: spec.b(n) for n in set(mc_checkpoints) | set(exact_checkpoints)}
    a_of = {n: centers(spec, n) for n in b_of}

    def cheb(n: int, eps: float) -> float:
        """P(|X_n/b_n - a_n| >= eps) <= sum var(mu_k) / (b_n eps)^2."""
        if eps == 0.0:
            return math.inf
        return float(plain_var_sums[n - 1]) / (b_of[n] ** 2 * eps ** 2)

    rows: list[StabilityRow] = []
    exact_masses: dict[tuple[int, float], float] = {}
    for n in exact_checkpoints:
        masses = stability_exact(spec, n, eps_list, opts)
        classical = None
        if include_classical:
            classical = classical_baseline(spec, n, eps_list, opts)
        for j, eps in enumerate(eps_list):
            exact_masses[(n, eps)] = masses[j]
            rows.append(StabilityRow(
                n=n, b_n=b_of[n], a_n=a_of[n], eps=eps,
                outside_mass=masses[j], method="exact", std_err=None,
                cheb_bound=cheb(n, eps),
                cond_partial_sum=float(var_sums[n - 1]),
                classical_outside_mass=None if classical is None else classical[j]))

    mc_rows, assessments = stability_mc(spec, mc_checkpoints, eps_list, n_paths, rng)
    mc_lookup: dict[tuple[int, float], McMassRow] = {}
    for row in mc_rows:
        mc_lookup[(row.n, row.eps)] = row
        rows.append(StabilityRow(
            n=row.n, b_n=b_of[row.n], a_n=a_of[row.n], eps=row.eps,
            outside_mass=row.fraction, method="mc", std_err=row.se,
            cheb_bound=cheb(row.n, row.eps),
            cond_partial_sum=float(var_sums[row.n - 1]),
            classical_outside_mass=None))

    gates: list[GateResult] = []
    verdicts: list[tuple[float, str]] = []
    for assessment in assessments:
        if cond.convergent:
            verdict = "decreasing" if assessment.decreasing else "not-decreasing"
            gates.append(GateResult(
                name=f"mc-decay eps={assessment.eps:g}",
                passed=assessment.decreasing,
                detail=(f"first {assessment.first:.6g} -> last {assessment.last:.6g}, "
                        f"2*combined SE {2 * assessment.combined_se:.3g}")))
        else:
            verdict = "not-assessed"
        verdicts.append((assessment.eps, verdict))

    for (n, eps), mass in exact_masses.items():
        if (n, eps) in mc_lookup:
            mc = mc_lookup[(n, eps)]
            tol = max(MC_AGREEMENT_SIGMAS * mc.se, 1e-12)
            gates.append(GateResult(
                name=f"exact-vs-mc n={n} eps={eps:g}",
                passed=abs(mass - mc.fraction) <= tol,
                detail=f"exact {mass:.6g}, mc {mc.fraction:.6g} +- {mc.se:.3g}"))

    violations = []
    for row in rows:
        bound = row.cheb_bound
        if row.method == "exact":
            ok = row.outside_mass <= bound + CHEBYSHEV_EXACT_TOL
        else:
            ok = row.outside_mass <= CHEBYSHEV_SLACK * bound
        if not ok:
            violations.append(f"n={row.n} eps={row.eps:g} ({row.method}) "
                              f"mass {row.outside_mass:.6g} vs bound {bound:.6g}")
    gates.append(GateResult(
        name="chebyshev-domination",
        passed=not violations,
        detail="; ".join(violations) if violations else "all rows within bounds"))

    echo = list(extra_echo)
    for key, value in spec.describe().items():
        echo.append((f"sequence.{key}", value))
    echo.append(("mc_checkpoints", ",".join(str(n) for n in mc_checkpoints)))
    echo.append(("exact_checkpoints", ",".join(str(n) for n in exact_checkpoints)))
    echo.append(("eps", ",".join(f"{e:.17g}" for e in eps_list)))
    echo.append(("paths", str(n_paths)))
    echo.append(("seed", str(rng.master_seed)))
    echo.append(("condition_analytic", str(cond.analytic)))
    echo.append(("condition_heuristic", str(cond.heuristic)))

    rows.sort(key=lambda r: (r.n, r.eps, r.method))
    return StabilityReport(
        config_echo=tuple(echo), rows=tuple(rows), condition=cond,
        verdicts=tuple(verdicts), gates=tuple(gates))


CSV_COLUMNS = ("n", "b_n", "a_n", "eps", "outside_mass", "method", "std_err",
               "cheb_bound", "cond_partial_sum", "classical_outside_mass")


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, str):
        return value
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return f"{float(value):.17g}"


def emit_report(report: StabilityReport, path) -> None:
    """Write the per-(n, eps) table as CSV with the config echoed in
    leading comment lines; reruns with equal inputs are byte-identical."""
    try:
        with open(path, "w", newline="") as fh:
            for key, value in report.config_echo:
                fh.write(f"# {key} = {value}\n")
            writer = csv.writer(fh)
            writer.writerow(CSV_COLUMNS)
            for row in report.rows:
                writer.writerow([
                    _fmt(row.n), _fmt(row.b_n), _fmt(row.a_n), _fmt(row.eps),
                    _fmt(row.outside_mass), row.method, _fmt(row.std_err),
                    _fmt(row.cheb_bound), _fmt(row.cond_partial_sum),
                    _fmt(row.classical_outside_mass)])
    except OSError as exc:
        raise OSError(f"could not write report to {path}: {exc}") from exc
