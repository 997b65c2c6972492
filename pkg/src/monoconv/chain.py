"""Simulation of the Markov chain driven by one-point kernel laws.

Step n moves the chain from x by drawing from the kernel law of x against
mu_n, so the n-th marginal is exactly the ordered monotone convolution of
mu_1 .. mu_n.  The derived per-path series (mean-centered values, their
increments, and normalizer-weighted increment sums) back the second-moment
diagnostics used by the stability experiments.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .measures import AtomicMeasure, ConfigError, mean, sample, second_moment
from .monotone import DEFAULT_OPTIONS, ConvolutionOptions, _kernel_system, delta_convolve
from .sequences import SequenceSpec, running_sums

MIN_CHECK_PATHS = 10_000
MAX_STORED_VALUES = 200_000_000
GATE_SIGMAS = 4.0


@dataclass(frozen=True)
class RngPolicy:
    """Counter-based random stream policy.

    A batch keyed by ``master_seed`` consumes one uniform per (step, path)
    from a Philox sequence in step-major order: the variate for path p at
    step k sits at counter position (k-1)*n_paths + p.  Path columns are
    therefore statistically independent, reproducible, and independent of
    evaluation order; the same master seed always yields an identical batch.
    """

    master_seed: int

    def __post_init__(self):
        if self.master_seed < 0:
            raise ConfigError("master_seed must be nonnegative")

    def generator(self) -> np.random.Generator:
        return np.random.Generator(np.random.Philox(key=self.master_seed))


def kernel_distribution(x: float, mu_n: AtomicMeasure,
                        opts: ConvolutionOptions = DEFAULT_OPTIONS) -> AtomicMeasure:
    """Exact one-step conditional law of the chain at x."""
    return delta_convolve(x, mu_n, opts)


def step_sample(x: float, mu_n: AtomicMeasure, rng: np.random.Generator) -> float:
    """One transition; consumes exactly one uniform variate (inverse CDF
    over the sorted kernel atoms)."""
    return sample(kernel_distribution(x, mu_n), rng)


@dataclass(frozen=True, eq=False)
class TrajectoryBatch:
    """Ensemble of chain paths, one row per path, one column per kept step.

    ``x[:, j]`` holds the chain values at step ``kept_steps[j]``.  The
    derived series are available only for full batches (every step kept):
    ``centered`` subtracts the running mean sums, ``increments`` are the
    stepwise differences of ``centered``, and ``normalized_sums`` cumulate
    increments divided by the normalizers (None without a schedule).  All
    three recompute deterministically from ``x`` and the stored per-step
    means/normalizers.
    """

    spec: SequenceSpec
    seed: int
    n_steps: int
    n_paths: int
    kept_steps: tuple[int, ...]
    x: np.ndarray
    step_means: np.ndarray
    step_normalizers: np.ndarray | None

    @property
    def is_full(self) -> bool:
        return self.kept_steps == tuple(range(1, self.n_steps + 1))

    def _require_full(self, what: str):
        if not self.is_full:
            raise ValueError(f"{what} needs a full batch; this one kept only "
                             f"steps {self.kept_steps}")

    def column(self, step: int) -> np.ndarray:
        """Chain values at one kept step."""
        try:
            j = self.kept_steps.index(step)
        except ValueError:
            raise KeyError(f"step {step} was not kept") from None
        return self.x[:, j]

    @cached_property
    def centered(self) -> np.ndarray:
        self._require_full("centered series")
        return self.x - np.cumsum(self.step_means)[None, :]

    @cached_property
    def increments(self) -> np.ndarray:
        self._require_full("increment series")
        z = np.empty_like(self.centered)
        z[:, 0] = self.centered[:, 0]
        z[:, 1:] = np.diff(self.centered, axis=1)
        return z

    @cached_property
    def normalized_sums(self) -> np.ndarray | None:
        self._require_full("normalized sums")
        if self.step_normalizers is None:
            return None
        return np.cumsum(self.increments / self.step_normalizers[None, :], axis=1)


def _pick(roots: np.ndarray, weights: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Column-wise inverse-CDF selection, matching scalar searchsorted."""
    cum = np.cumsum(weights, axis=0)
    cum[-1, :] = 1.0
    idx = (cum <= u[None, :]).sum(axis=0)
    return roots[idx, np.arange(roots.shape[1])]


def simulate(spec: SequenceSpec, n_steps: int, n_paths: int,
             rng: RngPolicy | int, keep_steps=None) -> TrajectoryBatch:
    """Run the chain for all paths; deterministic given the master seed.

    keep_steps restricts which step columns are stored (for long horizons);
    derived series then become unavailable.  The uniform stream is identical
    either way, so a partial batch holds exactly the columns of the full one.
    """
    if isinstance(rng, int):
        rng = RngPolicy(rng)
    if n_steps < 1 or n_paths < 1:
        raise ConfigError("n_steps and n_paths must be >= 1")
    if n_steps > spec.horizon:
        raise ConfigError(f"n_steps {n_steps} exceeds the spec horizon {spec.horizon}")
    if keep_steps is None:
        kept = tuple(range(1, n_steps + 1))
    else:
        kept = tuple(sorted(set(int(k) for k in keep_steps)))
        if not kept or kept[0] < 1 or kept[-1] > n_steps:
            raise ConfigError(f"keep_steps must be a nonempty subset of 1..{n_steps}")
    if n_paths * len(kept) > MAX_STORED_VALUES:
        raise ConfigError(
            f"batch would store {n_paths * len(kept)} values "
            f"(limit {MAX_STORED_VALUES}); restrict keep_steps or paths")

    measures = [spec.measure(k) for k in range(1, n_steps + 1)]
    step_means = np.array([mean(m) for m in measures])
    step_b = spec.normalizer_array(n_steps) if spec.normalizers is not None else None

    gen = rng.generator()
    x = np.empty((n_paths, len(kept)))
    col = {step: j for j, step in enumerate(kept)}

    u = gen.random(n_paths)
    mu1 = measures[0]
    cur = mu1.positions[np.searchsorted(mu1.cumulative_weights, u, side="right")]
    if 1 in col:
        x[:, col[1]] = cur
    for k in range(2, n_steps + 1):
        u = gen.random(n_paths)
        roots, weights = _kernel_system(cur, measures[k - 1])
        cur = _pick(roots, weights, u)
        if k in col:
            x[:, col[k]] = cur

    x.setflags(write=False)
    return TrajectoryBatch(
        spec=spec, seed=rng.master_seed, n_steps=n_steps, n_paths=n_paths,
        kept_steps=kept, x=x, step_means=step_means, step_normalizers=step_b)


# ---------------------------------------------------------------------------
# diagnostics


@dataclass(frozen=True)
class MomentCheckRow:
    step: int
    first_residual: float
    first_se: float
    first_ok: bool
    second_residual: float
    second_se: float
    second_ok: bool


@dataclass(frozen=True)
class ConditionalMomentReport:
    rows: tuple[MomentCheckRow, ...]

    @property
    def ok(self) -> bool:
        return all(r.first_ok and r.second_ok for r in self.rows)


def _mean_and_se(values: np.ndarray) -> tuple[float, float]:
    m = float(values.mean())
    se = float(values.std(ddof=1) / math.sqrt(values.size)) if values.size > 1 else 0.0
    return m, se


def conditional_moment_check(batch: TrajectoryBatch, spec: SequenceSpec) -> ConditionalMomentReport:
    """Regression-free check of the one-step conditional moments.

    For each step the path average of X_n - X_{n-1} - m(mu_n) and of
    X_n^2 - X_{n-1}^2 - 2 m(mu_n) X_{n-1} - m2(mu_n) must sit within
    four standard errors of zero.
    """
    batch._require_full("conditional moment check")
    if batch.n_paths < MIN_CHECK_PATHS:
        raise ConfigError(f"need at least {MIN_CHECK_PATHS} paths, got {batch.n_paths}")
    rows = []
    for k in range(2, batch.n_steps + 1):
        prev = batch.x[:, k - 2]
        curr = batch.x[:, k - 1]
        mu_k = spec.measure(k)
        m_k = mean(mu_k)
        m2_k = second_moment(mu_k)
        r1 = curr - prev - m_k
        r2 = curr * curr - prev * prev - 2.0 * m_k * prev - m2_k
        m1, se1 = _mean_and_se(r1)
        m2v, se2 = _mean_and_se(r2)
        rows.append(MomentCheckRow(
            step=k,
            first_residual=m1, first_se=se1, first_ok=abs(m1) <= GATE_SIGMAS * se1,
            second_residual=m2v, second_se=se2, second_ok=abs(m2v) <= GATE_SIGMAS * se2,
        ))
    return ConditionalMomentReport(tuple(rows))


@dataclass(frozen=True)
class SecondMomentRow:
    step: int
    empirical: float
    se: float
    expected: float
    ok: bool
    increment_mean: float
    increment_mean_se: float
    increment_mean_ok: bool
    increment_sq_mean: float
    increment_sq_se: float
    increment_sq_ok: bool


@dataclass(frozen=True)
class SecondMomentReport:
    rows: tuple[SecondMomentRow, ...]

    @property
    def ok(self) -> bool:
        return all(r.ok and r.increment_mean_ok and r.increment_sq_ok for r in self.rows)


def martingale_second_moment_check(batch: TrajectoryBatch,
                                   spec: SequenceSpec) -> SecondMomentReport:
    """Compare E[S_n^2] with the exact partial sums of var(mu_k)/b_k^2, and
    the increments with zero mean and variance var(mu_n), all at 4 SE."""
    batch._require_full("second moment check")
    if batch.step_normalizers is None:
        raise ConfigError("second moment check needs a normalizer schedule")
    if batch.n_paths < MIN_CHECK_PATHS:
        raise ConfigError(f"need at least {MIN_CHECK_PATHS} paths, got {batch.n_paths}")
    s = batch.normalized_sums
    z = batch.increments
    var_terms = spec.variance_array(batch.n_steps) / batch.step_normalizers ** 2
    expected = running_sums(var_terms)
    variances = spec.variance_array(batch.n_steps)
    rows = []
    for k in range(1, batch.n_steps + 1):
        sq = s[:, k - 1] ** 2
        emp, se = _mean_and_se(sq)
        zm, zm_se = _mean_and_se(z[:, k - 1])
        z2, z2_se = _mean_and_se(z[:, k - 1] ** 2)
        rows.append(SecondMomentRow(
            step=k,
            empirical=emp, se=se, expected=float(expected[k - 1]),
            ok=abs(emp - expected[k - 1]) <= GATE_SIGMAS * se,
            increment_mean=zm, increment_mean_se=zm_se,
            increment_mean_ok=abs(zm) <= GATE_SIGMAS * zm_se,
            increment_sq_mean=z2, increment_sq_se=z2_se,
            increment_sq_ok=abs(z2 - variances[k - 1]) <= GATE_SIGMAS * z2_se,
        ))
    return SecondMomentReport(tuple(rows))


def write_summary_csv(batch: TrajectoryBatch, spec: SequenceSpec, path,
                      config_echo=()) -> None:
    """Per-step summary table: chain moments, empirical E[S_n^2] against the
    analytic partial sums, and the 4-SE flags where computable."""
    second = None
    conditional = None
    if batch.is_full and batch.n_paths >= MIN_CHECK_PATHS:
        conditional = {r.step: r for r in conditional_moment_check(batch, spec).rows}
        if batch.step_normalizers is not None:
            second = {r.step: r for r in martingale_second_moment_check(batch, spec).rows}
    with open(path, "w", newline="") as fh:
        for key, value in config_echo:
            fh.write(f"# {key} = {value}\n")
        writer = csv.writer(fh)
        writer.writerow(["n", "mean_x", "var_x", "mean_s_sq",
                         "analytic_var_sum", "flags"])
        for j, step in enumerate(batch.kept_steps):
            vals = batch.x[:, j]
            flags = []
            if conditional is not None and step in conditional:
                row = conditional[step]
                flags.append("cond:" + ("pass" if row.first_ok and row.second_ok else "fail"))
            mean_s_sq = ""
            analytic = ""
            if second is not None:
                row = second[step]
                mean_s_sq = f"{row.empirical:.17g}"
                analytic = f"{row.expected:.17g}"
                flags.append("s2:" + ("pass" if row.ok else "fail"))
            writer.writerow([
                step,
                f"{float(vals.mean()):.17g}",
                f"{float(vals.var(ddof=1)) if vals.size > 1 else 0.0:.17g}",
                mean_s_sq,
                analytic,
                " ".join(flags),
            ])
