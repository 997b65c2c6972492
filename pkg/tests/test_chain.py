import numpy as np
import pytest

from monoconv import (
    ConfigError,
    IidMeasures,
    ExplicitMeasures,
    GeometricNormalizers,
    MeasureSpec,
    PowerNormalizers,
    RngPolicy,
    SequenceSpec,
    conditional_moment_check,
    convolve_sequence,
    kernel_distribution,
    martingale_second_moment_check,
    materialize,
    point_mass,
    sample,
    sample_many,
    simulate,
    step_sample,
)
from conftest import rng

B_SPEC = MeasureSpec.two_point(-1, 1, 0.5)


def iid_spec(measure_spec=B_SPEC, normalizer=PowerNormalizers(1.0), horizon=1000):
    return SequenceSpec(IidMeasures(measure_spec), normalizer, horizon)


def delta_chain_spec():
    specs = tuple(MeasureSpec.point(float(k)) for k in (1, 2, 3))
    return SequenceSpec(ExplicitMeasures(specs), PowerNormalizers(1.0), horizon=3)


class TestKernelDistribution:
    def test_point_kernels(self):
        assert kernel_distribution(0.0, point_mass(2.0)).positions.tolist() == [2.0]
        out = kernel_distribution(1.5, point_mass(2.0))
        assert out.positions.tolist() == [3.5]

    def test_matches_delta_convolve_example(self, bernoulli):
        out = kernel_distribution(1.0, bernoulli)
        assert out.positions == pytest.approx(
            [(1 - 5**0.5) / 2, (1 + 5**0.5) / 2], abs=1e-14)
        assert out.weights == pytest.approx(
            [(5 - 5**0.5) / 10, (5 + 5**0.5) / 10], abs=1e-14)


class TestStepSample:
    def test_deterministic_translation_chain(self):
        g = rng(1)
        x = 0.0
        for c in (1.0, 2.0, 3.0):
            x = step_sample(x, point_mass(c), g)
        assert x == 6.0

    def test_fixed_stream_state_repeats(self, bernoulli):
        assert step_sample(1.0, bernoulli, rng(5)) == step_sample(1.0, bernoulli, rng(5))

    def test_scalar_matches_measure_sampling(self, bernoulli):
        dist = kernel_distribution(1.0, bernoulli)
        assert step_sample(1.0, bernoulli, rng(9)) == sample(dist, rng(9))

    def test_empirical_law_matches_kernel_weights(self, bernoulli):
        dist = kernel_distribution(1.0, bernoulli)
        draws = sample_many(dist, rng(13), 10**6)
        for t, w in zip(dist.positions, dist.weights):
            freq = float(np.mean(draws == t))
            se = (w * (1 - w) / draws.size) ** 0.5
            assert abs(freq - w) <= 4.0 * se


class TestSimulate:
    def test_translation_chain_is_deterministic(self):
        batch = simulate(delta_chain_spec(), 3, 50, RngPolicy(3))
        assert np.array_equal(batch.x[:, -1], np.full(50, 6.0))
        assert np.array_equal(batch.x[:, 0], np.full(50, 1.0))

    def test_same_seed_bit_identical(self):
        spec = iid_spec()
        a = simulate(spec, 8, 2000, RngPolicy(77))
        b = simulate(spec, 8, 2000, RngPolicy(77))
        assert a.x.tobytes() == b.x.tobytes()

    def test_different_seeds_differ(self):
        spec = iid_spec()
        a = simulate(spec, 8, 2000, RngPolicy(77))
        b = simulate(spec, 8, 2000, RngPolicy(78))
        assert not np.array_equal(a.x, b.x)

    def test_partial_keep_matches_full_run_columns(self):
        spec = iid_spec()
        full = simulate(spec, 20, 500, RngPolicy(11))
        part = simulate(spec, 20, 500, RngPolicy(11), keep_steps=[3, 20])
        assert np.array_equal(part.column(3), full.column(3))
        assert np.array_equal(part.column(20), full.column(20))
        with pytest.raises(KeyError):
            part.column(5)

    def test_derived_series_recompute_bit_for_bit(self):
        spec = iid_spec(MeasureSpec.two_point(0, 2, 0.25))
        batch = simulate(spec, 12, 400, RngPolicy(19))
        means = np.array([0.0 + 2 * 0.75] * 12)
        y = batch.x - np.cumsum(means)[None, :]
        z = np.empty_like(y)
        z[:, 0] = y[:, 0]
        z[:, 1:] = np.diff(y, axis=1)
        b = np.arange(1.0, 13.0)
        s = np.cumsum(z / b[None, :], axis=1)
        assert np.array_equal(batch.centered, y)
        assert np.array_equal(batch.increments, z)
        assert np.array_equal(batch.normalized_sums, s)

    def test_partial_batches_refuse_derived_series(self):
        spec = iid_spec()
        part = simulate(spec, 10, 100, RngPolicy(2), keep_steps=[10])
        with pytest.raises(ValueError):
            _ = part.centered

    def test_scalar_replay_reproduces_batch_rows(self, bernoulli):
        spec = iid_spec()
        n_paths, n_steps = 6, 5
        batch = simulate(spec, n_steps, n_paths, RngPolicy(123))
        gen = RngPolicy(123).generator()
        uniforms = np.array([gen.random(n_paths) for _ in range(n_steps)])
        mu1 = materialize(B_SPEC)
        for p in range(n_paths):
            idx = int(np.searchsorted(mu1.cumulative_weights, uniforms[0, p], side="right"))
            x = float(mu1.positions[idx])
            assert x == batch.x[p, 0]
            for k in range(2, n_steps + 1):
                dist = kernel_distribution(x, bernoulli)
                idx = int(np.searchsorted(dist.cumulative_weights,
                                          uniforms[k - 1, p], side="right"))
                x = float(dist.positions[idx])
                assert x == batch.x[p, k - 1]

    def test_marginal_concentrates_on_exact_atoms(self, bernoulli):
        n = 4
        batch = simulate(iid_spec(), n, 20_000, RngPolicy(31))
        exact = convolve_sequence([bernoulli] * n)
        samples = batch.x[:, -1]
        dist = np.min(np.abs(samples[:, None] - exact.positions[None, :]), axis=1)
        assert dist.max() <= 1e-9
        idx = np.argmin(np.abs(samples[:, None] - exact.positions[None, :]), axis=1)
        freq = np.bincount(idx, minlength=exact.size) / samples.size
        se = np.sqrt(exact.weights * (1 - exact.weights) / samples.size)
        assert np.all(np.abs(freq - exact.weights) <= 4.0 * se)

    def test_guards(self):
        spec = iid_spec(horizon=10)
        with pytest.raises(ConfigError):
            simulate(spec, 11, 10, RngPolicy(0))
        with pytest.raises(ConfigError):
            simulate(spec, 5, 10, RngPolicy(0), keep_steps=[0, 3])
        with pytest.raises(ConfigError):
            simulate(spec, 0, 10, RngPolicy(0))
        with pytest.raises(ConfigError):
            RngPolicy(-4)


class TestConditionalMoments:
    def test_translation_chain_residuals_exactly_zero(self):
        batch = simulate(delta_chain_spec(), 3, 10_000, RngPolicy(1))
        report = conditional_moment_check(batch, delta_chain_spec())
        for row in report.rows:
            assert row.first_residual == 0.0
            assert row.second_residual == 0.0
            assert row.first_ok and row.second_ok

    def test_iid_bernoulli_within_bands(self):
        spec = iid_spec()
        batch = simulate(spec, 30, 20_000, RngPolicy(207))
        report = conditional_moment_check(batch, spec)
        assert report.ok

    def test_mean_is_subtracted_not_a_constant(self):
        spec = iid_spec(MeasureSpec.two_point(0, 2, 0.5))  # step mean 1
        batch = simulate(spec, 10, 20_000, RngPolicy(211))
        report = conditional_moment_check(batch, spec)
        assert report.ok
        raw_drift = float(np.mean(batch.x[:, 5] - batch.x[:, 4]))
        se = float(np.std(batch.x[:, 5] - batch.x[:, 4], ddof=1)) / np.sqrt(batch.n_paths)
        assert raw_drift > 10 * se  # the uncentered residual is visibly 1, not 0

    def test_orthogonality_of_increments(self):
        spec = iid_spec()
        batch = simulate(spec, 12, 20_000, RngPolicy(223))
        z = batch.increments
        x = batch.x
        for k in range(2, 13):
            for g_val in (np.ones(batch.n_paths), x[:, k - 2],
                          np.clip(x[:, k - 2], -1.0, 1.0)):
                prod = z[:, k - 1] * g_val
                m = float(prod.mean())
                se = float(prod.std(ddof=1)) / np.sqrt(batch.n_paths)
                assert abs(m) <= 4.0 * se

    def test_requires_enough_paths(self):
        spec = iid_spec()
        batch = simulate(spec, 3, 100, RngPolicy(0))
        with pytest.raises(ConfigError):
            conditional_moment_check(batch, spec)


class TestSecondMoments:
    def test_point_mass_family_is_exactly_zero(self):
        spec = iid_spec(MeasureSpec.point(2.0), horizon=10)
        batch = simulate(spec, 10, 10_000, RngPolicy(5))
        report = martingale_second_moment_check(batch, spec)
        for row in report.rows:
            assert row.empirical == 0.0
            assert row.expected == 0.0
            assert row.ok

    def test_iid_bernoulli_matches_partial_sums(self):
        spec = iid_spec()
        batch = simulate(spec, 50, 20_000, RngPolicy(301))
        report = martingale_second_moment_check(batch, spec)
        assert report.ok
        for n in (10, 50):
            row = report.rows[n - 1]
            expect = float(np.sum(1.0 / np.arange(1.0, n + 1.0) ** 2))
            assert row.expected == pytest.approx(expect, abs=1e-12)
            assert abs(row.empirical - row.expected) <= 4.0 * row.se

    def test_geometric_normalizers_converge_to_third(self):
        spec = iid_spec(normalizer=GeometricNormalizers(), horizon=12)
        batch = simulate(spec, 12, 20_000, RngPolicy(307))
        report = martingale_second_moment_check(batch, spec)
        assert report.ok
        last = report.rows[-1]
        assert last.expected == pytest.approx(1.0 / 3.0, abs=1e-6)
        assert abs(last.empirical - 1.0 / 3.0) <= 4.0 * last.se + 1e-6

    def test_increment_moments(self):
        spec = iid_spec()
        batch = simulate(spec, 20, 20_000, RngPolicy(311))
        report = martingale_second_moment_check(batch, spec)
        for row in report.rows:
            assert row.increment_mean_ok
            assert row.increment_sq_ok

    def test_requires_normalizers(self):
        spec = SequenceSpec(IidMeasures(B_SPEC), None, horizon=5)
        batch = simulate(spec, 5, 10_000, RngPolicy(0))
        with pytest.raises(ConfigError):
            martingale_second_moment_check(batch, spec)
        assert batch.normalized_sums is None
