import math

import numpy as np
import pytest

from monoconv import (
    AtomBudgetError,
    ConfigError,
    ConvolutionOptions,
    ExplicitMeasures,
    ExplicitNormalizers,
    GeometricNormalizers,
    IidMeasures,
    MeasureSpec,
    PowerNormalizers,
    RngPolicy,
    ScaledMeasures,
    SequenceSpec,
    build_stability_report,
    centers,
    classical_baseline,
    condition_partial_sums,
    condition_report,
    emit_report,
    stability_exact,
    stability_mc,
)

B = MeasureSpec.two_point(-1, 1, 0.5)


def iid_seq(spec=B, p=1.0, horizon=1000):
    return SequenceSpec(IidMeasures(spec), PowerNormalizers(p), horizon)


class TestSequenceSpec:
    def test_normalizers_must_increase(self):
        with pytest.raises(ConfigError):
            SequenceSpec(IidMeasures(B), ExplicitNormalizers((1.0, 1.0, 2.0)), 3)
        with pytest.raises(ConfigError):
            SequenceSpec(IidMeasures(B), ExplicitNormalizers((-1.0, 1.0, 2.0)), 3)
        with pytest.raises(ConfigError):
            SequenceSpec(IidMeasures(B), PowerNormalizers(0.0), 5)

    def test_explicit_list_must_cover_horizon(self):
        with pytest.raises(ConfigError):
            SequenceSpec(ExplicitMeasures((B,)), PowerNormalizers(1.0), 2)

    def test_scaled_variance_growth(self):
        seq = SequenceSpec(ScaledMeasures(B, alpha=0.5), PowerNormalizers(1.0), 100)
        for n in (1, 4, 9, 50):
            assert seq.variance(n) == pytest.approx(n ** 0.5, rel=1e-12)
            assert seq.measure(n).positions == pytest.approx(
                [-(n ** 0.25), n ** 0.25], rel=1e-12)


class TestCenters:
    def test_zero_mean_family(self):
        seq = iid_seq()
        for n in (1, 7, 100):
            assert centers(seq, n) == 0.0

    def test_point_family(self):
        seq = iid_seq(MeasureSpec.point(2.5))
        for n in (1, 10, 500):
            assert centers(seq, n) == pytest.approx(2.5, rel=1e-15)

    def test_arithmetic_means_with_square_normalizer(self):
        specs = tuple(MeasureSpec.point(float(k)) for k in range(1, 9))
        seq = SequenceSpec(ExplicitMeasures(specs), PowerNormalizers(2.0), 8)
        for n in (2, 5, 8):
            assert centers(seq, n) == pytest.approx((n + 1) / (2 * n), rel=1e-14)


class TestConditionSums:
    def test_basel_series(self):
        seq = iid_seq()
        sums = condition_partial_sums(seq, 10**5)
        oracle = math.fsum(1.0 / k**2 for k in range(1, 10**5 + 1))
        assert sums[-1] == pytest.approx(oracle, rel=1e-12)
        assert sums[-1] == pytest.approx(1.6449240668982263, rel=1e-12)
        assert abs(sums[-1] - math.pi**2 / 6) < 1e-3
        assert np.all(np.diff(sums) >= 0)

    def test_geometric_series(self):
        seq = iid_seq(B, horizon=20)
        seq = SequenceSpec(IidMeasures(B), GeometricNormalizers(), 20)
        sums = condition_partial_sums(seq, 20)
        assert sums[-1] == pytest.approx(1.0 / 3.0, abs=1e-9)

    def test_divergent_family_flagged(self):
        seq = SequenceSpec(ScaledMeasures(B, alpha=2.0), PowerNormalizers(1.0), 2000)
        sums = condition_partial_sums(seq, 2000)
        assert sums[-1] == pytest.approx(2000.0, rel=1e-12)  # each term is 1
        report = condition_report(seq, 2000)
        assert report.analytic is False
        assert report.heuristic is False
        assert report.convergent is False

    def test_analytic_flags(self):
        assert condition_report(iid_seq(p=1.0), 10).analytic is True
        assert condition_report(iid_seq(p=0.4), 10).analytic is False
        scaled = SequenceSpec(ScaledMeasures(B, 0.5), PowerNormalizers(1.0), 10)
        assert condition_report(scaled, 10).analytic is True
        heavy = SequenceSpec(ScaledMeasures(B, 2.5), PowerNormalizers(1.0), 10)
        assert condition_report(heavy, 10).analytic is False
        geo = SequenceSpec(IidMeasures(B), GeometricNormalizers(), 10)
        assert condition_report(geo, 10).analytic is True
        explicit = SequenceSpec(ExplicitMeasures((B, B)), PowerNormalizers(1.0), 2)
        assert condition_report(explicit, 2).analytic is None

    def test_point_mass_family_trivially_convergent(self):
        seq = iid_seq(MeasureSpec.point(1.0))
        report = condition_report(seq, 50)
        assert report.analytic is True
        assert report.partial_sums[-1] == 0.0


class TestStabilityExact:
    def test_point_mass_family(self):
        seq = iid_seq(MeasureSpec.point(2.0))
        masses = stability_exact(seq, 6, [0.05, 0.25, 1.0])
        assert masses == [0.0, 0.0, 0.0]

    def test_eps_zero_gives_one(self):
        masses = stability_exact(iid_seq(), 4, [0.0])
        assert masses == [1.0]

    def test_agrees_with_mc(self):
        seq = iid_seq()
        exact = stability_exact(seq, 10, [0.25])
        rows, _ = stability_mc(seq, [10], [0.25], 100_000, RngPolicy(404))
        mc = rows[0]
        assert abs(exact[0] - mc.fraction) <= 4.0 * mc.se

    def test_chebyshev_domination(self):
        seq = iid_seq()
        sums = condition_partial_sums(seq, 12)
        for n in (4, 8, 12):
            var_sum = float(np.sum([seq.variance(k) for k in range(1, n + 1)]))
            for eps in (0.1, 0.25, 0.5, 1.0):
                mass = stability_exact(seq, n, [eps])[0]
                bound = var_sum / (seq.b(n) ** 2 * eps ** 2)
                assert mass <= bound + 1e-12

    def test_budget_guard(self):
        seq = iid_seq()
        with pytest.raises(AtomBudgetError):
            stability_exact(seq, 12, [0.25], ConvolutionOptions(max_atoms=100))


class TestClassicalBaseline:
    def test_point_mass(self):
        seq = iid_seq(MeasureSpec.point(3.0))
        assert classical_baseline(seq, 5, [0.1, 0.5]) == [0.0, 0.0]

    def test_binomial_tail_frozen(self):
        # direct binomial oracle: sum of C(10,k)/2^10 over |2k-10|/10 >= 0.25
        oracle = sum(math.comb(10, k) for k in range(11)
                     if abs(2 * k - 10) / 10.0 >= 0.25) / 2.0**10
        assert oracle == 0.34375
        seq = iid_seq()
        mass = classical_baseline(seq, 10, [0.25])[0]
        assert mass == pytest.approx(oracle, abs=1e-12)

    def test_eps_zero(self):
        assert classical_baseline(iid_seq(), 3, [0.0]) == [1.0]


class TestStabilityMc:
    def test_point_mass_family_all_zero(self):
        seq = iid_seq(MeasureSpec.point(1.5))
        rows, assessments = stability_mc(seq, [5, 20], [0.1, 0.5], 10_000, RngPolicy(1))
        assert all(r.fraction == 0.0 for r in rows)
        assert all(a.nonincreasing for a in assessments)

    def test_bernoulli_decays(self):
        seq = iid_seq()
        rows, assessments = stability_mc(seq, [10, 100], [0.25], 20_000, RngPolicy(505))
        a = assessments[0]
        assert a.first > a.last
        assert a.decreasing

    def test_path_floor(self):
        with pytest.raises(ConfigError):
            stability_mc(iid_seq(), [10], [0.25], 100, RngPolicy(0))


class TestReport:
    def build_small(self, seed=42):
        seq = iid_seq(horizon=50)
        return build_stability_report(
            seq, mc_checkpoints=(10, 50), exact_checkpoints=(4, 10),
            eps_list=(0.25, 0.5), n_paths=20_000, rng=RngPolicy(seed),
            include_classical=True)

    def test_gates_pass_for_bernoulli(self):
        report = self.build_small()
        assert report.ok
        assert all(v == "decreasing" for _, v in report.verdicts)

    def test_rows_cover_grid(self):
        report = self.build_small()
        mc_rows = [r for r in report.rows if r.method == "mc"]
        exact_rows = [r for r in report.rows if r.method == "exact"]
        assert len(mc_rows) == 2 * 2
        assert len(exact_rows) == 2 * 2
        assert all(r.classical_outside_mass is not None for r in exact_rows)
        assert all(r.std_err is not None for r in mc_rows)
        sums = [r.cond_partial_sum for r in sorted(report.rows, key=lambda r: r.n)]
        assert all(b >= a - 1e-15 for a, b in zip(sums, sums[1:]))

    def test_divergent_family_not_assessed(self):
        seq = SequenceSpec(ScaledMeasures(B, alpha=2.5), PowerNormalizers(1.0), 60)
        report = build_stability_report(
            seq, mc_checkpoints=(10, 60), exact_checkpoints=(),
            eps_list=(0.25,), n_paths=10_000, rng=RngPolicy(7),
            include_classical=False)
        assert report.verdicts == ((0.25, "not-assessed"),)
        assert not any(g.name.startswith("mc-decay") for g in report.gates)

    def test_emit_report_deterministic(self, tmp_path):
        report = self.build_small()
        out1 = tmp_path / "a.csv"
        out2 = tmp_path / "b.csv"
        emit_report(report, out1)
        emit_report(self.build_small(), out2)
        assert out1.read_bytes() == out2.read_bytes()

    def test_emit_report_format(self, tmp_path):
        report = self.build_small()
        out = tmp_path / "report.csv"
        emit_report(report, out)
        lines = out.read_text().splitlines()
        comments = [l for l in lines if l.startswith("# ")]
        assert any(l.startswith("# seed = ") for l in comments)
        header_idx = len(comments)
        assert lines[header_idx] == ("n,b_n,a_n,eps,outside_mass,method,std_err,"
                                     "cheb_bound,cond_partial_sum,classical_outside_mass")
        data = [l.split(",") for l in lines[header_idx + 1:]]
        assert len(data) == len(report.rows)
        for row in data:
            assert row[5] in ("exact", "mc")
            if row[5] == "exact":
                assert row[6] == ""  # no SE on exact rows
            else:
                assert row[9] == ""  # no classical column on mc rows

    def test_empty_report_is_header_only(self, tmp_path):
        from monoconv.lln import StabilityReport
        report = self.build_small()
        empty = StabilityReport(config_echo=(("seed", "1"),), rows=(),
                                condition=report.condition, verdicts=(), gates=())
        out = tmp_path / "empty.csv"
        emit_report(empty, out)
        lines = out.read_text().splitlines()
        assert lines == ["# seed = 1",
                         "n,b_n,a_n,eps,outside_mass,method,std_err,"
                         "cheb_bound,cond_partial_sum,classical_outside_mass"]

    def test_seventeen_digit_floats(self, tmp_path):
        report = self.build_small()
        out = tmp_path / "digits.csv"
        emit_report(report, out)
        text = out.read_text()
        third = 1.0 / 3.0
        assert f"{third:.17g}" == "0.33333333333333331"  # formatting convention

    def test_checkpoint_beyond_horizon_rejected(self):
        seq = iid_seq(horizon=20)
        with pytest.raises(ConfigError):
            build_stability_report(seq, mc_checkpoints=(10, 50),
                                   exact_checkpoints=(), n_paths=10_000)
