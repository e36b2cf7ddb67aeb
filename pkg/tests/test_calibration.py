import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from conftest import all_sign_sequences
from sparsefree.calibration import (
    Calibration,
    LawKind,
    NullLaw,
    asymptotic_pvalue,
    cache_path,
    critical_value,
    exact_or_asymptotic_law,
    load_table,
    mc_calibrate,
    mc_calibrate_many,
    pvalue_runs,
    pvalue_sign,
    pvalue_smirnov,
    pvalue_tail_run,
    save_table,
)
from sparsefree.distributions import GeneralizedGaussian, MixtureModel
from sparsefree.statistics import Kind, sign_statistics


def enumerated_tails(n):
    """Exact upper (lower for runs) tail probabilities over all 2^n sequences."""
    seqs = all_sign_sequences(n)
    kinds = [Kind.SIGN, Kind.SMIRNOV, Kind.TAIL_RUN, Kind.NUM_RUNS]
    values = {k: np.array([sign_statistics(s, [k])[k] for s in seqs]) for k in kinds}
    total = 2**n
    return values, total


class TestExactLawsByEnumeration:
    @pytest.mark.parametrize("n", range(1, 13))
    def test_all_laws(self, n):
        values, total = enumerated_tails(n)
        for s in range(-n, n + 1, 2):
            count = int((values[Kind.SIGN] >= s).sum())
            assert pvalue_sign(s, n) == float(Fraction(count, total))
        for r in range(n):
            count = int((values[Kind.NUM_RUNS] <= r).sum())
            assert pvalue_runs(r, n) == float(Fraction(count, total))
        for l in range(n + 1):
            count = int((values[Kind.TAIL_RUN] >= l).sum())
            assert pvalue_tail_run(l) == float(Fraction(count, total))
        # the sup-over-x form of S* is max(0, max_k S_k); the two coincide for k >= 1
        sup_form = np.maximum(values[Kind.SMIRNOV], 0)
        for k in range(-1, n + 1):
            count = int((sup_form >= k).sum())
            assert pvalue_smirnov(k, n) == float(Fraction(count, total))
            if k >= 1:
                assert count == int((values[Kind.SMIRNOV] >= k).sum())

    def test_reflection_spot_value(self):
        assert pvalue_smirnov(1, 3) == 5 / 8
        values, _ = enumerated_tails(3)
        assert int((values[Kind.SMIRNOV] >= 1).sum()) == 5


class TestPValues:
    def test_sign_examples(self):
        assert pvalue_sign(10, 10) == 2.0**-10
        assert pvalue_sign(0, 10) > 0.5
        assert pvalue_sign(2, 4) == 0.3125

    @pytest.mark.parametrize("s,n", [(1, 4), (5, 4), (-6, 4), (0, 0)])
    def test_sign_domain(self, s, n):
        with pytest.raises(ValueError):
            pvalue_sign(s, n)

    def test_sign_large_n_normal(self):
        n = 40_000
        s = 400
        exact = stats.binom.sf((s + n) // 2 - 1, n, 0.5)
        assert pvalue_sign(s, n) == pytest.approx(exact, rel=1e-3)

    def test_sign_against_binomial(self):
        for n in (99, 100, 2000, 10_000):
            for s in range(-n, n + 1, max(2, 2 * (n // 40))):
                if (s + n) % 2:
                    continue
                ref = stats.binom.sf((s + n) // 2 - 1, n, 0.5)
                assert pvalue_sign(s, n) == pytest.approx(ref, rel=1e-9, abs=1e-300)

    def test_runs_examples(self):
        assert pvalue_runs(0, 5) == 0.0625
        assert pvalue_runs(9, 10) == 1.0
        assert pvalue_runs(1, 4) == 0.5
        with pytest.raises(ValueError):
            pvalue_runs(4, 4)
        with pytest.raises(ValueError):
            pvalue_runs(-1, 4)

    def test_runs_large_n(self):
        n = 20_001
        assert pvalue_runs(9_900, n) == pytest.approx(stats.binom.cdf(9_900, n - 1, 0.5))

    def test_tail_run(self):
        assert pvalue_tail_run(0) == 1.0
        assert pvalue_tail_run(10) == 2.0**-10
        assert pvalue_tail_run(16) == pytest.approx(0.0000153, abs=1e-7)
        with pytest.raises(ValueError):
            pvalue_tail_run(-1)

    def test_smirnov_examples(self):
        assert pvalue_smirnov(1, 3) == 5 / 8
        assert pvalue_smirnov(7, 7) == 2.0**-7
        assert pvalue_smirnov(0, 2) == 1.0
        assert pvalue_smirnov(-1, 5) == 1.0
        with pytest.raises(ValueError):
            pvalue_smirnov(6, 5)

    def test_smirnov_large_n_continuity(self):
        # the scipy path above the exact cutoff agrees with exact integers just below
        assert pvalue_smirnov(150, 10_001) == pytest.approx(pvalue_smirnov(150, 10_000), rel=0.02)

    def test_asymptotic(self):
        assert asymptotic_pvalue("t", 0.0, 50) == 0.5
        w = 55 * math.sqrt(3 / 1000)
        assert asymptotic_pvalue("signed_rank", 55, 10) == pytest.approx(stats.norm.sf(w), rel=1e-12)
        assert asymptotic_pvalue("signed_rank", 55, 10) == pytest.approx(0.0013, abs=1e-4)
        assert asymptotic_pvalue("smirnov_asymptotic", 0, 100) == 1.0
        assert asymptotic_pvalue("smirnov_asymptotic", 20, 100) == pytest.approx(2 * stats.norm.sf(2.0))
        with pytest.raises(ValueError):
            asymptotic_pvalue("cusum", 1.0, 10)


@settings(max_examples=200, deadline=None)
@given(n=st.integers(1, 400), a=st.integers(0, 400), b=st.integers(0, 400))
def test_pvalues_monotone(n, a, b):
    lo, hi = sorted((min(a, n), min(b, n)))
    assert pvalue_smirnov(lo, n) >= pvalue_smirnov(hi, n)
    assert pvalue_tail_run(lo) >= pvalue_tail_run(hi)
    slo, shi = 2 * lo - n, 2 * hi - n
    assert pvalue_sign(slo, n) >= pvalue_sign(shi, n)
    if hi <= n - 1:
        assert pvalue_runs(lo, n) <= pvalue_runs(hi, n)


class TestCriticalValues:
    def test_tail_run(self):
        law = exact_or_asymptotic_law("tail_run", 100)
        assert critical_value(law, 0.05) == 5

    @pytest.mark.parametrize("n", [10, 100, 2000])
    @pytest.mark.parametrize("level", [0.01, 0.05, 0.2])
    def test_sign_against_binomial_oracle(self, n, level):
        t = critical_value(exact_or_asymptotic_law("sign", n), level)
        b = (t + n) / 2
        assert stats.binom.sf(b - 1, n, 0.5) <= level
        assert stats.binom.sf(b - 2, n, 0.5) > level

    @pytest.mark.parametrize("n", [10, 2000])
    def test_smirnov_and_runs_are_sharp(self, n):
        t = critical_value(exact_or_asymptotic_law("smirnov", n), 0.05)
        assert pvalue_smirnov(t, n) <= 0.05 < pvalue_smirnov(t - 1, n)
        r = critical_value(exact_or_asymptotic_law("num_runs", n), 0.05)
        assert pvalue_runs(r, n) <= 0.05 < pvalue_runs(r + 1, n)

    def test_never_reject(self):
        # with n = 3 the smallest sign p-value is 1/8
        law = exact_or_asymptotic_law("sign", 3)
        assert not law.rejects(3, 0.05)
        law = exact_or_asymptotic_law("num_runs", 3)
        assert critical_value(law, 0.05) == -1

    @pytest.mark.parametrize("kind", ["sign", "smirnov", "tail_run"])
    def test_level_near_one(self, kind):
        # rejection region covers every atom except the minimum of the support
        # (for Smirnov the support of the sup form, which starts at 0)
        n = 8
        law = exact_or_asymptotic_law(kind, n)
        t = critical_value(law, 1 - 1e-9)
        lowest = {"sign": -n, "smirnov": 0, "tail_run": 0}[kind]
        assert not law.rejects(lowest, 1 - 1e-9)
        assert t == {"sign": -n + 2, "smirnov": 1, "tail_run": 1}[kind]

    def test_level_near_one_runs(self):
        law = exact_or_asymptotic_law("num_runs", 8)
        assert critical_value(law, 1 - 1e-9) == 6

    def test_asymptotic_thresholds(self):
        z = stats.norm.isf(0.05)
        assert critical_value(exact_or_asymptotic_law("t", 100), 0.05) == pytest.approx(z)
        n = 10_000
        w = critical_value(exact_or_asymptotic_law("signed_rank", n), 0.05)
        assert w == pytest.approx(z * math.sqrt(n**3 / 3))
        s = critical_value(exact_or_asymptotic_law("smirnov", n), 0.05)
        assert asymptotic_pvalue("smirnov_asymptotic", s, n) == pytest.approx(0.05)

    @pytest.mark.parametrize("level", [0.0, 1.0, -0.5, 2.0])
    def test_level_domain(self, level):
        with pytest.raises(ValueError):
            critical_value(exact_or_asymptotic_law("sign", 10), level)

    def test_realized_level_never_exceeds_nominal(self):
        for n in (5, 50, 500):
            for kind in ("sign", "smirnov", "tail_run", "num_runs"):
                law = exact_or_asymptotic_law(kind, n)
                t = critical_value(law, 0.05)
                if law.kind is LawKind.EXACT_BINOMIAL_RUNS:
                    size = pvalue_runs(int(t), n) if t >= 0 else 0.0
                elif t > n:
                    size = 0.0
                else:
                    size = law.pvalue(t)
                assert size <= 0.05


class TestLawSelection:
    def test_kinds(self):
        assert exact_or_asymptotic_law("sign", 10).kind is LawKind.EXACT_BINOMIAL_SIGN
        assert exact_or_asymptotic_law("smirnov", 9_999).kind is LawKind.EXACT_REFLECTION_SMIRNOV
        assert exact_or_asymptotic_law("smirnov", 10_000).kind is LawKind.ASYMPTOTIC_HALFNORMAL_SMIRNOV
        assert exact_or_asymptotic_law("smirnov", 500, crossover=100).kind is LawKind.ASYMPTOTIC_HALFNORMAL_SMIRNOV
        for kind in ("cusum", "longest_run", "hc", "lrt"):
            assert exact_or_asymptotic_law(kind, 10) is None

    def test_enum_values(self):
        assert Calibration("monte_carlo") is Calibration.MONTE_CARLO


class TestMonteCarlo:
    def test_sorted_and_frozen(self):
        law = mc_calibrate("cusum", 200, 300, seed=1)
        assert law.kind is LawKind.MONTE_CARLO and law.reps == 300
        assert np.all(np.diff(law.table) >= 0)
        with pytest.raises(ValueError):
            law.table[0] = 0

    def test_min_reps(self):
        with pytest.raises(ValueError):
            mc_calibrate("cusum", 100, 99, seed=0)

    def test_reproducible(self):
        a = mc_calibrate("longest_run", 300, 200, seed=5)
        b = mc_calibrate("longest_run", 300, 200, seed=5)
        np.testing.assert_array_equal(a.table, b.table)
        c = mc_calibrate("longest_run", 300, 200, seed=6)
        assert not np.array_equal(a.table, c.table)

    def test_independent_of_workers_and_companions(self):
        a = mc_calibrate_many(["cusum", "longest_run"], 500, 240, seed=3, workers=1)
        b = mc_calibrate_many(["longest_run"], 500, 240, seed=3, workers=2)
        np.testing.assert_array_equal(a[Kind.LONGEST_RUN].table, b[Kind.LONGEST_RUN].table)

    def test_sign_table_matches_binomial(self):
        law = mc_calibrate("sign", 100, 10_000, seed=11)
        grid = np.arange(-100, 101, 2)
        emp = np.searchsorted(law.table, grid, side="right") / law.table.size
        exact = stats.binom.cdf((grid + 100) // 2, 100, 0.5)
        assert np.max(np.abs(emp - exact)) < 0.02

    def test_cusum_median_scale(self):
        law = mc_calibrate("cusum", 100_000, 1_000, seed=2)
        assert abs(law.quantile(0.5) - math.sqrt(2 * math.log(math.log(1e5)))) <= 1.0

    def test_pvalue_and_threshold_agree(self):
        law = mc_calibrate("cusum", 300, 499, seed=4)
        for level in (0.01, 0.05, 0.1, 0.5):
            t = critical_value(law, level)
            for v in law.table:
                assert (v >= t) == (law.pvalue(v) <= level)

    def test_reject_small_consistency(self):
        table = np.sort(np.random.default_rng(0).integers(0, 50, 199)).astype(float)
        table.flags.writeable = False
        law = NullLaw(LawKind.MONTE_CARLO, Kind.NUM_RUNS, 51, table, 199, 0)
        for level in (0.02, 0.05, 0.3):
            t = critical_value(law, level)
            for v in range(-1, 52):
                assert (v <= t) == (law.pvalue(v) <= level)

    def test_integer_threshold_between_atoms(self):
        table = np.array([1.0] * 90 + [2.0] * 5 + [3.0] * 4)
        law = NullLaw(LawKind.MONTE_CARLO, Kind.LONGEST_RUN, 10, table, 99, 0)
        # p(3) = 5/100, p(2) = 10/100
        assert critical_value(law, 0.05) == 3
        assert critical_value(law, 0.01) == 4
        assert law.pvalue(3) == 0.05

    def test_sample_based_statistics(self):
        null = GeneralizedGaussian(2.0)
        model = MixtureModel(null, null, 0.05, 2.0)
        laws = mc_calibrate_many(["t", "hc", "lrt"], 200, 300, seed=9, null=null, model=model)
        t = laws[Kind.T]
        assert abs(t.quantile(0.95) - stats.norm.isf(0.05)) < 0.3
        assert laws[Kind.HC].params["hc_variant"] == "plus"
        assert laws[Kind.LRT].params["mu"] == 2.0

    def test_missing_model(self):
        with pytest.raises(ValueError):
            mc_calibrate("lrt", 100, 100, seed=0, null=GeneralizedGaussian(2.0))
        with pytest.raises(ValueError):
            mc_calibrate("hc", 100, 100, seed=0)


class TestCache:
    def test_roundtrip(self, tmp_path):
        law = mc_calibrate("cusum", 100, 150, seed=7)
        path = save_table(law, tmp_path / "t.txt")
        back = load_table(path)
        np.testing.assert_array_equal(back.table, law.table)
        assert (back.statistic, back.n, back.reps, back.seed) == (Kind.CUSUM, 100, 150, 7)
        header = path.read_text().splitlines()[:6]
        assert header[0].startswith("# sparsefree-null-table")
        assert "# kind: cusum" in header

    def test_cache_reused(self, tmp_path):
        null = GeneralizedGaussian(2.0)
        a = mc_calibrate("hc", 80, 120, seed=1, null=null, cache_dir=tmp_path)
        path = cache_path(tmp_path, Kind.HC, 80, 120, 1, a.params)
        assert path.exists()
        # tamper with the cached values: a cache hit returns them unchanged
        lines = path.read_text().splitlines()
        lines[-1] = "1e9"
        path.write_text("\n".join(lines) + "\n")
        b = mc_calibrate("hc", 80, 120, seed=1, null=null, cache_dir=tmp_path)
        assert b.table[-1] == 1e9

    def test_cache_keyed_by_null(self, tmp_path):
        a = mc_calibrate("hc", 80, 120, seed=1, null=GeneralizedGaussian(2.0), cache_dir=tmp_path)
        b = mc_calibrate("hc", 80, 120, seed=1, null=GeneralizedGaussian(1.0), cache_dir=tmp_path)
        assert not np.array_equal(a.table, b.table)
        assert len(list(tmp_path.iterdir())) == 2

    def test_rejects_foreign_file(self, tmp_path):
        p = tmp_path / "x.txt"
        p.write_text("1\n2\n")
        with pytest.raises(ValueError):
            load_table(p)

    def test_save_needs_table(self, tmp_path):
        with pytest.raises(ValueError):
            save_table(exact_or_asymptotic_law("sign", 5), tmp_path / "s.txt")
