import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra import numpy as hnp
from scipy import stats

from flowsift.errors import EmptyDataset
from flowsift.features import (
    DegenerateVariance,
    ZeroImpurityDecrease,
    anova_f_pvalue,
    chi2_independence_pvalue,
    equal_value_fraction,
    forest_importances,
    paper_pipeline,
    pearson_matrix,
)
from flowsift.synthetic import generate_synthetic, pathology_fixture

EXPECTED_DROPS = [
    ["min_time", "time_leak"], ["max_time", "time_leak"],
    ["fragments", "constant"],
    ["forward_packets", "redundant"], ["receiving_packets", "redundant"],
    ["flow_proto", "p_value"],
    ["total_length", "correlated"],
]


class TestImportance:
    def test_single_perfect_splitter(self):
        rng = np.random.default_rng(0)
        X = rng.normal(size=(2000, 5))
        y = (X[:, 0] > 0).astype(np.int64)
        imp = forest_importances(X, y, n_trees=30, seed=1)
        assert imp[0] > 0.9
        assert imp.sum() == pytest.approx(1.0, abs=1e-9) and (imp >= 0).all()

    def test_constant_features_uniform(self):
        X = np.ones((20, 4))
        y = np.arange(20) % 2
        with pytest.warns(ZeroImpurityDecrease):
            imp = forest_importances(X, y, n_trees=5, seed=0)
        assert imp.tolist() == [0.25] * 4

    def test_column_permutation_equivariant(self):
        rng = np.random.default_rng(2)
        X = rng.normal(size=(200, 4))
        y = ((X[:, 1] > 0) + (X[:, 3] > 0.5)).astype(np.int64)
        perm = np.array([2, 0, 3, 1])
        # every split sees every column, so column order is the only thing that changes
        a = forest_importances(X, y, n_trees=10, seed=3, max_features=None)
        b = forest_importances(X[:, perm], y, n_trees=10, seed=3, max_features=None)
        assert np.allclose(b, a[perm], atol=1e-12)

    def test_column_permutation_equivariant_in_distribution(self):
        rng = np.random.default_rng(2)
        X = rng.normal(size=(300, 4))
        y = (X[:, 1] > 0).astype(np.int64)
        perm = np.array([2, 0, 3, 1])
        a = forest_importances(X, y, n_trees=60, seed=3)
        b = forest_importances(X[:, perm], y, n_trees=60, seed=3)
        assert np.allclose(b, a[perm], atol=0.05)

    def test_affine_rescaling_invariant(self):
        rng = np.random.default_rng(4)
        X = rng.normal(size=(200, 3))
        y = (X[:, 0] + X[:, 1] > 0).astype(np.int64)
        a = forest_importances(X, y, n_trees=10, seed=5)
        b = forest_importances(X * np.array([3.0, 0.01, 7.0]) + 100.0, y, n_trees=10, seed=5)
        assert np.allclose(a, b, atol=1e-12)


class TestPearson:
    def test_examples(self):
        x = np.array([1.0, 2, 3, 4])
        R = pearson_matrix(np.column_stack([x, x, -2 * x + 3, [1, 3, 2, 4]]))
        assert R[0, 1] == pytest.approx(1.0)
        assert R[0, 2] == pytest.approx(-1.0)
        assert R[0, 3] == pytest.approx(0.8)

    def test_zero_variance_is_zero(self):
        R = pearson_matrix(np.array([[1.0, 5.0], [2.0, 5.0], [3.0, 5.0]]))
        assert R[0, 1] == 0.0 and R[1, 1] == 1.0

    @settings(max_examples=60, deadline=None)
    @given(hnp.arrays(np.float64, st.tuples(st.integers(3, 25), st.integers(2, 5)),
                      elements=st.floats(-100, 100)),
           st.floats(0.1, 10), st.floats(-50, 50))
    def test_properties(self, X, scale, shift):
        R = pearson_matrix(X)
        assert np.array_equal(R, R.T)
        assert np.all(np.diag(R) == 1.0)
        assert np.all(np.abs(R) <= 1.0)
        live = np.ptp(X, axis=0) > 1e-6 * np.maximum(1, np.abs(X).max(axis=0))
        ok = np.outer(live, live)
        R2 = pearson_matrix(X * scale + shift)
        assert np.allclose(R2[ok], R[ok], atol=1e-6)
        Rneg = pearson_matrix(np.column_stack([-X[:, 0], X[:, 1:]]))
        if live[0] and live[1]:
            assert Rneg[0, 1] == pytest.approx(-R[0, 1], abs=1e-9)

    def test_matches_numpy(self):
        X = np.random.default_rng(1).normal(size=(50, 4))
        assert np.allclose(pearson_matrix(X), np.corrcoef(X, rowvar=False), atol=1e-12)


class TestEqualFraction:
    def test_examples(self):
        a = np.arange(100)
        assert equal_value_fraction(a, a) == 1.0
        assert equal_value_fraction(a, a + 1000) == 0.0
        b = a.copy()
        b[:4] = -1
        assert equal_value_fraction(a, b) == 0.96

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            equal_value_fraction([1, 2], [1])


class TestAnova:
    def test_two_groups(self):
        F, p = anova_f_pvalue([1, 2, 3, 101, 102, 103], [0, 0, 0, 1, 1, 1])
        ref = stats.f_oneway([1, 2, 3], [101, 102, 103])
        # between SS = 3*50^2*2 = 15000 on 1 dof; within SS = 4 on 4 dof
        assert F == pytest.approx(15000.0) == pytest.approx(ref.statistic)
        assert p == pytest.approx(ref.pvalue, rel=1e-9) and p < 1e-5

    def test_equal_means(self):
        F, p = anova_f_pvalue([1, 3, 1, 3], [0, 0, 1, 1])
        assert (F, p) == (0.0, 1.0)

    def test_label_as_feature(self):
        y = np.repeat(np.arange(5), 4)
        with pytest.warns(DegenerateVariance):
            F, p = anova_f_pvalue(y.astype(float), y)
        assert p == 0.0 and F == np.inf

    def test_all_identical(self):
        with pytest.warns(DegenerateVariance):
            assert anova_f_pvalue([2.0] * 6, [0, 0, 1, 1, 2, 2]) == (0.0, 1.0)

    def test_needs_two_rows_per_class(self):
        with pytest.raises(ValueError):
            anova_f_pvalue([1.0, 2.0, 3.0], [0, 0, 1])

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.floats(-1e3, 1e3), min_size=12, max_size=60), st.integers(2, 4),
           st.floats(0.5, 20), st.floats(-100, 100))
    def test_vs_scipy_and_affine(self, values, k, a, b):
        x = np.array(values)
        y = np.arange(len(x)) % k
        groups = [x[y == g] for g in range(k)]
        if min(np.ptp(g) for g in groups) < 1e-3:
            return
        F, p = anova_f_pvalue(x, y)
        ref = stats.f_oneway(*groups)
        assert F == pytest.approx(ref.statistic, rel=1e-7, abs=1e-9)
        assert p == pytest.approx(ref.pvalue, rel=1e-6, abs=1e-12)
        F2, p2 = anova_f_pvalue(a * x + b, y)
        assert F2 == pytest.approx(F, rel=1e-6, abs=1e-9)
        assert p2 == pytest.approx(p, rel=1e-5, abs=1e-10)


class TestChiSquare:
    def test_vs_scipy(self):
        rng = np.random.default_rng(0)
        y = rng.integers(0, 5, 500)
        x = np.where(rng.random(500) < 0.5 + 0.08 * y, 6, 17)
        stat, p = chi2_independence_pvalue(x, y)
        table = np.array([[np.sum((x == v) & (y == c)) for c in range(5)] for v in (6, 17)])
        ref = stats.chi2_contingency(table, correction=False)
        assert stat == pytest.approx(ref.statistic, rel=1e-10)
        assert p == pytest.approx(ref.pvalue, rel=1e-8)

    def test_exact_independence(self):
        y = np.repeat(np.arange(5), 10)
        x = np.tile([6, 17], 25)
        assert chi2_independence_pvalue(x, y)[1] == pytest.approx(1.0)


class TestPipeline:
    @pytest.fixture(scope="class")
    @staticmethod
    def pathological():
        ds = pathology_fixture(300, seed=0)
        return ds, paper_pipeline(ds, seed=0)

    def test_fixture_is_what_it_claims(self, pathological):
        ds, _ = pathological
        assert ds.frame["fragments"].nunique() == 1
        assert equal_value_fraction(ds.column("total_length"), ds.column("total_payload")) == 0.96
        ct = ds.frame.groupby("Target as numeric")["flow_proto"].value_counts().unstack()
        assert (ct[6] == ct[17]).all()

    def test_drop_list(self, pathological):
        _, (out, report) = pathological
        assert report.drops == EXPECTED_DROPS
        assert [c for c, _ in EXPECTED_DROPS if c in out.column_names] == []
        assert report.constants == ["fragments"]
        assert report.p_values["flow_proto"] > 0.05
        (a, b, eq, r), = report.near_duplicates
        assert {a, b} == {"total_length", "total_payload"} and eq == 0.96 and abs(r) > 0.95

    def test_report_invariants(self, pathological):
        _, (_, report) = pathological
        imp = np.array(list(report.importances.values()))
        assert imp.sum() == pytest.approx(1.0, abs=1e-9) and (imp >= 0).all()
        R = np.array(report.pearson["matrix"])
        assert np.allclose(R, R.T) and np.all(np.diag(R) == 1.0)
        assert all(0.0 <= p <= 1.0 for p in report.p_values.values())
        doc = report.to_dict()
        assert set(doc) == {"importances", "pearson", "p_values", "constants",
                            "near_duplicates", "drops"}

    def test_idempotent(self, pathological):
        _, (out, _) = pathological
        again, report2 = paper_pipeline(out, seed=0)
        assert again.equals(out)
        assert report2.drops == []

    def test_clean_data_only_unconditional_rules(self):
        ds = generate_synthetic(120, seed=4)
        # give fragments real, class-dependent values so rule 2 has nothing to catch
        ds = ds.with_column("fragments", ds.labels * 2 + (np.arange(len(ds)) % 2))
        _, report = paper_pipeline(ds, seed=0, importance_trees=10)
        assert {r for _, r in report.drops} == {"time_leak", "redundant"}

    def test_empty(self):
        empty = generate_synthetic(0)
        with pytest.raises(EmptyDataset):
            paper_pipeline(empty)


def test_degenerate_warnings_do_not_escape_pipeline():
    ds = pathology_fixture(60, seed=1)
    with warnings.catch_warnings():
        warnings.simplefilter("error", DegenerateVariance)
        paper_pipeline(ds, seed=1, importance_trees=5)
