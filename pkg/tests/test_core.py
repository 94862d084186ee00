import numpy as np
import pytest

from policyavg.core import (
    CostParams,
    Dataset,
    FoldPlan,
    PolicyEvalMatrix,
    WeightBox,
    critical_ratio,
    empirical_cost,
    newsvendor_cost,
)


class TestNewsvendorCost:
    def test_zero_iff_match(self):
        costs = CostParams(co=2.0, cu=7.0)
        assert newsvendor_cost(5.0, 5.0, costs) == 0.0
        assert newsvendor_cost(5.0, 5.0001, costs) > 0.0

    def test_underage(self):
        assert newsvendor_cost(3.0, 4.0, CostParams(1.0, 3.0)) == pytest.approx(3.0)

    def test_overage(self):
        assert newsvendor_cost(4.0, 3.0, CostParams(1.0, 3.0)) == pytest.approx(1.0)

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            newsvendor_cost(float("inf"), 1.0, CostParams(1.0, 1.0))

    def test_convex_piecewise_linear_in_q(self):
        # midpoint convexity on random triples
        rng = np.random.default_rng(5)
        costs = CostParams(0.7, 2.1)
        for _ in range(200):
            q1, q2, d = rng.normal(0, 10, size=3)
            mid = newsvendor_cost(0.5 * (q1 + q2), d, costs)
            avg = 0.5 * (newsvendor_cost(q1, d, costs) + newsvendor_cost(q2, d, costs))
            assert mid <= avg + 1e-12


class TestEmpiricalCost:
    def test_perfect_match(self):
        assert empirical_cost([5.0, 5.0], [5.0, 5.0], CostParams(1.0, 9.0)) == 0.0

    def test_mean_of_unit_costs(self):
        # costs {3, 1} average to 2
        assert empirical_cost([3.0, 4.0], [4.0, 3.0], CostParams(1.0, 3.0)) == pytest.approx(2.0)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            empirical_cost([1.0], [1.0, 2.0], CostParams(1.0, 1.0))

    def test_permutation_invariance(self):
        rng = np.random.default_rng(17)
        q = rng.normal(50, 5, size=40)
        d = rng.normal(50, 5, size=40)
        costs = CostParams(1.4, 0.6)
        base = empirical_cost(q, d, costs)
        perm = rng.permutation(40)
        assert empirical_cost(q[perm], d[perm], costs) == pytest.approx(base, abs=1e-12)


class TestCriticalRatio:
    def test_three_to_one(self):
        assert critical_ratio(CostParams(1.0, 3.0)) == pytest.approx(0.75)

    def test_symmetric(self):
        assert critical_ratio(CostParams(2.5, 2.5)) == pytest.approx(0.5)

    def test_staffing_costs(self):
        # overage 1/3.5, underage 2.5/3.5
        assert critical_ratio(CostParams(1 / 3.5, 2.5 / 3.5)) == pytest.approx(2.5 / 3.5)

    def test_scale_invariance(self):
        rng = np.random.default_rng(23)
        for _ in range(50):
            co, cu, scale = rng.uniform(0.1, 5.0, size=3)
            assert critical_ratio(CostParams(co * scale, cu * scale)) == pytest.approx(
                critical_ratio(CostParams(co, cu)), abs=1e-14
            )

    def test_positivity_enforced(self):
        with pytest.raises(ValueError):
            CostParams(0.0, 1.0)
        with pytest.raises(ValueError):
            CostParams(1.0, -2.0)


class TestDataset:
    def test_from_arrays_iid(self):
        ds = Dataset.from_arrays([1.0, 2.0, 3.0])
        assert ds.t == 3
        assert ds.covariate_dim == 0

    def test_minimum_rows(self):
        with pytest.raises(ValueError):
            Dataset.from_arrays([1.0])

    def test_rejects_negative_demand(self):
        with pytest.raises(ValueError):
            Dataset.from_arrays([1.0, -0.5])

    def test_covariate_shape_guard(self):
        with pytest.raises(ValueError):
            Dataset(np.array([1.0, 2.0]), np.zeros((3, 2)), np.arange(2))

    def test_drop_indices_keeps_positions(self):
        ds = Dataset.from_arrays([1.0, 2.0, 3.0, 4.0])
        reduced = ds.drop_indices([1])
        assert reduced.t == 3
        assert list(reduced.demands) == [1.0, 3.0, 4.0]
        assert list(reduced.positions) == [0, 2, 3]

    def test_immutable(self):
        ds = Dataset.from_arrays([1.0, 2.0])
        with pytest.raises(ValueError):
            ds.demands[0] = 9.0


class TestWeightBox:
    def test_valid(self):
        WeightBox(-1.0, 2.0)
        WeightBox(0.0, 1.0)

    def test_invalid(self):
        with pytest.raises(ValueError):
            WeightBox(0.5, 2.0)
        with pytest.raises(ValueError):
            WeightBox(-1.0, 0.9)


class TestFoldPlan:
    def test_leave_one_out(self):
        plan = FoldPlan.contiguous(4)
        assert plan.n_folds == 4
        assert plan.folds == ((0,), (1,), (2,), (3,))

    def test_batched_last_short(self):
        plan = FoldPlan.contiguous(7, batch_size=3)
        assert plan.folds == ((0, 1, 2), (3, 4, 5), (6,))

    def test_partition_enforced(self):
        with pytest.raises(ValueError):
            FoldPlan(1, ((0,), (0,), (2,)))

    def test_batch_sizes_enforced(self):
        with pytest.raises(ValueError):
            FoldPlan(2, ((0,), (1, 2)))


class TestPolicyEvalMatrix:
    def test_shapes_and_labels(self):
        m = PolicyEvalMatrix(np.ones((2, 3)), np.ones(3), ("a", "b"))
        assert m.m == 2 and m.t == 3

    def test_default_labels(self):
        m = PolicyEvalMatrix(np.ones((2, 3)), np.ones(3))
        assert m.candidate_labels == ("cand_0", "cand_1")

    def test_finite_required(self):
        with pytest.raises(ValueError):
            PolicyEvalMatrix(np.array([[np.nan, 1.0]]), np.ones(2))

    def test_demand_length_checked(self):
        with pytest.raises(ValueError):
            PolicyEvalMatrix(np.ones((2, 3)), np.ones(4))
