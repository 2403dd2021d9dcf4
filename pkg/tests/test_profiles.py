import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fourdvar import profiles, twin
from fourdvar.results import EnsembleResultRow, ResultTable


def row(index, method, best, initial, rmse=0.0):
    return EnsembleResultRow(index, method, 4, 4, best, best, 1.0, 1.0, rmse, "Budget", initial)


def table(spec):
    """spec: {index: (J0, {method: (best, rmse)})}"""
    rows = []
    for index, (J0, per) in spec.items():
        for m, (best, rmse) in per.items():
            rows.append(row(index, m, best, J0, rmse))
    return ResultTable(rows)


class TestTruth:
    def test_examples(self):
        assert profiles.select_truth([row(0, m, 5.0, 9.0) for m in "GN LS REG".split()]) == (5.0, "GN")
        rows = [row(0, "GN", 81.55, 100), row(0, "LS", 8.69, 100), row(0, "REG", 8.69, 100)]
        assert profiles.select_truth(rows) == (8.69, "LS")
        assert profiles.select_truth([row(0, "REG", 3.0, 9.0)]) == (3.0, "REG")

    def test_all_failed(self):
        assert profiles.select_truth([row(0, "GN", math.nan, 1.0)]) is None


class TestSolvedFlag:
    def test_examples(self):
        assert profiles.solved_flag(10.0, 100.0, 10.0, 1.0)
        assert not profiles.solved_flag(100.0, 100.0, 10.0, 0.5)
        # (10.09 - 10) / 90 = 0.001 exactly at the boundary
        assert profiles.solved_flag(10.09, 100.0, 10.0, 1e-3)
        assert not profiles.solved_flag(10.1, 100.0, 10.0, 1e-3)

    def test_degenerate_is_solved(self):
        assert profiles.solved_flag(5.0, 5.0, 5.0, 1e-9)

    def test_nonfinite_never_solved(self):
        assert not profiles.solved_flag(math.inf, 100.0, 10.0, 1.0)


class TestAccuracyProfile:
    def test_default_grid(self):
        curve = profiles.accuracy_profile(table({0: (10.0, {"GN": (1.0, 0), "LS": (1.0, 0)})}))
        assert len(curve.x_grid) == 501 and curve.x_grid[0] == 0 and curve.x_grid[-1] == 5.0
        assert np.all(curve.fraction_per_method["GN"] == 1.0)

    def test_counting(self):
        t = table({0: (100.0, {"GN": (50.0, 0), "LS": (10.0, 0)}),
                   1: (100.0, {"GN": (10.0, 0), "LS": (10.9, 0)})})
        curve = profiles.accuracy_profile(t, exponents=[0, 1, 2])
        np.testing.assert_allclose(curve.fraction_per_method["GN"], [1.0, 0.5, 0.5])
        np.testing.assert_allclose(curve.fraction_per_method["LS"], [1.0, 1.0, 0.5])

    def test_excluded_and_degenerate(self):
        t = table({0: (10.0, {"GN": (math.nan, 0), "LS": (math.nan, 0)}),
                   1: (5.0, {"GN": (5.0, 0), "LS": (5.0, 0)}),
                   2: (9.0, {"GN": (1.0, 0), "LS": (9.0, 0)})})
        curve = profiles.accuracy_profile(t, exponents=[0.5])
        assert curve.excluded == [0] and curve.degenerate == [1]
        assert curve.fraction_per_method["GN"][0] == pytest.approx(2 / 3)
        assert curve.fraction_per_method["LS"][0] == pytest.approx(1 / 3)

    def test_empty(self):
        with pytest.raises(ValueError):
            profiles.accuracy_profile(ResultTable([]))

    @given(st.lists(st.tuples(st.floats(1.0, 100.0), st.floats(0, 1), st.floats(0, 1)),
                    min_size=1, max_size=12), st.permutations(range(12)))
    def test_monotone_and_permutation_invariant(self, data, perm):
        spec = {i: (J0, {"GN": (J0 * a, 0), "LS": (J0 * b, 0)}) for i, (J0, a, b) in enumerate(data)}
        t = table(spec)
        curve = profiles.accuracy_profile(t)
        for f in curve.fraction_per_method.values():
            assert np.all(np.diff(f) <= 0)  # tightening tau_f never solves more
            assert np.all((f >= 0) & (f <= 1))
        order = [p for p in perm if p < len(data)]
        shuffled = ResultTable([r for i in order for r in t.rows if r.seed_index == i])
        again = profiles.accuracy_profile(shuffled)
        for m in curve.methods:
            np.testing.assert_array_equal(curve.fraction_per_method[m], again.fraction_per_method[m])
        # truth owner is solved at every tolerance on each realization
        for i, rows in t.by_realization().items():
            J_t, owner = profiles.select_truth(rows)
            assert profiles.solved_flag(J_t, rows[0].cost_initial, J_t, 1e-5)

    def test_fraction_at_tau_one(self):
        t = table({0: (10.0, {"GN": (12.0, 0), "LS": (2.0, 0)}),
                   1: (10.0, {"GN": (3.0, 0), "LS": (2.0, 0)})})
        curve = profiles.accuracy_profile(t)
        assert profiles.fraction_at(curve, 0.0) == {"GN": 0.5, "LS": 1.0}


class TestRmse:
    def test_examples(self):
        assert profiles.analysis_rmse([1, 2, 3], [1, 2, 3]) == 0.0
        assert profiles.analysis_rmse(np.ones(4), np.zeros(4)) == 1.0

    def test_componentwise(self, rng):
        a, b = rng.standard_normal(40), rng.standard_normal(40)
        expected = math.sqrt(sum((x - y) ** 2 for x, y in zip(a, b)) / 40)
        assert profiles.analysis_rmse(a, b) == pytest.approx(expected, rel=1e-14)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            profiles.analysis_rmse(np.zeros(3), np.zeros(4))

    def test_counting_oracle(self):
        t = table({0: (10.0, {"GN": (1.0, 0.1)}), 1: (10.0, {"GN": (1.0, 0.3)})})
        curve = profiles.rmse_profile(t, grid=[0.2, 0.4])
        np.testing.assert_allclose(curve.fraction_per_method["GN"], [0.5, 1.0])

    def test_unsolved_never_counted(self):
        t = table({0: (10.0, {"GN": (5.0, 0.0), "LS": (1.0, 3.0)})})
        curve = profiles.rmse_profile(t, tau_f=1e-3)
        assert np.all(curve.fraction_per_method["GN"] == 0)
        assert curve.fraction_per_method["LS"][-1] == 1.0 and len(curve.x_grid) == 200

    def test_zero_rmse_counted_everywhere(self):
        t = table({0: (10.0, {"GN": (1.0, 0.0)})})
        curve = profiles.rmse_profile(t, grid=[0.0, 1.0])
        np.testing.assert_array_equal(curve.fraction_per_method["GN"], [1.0, 1.0])

    def test_on_ensemble_monotone(self):
        t = twin.run_ensemble(twin.TwinConfig(n_r=10))
        curve = profiles.rmse_profile(t)
        for f in curve.fraction_per_method.values():
            assert np.all(np.diff(f) >= 0)
