import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from fourdvar import assim, models
from fourdvar.assim import AssimilationProblem, ObsEntry, ObservationSet
from fourdvar.models import ModelSpec

from conftest import random_linear_spec


def make_problem(spec, rng, N=40, steps=None, comps=None, var_b=25.0, var_o=1.0, noise=True):
    x_ref = models.propagate(spec, rng.uniform(0, 1, spec.n), 500).states[-1]
    xb = x_ref + np.sqrt(var_b) * rng.standard_normal(spec.n)
    traj = models.propagate(spec, x_ref, N)
    steps = [N] if steps is None else steps
    comps = (0, 2) if comps is None else comps
    entries = []
    for i in steps:
        y = traj[i][list(comps)]
        if noise:
            y = y + np.sqrt(var_o) * rng.standard_normal(len(comps))
        entries.append(ObsEntry(i, comps, y, var_o))
    return AssimilationProblem(spec, N, xb, var_b, ObservationSet(entries)), x_ref


def oracle_residual(prob, v):
    """Straight-line re-implementation: propagate, subtract, scale."""
    x = prob.xb + np.sqrt(prob.var_b) * v
    states = [x]
    for _ in range(prob.N):
        states.append(models.step(prob.spec, states[-1]))
    out = list(v)
    for e in prob.obs.entries:
        for c, y in zip(e.components, e.values):
            out.append((y - states[e.step][c]) / np.sqrt(e.var_o))
    return np.array(out)


class TestObservations:
    def test_steps_must_increase(self):
        a = ObsEntry(2, (0,), [1.0], 1.0)
        with pytest.raises(ValueError):
            ObservationSet([a, ObsEntry(2, (1,), [1.0], 1.0)])

    @pytest.mark.parametrize("kwargs", [
        {"components": (), "values": []}, {"components": (0, 0), "values": [1, 2]},
        {"components": (0,), "values": [1, 2]}, {"components": (0,), "values": [1], "var_o": 0},
    ])
    def test_invalid_entry(self, kwargs):
        base = {"step": 1, "var_o": 1.0}
        base.update(kwargs)
        with pytest.raises(ValueError):
            ObsEntry(**base)

    def test_total_p(self):
        obs = ObservationSet([ObsEntry(1, (0, 2), [1, 2], 1.0), ObsEntry(3, (1,), [0], 1.0)])
        assert obs.p == 3 and obs.steps.tolist() == [1, 3]

    def test_problem_validation(self, l63):
        obs = ObservationSet([ObsEntry(5, (0,), [1.0], 1.0)])
        with pytest.raises(ValueError):
            AssimilationProblem(l63, 4, np.zeros(3), 1.0, obs)
        with pytest.raises(ValueError):
            AssimilationProblem(l63, 5, np.zeros(3), 0.0, obs)
        with pytest.raises(ValueError):
            AssimilationProblem(l63, 5, np.zeros(4), 1.0, obs)


class TestControlTransform:
    def test_examples(self, l63):
        prob = AssimilationProblem(l63, 1, np.zeros(3), 25.0, ObservationSet())
        np.testing.assert_array_equal(assim.control_to_state(prob, [1.0, 0, 0]), [5.0, 0, 0])
        xb = np.array([1.0, 2.0, 3.0])
        prob = AssimilationProblem(l63, 1, xb, 25.0, ObservationSet())
        np.testing.assert_array_equal(assim.control_to_state(prob, np.zeros(3)), xb)
        np.testing.assert_array_equal(assim.state_to_control(prob, xb), np.zeros(3))
        d = np.array([0.5, -1.0, 2.0])
        np.testing.assert_allclose(assim.state_to_control(prob, xb + 5.0 * d), d)

    @given(arrays(np.float64, 3, elements=st.floats(-1e3, 1e3)),
           st.floats(1e-4, 1e4))
    def test_roundtrip(self, v, var_b):
        prob = AssimilationProblem(ModelSpec("L63"), 1, np.array([1.0, -2.0, 3.0]), var_b,
                                   ObservationSet())
        back = assim.state_to_control(prob, assim.control_to_state(prob, v))
        np.testing.assert_allclose(back, v, rtol=1e-12, atol=1e-12 * (1 + np.abs(v).max()))


class TestResidualAndCost:
    def test_noise_free_truth(self, l63, rng):
        prob, x_ref = make_problem(l63, rng, noise=False)
        v = assim.state_to_control(prob, x_ref)
        r, _ = assim.residual(prob, v)
        np.testing.assert_allclose(r[3:], 0.0, atol=1e-12)
        np.testing.assert_allclose(r[:3], (x_ref - prob.xb) / 5.0, rtol=1e-14)
        assert assim.cost(prob, v) == pytest.approx(0.5 * np.sum(((x_ref - prob.xb) / 5.0) ** 2))

    def test_no_observations(self, l63):
        prob = AssimilationProblem(l63, 10, np.ones(3), 4.0, ObservationSet())
        r, _ = assim.residual(prob, np.zeros(3))
        np.testing.assert_array_equal(r, np.zeros(3))
        assert assim.cost(prob, np.zeros(3)) == 0.0

    @pytest.mark.parametrize("kind", ["L63", "L96"])
    def test_matches_oracle(self, kind, rng):
        spec = ModelSpec(kind)
        comps = (0, 2) if kind == "L63" else tuple(range(20))
        prob, _ = make_problem(spec, rng, steps=[10, 20, 40], comps=comps,
                               var_b=6.25 if kind == "L96" else 25.0)
        v = rng.standard_normal(spec.n)
        r_oracle = oracle_residual(prob, v)
        np.testing.assert_allclose(assim.residual(prob, v)[0], r_oracle, rtol=1e-13, atol=1e-13)
        assert assim.cost(prob, v) == pytest.approx(0.5 * np.sum(r_oracle ** 2), rel=1e-13)

    def test_component_order_irrelevant(self, l63, rng):
        prob, _ = make_problem(l63, rng, steps=[20, 40])
        flipped = ObservationSet([ObsEntry(e.step, e.components[::-1], e.values[::-1], e.var_o)
                                  for e in prob.obs])
        p2 = AssimilationProblem(l63, prob.N, prob.xb, prob.var_b, flipped)
        v = rng.standard_normal(3)
        assert assim.cost(p2, v) == pytest.approx(assim.cost(prob, v), rel=1e-15)

    def test_background_term_scaling(self, l63):
        xb = np.array([1.0, 2.0, 3.0])
        x0 = np.array([2.0, 0.0, 5.0])
        for var_b in (1.0, 4.0):
            prob = AssimilationProblem(l63, 3, xb, var_b, ObservationSet())
            expected = 0.5 * np.sum((x0 - xb) ** 2) / var_b
            assert assim.cost(prob, assim.state_to_control(prob, x0)) == pytest.approx(expected)


class TestJacobian:
    def test_no_obs_identity(self, l63):
        prob = AssimilationProblem(l63, 5, np.ones(3), 2.0, ObservationSet())
        np.testing.assert_array_equal(assim.jacobian(prob, np.zeros(3)), np.eye(3))
        np.testing.assert_array_equal(assim.gn_hessian(prob, np.zeros(3)), np.eye(3))

    def test_step_zero_block(self, l63):
        obs = ObservationSet([ObsEntry(0, (0, 2), [0.0, 0.0], 4.0)])
        prob = AssimilationProblem(l63, 3, np.ones(3), 9.0, obs)
        J = assim.jacobian(prob, np.zeros(3))
        np.testing.assert_array_equal(J[3:], -(3.0 / 2.0) * np.eye(3)[[0, 2]])

    def test_linear_model_matches_matrix_power(self, rng):
        spec = random_linear_spec(rng, dt=0.05)
        obs = ObservationSet([ObsEntry(4, (1,), [0.3], 0.25)])
        prob = AssimilationProblem(spec, 4, np.zeros(3), 4.0, obs)
        P = models.step_tlm(spec, np.zeros(3))
        J = assim.jacobian(prob, rng.standard_normal(3))
        np.testing.assert_allclose(J[3], -(2.0 / 0.5) * np.linalg.matrix_power(P, 4)[1],
                                   rtol=1e-12)

    @pytest.mark.parametrize("kind", ["L63", "L96"])
    def test_columns_match_fd(self, kind, rng):
        spec = ModelSpec(kind)
        comps = (0, 2) if kind == "L63" else tuple(range(20))
        prob, _ = make_problem(spec, rng, comps=comps, var_b=1.0)
        v = 0.3 * rng.standard_normal(spec.n)
        J = assim.jacobian(prob, v)
        h = 1e-6
        for j in range(spec.n):
            e = np.zeros(spec.n)
            e[j] = h
            col = (assim.residual(prob, v + e)[0] - assim.residual(prob, v - e)[0]) / (2 * h)
            assert np.linalg.norm(col - J[:, j]) <= 1e-5 * np.linalg.norm(J[:, j])


class TestGradient:
    def test_no_obs_equals_v(self, l63, rng):
        prob = AssimilationProblem(l63, 5, np.ones(3), 2.0, ObservationSet())
        v = rng.standard_normal(3)
        np.testing.assert_array_equal(assim.gradient(prob, v), v)

    def test_zero_at_interpolating_minimum(self, l63, rng):
        prob, x_ref = make_problem(l63, rng, noise=False)
        xb_prob = AssimilationProblem(l63, prob.N, x_ref, prob.var_b, prob.obs)
        np.testing.assert_allclose(assim.gradient(xb_prob, np.zeros(3)), 0.0, atol=1e-11)

    @pytest.mark.parametrize("kind", ["L63", "L96"])
    def test_central_differences(self, kind, rng):
        spec = ModelSpec(kind)
        comps = (0, 2) if kind == "L63" else tuple(range(20))
        prob, _ = make_problem(spec, rng, comps=comps, var_b=25.0 if kind == "L63" else 6.25)
        for _ in range(3):
            v = rng.standard_normal(spec.n)
            g = assim.gradient(prob, v)
            h = 1e-6
            g_fd = np.array([(assim.cost(prob, v + h * e) - assim.cost(prob, v - h * e)) / (2 * h)
                             for e in np.eye(spec.n)])
            assert np.linalg.norm(g_fd - g) <= 1e-6 * np.linalg.norm(g)

    def test_two_code_paths_agree(self, l63, rng):
        prob, _ = make_problem(l63, rng)
        v = rng.standard_normal(3)
        r, _ = assim.residual(prob, v)
        np.testing.assert_allclose(assim.gradient(prob, v), assim.jacobian(prob, v).T @ r,
                                   rtol=1e-12, atol=1e-12)


class TestHessian:
    def test_symmetric_and_product(self, l96, rng):
        prob, _ = make_problem(l96, rng, comps=tuple(range(20)), var_b=6.25, var_o=0.25)
        v = rng.standard_normal(40)
        S = assim.gn_hessian(prob, v)
        assert np.abs(S - S.T).max() <= 1e-12
        J = assim.jacobian(prob, v)
        np.testing.assert_allclose(S, J.T @ J, rtol=1e-12, atol=1e-12 * np.abs(S).max())

    @given(st.integers(0, 2**32 - 1))
    def test_full_rank(self, seed):
        rng = np.random.default_rng(seed)
        prob, _ = make_problem(ModelSpec("L63"), rng, steps=[20, 40])
        J = assim.jacobian(prob, rng.standard_normal(3))
        assert np.linalg.svd(J, compute_uv=False)[-1] >= 1 - 1e-12

    def test_gn_step_is_descent(self, l63, rng):
        prob, _ = make_problem(l63, rng)
        v = rng.standard_normal(3)
        g = assim.gradient(prob, v)
        s = np.linalg.solve(assim.gn_hessian(prob, v), -g)
        assert g @ s < 0


class TestConditionNumber:
    def test_examples(self):
        assert assim.condition_number(np.eye(4)) == 1.0
        assert assim.condition_number(np.diag([1.0, 4.0])) == pytest.approx(4.0)

    def test_constructed_spectrum(self, rng):
        Q, _ = np.linalg.qr(rng.standard_normal((6, 6)))
        D = np.array([1.0, 2.0, 3.5, 10.0, 40.0, 123.0])
        S = Q @ np.diag(D) @ Q.T
        assert assim.condition_number(0.5 * (S + S.T)) == pytest.approx(123.0, rel=1e-10)

    def test_rejects_bad_input(self):
        with pytest.raises(ValueError):
            assim.condition_number(np.array([[1.0, 2.0], [0.0, 1.0]]))
        with pytest.raises(ValueError):
            assim.condition_number(np.diag([1.0, -1.0]))
