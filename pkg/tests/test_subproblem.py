import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from proxmo.hull import min_norm_point
from proxmo.problem import evaluate
from proxmo.subproblem import (
    ProxInstance,
    scalarized_value,
    scalarized_value_and_generators,
    solve_inner,
    strong_convexity_probe,
    strong_convexity_violations,
)

from .conftest import make_problem

E2 = np.array([1.0, 1.0]) / math.sqrt(2)


def phi_grid_ex31(center, lam, e, grid):
    """Closed-form scalarized objective of the shipped example on a 1-D grid."""
    f1 = np.log(grid) + 1 / grid
    f2 = 2 * np.sqrt(grid) + 1 / grid
    c1 = math.log(center) + 1 / center
    c2 = 2 * math.sqrt(center) + 1 / center
    return np.maximum((f1 - c1) / e[0], (f2 - c2) / e[1]) + 0.5 * lam * (grid - center) ** 2


class TestInstance:
    def test_rejects_bad_weights(self, ex31):
        with pytest.raises(ValueError):
            ProxInstance(ex31, [2.0], 30.0, [0.6, 0.6])
        with pytest.raises(ValueError):
            ProxInstance(ex31, [2.0], 30.0, [1.0, 0.0])
        with pytest.raises(ValueError):
            ProxInstance(ex31, [2.0], 0.0, E2)
        with pytest.raises(ValueError):
            ProxInstance(ex31, [0.05], 30.0, E2)

    def test_modulus(self, ex31):
        inst = ProxInstance(ex31, [2.0], 42.0, E2)
        assert inst.modulus() == pytest.approx(42.0 / math.sqrt(2) - 27.0)
        assert inst.above_threshold()
        assert not ProxInstance(ex31, [2.0], 30.0, E2).above_threshold()


class TestScalarized:
    def test_at_center(self, ex31):
        inst = ProxInstance(ex31, [2.0], 30.0, E2)
        val, gens, tags = scalarized_value_and_generators(inst, [2.0])
        assert val == 0.0
        assert tags == [(0, 0), (0, 1)]
        assert gens[0][0] == pytest.approx(math.sqrt(2) * 0.25, abs=1e-15)
        assert gens[1][0] == pytest.approx(math.sqrt(2) * (1 / math.sqrt(2) - 0.25), abs=1e-15)
        assert [round(g[0], 5) for g in gens] == [0.35355, 0.64645]

    def test_single_smooth(self):
        p = make_problem([[("sin(x1) + x2^2", 3.0)]], nvars=2)
        inst = ProxInstance(p, [0.1, 0.2], 5.0, [1.0])
        y = np.array([0.4, -0.3])
        _, gens, _ = scalarized_value_and_generators(inst, y)
        assert len(gens) == 1
        np.testing.assert_allclose(gens[0], [math.cos(0.4), -0.6] + 5.0 * (y - [0.1, 0.2]), atol=1e-15)

    def test_quadratic_hand_arithmetic(self):
        p = make_problem([[("x1^2", 2.0)]])
        inst = ProxInstance(p, [0.0], 4.0, [1.0])
        val, gens, _ = scalarized_value_and_generators(inst, [1.0])
        assert val == 3.0
        assert gens[0].tolist() == [6.0]

    def test_value_matches_closed_form(self, ex31):
        inst = ProxInstance(ex31, [2.0], 30.0, E2)
        for y in np.linspace(0.5, 2.7, 23):
            assert scalarized_value(inst, [y]) == pytest.approx(
                phi_grid_ex31(2.0, 30.0, E2, np.array([y]))[0], abs=1e-13)


class TestSolveInner:
    def test_center_two(self, ex31):
        inst = ProxInstance(ex31, [2.0], 30.0, E2)
        r = solve_inner(inst, 1e-8, 500)
        assert r.converged and r.final_stationarity <= 1e-8
        assert 1.0 < r.next[0] < 2.0
        assert np.all(r.objective_gap_vector > 0)
        grid = np.arange(1.0, 2.0, 1e-6)
        oracle = grid[np.argmin(phi_grid_ex31(2.0, 30.0, E2, grid))]
        assert r.next[0] == pytest.approx(oracle, abs=2e-6)
        assert r.phi_value < 0
        assert np.linalg.norm(r.weights_z) == pytest.approx(1.0, abs=1e-10)
        assert np.all(r.weights_z >= 0)

    def test_closed_form_one_sixth(self):
        p = make_problem([[("(x1 - 1)^2", 2.0)]])
        r = solve_inner(ProxInstance(p, [0.0], 10.0, [1.0]), 1e-10, 500)
        assert r.next[0] == pytest.approx(1 / 6, abs=1e-10)
        assert r.weights_z.tolist() == [1.0]

    def test_fixed_point(self, ex31):
        inst = ProxInstance(ex31, [1.0], 42.85, E2)
        r = solve_inner(inst, 1e-8, 500)
        assert r.next.tolist() == [1.0]
        assert r.final_stationarity <= 1e-12
        assert r.inner_iterations == 0

    def test_uniqueness_from_perturbed_start(self, ex31):
        inst = ProxInstance(ex31, [2.0], 42.85, E2)
        a = solve_inner(inst, 1e-10, 500)
        b = solve_inner(inst, 1e-10, 500, start=[1.9])
        c = solve_inner(inst, 1e-10, 500, start=[2.05])
        assert b.next[0] == pytest.approx(a.next[0], abs=1e-6)
        assert c.next[0] == pytest.approx(a.next[0], abs=1e-6)

    def test_prox_gradient_identity(self, quad2d):
        p = make_problem([[("(x1 - 1)^2 + 3*x2^2 + sin(x1*x2)", 10.0)]], nvars=2)
        lam, center = 12.0, np.array([0.3, -0.4])
        r = solve_inner(ProxInstance(p, center, lam, [1.0]), 1e-9, 500)
        g = p.components[0].pieces[0].expr.eval_grad(r.next).partials
        assert np.linalg.norm(g + lam * (r.next - center)) <= 1e-9

    def test_max_inner_exhausted(self, ex31):
        r = solve_inner(ProxInstance(ex31, [2.5], 42.85, E2), 1e-14, 1)
        assert not r.converged and r.inner_iterations == 1

    def test_quad2d_step_matches_scalarized_grid(self, quad2d):
        e = E2
        inst = ProxInstance(quad2d, [0.0, 0.0], 3.0, e)
        r = solve_inner(inst, 1e-10, 500)
        # symmetric start: the step lands on the diagonal
        assert r.next[0] == pytest.approx(r.next[1], abs=1e-9)
        t = np.linspace(0, 1, 200001)
        f = (t - 1) ** 2 + t**2
        vals = (f - 1) / e[0] + 0.5 * 3.0 * 2 * t**2
        assert r.next[0] == pytest.approx(t[np.argmin(vals)], abs=1e-5)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.5, 2.7), st.floats(0.05, 0.95))
def test_descent_and_monotone_inner(center, w):
    from proxmo.problem import shipped_problem
    p = shipped_problem("example31")
    e = np.array([w, math.sqrt(1 - w * w)])
    lam = 1.01 * 27.0 / min(e)
    inst = ProxInstance(p, [center], lam, e)
    r = solve_inner(inst, 1e-9, 500)
    assert r.converged
    assert r.phi_value <= 0.0
    hist = np.array(r.phi_history)
    noise = 8 * np.finfo(float).eps * (1 + np.max(np.abs(inst.center_values) / e))
    assert np.all(np.diff(hist) <= noise)
    assert np.all(evaluate(p, r.next) <= evaluate(p, [center]) + 1e-10)
    assert np.all(r.objective_gap_vector >= -1e-10)
    assert np.linalg.norm(r.weights_z) == pytest.approx(1.0, abs=1e-10)
    if r.phi_value == 0.0:
        assert r.next[0] == pytest.approx(center, abs=1e-8)
    _, gens, _ = scalarized_value_and_generators(inst, r.next)
    assert min_norm_point(gens).norm <= 1e-9


class TestStrongConvexity:
    def test_default_lambda(self, ex31):
        lam = 1.01 * 27 / (0.9 / math.sqrt(2))
        inst = ProxInstance(ex31, ex31.reference_point, lam, E2)
        assert strong_convexity_violations(inst, 1000, 0) == 0
        assert strong_convexity_probe(inst, 1000, 1)

    def test_concave_negative_control(self):
        # ln is concave with curvature -1/x^2 < -2.7 on (0.45, 0.6); lam = 0.01 * L is far below it
        p = make_problem([[("ln(x1)", 5.0)]], lower=[0.1], ref=[0.5], work=([0.45], [0.6]))
        inst = ProxInstance(p, [0.5], 0.05, [1.0])
        assert strong_convexity_violations(inst, 1000, 0) >= 1
        assert not strong_convexity_probe(inst, 1000, 0)

    @pytest.mark.parametrize("lam", [1e-3, 0.5, 40.0])
    def test_linear_piece(self, lam):
        p = make_problem([[("3*x1 - 2", 1.0)]])
        assert strong_convexity_probe(ProxInstance(p, [0.0], lam, [1.0]), 500, 3)
