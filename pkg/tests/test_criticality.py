import math

import numpy as np
import pytest

from proxmo.criticality import (
    direction_scan,
    h3_margin_scan,
    is_critical,
    residual,
    simplex_grid,
    smooth_case_check,
)
from proxmo.driver import solve
from proxmo.problem import clarke_generators

from .conftest import make_problem

C = 2 * math.sqrt(2) + 0.5


class TestResidual:
    def test_at_solution(self, ex31):
        cert = residual(ex31, [1.0])
        assert cert.residual == 0.0
        assert cert.descent_direction is None
        assert sum(cert.weights.values()) == pytest.approx(1.0, abs=1e-12)

    def test_at_two(self, ex31):
        cert = residual(ex31, [2.0])
        assert cert.residual == pytest.approx(0.25, abs=1e-12)
        assert cert.descent_direction.tolist() == [-1.0]
        np.testing.assert_allclose(cert.directional_upper_bounds, [-0.25, -(1 / math.sqrt(2) - 0.25)],
                                   atol=1e-15)
        assert cert.weights == {(0, 0): 1.0, (0, 1): 0.0}

    def test_at_half(self, ex31):
        cert = residual(ex31, [0.5])
        assert cert.residual == pytest.approx(2.0, abs=1e-12)
        assert cert.descent_direction.tolist() == [1.0]
        np.testing.assert_allclose(cert.directional_upper_bounds, [-2.0, 1 / math.sqrt(0.5) - 4],
                                   atol=1e-14)
        assert np.all(cert.directional_upper_bounds <= -cert.residual + 1e-12)

    def test_residual_equals_hull_norm(self, quad2d):
        rng = np.random.default_rng(1)
        for x in rng.uniform(-0.5, 1.5, size=(50, 2)):
            cert = residual(quad2d, x)
            assert cert.residual == pytest.approx(np.linalg.norm(cert.hull_point), abs=1e-12)
            if cert.descent_direction is not None:
                np.testing.assert_allclose(cert.descent_direction, -cert.hull_point / cert.residual)
                assert np.linalg.norm(cert.descent_direction) == pytest.approx(1.0)
                assert np.all(cert.directional_upper_bounds < 0)

    def test_tie_point(self):
        # max(x, -x) = |x| is minimized at 0, where the two generators cancel
        p = make_problem([[("x1", 1.0), ("-x1", 1.0)]])
        assert residual(p, [0.0], 0.0).residual == 0.0
        assert residual(p, [1e-9], 0.0).residual == pytest.approx(1.0)
        assert is_critical(p, [1e-9])  # default band sees both pieces

    def test_is_critical(self, ex31, quad2d):
        assert is_critical(ex31, [1.0], 1e-8)
        assert not is_critical(ex31, [2.0], 1e-8)
        assert is_critical(quad2d, [0.5, 0.5], 1e-8)


class TestSmoothCase:
    def test_examples(self, quad2d):
        assert smooth_case_check(quad2d, [0.5, 0.5])
        assert not smooth_case_check(quad2d, [0.0, 0.0])
        d = np.array([1.0, 1.0])
        assert np.all(np.array([[-2.0, 0.0], [0.0, -2.0]]) @ d < 0)
        assert smooth_case_check(make_problem([[("(x1 - 2)^2", 2.0)]]), [2.0])

    def test_rejects_multi_piece(self, ex31):
        with pytest.raises(ValueError):
            smooth_case_check(ex31, [1.0])

    def test_agrees_with_is_critical(self, quad2d):
        tri = make_problem([[("x1^2 + x2^2", 2.0)], [("(x1 - 1)^2 + x2^2", 2.0)],
                            [("x1^2 + (x2 - 1)^2", 2.0)]], nvars=2)
        rng = np.random.default_rng(5)
        pts = list(rng.uniform(-0.5, 1.5, size=(200, 2)))
        # points of the exact Pareto sets, so both verdicts occur
        pts += [np.array([t, 1 - t]) for t in np.linspace(0, 1, 11)]
        pts += [np.array([0.2, 0.3]), np.array([0.4, 0.4])]
        verdicts = set()
        for p in (quad2d, tri):
            for x in pts:
                a, b = smooth_case_check(p, x), is_critical(p, x, 1e-8)
                assert a == b
                verdicts.add(a)
        assert verdicts == {True, False}


class TestDirectionGrid:
    @pytest.mark.parametrize("name", ["example31", "quad2d"])
    def test_equivalence(self, name):
        from proxmo.problem import shipped_problem
        p = shipped_problem(name)
        rng = np.random.default_rng(11)
        pts = list(rng.uniform(p.work_lower, p.work_upper, size=(100, p.nvars)))
        if name == "quad2d":
            pts += [np.array([t, 1 - t]) for t in (0.0, 0.25, 0.5, 0.9)]
        else:
            pts += [np.array([1.0])]
        for x in pts:
            found = direction_scan(p, x)
            assert (found is not None) == (not is_critical(p, x, 1e-8))

    def test_found_direction_descends(self, quad2d):
        d = direction_scan(quad2d, [0.0, 0.0])
        gens = clarke_generators(quad2d, [0.0, 0.0])
        assert all(float(g[0] @ d) < 0 for g in gens)

    def test_rejects_high_dimension(self):
        p = make_problem([[("x1 + x2 + x3", 1.0)]], nvars=3)
        with pytest.raises(ValueError):
            direction_scan(p, [0, 0, 0])

    def test_soundness(self, quad2d):
        p = make_problem([[("x1^2 + x2", 2.0), ("x2^2 - x1", 2.0)], [("(x1 - 1)^2 + x2^2", 2.0)]],
                         nvars=2)
        rng = np.random.default_rng(9)
        for prob in (p, quad2d):
            for x in rng.uniform(-1, 1, size=(100, 2)):
                cert = residual(prob, x, 0.5)
                if cert.residual <= 0:
                    continue
                d = -cert.hull_point / cert.residual
                for comp in clarke_generators(prob, x, 0.5):
                    for g in comp:
                        assert float(g @ d) <= -cert.residual + 1e-8


class TestMarginScan:
    def test_simplex_grid(self):
        Z = simplex_grid(3, 4)
        assert len(Z) == 15
        np.testing.assert_allclose(Z.sum(axis=1), 1.0)
        assert simplex_grid(1, 5).tolist() == [[1.0]]

    def test_example_scan(self, ex31):
        grid = [[x] for x in np.concatenate([0.47 + 1e-3 * np.arange(100),
                                             2.0 + 1e-3 * np.arange(1, 721)])]
        rep = h3_margin_scan(ex31, C, grid, 1000)
        assert rep.min_margin > 0.135
        assert rep.min_margin > 1 / 2.72**2
        # the minimizing pair reproduces the margin
        g = [comp[0] for comp in clarke_generators(ex31, rep.argmin_x)]
        assert np.linalg.norm(rep.argmin_z @ np.vstack(g)) == pytest.approx(rep.min_margin, abs=1e-15)
        assert rep.samples + rep.skipped == len(grid)

    def test_single_point(self, ex31):
        rep = h3_margin_scan(ex31, C, [[2.5]], 1)
        assert rep.min_margin == pytest.approx((2.5 - 1) / 2.5**2, abs=1e-15)
        assert rep.min_margin == pytest.approx(0.24, abs=1e-15)
        assert rep.argmin_z.tolist() == [1.0, 0.0]
        assert rep.samples == 1

    def test_empty_effective_grid(self, ex31):
        with pytest.raises(ValueError):
            h3_margin_scan(ex31, C, [[1.0], [1.2], [1.5]], 10)
        with pytest.raises(ValueError):
            h3_margin_scan(ex31, C, [[0.05], [3.5]], 10)


class TestSolverOutput:
    def test_quad2d(self, quad2d):
        t = solve(quad2d, [0.0, 0.0])
        assert t.status == "converged"
        assert is_critical(quad2d, t.final_point, 10 * 1e-8)

    @pytest.mark.xfail(strict=True, reason="residual at the last iterate scales like lambda * e_j * "
                       "step_norm, about 3e-7 here, which exceeds 10 * tol_outer for every admissible lambda")
    def test_example31(self, ex31_traces, ex31):
        for t in ex31_traces.values():
            assert is_critical(ex31, t.final_point, 10 * 1e-8)

    def test_example31_loose(self, ex31_traces, ex31):
        for t in ex31_traces.values():
            assert residual(ex31, t.final_point).residual <= 1e-4
            assert t.records[-1].criticality_residual == residual(ex31, t.final_point).residual
