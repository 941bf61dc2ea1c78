"""Approximate Pareto-Clarke criticality tests and certificates.

A point ``x`` is Pareto-Clarke critical when no direction ``d`` makes every
``f_j°(x, d)`` negative. With ``f_j°(x, d) >= max_g <g, d>`` over the
eps-active piece gradients of component ``j``, min-max duality turns the test
into a projection: ``x`` passes iff ``0`` lies in the convex hull of all
active gradients of all components. The distance from ``0`` to that hull is
the *residual*; when positive, ``-hull_point / residual`` is a common descent
direction.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .hull import min_norm_point
from .problem import Problem, active_gradients, clarke_generators, dominated_by, evaluate

__all__ = [
    "CriticalityCertificate",
    "MarginScanReport",
    "residual",
    "is_critical",
    "smooth_case_check",
    "direction_scan",
    "h3_margin_scan",
    "simplex_grid",
]


@dataclass(frozen=True)
class CriticalityCertificate:
    residual: float
    hull_point: np.ndarray
    weights: dict  # (i, j) -> hull weight, 0-based piece/component indices
    descent_direction: np.ndarray | None = None
    directional_upper_bounds: np.ndarray | None = None


@dataclass(frozen=True)
class MarginScanReport:
    min_margin: float
    argmin_x: np.ndarray
    argmin_z: np.ndarray
    samples: int
    skipped: int = 0


def residual(p: Problem, x, eps_active: float | None = None) -> CriticalityCertificate:
    """Distance from the origin to the hull of all eps-active piece gradients."""
    indexed = active_gradients(p, x, eps_active)
    per_comp = [[g for _, g in comp] for comp in indexed]
    gens = [g for comp in per_comp for g in comp]
    tags = [(i, j) for j, comp in enumerate(indexed) for i, _ in comp]
    mn = min_norm_point(gens)
    weights = {tag: float(w) for tag, w in zip(tags, mn.weights)}

    direction = bounds = None
    if mn.norm > 0.0:
        d = -mn.point / mn.norm
        ub = np.array([max(float(g @ d) for g in comp_gens) for comp_gens in per_comp])
        if np.all(ub < 0):
            direction, bounds = d, ub
    return CriticalityCertificate(mn.norm, mn.point, weights, direction, bounds)


def is_critical(p: Problem, x, tol: float = 1e-8, eps_active: float | None = None) -> bool:
    return residual(p, x, eps_active).residual <= tol


def smooth_case_check(p: Problem, x, tol: float = 1e-8) -> bool:
    """Critical test for single-piece problems: no ``d`` with ``JF(x) d < 0``.

    Uses the rows of the Jacobian directly as hull generators.
    """
    if any(len(c.pieces) != 1 for c in p.components):
        raise ValueError("smooth_case_check needs exactly one piece per component")
    x = p.check_point(x)
    jac = np.vstack([c.pieces[0].expr.eval_grad(x).partials for c in p.components])
    return min_norm_point(list(jac)).norm <= tol


def direction_scan(p: Problem, x, n_angles: int = 4096, eps_active: float | None = None):
    """Brute-force search for a common descent direction (``n <= 2``).

    Tries ``d = -1, +1`` in one dimension or ``n_angles`` unit vectors on the
    circle in two, and returns the first ``d`` with every component's
    ``max_g <g, d>`` strictly negative, or ``None``.
    """
    if p.nvars == 1:
        dirs = np.array([[-1.0], [1.0]])
    elif p.nvars == 2:
        ang = 2.0 * np.pi * np.arange(n_angles) / n_angles
        dirs = np.stack([np.cos(ang), np.sin(ang)], axis=1)
    else:
        raise ValueError("direction_scan supports n <= 2")
    per_comp = clarke_generators(p, x, eps_active)
    worst = np.full(len(dirs), -np.inf)
    for comp_gens in per_comp:
        worst = np.maximum(worst, np.max(dirs @ np.vstack(comp_gens).T, axis=1))
    hits = np.flatnonzero(worst < 0)
    return dirs[hits[0]] if hits.size else None


def simplex_grid(m: int, steps: int) -> np.ndarray:
    """All points of the probability simplex in R^m with coordinates in (1/steps)Z."""
    rows = [
        c + (steps - sum(c),)
        for c in itertools.product(range(steps + 1), repeat=m - 1)
        if sum(c) <= steps
    ]
    return np.array(rows, dtype=float) / steps


def h3_margin_scan(
    p: Problem,
    c: float,
    x_grid: Sequence,
    z_grid_steps: int,
    eps_active: float | None = None,
) -> MarginScanReport:
    """Sampled lower estimate of the uniform stationarity margin.

    For every grid point ``x`` in ``S_F(F(ref)) \\ S_F(c e)`` and every ``z``
    on a simplex grid, measures ``|sum_j z_j g_j|`` minimised over choices of
    eps-active gradients ``g_j``. The normal-cone term is taken as zero
    (interior points). Grid points outside that set difference, or outside
    the domain, are skipped and counted.
    """
    ref_values = evaluate(p, p.reference_point)
    level = np.full(p.m, float(c))
    Z = simplex_grid(p.m, z_grid_steps)

    best = (np.inf, None, None)
    samples = skipped = 0
    for x in x_grid:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if not p.in_domain(x) or not dominated_by(p, x, ref_values) or dominated_by(p, x, level):
            skipped += 1
            continue
        samples += 1
        per_comp = clarke_generators(p, x, eps_active)
        for choice in itertools.product(*per_comp):
            M = np.vstack(choice)
            margins = np.linalg.norm(Z @ M, axis=1)
            k = int(np.argmin(margins))
            if margins[k] < best[0]:
                best = (float(margins[k]), x.copy(), Z[k].copy())
    if samples == 0:
        raise ValueError("no grid point lies in S_F(F(ref)) minus S_F(c e)")
    return MarginScanReport(best[0], best[1], best[2], samples, skipped)
