"""One proximal step, solved through a Tchebycheff scalarization.

For a center ``xk``, parameter ``lam`` and unit weight vector ``e`` the step
minimizes

    phi(y) = max_j (f_j(y) - f_j(xk)) / e_j + (lam / 2) |y - xk|^2

which is a finite max of smooth pieces
``(f_ij(y) - f_j(xk)) / e_j + (lam / 2) |y - xk|^2``. When ``lam * e_j``
exceeds every gradient-Lipschitz constant of component ``j`` the function is
strongly convex, so the minimizer is unique. ``phi(xk) = 0``, hence the
minimizer satisfies ``F(y) <= F(xk)`` componentwise with no explicit
constraint handling.

The inner solver is eps-active steepest descent: the search direction is the
negative min-norm element of the hull of eps-active piece gradients, with
Armijo backtracking.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .expr import DomainError
from .hull import min_norm_point
from .problem import OutOfDomainError, Problem, default_eps_active, evaluate, max_lipschitz

__all__ = [
    "ProxInstance",
    "ProxStepResult",
    "scalarized_value_and_generators",
    "scalarized_value",
    "solve_inner",
    "strong_convexity_violations",
    "strong_convexity_probe",
]

ARMIJO_C1 = 1e-4
EPS_WIDEN = 10.0
EPS_MAX = 1e-2
_MAX_HALVINGS = 60


@dataclass(frozen=True, eq=False)
class ProxInstance:
    problem: Problem
    center: np.ndarray
    lam: float
    weights_e: np.ndarray
    center_values: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        center = self.problem.check_point(self.center).copy()
        e = np.asarray(self.weights_e, dtype=float).reshape(-1).copy()
        if e.shape[0] != self.problem.m:
            raise ValueError(f"weights_e must have length m={self.problem.m}")
        if abs(np.linalg.norm(e) - 1.0) > 1e-12:
            raise ValueError(f"weights_e must have unit norm, got {np.linalg.norm(e)!r}")
        if np.any(e <= 0):
            raise ValueError("weights_e must be strictly positive")
        if not self.lam > 0:
            raise ValueError("lam must be positive")
        for arr in (center, e):
            arr.setflags(write=False)
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "weights_e", e)
        fc = evaluate(self.problem, center)
        fc.setflags(write=False)
        object.__setattr__(self, "center_values", fc)

    def modulus(self) -> float:
        """``min_j (lam * e_j - max_i L_ij)``; positive iff the threshold holds."""
        return min(
            self.lam * self.weights_e[j] - max_lipschitz(self.problem, j)
            for j in range(self.problem.m)
        )

    def above_threshold(self) -> bool:
        return self.modulus() > 0


@dataclass(frozen=True)
class ProxStepResult:
    next: np.ndarray
    weights_z: np.ndarray
    inner_iterations: int
    final_stationarity: float
    objective_gap_vector: np.ndarray
    converged: bool = True
    phi_value: float = 0.0
    phi_history: tuple = ()
    hull_weights: dict = field(default_factory=dict)


def _pieces_at(inst: ProxInstance, y: np.ndarray):
    """Affine-shifted piece values (without the quadratic) and raw gradients."""
    p = inst.problem
    y = p.check_point(y)
    vals, grads, tags = [], [], []
    for j, comp in enumerate(p.components):
        ej = inst.weights_e[j]
        base = inst.center_values[j]
        for i, piece in enumerate(comp.pieces):
            d = piece.expr.eval_grad(y)
            vals.append((d.value - base) / ej)
            grads.append(d.partials / ej)
            tags.append((i, j))
    return y, np.array(vals), grads, tags


def scalarized_value(inst: ProxInstance, y) -> float:
    y, vals, _, _ = _pieces_at(inst, y)
    diff = y - inst.center
    return float(np.max(vals) + 0.5 * inst.lam * (diff @ diff))


def scalarized_value_and_generators(inst: ProxInstance, y, eps_active: float | None = None):
    """Value of the scalarized prox objective and its eps-active generators.

    Returns
    -------
    value : float
    generators : list of ndarray
        ``grad f_ij(y) / e_j + lam (y - xk)`` for every eps-active ``(i, j)``.
    piece_tags : list of (i, j)
        Piece and component index of each generator (0-based).
    """
    y, vals, grads, tags = _pieces_at(inst, y)
    diff = y - inst.center
    top = float(np.max(vals))
    tol = default_eps_active(top) if eps_active is None else float(eps_active)
    shift = inst.lam * diff
    active = np.flatnonzero(vals >= top - tol)
    gens = [grads[a] + shift for a in active]
    return top + 0.5 * inst.lam * float(diff @ diff), gens, [tags[a] for a in active]


def _recover_z(inst: ProxInstance, tags, weights) -> tuple[np.ndarray, dict]:
    m = inst.problem.m
    z = np.zeros(m)
    alpha = {}
    for (i, j), w in zip(tags, weights):
        z[j] += w
        alpha[(i, j)] = float(w)
    # per-component weights normalised within each component
    for (i, j) in list(alpha):
        if z[j] > 0:
            alpha[(i, j)] /= z[j]
    z = z / inst.weights_e
    return z / np.linalg.norm(z), alpha


def solve_inner(
    inst: ProxInstance,
    tol_inner: float = 1e-8,
    max_inner: int = 500,
    start=None,
    eps_active: float | None = None,
) -> ProxStepResult:
    """Minimize the scalarized prox objective by eps-active steepest descent.

    Stops once the min-norm element of the eps-active generator hull has norm
    at most ``tol_inner``. If the line search stalls the active band is widened
    tenfold, up to ``EPS_MAX``; a stall at the widest band or running out of
    iterations returns the best point with ``converged=False``.
    """
    p = inst.problem
    y = inst.center.copy() if start is None else p.check_point(start).copy()
    eps = eps_active
    phi, gens, tags = scalarized_value_and_generators(inst, y, eps)
    history = [phi]
    converged = False
    it = 0
    stationarity = np.inf
    weights = None
    # curvature of phi is lam plus a perturbation smaller than lam
    t_init = 1.0 / inst.lam
    scale = float(np.max(np.abs(inst.center_values) / inst.weights_e))
    noise = 8.0 * np.finfo(float).eps * (1.0 + scale)

    while True:
        mn = min_norm_point(gens)
        stationarity, weights = mn.norm, mn.weights
        if stationarity <= tol_inner:
            converged = True
            break
        if it >= max_inner:
            break
        it += 1
        d = -mn.point
        slope = float(d @ d)
        t = t_init
        accepted = None
        for _ in range(_MAX_HALVINGS):
            trial = y + t * d
            if p.in_domain(trial):
                try:
                    val, trial_gens, trial_tags = scalarized_value_and_generators(inst, trial, eps)
                except DomainError:
                    val = np.inf
                if val <= phi - ARMIJO_C1 * t * slope:
                    accepted = (trial, val, trial_gens, trial_tags)
                    break
                # below rounding resolution of phi: require halved stationarity instead
                if val <= phi + noise and min_norm_point(trial_gens).norm <= 0.5 * stationarity:
                    accepted = (trial, val, trial_gens, trial_tags)
                    break
            t *= 0.5
        if accepted is None:
            current = default_eps_active(phi) if eps is None else eps
            if current >= EPS_MAX:
                break
            eps = min(current * EPS_WIDEN, EPS_MAX)
            phi, gens, tags = scalarized_value_and_generators(inst, y, eps)
            continue
        y, phi, gens, tags = accepted
        if eps != eps_active:
            eps = eps_active
            phi, gens, tags = scalarized_value_and_generators(inst, y, eps)
        history.append(phi)

    z, alpha = _recover_z(inst, tags, weights)
    gap = inst.center_values - evaluate(p, y)
    return ProxStepResult(
        next=y,
        weights_z=z,
        inner_iterations=it,
        final_stationarity=float(stationarity),
        objective_gap_vector=gap,
        converged=converged,
        phi_value=float(phi),
        phi_history=tuple(history),
        hull_weights=alpha,
    )


def strong_convexity_violations(inst: ProxInstance, trials: int = 1000, seed=0) -> int:
    """Count sampled failures of the strong-convexity secant inequality.

    For ``x, y`` uniform in the problem's working region and ``t`` uniform in
    (0, 1), checks

        phi((1-t)x + t y) <= (1-t) phi(x) + t phi(y) - (nu/2) t (1-t) |x-y|^2

    with ``nu = max(modulus, 0)``. A non-positive modulus still demands
    plain convexity.
    """
    p = inst.problem
    rng = np.random.default_rng(seed)
    nu = max(inst.modulus(), 0.0)
    lo, hi = p.work_lower, p.work_upper
    bad = 0
    for _ in range(trials):
        x = rng.uniform(lo, hi)
        y = rng.uniform(lo, hi)
        t = rng.uniform(0.0, 1.0)
        try:
            mid = scalarized_value(inst, (1 - t) * x + t * y)
            rhs = (1 - t) * scalarized_value(inst, x) + t * scalarized_value(inst, y)
        except (DomainError, OutOfDomainError):
            continue
        rhs -= 0.5 * nu * t * (1 - t) * float((x - y) @ (x - y))
        if mid > rhs + 1e-8:
            bad += 1
    return bad


def strong_convexity_probe(inst: ProxInstance, trials: int = 1000, seed=0) -> bool:
    return strong_convexity_violations(inst, trials, seed) == 0
