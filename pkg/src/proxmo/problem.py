"""Multiobjective problems whose components are maxima of smooth pieces.

``F = (f_1, ..., f_m)`` with ``f_j(x) = max_i f_ij(x)``. Components and pieces
are indexed from 0 in this API. The domain is an open box; an optional
*working region* (a finite box) marks where the supplied gradient-Lipschitz
constants are valid and is the sampling region for property checks.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Mapping, Sequence

import jsonschema
import numpy as np

from .expr import Expression, ExpressionError, parse

__all__ = [
    "ProblemError",
    "OutOfDomainError",
    "SmoothPiece",
    "Component",
    "Problem",
    "ActiveSet",
    "load_problem",
    "load_problem_file",
    "shipped_problem",
    "SHIPPED_PROBLEMS",
    "evaluate",
    "piece_values",
    "default_eps_active",
    "active_pieces",
    "active_gradients",
    "clarke_generators",
    "dominated_by",
    "strictly_dominated_by",
    "weakly_leq",
    "strictly_less",
    "max_lipschitz",
    "estimate_lipschitz",
]

SHIPPED_PROBLEMS = ("example31", "quad2d")


class ProblemError(ValueError):
    """Invalid problem document."""


class OutOfDomainError(ValueError):
    """A point lies outside the open domain box."""


_BOUND = {"oneOf": [{"type": "number"}, {"enum": ["inf", "-inf", "+inf"]}]}
_BOX = {
    "type": "object",
    "required": ["lower", "upper"],
    "properties": {
        "lower": {"type": "array", "items": _BOUND, "minItems": 1},
        "upper": {"type": "array", "items": _BOUND, "minItems": 1},
    },
}
PROBLEM_SCHEMA = {
    "type": "object",
    "required": ["nvars", "domain", "reference_point", "components"],
    "properties": {
        "name": {"type": "string"},
        "nvars": {"type": "integer", "minimum": 1},
        "domain": _BOX,
        "working_region": _BOX,
        "reference_point": {"type": "array", "items": {"type": "number"}, "minItems": 1},
        "components": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["pieces"],
                "properties": {
                    "name": {"type": "string"},
                    "pieces": {
                        "type": "array",
                        "minItems": 1,
                        "items": {
                            "type": "object",
                            "required": ["expr", "lipschitz_grad"],
                            "properties": {
                                "expr": {"type": "string"},
                                "lipschitz_grad": {"type": "number"},
                                "label": {"type": "string"},
                            },
                        },
                    },
                },
            },
        },
    },
}


@dataclass(frozen=True)
class SmoothPiece:
    expr: Expression
    lipschitz_grad: float
    label: str = ""

    def __post_init__(self):
        L = self.lipschitz_grad
        if not (math.isfinite(L) and L > 0):
            raise ProblemError(f"piece {self.label!r}: lipschitz_grad must be positive and finite")


@dataclass(frozen=True)
class Component:
    pieces: tuple[SmoothPiece, ...]
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "pieces", tuple(self.pieces))
        if not self.pieces:
            raise ProblemError(f"component {self.name!r} has no pieces")


@dataclass(frozen=True)
class ActiveSet:
    component_index: int
    piece_indices: tuple[int, ...]
    tolerance: float


@dataclass(frozen=True, eq=False)
class Problem:
    """Immutable multiobjective problem ``F = (max_i f_i1, ..., max_i f_im)``."""

    components: tuple[Component, ...]
    nvars: int
    lower: np.ndarray
    upper: np.ndarray
    reference_point: np.ndarray
    name: str = ""
    work_lower: np.ndarray | None = None
    work_upper: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "components", tuple(self.components))
        if not self.components:
            raise ProblemError("problem needs at least one component")
        n = self.nvars
        for attr in ("lower", "upper", "reference_point"):
            arr = np.array(getattr(self, attr), dtype=float).reshape(-1)
            if arr.shape[0] != n:
                raise ProblemError(f"{attr} has length {arr.shape[0]}, expected nvars={n}")
            arr.setflags(write=False)
            object.__setattr__(self, attr, arr)
        if np.any(self.lower >= self.upper):
            raise ProblemError("domain lower bound must be below upper bound")
        for comp in self.components:
            for piece in comp.pieces:
                if piece.expr.nvars != n:
                    raise ProblemError(f"piece {piece.label!r} has nvars={piece.expr.nvars}")
        ref = self.reference_point
        if np.any(ref < self.lower) or np.any(ref > self.upper):
            raise ProblemError("reference_point lies outside the closed domain box")

        lo, hi = self.work_lower, self.work_upper
        if lo is None or hi is None:
            # clip infinite domain sides to a unit margin around the reference point
            lo = np.where(np.isfinite(self.lower), self.lower, ref - 1.0)
            hi = np.where(np.isfinite(self.upper), self.upper, ref + 1.0)
        lo = np.array(lo, dtype=float).reshape(-1)
        hi = np.array(hi, dtype=float).reshape(-1)
        if lo.shape[0] != n or hi.shape[0] != n:
            raise ProblemError("working_region must have nvars bounds")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))) or np.any(lo >= hi):
            raise ProblemError("working_region must be a finite non-empty box")
        if np.any(lo < self.lower) or np.any(hi > self.upper):
            raise ProblemError("working_region must lie inside the domain box")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "work_lower", lo)
        object.__setattr__(self, "work_upper", hi)

    @property
    def m(self) -> int:
        return len(self.components)

    def in_domain(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x > self.lower) and np.all(x < self.upper))

    def check_point(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float).reshape(-1)
        if x.shape[0] != self.nvars:
            raise ValueError(f"expected {self.nvars} coordinates, got {x.shape[0]}")
        if not self.in_domain(x):
            raise OutOfDomainError(f"point {x.tolist()} outside the open domain box")
        return x

    def pieces(self):
        """Yield ``(j, i, piece)`` over every smooth piece."""
        for j, comp in enumerate(self.components):
            for i, piece in enumerate(comp.pieces):
                yield j, i, piece


# --------------------------------------------------------------------------
# loading


def _bound(v) -> float:
    if isinstance(v, str):
        return math.inf if v in ("inf", "+inf") else -math.inf
    return float(v)


def load_problem(document: str | Mapping) -> Problem:
    """Build a validated :class:`Problem` from JSON text or a parsed mapping."""
    if isinstance(document, (str, bytes)):
        try:
            document = json.loads(document)
        except json.JSONDecodeError as exc:
            raise ProblemError(f"invalid JSON: {exc}") from None
    try:
        jsonschema.validate(document, PROBLEM_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ProblemError(f"schema violation at {where}: {exc.message}") from None

    n = document["nvars"]
    components = []
    for j, comp in enumerate(document["components"]):
        pieces = []
        for i, raw in enumerate(comp["pieces"]):
            label = raw.get("label", f"f{i + 1}{j + 1}")
            try:
                expr = parse(raw["expr"], n)
            except ExpressionError as exc:
                raise ProblemError(f"piece {label!r}: {exc}") from None
            if expr.uses("abs"):
                raise ProblemError(f"piece {label!r} is not C^1: abs() is not allowed in pieces")
            pieces.append(SmoothPiece(expr, float(raw["lipschitz_grad"]), label))
        components.append(Component(tuple(pieces), comp.get("name", f"f{j + 1}")))

    work = document.get("working_region")
    return Problem(
        components=tuple(components),
        nvars=n,
        lower=[_bound(v) for v in document["domain"]["lower"]],
        upper=[_bound(v) for v in document["domain"]["upper"]],
        reference_point=document["reference_point"],
        name=document.get("name", ""),
        work_lower=None if work is None else [_bound(v) for v in work["lower"]],
        work_upper=None if work is None else [_bound(v) for v in work["upper"]],
    )


def load_problem_file(path: str | Path) -> Problem:
    """Load a problem file; bare shipped names such as ``example31.json`` also resolve."""
    path = Path(path)
    if not path.exists() and path.stem in SHIPPED_PROBLEMS and path.parent == Path("."):
        return shipped_problem(path.stem)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ProblemError(f"cannot read {path}: {exc.strerror}") from None
    return load_problem(text)


def shipped_problem(name: str) -> Problem:
    if name not in SHIPPED_PROBLEMS:
        raise KeyError(f"no shipped problem {name!r}; choose from {SHIPPED_PROBLEMS}")
    text = resources.files("proxmo.data").joinpath(f"{name}.json").read_text(encoding="utf-8")
    return load_problem(text)


# --------------------------------------------------------------------------
# evaluation


def piece_values(p: Problem, x) -> list[list]:
    """Values and gradients of every piece: ``out[j][i]`` is a DualVector."""
    x = p.check_point(x)
    return [[piece.expr.eval_grad(x) for piece in comp.pieces] for comp in p.components]


def evaluate(p: Problem, x) -> np.ndarray:
    """``F(x)`` as a length-``m`` array."""
    x = p.check_point(x)
    return np.array([max(piece.expr(x) for piece in comp.pieces) for comp in p.components])


def default_eps_active(fx: float) -> float:
    return 1e-6 * (1.0 + abs(fx))


def _active(duals, eps: float | None) -> tuple[tuple[int, ...], float]:
    values = [d.value for d in duals]
    top = max(values)
    tol = default_eps_active(top) if eps is None else float(eps)
    return tuple(i for i, v in enumerate(values) if v >= top - tol), tol


def active_pieces(p: Problem, j: int, x, eps_active: float | None = None) -> ActiveSet:
    """Pieces of component ``j`` within ``eps_active`` of the maximum at ``x``.

    ``eps_active=None`` selects ``1e-6 * (1 + |f_j(x)|)``.
    """
    x = p.check_point(x)
    duals = [piece.expr.eval_grad(x) for piece in p.components[j].pieces]
    idx, tol = _active(duals, eps_active)
    return ActiveSet(j, idx, tol)


def active_gradients(p: Problem, x, eps_active: float | None = None) -> list[list[tuple]]:
    """``out[j]`` lists ``(i, grad f_ij(x))`` for the eps-active pieces of component ``j``."""
    out = []
    for duals in piece_values(p, x):
        idx, _ = _active(duals, eps_active)
        out.append([(i, duals[i].partials) for i in idx])
    return out


def clarke_generators(p: Problem, x, eps_active: float | None = None) -> list[list[np.ndarray]]:
    """Gradients of the eps-active pieces, one list per component.

    The convex hull of ``out[j]`` is an inner approximation of the Clarke
    subdifferential of ``f_j`` at ``x``.
    """
    return [[g for _, g in comp] for comp in active_gradients(p, x, eps_active)]


# --------------------------------------------------------------------------
# order relations


def weakly_leq(a, b) -> bool:
    """``a ⪯ b``: componentwise ``a <= b``."""
    return bool(np.all(np.asarray(a) <= np.asarray(b)))


def strictly_less(a, b) -> bool:
    """``a ≺ b``: componentwise ``a < b``."""
    return bool(np.all(np.asarray(a) < np.asarray(b)))


def dominated_by(p: Problem, x, bound) -> bool:
    """True iff ``F(x) ⪯ bound``."""
    bound = np.asarray(bound, dtype=float)
    if bound.shape != (p.m,):
        raise ValueError(f"bound must have length m={p.m}")
    return weakly_leq(evaluate(p, x), bound)


def strictly_dominated_by(p: Problem, x, bound) -> bool:
    """True iff ``F(x) ≺ bound``."""
    bound = np.asarray(bound, dtype=float)
    if bound.shape != (p.m,):
        raise ValueError(f"bound must have length m={p.m}")
    return strictly_less(evaluate(p, x), bound)


def max_lipschitz(p: Problem, j: int) -> float:
    return max(piece.lipschitz_grad for piece in p.components[j].pieces)


def estimate_lipschitz(
    expr: Expression, lower: Sequence[float], upper: Sequence[float], samples: int, rng
) -> float:
    """Largest sampled ratio ``|grad f(x) - grad f(y)| / |x - y|`` over the box.

    A heuristic lower estimate of the true constant. Never used in place of
    the file-supplied value.
    """
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    best = 0.0
    for _ in range(samples):
        x = rng.uniform(lower, upper)
        y = rng.uniform(lower, upper)
        dist = np.linalg.norm(x - y)
        if dist == 0.0:
            continue
        diff = np.linalg.norm(expr.eval_grad(x).partials - expr.eval_grad(y).partials)
        best = max(best, diff / dist)
    return best
