"""Outer proximal iteration, parameter schedules, traces and trace monitors."""

from __future__ import annotations

import csv
import math
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence, Union

import numpy as np

from .criticality import residual
from .problem import Problem, evaluate, max_lipschitz, weakly_leq
from .subproblem import ProxInstance, solve_inner

__all__ = [
    "ConfigError",
    "InfeasibleStartError",
    "SolverError",
    "SolverConfig",
    "IterateRecord",
    "Trace",
    "default_config",
    "solve",
    "sublevel_entry",
    "monotone_violations",
    "write_trace_csv",
    "read_trace_csv",
    "TRACE_HEADER",
]

MONOTONE_TOL = 1e-10
TRACE_HEADER = (
    "k", "x", "F", "lambda", "e", "z", "step_norm", "inner_iters", "stationarity",
    "criticality_residual",
)


class ConfigError(ValueError):
    pass


class InfeasibleStartError(ValueError):
    pass


class SolverError(RuntimeError):
    """The inner solver failed; carries the outer index and the partial trace."""

    def __init__(self, message: str, k: int, trace: "Trace"):
        super().__init__(f"outer iteration {k}: {message}")
        self.k = k
        self.trace = trace


Schedule = Union[float, Sequence[float]]


@dataclass
class SolverConfig:
    """Parameters of the proximal iteration.

    ``lambda_rule`` is a constant or a per-iteration sequence of ``lambda_k``;
    ``e_rule`` a single unit vector or a sequence of them. Sequences shorter
    than the run repeat their last entry. :meth:`validate` enforces, for every
    scheduled ``k``,

        max_ij L_ij / mu_bar < lambda_k <= lambda_bar,  |e^k| = 1,  e^k_j > mu_bar.
    """

    mu_bar: float
    lambda_bar: float
    lambda_rule: Schedule
    e_rule: Sequence
    tol_outer: float = 1e-8
    max_outer: int = 1000
    tol_inner: float | None = None
    max_inner: int = 500
    eps_active: float | None = None
    override_lambda_check: bool = False

    def __post_init__(self):
        if not 0.0 < self.mu_bar < 1.0:
            raise ConfigError(f"mu_bar must lie in (0, 1), got {self.mu_bar!r}")
        if not self.lambda_bar > 0:
            raise ConfigError("lambda_bar must be positive")
        if self.tol_outer <= 0 or self.max_outer < 1:
            raise ConfigError("tol_outer must be positive and max_outer at least 1")
        if self.tol_inner is None:
            self.tol_inner = min(1e-8, self.tol_outer / 10.0)
        lams = np.atleast_1d(np.asarray(self.lambda_rule, dtype=float))
        if lams.ndim != 1 or lams.size == 0:
            raise ConfigError("lambda_rule must be a number or a non-empty sequence")
        es = np.asarray(self.e_rule, dtype=float)
        if es.ndim == 1:
            es = es[None, :]
        if es.ndim != 2 or es.shape[0] == 0:
            raise ConfigError("e_rule must be a vector or a non-empty sequence of vectors")
        self._lams = lams
        self._es = es

    def lambda_at(self, k: int) -> float:
        return float(self._lams[min(k, len(self._lams) - 1)])

    def e_at(self, k: int) -> np.ndarray:
        return self._es[min(k, len(self._es) - 1)].copy()

    def validate(self, p: Problem) -> None:
        if self._es.shape[1] != p.m:
            raise ConfigError(f"e vectors must have length m={p.m}")
        for e in self._es:
            if abs(np.linalg.norm(e) - 1.0) > 1e-12:
                raise ConfigError(f"e vector {e.tolist()} does not have unit norm")
            if np.any(e <= self.mu_bar):
                raise ConfigError(f"e vector {e.tolist()} has an entry <= mu_bar={self.mu_bar}")
        if self.override_lambda_check:
            return
        floor = max(max_lipschitz(p, j) for j in range(p.m)) / self.mu_bar
        for lam in self._lams:
            if not floor < lam <= self.lambda_bar:
                raise ConfigError(
                    f"lambda_k={lam!r} violates max L / mu_bar = {floor!r} < lambda_k"
                    f" <= lambda_bar = {self.lambda_bar!r}"
                )


@dataclass
class IterateRecord:
    k: int
    x: np.ndarray
    F_of_x: np.ndarray
    lambda_k: float | None = None
    e_k: np.ndarray | None = None
    z_k: np.ndarray | None = None
    step_norm: float | None = None
    inner_iterations: int | None = None
    stationarity: float | None = None
    criticality_residual: float = math.nan


@dataclass
class Trace:
    records: list[IterateRecord] = field(default_factory=list)
    status: str = "max_iterations"  # converged | max_iterations | error
    final_point: np.ndarray | None = None
    message: str = ""
    # converged runs only: final criticality residual <= 10 * tol_outer (recorded, not enforced)
    residual_check: bool | None = None


def default_config(p: Problem, **overrides) -> SolverConfig:
    """Constant schedules sitting just above the strong-convexity threshold."""
    m = p.m
    mu_bar = 0.9 / math.sqrt(m)
    lam = 1.01 * max(max_lipschitz(p, j) for j in range(m)) / mu_bar
    kwargs = dict(
        mu_bar=mu_bar,
        lambda_bar=10.0 * lam,
        lambda_rule=lam,
        e_rule=np.full(m, 1.0 / math.sqrt(m)),
        tol_outer=1e-8,
        max_outer=1000,
    )
    kwargs.update(overrides)
    return SolverConfig(**kwargs)


def solve(p: Problem, x0=None, cfg: SolverConfig | None = None) -> Trace:
    """Run the proximal point iteration from ``x0`` (default: the reference point).

    Raises
    ------
    InfeasibleStartError
        ``x0`` is outside the domain or ``F(x0)`` is not below ``F(reference)``.
    ConfigError
        The schedule violates the parameter conditions and no override is set.
    SolverError
        The inner solver failed at some outer iteration.
    """
    cfg = default_config(p) if cfg is None else cfg
    cfg.validate(p)
    x = np.array(p.reference_point if x0 is None else x0, dtype=float).reshape(-1)
    if x.shape[0] != p.nvars or not p.in_domain(x):
        raise InfeasibleStartError(f"x0={x.tolist()} is not inside the domain box")
    fx = evaluate(p, x)
    if not weakly_leq(fx, evaluate(p, p.reference_point)):
        raise InfeasibleStartError(f"F(x0)={fx.tolist()} is not below F(reference_point)")

    trace = Trace()
    trace.records.append(
        IterateRecord(0, x.copy(), fx, criticality_residual=residual(p, x, cfg.eps_active).residual)
    )
    for k in range(cfg.max_outer):
        lam, e = cfg.lambda_at(k), cfg.e_at(k)
        inst = ProxInstance(p, x, lam, e)
        step = solve_inner(inst, cfg.tol_inner, cfg.max_inner, eps_active=cfg.eps_active)
        if not step.converged:
            trace.status = "error"
            trace.final_point = x.copy()
            trace.message = (
                f"inner solver stopped with stationarity {step.final_stationarity:.3e}"
                f" after {step.inner_iterations} iterations"
            )
            raise SolverError(trace.message, k, trace)
        x_new = step.next
        step_norm = float(np.linalg.norm(x_new - x))
        x = x_new
        trace.records.append(
            IterateRecord(
                k=k + 1,
                x=x.copy(),
                F_of_x=evaluate(p, x),
                lambda_k=lam,
                e_k=e,
                z_k=step.weights_z,
                step_norm=step_norm,
                inner_iterations=step.inner_iterations,
                stationarity=step.final_stationarity,
                criticality_residual=residual(p, x, cfg.eps_active).residual,
            )
        )
        if step_norm <= cfg.tol_outer:
            trace.status = "converged"
            trace.residual_check = trace.records[-1].criticality_residual <= 10.0 * cfg.tol_outer
            break
    trace.final_point = x.copy()
    return trace


def sublevel_entry(t: Trace, c: float) -> int | None:
    """First index ``k`` with ``F(x^k) <= c`` in every component."""
    for rec in t.records:
        if np.all(rec.F_of_x <= c):
            return rec.k
    return None


def monotone_violations(t: Trace, tol: float = MONOTONE_TOL) -> int:
    """Number of ``(k, j)`` with ``F_j(x^{k+1}) > F_j(x^k) + tol``."""
    count = 0
    for prev, cur in zip(t.records, t.records[1:]):
        count += int(np.sum(cur.F_of_x > prev.F_of_x + tol))
    return count


# --------------------------------------------------------------------------
# CSV


def _num(v) -> str:
    return "" if v is None else format(float(v), ".17g")


def _vec(v) -> str:
    return "" if v is None else ";".join(format(float(a), ".17g") for a in np.atleast_1d(v))


def write_trace_csv(t: Trace, path: str | Path) -> None:
    """Write the trace atomically (temporary file in the target directory, then rename)."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent or ".")
    try:
        with os.fdopen(fd, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(TRACE_HEADER)
            for r in t.records:
                writer.writerow([
                    r.k, _vec(r.x), _vec(r.F_of_x), _num(r.lambda_k), _vec(r.e_k), _vec(r.z_k),
                    _num(r.step_norm), "" if r.inner_iterations is None else r.inner_iterations,
                    _num(r.stationarity), _num(r.criticality_residual),
                ])
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


def read_trace_csv(path: str | Path) -> list[IterateRecord]:
    def num(s):
        return None if s == "" else float(s)

    def vec(s):
        return None if s == "" else np.array([float(a) for a in s.split(";")])

    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != TRACE_HEADER:
            raise ValueError(f"unexpected trace header {reader.fieldnames}")
        for row in reader:
            out.append(IterateRecord(
                k=int(row["k"]),
                x=vec(row["x"]),
                F_of_x=vec(row["F"]),
                lambda_k=num(row["lambda"]),
                e_k=vec(row["e"]),
                z_k=vec(row["z"]),
                step_norm=num(row["step_norm"]),
                inner_iterations=None if row["inner_iters"] == "" else int(row["inner_iters"]),
                stationarity=num(row["stationarity"]),
                criticality_residual=float(row["criticality_residual"]),
            ))
    return out
