"""Command-line interface: ``solve``, ``critical``, ``scan`` and ``verify``.

Exit codes: 0 success, 1 validation or domain error, 2 non-convergence or a
failed verification suite.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from typing import Sequence

import numpy as np

from . import __version__
from .criticality import residual
from .driver import (
    ConfigError,
    InfeasibleStartError,
    SolverError,
    default_config,
    solve,
    write_trace_csv,
)
from .expr import fd_check
from .hull import brute_force_min_norm, min_norm_point
from .problem import (
    Problem,
    ProblemError,
    dominated_by,
    estimate_lipschitz,
    evaluate,
    load_problem_file,
    max_lipschitz,
)
from .subproblem import ProxInstance, strong_convexity_violations

__all__ = ["run", "main", "pareto_scan_grid", "weak_pareto_mask", "verify", "dumps"]

EXIT_OK, EXIT_INVALID, EXIT_NOT_CONVERGED = 0, 1, 2


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(f"{self.prog}: {message}")


# --------------------------------------------------------------------------
# output


def dumps(obj) -> str:
    """JSON text with every float written to 17 significant digits."""
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if not math.isfinite(v):
            return json.dumps(str(v))
        text = format(v, ".17g")
        return text if any(ch in text for ch in ".en") else text + ".0"
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, np.ndarray):
        return dumps(obj.tolist())
    if isinstance(obj, dict):
        return "{" + ", ".join(f"{json.dumps(str(k))}: {dumps(v)}" for k, v in obj.items()) + "}"
    if isinstance(obj, (list, tuple)):
        return "[" + ", ".join(dumps(v) for v in obj) + "]"
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def _vector(text: str) -> np.ndarray:
    try:
        return np.array([float(v) for v in text.split(",")], dtype=float)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


# --------------------------------------------------------------------------
# brute-force weak Pareto scan


def weak_pareto_mask(values) -> np.ndarray:
    """Rows of ``values`` (G x m) not strictly dominated by any other row."""
    F = np.asarray(values, dtype=float)
    G, m = F.shape
    if m == 1:
        return F[:, 0] <= F[:, 0].min()
    if m == 2:
        order = np.lexsort((F[:, 1], F[:, 0]))
        mask = np.ones(G, dtype=bool)
        best_f2 = np.inf  # min f2 over rows with strictly smaller f1
        start = 0
        while start < G:
            stop = start
            f1 = F[order[start], 0]
            while stop < G and F[order[stop], 0] == f1:
                stop += 1
            group = order[start:stop]
            mask[group] = ~(F[group, 1] > best_f2)
            best_f2 = min(best_f2, float(F[group, 1].min()))
            start = stop
        return mask
    mask = np.ones(G, dtype=bool)
    for a in range(0, G, 512):
        block = F[a : a + 512]
        dominated = np.all(F[None, :, :] < block[:, None, :], axis=2).any(axis=1)
        mask[a : a + 512] = ~dominated
    return mask


def pareto_scan_grid(p: Problem, lower, upper, step: float) -> list[np.ndarray]:
    """Grid points that no other grid point strictly dominates.

    The grid is ``lower + k * step`` per coordinate up to ``upper``; points
    outside the open domain are dropped. Output follows grid (row-major) order.
    """
    if p.nvars > 2:
        raise ValueError("pareto_scan_grid supports n <= 2")
    if not step > 0:
        raise ValueError("step must be positive")
    lower = np.asarray(lower, dtype=float).reshape(-1)
    upper = np.asarray(upper, dtype=float).reshape(-1)
    if lower.shape != (p.nvars,) or upper.shape != (p.nvars,):
        raise ValueError(f"box bounds must have {p.nvars} entries")
    if not (np.all(np.isfinite(lower)) and np.all(np.isfinite(upper))) or np.any(upper < lower):
        raise ValueError("scan box must be finite and non-empty")
    axes = [lo + step * np.arange(int(math.floor((hi - lo) / step + 1e-9)) + 1)
            for lo, hi in zip(lower, upper)]
    mesh = np.meshgrid(*axes, indexing="ij")
    points = np.stack([g.ravel() for g in mesh], axis=1)
    points = points[[p.in_domain(x) for x in points]]
    if len(points) == 0:
        raise ValueError("no grid point lies inside the domain")
    values = np.array([evaluate(p, x) for x in points])
    return list(points[weak_pareto_mask(values)])


# --------------------------------------------------------------------------
# verification suites


def _suite(passed: bool, **detail) -> dict:
    return {"passed": bool(passed), **detail}


def verify(p: Problem, samples: int = 1000, seed: int = 42) -> dict:
    """Run the property suites on ``p`` and report pass/fail per suite.

    Sample points are drawn from the problem's working region with a
    generator seeded by ``seed``; the report is deterministic for a fixed
    seed.
    """
    rng = np.random.default_rng(seed)
    lo, hi = p.work_lower, p.work_upper
    suites = {}

    worst = 0.0
    for _ in range(samples):
        x = rng.uniform(lo, hi)
        for _, _, piece in p.pieces():
            worst = max(worst, fd_check(piece.expr, x, 1e-6))
    suites["ad"] = _suite(worst <= 1e-6, max_error=worst)

    violations = {}
    estimates = {}
    for j, i, piece in p.pieces():
        bad = 0
        L = piece.lipschitz_grad
        for _ in range(samples):
            x, y = rng.uniform(lo, hi), rng.uniform(lo, hi)
            lhs = np.linalg.norm(piece.expr.eval_grad(x).partials - piece.expr.eval_grad(y).partials)
            if lhs > L * np.linalg.norm(x - y) * (1 + 1e-12) + 1e-12:
                bad += 1
        violations[piece.label] = bad
        estimates[piece.label] = estimate_lipschitz(piece.expr, lo, hi, min(samples, 200), rng)
    suites["lipschitz"] = _suite(
        not any(violations.values()), violations=violations, sampled_estimates=estimates
    )

    hull_bad = 0
    n_hull = min(samples, 200)
    for _ in range(n_hull):
        n = int(rng.integers(1, 4))
        k = int(rng.integers(1, 5))
        gens = rng.uniform(-1.0, 1.0, size=(k, n))
        res = min_norm_point(list(gens))
        oracle = brute_force_min_norm(list(gens), 1000)
        cert = np.min(gens @ res.point) >= res.norm**2 - 1e-8
        if np.linalg.norm(res.point - oracle) > 2e-3 or not cert:
            hull_bad += 1
    suites["hull"] = _suite(hull_bad == 0, instances=n_hull, failures=hull_bad)

    cfg = default_config(p)
    inst = ProxInstance(p, p.reference_point, cfg.lambda_at(0), cfg.e_at(0))
    sc_bad = strong_convexity_violations(inst, samples, int(rng.integers(2**32)))
    suites["strong_convexity"] = _suite(sc_bad == 0, trials=samples, violations=sc_bad)

    # midpoint convexity of the sublevel set {x : F(x) <= F(reference)}
    level = evaluate(p, p.reference_point)
    tested = mid_bad = 0
    for _ in range(samples):
        x, y = rng.uniform(lo, hi), rng.uniform(lo, hi)
        if not (dominated_by(p, x, level) and dominated_by(p, y, level)):
            continue
        tested += 1
        if not dominated_by(p, 0.5 * (x + y), level):
            mid_bad += 1
    suites["omega_midpoint"] = _suite(mid_bad == 0, pairs_tested=tested, violations=mid_bad)

    return {
        "problem": p.name,
        "samples": samples,
        "seed": seed,
        "passed": all(s["passed"] for s in suites.values()),
        "suites": suites,
    }


# --------------------------------------------------------------------------
# commands


def _cmd_solve(args, out) -> int:
    p = load_problem_file(args.problem)
    x0 = p.reference_point if args.x0 is None else args.x0
    overrides = dict(max_outer=args.max_iter, tol_outer=args.tol,
                     override_lambda_check=args.override_lambda_check)
    if args.mu_bar is not None:
        overrides["mu_bar"] = args.mu_bar
        lam = 1.01 * max(max_lipschitz(p, j) for j in range(p.m)) / args.mu_bar
        overrides.update(lambda_rule=lam, lambda_bar=10.0 * lam)
    if args.lam is not None:
        overrides["lambda_rule"] = args.lam
        overrides["lambda_bar"] = max(args.lam, overrides.get("lambda_bar", 0.0),
                                      default_config(p).lambda_bar)
    cfg = default_config(p, **overrides)
    try:
        trace = solve(p, x0, cfg)
        code = EXIT_OK if trace.status == "converged" else EXIT_NOT_CONVERGED
    except SolverError as exc:
        trace = exc.trace
        code = EXIT_NOT_CONVERGED
    if args.trace:
        write_trace_csv(trace, args.trace)
    last = trace.records[-1]
    out.write(dumps({
        "status": trace.status,
        "iterations": last.k,
        "final_point": trace.final_point,
        "F": evaluate(p, trace.final_point),
        "criticality_residual": last.criticality_residual,
        "residual_check": trace.residual_check,
        "message": trace.message,
    }) + "\n")
    return code


def _cmd_critical(args, out) -> int:
    p = load_problem_file(args.problem)
    cert = residual(p, args.x, args.eps_active)
    out.write(dumps({
        "residual": cert.residual,
        "critical": cert.residual <= args.tol,
        "direction": cert.descent_direction,
        "directional_upper_bounds": cert.directional_upper_bounds,
        "hull_point": cert.hull_point,
        "weights": [[i + 1, j + 1, w] for (i, j), w in cert.weights.items()],
    }) + "\n")
    return EXIT_OK


def _cmd_scan(args, out) -> int:
    p = load_problem_file(args.problem)
    pts = pareto_scan_grid(p, args.lo, args.hi, args.step)
    out.write(dumps({"count": len(pts), "points": [list(x) for x in pts]}) + "\n")
    return EXIT_OK


def _cmd_verify(args, out) -> int:
    p = load_problem_file(args.problem)
    report = verify(p, args.samples, args.seed)
    out.write(dumps(report) + "\n")
    return EXIT_OK if report["passed"] else EXIT_NOT_CONVERGED


def _build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="proxmo", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="verb", required=True, parser_class=_Parser)

    s = sub.add_parser("solve", help="run the proximal point method")
    s.add_argument("--problem", required=True)
    s.add_argument("--x0", type=_vector, default=None)
    s.add_argument("--max-iter", type=int, default=1000)
    s.add_argument("--tol", type=float, default=1e-8)
    s.add_argument("--lambda", dest="lam", type=float, default=None)
    s.add_argument("--mu-bar", type=float, default=None)
    s.add_argument("--trace", default=None)
    s.add_argument("--override-lambda-check", action="store_true")
    s.set_defaults(func=_cmd_solve)

    c = sub.add_parser("critical", help="Pareto-Clarke criticality residual at a point")
    c.add_argument("--problem", required=True)
    c.add_argument("--x", type=_vector, required=True)
    c.add_argument("--eps-active", type=float, default=None)
    c.add_argument("--tol", type=float, default=1e-8)
    c.set_defaults(func=_cmd_critical)

    g = sub.add_parser("scan", help="brute-force weak Pareto grid scan (n <= 2)")
    g.add_argument("--problem", required=True)
    g.add_argument("--lo", type=_vector, required=True)
    g.add_argument("--hi", type=_vector, required=True)
    g.add_argument("--step", type=float, required=True)
    g.set_defaults(func=_cmd_scan)

    v = sub.add_parser("verify", help="run sampled property suites")
    v.add_argument("--problem", required=True)
    v.add_argument("--samples", type=int, default=1000)
    v.add_argument("--seed", type=int, default=42)
    v.set_defaults(func=_cmd_verify)
    return parser


def run(argv: Sequence[str] | None = None, out=None, err=None) -> int:
    out = sys.stdout if out is None else out
    err = sys.stderr if err is None else err
    try:
        args = _build_parser().parse_args(argv)
        return args.func(args, out)
    except _UsageError as exc:
        err.write(f"error: {exc}\n")
    except (ProblemError, ConfigError, InfeasibleStartError, ValueError) as exc:
        err.write(f"error: {exc}\n")
    except OSError as exc:
        err.write(f"error: {exc}\n")
    return EXIT_INVALID


def main() -> None:
    sys.exit(run())
