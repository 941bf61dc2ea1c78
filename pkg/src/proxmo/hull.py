"""Minimum-norm point of the convex hull of finitely many vectors.

Implements Wolfe's active-set method (P. Wolfe, "Finding the nearest point
in a polytope", Math. Programming 11, 1976). Besides the nearest point the
result carries convex weights over the input generators, which callers use
as multipliers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["MinNormResult", "min_norm_point", "brute_force_min_norm", "CERT_TOL"]

CERT_TOL = 1e-10
_DEDUP_TOL = 1e-14
_MAX_ITER = 1000


@dataclass(frozen=True)
class MinNormResult:
    point: np.ndarray
    weights: np.ndarray
    norm: float
    iterations: int = 0


def _as_matrix(generators) -> np.ndarray:
    if len(generators) == 0:
        raise ValueError("min_norm_point needs at least one generator")
    rows = [np.atleast_1d(np.asarray(g, dtype=float)) for g in generators]
    dims = {r.shape for r in rows}
    if len(dims) != 1 or rows[0].ndim != 1 or rows[0].shape[0] == 0:
        raise ValueError(f"generator dimension mismatch: {sorted(dims)}")
    return np.vstack(rows)


def _affine_minimizer(S: np.ndarray) -> np.ndarray:
    """Weights (summing to one) of the min-norm point of the affine hull of rows of S."""
    k = S.shape[0]
    if k == 1:
        return np.ones(1)
    kkt = np.zeros((k + 1, k + 1))
    kkt[:k, :k] = S @ S.T
    kkt[:k, k] = 1.0
    kkt[k, :k] = 1.0
    rhs = np.zeros(k + 1)
    rhs[k] = 1.0
    try:
        sol = np.linalg.solve(kkt, rhs)
    except np.linalg.LinAlgError:
        sol = np.linalg.lstsq(kkt, rhs, rcond=None)[0]
    mu = sol[:k]
    return mu / mu.sum()


def min_norm_point(generators) -> MinNormResult:
    """Nearest point to the origin in ``conv(generators)``.

    Parameters
    ----------
    generators : sequence of array_like
        Non-empty list of vectors of a common dimension.

    Returns
    -------
    MinNormResult
        ``point`` equals ``weights @ generators``; the weights are
        non-negative and sum to one. Ties when selecting the entering
        generator go to the lowest index, so the result is deterministic for
        a fixed input order.
    """
    G = _as_matrix(generators)
    n_in = G.shape[0]

    scale = float(np.max(np.abs(G)))
    if scale == 0.0:
        weights = np.zeros(n_in)
        weights[0] = 1.0
        return MinNormResult(np.zeros(G.shape[1]), weights, 0.0, 0)

    # collapse near-duplicates onto their first occurrence
    keep: list[int] = []
    for r in range(n_in):
        if not any(np.max(np.abs(G[r] - G[q])) <= _DEDUP_TOL * scale for q in keep):
            keep.append(r)
    P = G[keep]
    # relative to the largest squared generator norm, so the result is scale covariant
    tol = CERT_TOL * float(np.max(np.sum(P * P, axis=1)))

    sq = np.sum(P * P, axis=1)
    start = int(np.argmin(sq))
    active = [start]
    lam = np.ones(1)
    x = P[start].copy()

    iterations = 0
    while iterations < _MAX_ITER:
        iterations += 1
        xx = float(x @ x)
        if xx <= 1e-28 * scale * scale:
            break
        dots = P @ x
        j = int(np.argmin(dots))
        if dots[j] >= xx - tol or j in active:
            break
        active.append(j)
        lam = np.append(lam, 0.0)

        # minor cycles: move toward the affine minimizer while it leaves the simplex
        while True:
            S = P[active]
            mu = _affine_minimizer(S)
            if np.all(mu > 1e-15):
                lam = mu
                x = mu @ S
                break
            neg = mu <= 1e-15
            ratios = lam[neg] / np.maximum(lam[neg] - mu[neg], 1e-300)
            theta = float(np.min(ratios)) if ratios.size else 0.0
            lam = (1.0 - theta) * lam + theta * mu
            drop = lam <= 1e-15
            drop[np.flatnonzero(neg)[int(np.argmin(ratios))]] = True
            active = [a for a, d in zip(active, drop) if not d]
            lam = lam[~drop]
            lam = lam / lam.sum()
            x = lam @ P[active]
            if len(active) == 1:
                break

    weights_kept = np.zeros(len(keep))
    weights_kept[active] = np.clip(lam, 0.0, None)
    weights_kept /= weights_kept.sum()
    weights = np.zeros(n_in)
    for q, r in enumerate(keep):
        weights[r] = weights_kept[q]
    point = weights @ G
    return MinNormResult(point, weights, float(np.linalg.norm(point)), iterations)


def brute_force_min_norm(generators, grid_steps: int) -> np.ndarray:
    """Exhaustive minimum of ``|sum_i w_i g_i|`` over a simplex grid.

    The grid holds all weights ``c / grid_steps`` with non-negative integers
    ``c`` summing to ``grid_steps``. The last free weight is resolved in
    closed form: along that grid line the squared norm is a convex quadratic
    in one integer, so its grid minimum sits at the floor or ceiling of the
    continuous minimizer. At most four generators.
    """
    G = _as_matrix(generators)
    k = G.shape[0]
    if k > 4:
        raise ValueError("brute_force_min_norm supports at most 4 generators")
    if grid_steps < 1:
        raise ValueError("grid_steps must be positive")
    N = grid_steps
    if k == 1:
        return G[0].copy()

    # enumerate integer prefixes (c_0..c_{k-3}) with sum <= N
    if k == 2:
        prefixes = np.zeros((1, 0), dtype=np.int64)
    elif k == 3:
        prefixes = np.arange(N + 1, dtype=np.int64)[:, None]
    else:
        c0, c1 = np.meshgrid(np.arange(N + 1), np.arange(N + 1), indexing="ij")
        mask = c0 + c1 <= N
        prefixes = np.stack([c0[mask], c1[mask]], axis=1).astype(np.int64)
    R = N - prefixes.sum(axis=1)
    base = (prefixes / N) @ G[: k - 2] if k > 2 else np.zeros((1, G.shape[1]))
    a = base + (R / N)[:, None] * G[k - 1]
    b = (G[k - 2] - G[k - 1]) / N
    bb = float(b @ b)
    if bb == 0.0:
        t_cands = [np.zeros_like(R)]
    else:
        t_star = -(a @ b) / bb
        lo = np.clip(np.floor(t_star), 0, R).astype(np.int64)
        t_cands = [lo, np.minimum(lo + 1, R)]
    best_val = np.full(R.shape, np.inf)
    best_pt = np.zeros_like(a)
    for t in t_cands:
        pt = a + t[:, None] * b
        val = np.sum(pt * pt, axis=1)
        better = val < best_val
        best_val = np.where(better, val, best_val)
        best_pt[better] = pt[better]
    return best_pt[int(np.argmin(best_val))]
