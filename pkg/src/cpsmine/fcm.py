"""Fuzzy C-means clustering over encoded alarm vectors.

Minimizes the weighted squared-distance objective
``J(U, V) = sum_i sum_k u_ik^m ||x_k - v_i||^2`` by the standard alternating
update of memberships and centers. Each event's memberships across clusters
sum to one, and the recorded objective trace is non-increasing.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from cpsmine.errors import DegenerateInput


@dataclass
class FcmResult:
    membership: np.ndarray  # shape (c, n)
    centers: np.ndarray  # shape (c, dim)
    objective_trace: list[float]
    m: float
    c: int
    converged: bool = True


def _kmeanspp_centers(points: np.ndarray, c: int, rng: np.random.Generator) -> np.ndarray:
    """Seed centers over the distinct rows, spread by squared-distance sampling."""
    centers = np.empty((c, points.shape[1]), dtype=float)
    first = rng.integers(points.shape[0])
    centers[0] = points[first]
    d2 = ((points - centers[0]) ** 2).sum(axis=1)
    for i in range(1, c):
        total = d2.sum()
        if total <= 0.0:
            # remaining points coincide with chosen centers; pick by index
            idx = int(rng.integers(points.shape[0]))
        else:
            idx = int(rng.choice(points.shape[0], p=d2 / total))
        centers[i] = points[idx]
        d2 = np.minimum(d2, ((points - centers[i]) ** 2).sum(axis=1))
    return centers


def _memberships(x: np.ndarray, centers: np.ndarray, m: float) -> np.ndarray:
    d2 = ((centers[:, None, :] - x[None, :, :]) ** 2).sum(axis=2)  # (c, n)
    u = np.zeros_like(d2)
    zero_cols = (d2 == 0.0).any(axis=0)
    if zero_cols.any():
        # a point sitting on a center belongs fully to the lowest such cluster
        hit = np.argmax(d2[:, zero_cols] == 0.0, axis=0)
        u[hit, np.nonzero(zero_cols)[0]] = 1.0
    regular = ~zero_cols
    if regular.any():
        with np.errstate(over="ignore"):
            inv = d2[:, regular] ** (-1.0 / (m - 1.0))
        bad = ~np.isfinite(inv).all(axis=0)
        if bad.any():
            # extreme proximity overflowed the power; treat as zero distance
            cols = np.nonzero(regular)[0][bad]
            u[np.argmin(d2[:, cols], axis=0), cols] = 1.0
            keep = np.nonzero(regular)[0][~bad]
            inv = inv[:, ~bad]
        else:
            keep = np.nonzero(regular)[0]
        u[:, keep] = inv / inv.sum(axis=0)
    return u


def _objective(x: np.ndarray, centers: np.ndarray, u: np.ndarray, m: float) -> float:
    d2 = ((centers[:, None, :] - x[None, :, :]) ** 2).sum(axis=2)
    return float(((u**m) * d2).sum())


def fcm_cluster(
    vectors,
    c: int,
    m: float = 2.0,
    tol: float = 1e-6,
    max_iter: int = 300,
    seed: int = 0,
) -> FcmResult:
    """Cluster row vectors into ``c`` fuzzy clusters.

    Deterministic for a fixed seed. Non-convergence within ``max_iter`` is not
    an error; the result is returned with ``converged=False``.
    """
    x = np.asarray(vectors, dtype=float)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ValueError("vectors must be a non-empty 2-D array")
    if m <= 1.0:
        raise ValueError("fuzzifier m must be > 1")
    if c < 1:
        raise ValueError("cluster count must be >= 1")
    distinct = np.unique(x, axis=0)
    if c > distinct.shape[0]:
        raise DegenerateInput(
            f"c={c} exceeds the {distinct.shape[0]} distinct vectors"
        )
    rng = np.random.default_rng(seed)
    centers = _kmeanspp_centers(distinct, c, rng)
    u = _memberships(x, centers, m)
    trace = [_objective(x, centers, u, m)]
    converged = False
    for _ in range(max_iter):
        um = u**m
        weights = um.sum(axis=1, keepdims=True)
        # clusters that lost all mass keep their previous center
        nonzero = weights[:, 0] > 0.0
        new_centers = centers.copy()
        new_centers[nonzero] = (um[nonzero] @ x) / weights[nonzero]
        centers = new_centers
        u = _memberships(x, centers, m)
        trace.append(_objective(x, centers, u, m))
        if abs(trace[-2] - trace[-1]) < tol:
            converged = True
            break
    return FcmResult(
        membership=u,
        centers=centers,
        objective_trace=trace,
        m=m,
        c=c,
        converged=converged,
    )
