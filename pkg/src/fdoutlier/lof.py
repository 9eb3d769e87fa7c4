"""Local Outlier Factor on Euclidean feature vectors.

Neighbor ties are broken by ascending point index so every point has exactly
k neighbors.  Groups of more than k coincident points have zero
reachability distance and therefore an infinite local reachability density;
such points get LOF 1, and a finite-density point whose neighbor has
infinite density counts that neighbor's ratio as ``INF_RATIO``.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.spatial.distance import cdist

from .errors import DataError, DomainError

DEFAULT_K = 10
INF_RATIO = 1e12


@dataclass(frozen=True)
class PointSet:
    points: np.ndarray
    ids: tuple = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2 or pts.shape[1] < 1:
            raise DataError("points must form an (n, d) array with d >= 1")
        if not np.all(np.isfinite(pts)):
            raise DataError("points contain non-finite values")
        ids = tuple(range(pts.shape[0])) if self.ids is None else tuple(self.ids)
        if len(ids) != pts.shape[0]:
            raise DataError(f"{len(ids)} ids for {pts.shape[0]} points")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "ids", ids)

    @property
    def n(self) -> int:
        return self.points.shape[0]


@dataclass(frozen=True)
class LOFScores:
    k: int
    scores: np.ndarray
    kdist: np.ndarray
    lrd: np.ndarray
    neighbors: np.ndarray  # (n, k) indices into the point set
    ids: tuple

    def flagged(self, threshold: float) -> list[int]:
        return [int(i) for i in np.flatnonzero(self.scores > threshold)]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["id", "lof", "kdist", "lrd"])
        for i, s, kd, lr in zip(self.ids, self.scores, self.kdist, self.lrd):
            writer.writerow([i, format(s, ".17g"), format(kd, ".17g"), format(lr, ".17g")])
        return buf.getvalue()


def _as_points(points) -> PointSet:
    return points if isinstance(points, PointSet) else PointSet(points)


def _check_k(k: int, n: int) -> None:
    if not 1 <= k < n:
        raise DomainError(f"need 1 <= k < n, got k={k}, n={n}")


def kdistance_and_neighbors(points, k: int = DEFAULT_K):
    """Return (k-distance per point, (n, k) neighbor index array, distance matrix)."""
    ps = _as_points(points)
    _check_k(k, ps.n)
    dist = cdist(ps.points, ps.points)
    masked = dist.copy()
    np.fill_diagonal(masked, np.inf)
    neighbors = np.argsort(masked, axis=1, kind="stable")[:, :k]
    kdist = np.take_along_axis(masked, neighbors[:, -1:], axis=1)[:, 0]
    return kdist, neighbors, dist


def lof_scores(points, k: int = DEFAULT_K) -> LOFScores:
    ps = _as_points(points)
    kdist, neighbors, dist = kdistance_and_neighbors(ps, k)
    reach = np.maximum(kdist[neighbors], np.take_along_axis(dist, neighbors, axis=1))
    total = reach.sum(axis=1)
    with np.errstate(divide="ignore"):
        lrd = np.where(total > 0, k / np.where(total > 0, total, 1.0), np.inf)
    scores = np.empty(ps.n)
    for i in range(ps.n):
        if np.isinf(lrd[i]):
            scores[i] = 1.0
            continue
        neigh = lrd[neighbors[i]]
        ratios = np.where(np.isinf(neigh), INF_RATIO, neigh / lrd[i])
        scores[i] = ratios.mean()
    return LOFScores(k, scores, kdist, lrd, neighbors, ps.ids)


def lof_subset(points, k: int, report_rows: Sequence[int]) -> LOFScores:
    """Score every point but keep only ``report_rows`` in the result."""
    full = lof_scores(points, k)
    rows = list(report_rows)
    return LOFScores(
        k,
        full.scores[rows],
        full.kdist[rows],
        full.lrd[rows],
        full.neighbors[rows],
        tuple(full.ids[r] for r in rows),
    )
