"""Pre-clustering: partition feature space into about sqrt(n) clusters and
attach a treatment-effect average (ATT) to each.

Box mode subdivides [0,1]^d into an eps(n)-net of hypercubes with side
eps(n) = 1/floor(n^(1/2d)); k-means mode runs seeded Lloyd iterations with
K = ceil(sqrt(n)). Cluster ids use a row-major convention with the first
coordinate outermost; a coordinate exactly at 1.0 maps into the last cell
along its axis.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DatasetTooSmallError


@dataclass(frozen=True)
class Cluster:
    """One pre-cluster: member subject indices (into the fit population)
    and the cluster's effect estimate."""

    cell_id: int
    members: np.ndarray
    att: float

    def __post_init__(self):
        members = np.asarray(self.members, dtype=np.int64)
        object.__setattr__(self, "members", members)
        members.setflags(write=False)


@dataclass(frozen=True)
class PreClustering:
    """Partition of the fit population into clusters with ATTs.

    Retained clusters are non-empty and have a defined ATT; ``dropped``
    counts excluded clusters (empty k-means cells, or one-sided clusters
    in control-difference mode).
    """

    mode: str
    epsilon: float
    cells: tuple[Cluster, ...]
    dropped: int = 0
    dropped_subjects: np.ndarray = None

    def __post_init__(self):
        dropped = self.dropped_subjects
        if dropped is None:
            dropped = np.empty(0, dtype=np.int64)
        dropped = np.asarray(dropped, dtype=np.int64)
        object.__setattr__(self, "dropped_subjects", dropped)
        dropped.setflags(write=False)
        object.__setattr__(self, "cells", tuple(self.cells))

    @property
    def atts(self) -> np.ndarray:
        return np.array([c.att for c in self.cells])

    @property
    def num_members(self) -> int:
        return sum(c.members.size for c in self.cells)


def epsilon_of(n: int, d: int) -> float:
    """Grid side length eps(n) = 1/floor(n^(1/2d)).

    The floor is computed in exact integer arithmetic to avoid
    floating-point fencepost errors at perfect powers.
    """
    if d < 1:
        raise ValueError("d must be >= 1")
    if n < 2**d:
        raise DatasetTooSmallError(f"need n >= 2^d = {2 ** d}, got {n}")
    m = max(int(round(float(n) ** (1.0 / (2 * d)))), 1)
    while m ** (2 * d) > n:
        m -= 1
    while (m + 1) ** (2 * d) <= n:
        m += 1
    return 1.0 / m


def box_index(x: np.ndarray, epsilon: float) -> np.ndarray:
    """Row-major cell id of each point for a grid of side epsilon.

    For d=2 the id is i1*m + i2 where i1 indexes the first coordinate and
    m = round(1/epsilon). Indices clamp to m-1 so that 1.0 falls in the
    last cell.
    """
    x = np.atleast_2d(x)
    m = int(round(1.0 / epsilon))
    idx = np.minimum(np.floor(x / epsilon).astype(np.int64), m - 1)
    ids = idx[:, 0]
    for j in range(1, x.shape[1]):
        ids = ids * m + idx[:, j]
    return ids


def _cluster_atts(labels: np.ndarray, ites: np.ndarray | None,
                  t: np.ndarray | None, y: np.ndarray | None):
    """Group subjects by label and compute per-group ATTs.

    With ites given, ATT is the group mean ITE. Otherwise ATT is the
    control difference: mean treated outcome minus mean control outcome;
    groups missing an arm are dropped. Sums run in member-index order so
    results do not depend on any parallel schedule.

    Returns (group cell-ids, list of member index arrays, atts, dropped
    member indices).
    """
    order = np.argsort(labels, kind="stable")
    sorted_labels = labels[order]
    uniq, starts = np.unique(sorted_labels, return_index=True)
    bounds = np.append(starts, labels.size)

    kept_ids, kept_members, kept_atts = [], [], []
    dropped_members = []
    for g in range(uniq.size):
        members = order[bounds[g]:bounds[g + 1]]
        members = np.sort(members)
        if ites is not None:
            att = float(np.mean(ites[members]))
        else:
            treated = members[t[members] == 1]
            controls = members[t[members] == 0]
            if treated.size == 0 or controls.size == 0:
                dropped_members.append(members)
                continue
            att = float(np.mean(y[treated]) - np.mean(y[controls]))
        kept_ids.append(int(uniq[g]))
        kept_members.append(members)
        kept_atts.append(att)
    dropped = (np.concatenate(dropped_members) if dropped_members
               else np.empty(0, dtype=np.int64))
    return kept_ids, kept_members, kept_atts, dropped


def box_partition(x: np.ndarray, ites: np.ndarray | None = None,
                  t: np.ndarray | None = None,
                  y: np.ndarray | None = None) -> PreClustering:
    """Group points by eps(n)-net cell and compute cluster ATTs.

    Pass ites for ITE-based ATTs, or (t, y) for control-difference mode.
    Empty cells are omitted; clusters are sorted by cell id.
    """
    x = np.atleast_2d(x)
    n, d = x.shape
    eps = epsilon_of(n, d)
    labels = box_index(x, eps)
    ids, members, atts, dropped = _cluster_atts(labels, ites, t, y)
    cells = tuple(
        Cluster(cell_id=i, members=m, att=a)
        for i, m, a in zip(ids, members, atts)
    )
    n_onesided = len(np.unique(labels[dropped])) if dropped.size else 0
    return PreClustering(mode="box", epsilon=eps, cells=cells,
                         dropped=n_onesided, dropped_subjects=dropped)


def kmeans_partition(x: np.ndarray, ites: np.ndarray | None = None,
                     t: np.ndarray | None = None, y: np.ndarray | None = None,
                     k: int | None = None, seed: int = 0,
                     max_iters: int = 50, tol: float = 1e-9) -> PreClustering:
    """Lloyd k-means on raw coordinates with k-means++ style seeding.

    K defaults to ceil(sqrt(n)). Deterministic given the seed; empty
    clusters count as dropped. Squared Euclidean distance, no scaling,
    since features live in [0,1]^d.
    """
    x = np.atleast_2d(x)
    n = x.shape[0]
    if k is None:
        k = int(np.ceil(np.sqrt(n)))
    labels = kmeans_labels(x, k, seed=seed, max_iters=max_iters, tol=tol)
    ids, members, atts, dropped = _cluster_atts(labels, ites, t, y)
    cells = tuple(
        Cluster(cell_id=i, members=m, att=a)
        for i, m, a in zip(ids, members, atts)
    )
    n_onesided = len(np.unique(labels[dropped])) if dropped.size else 0
    n_empty = k - len(np.unique(labels))
    return PreClustering(mode="kmeans", epsilon=float("nan"), cells=cells,
                         dropped=n_empty + n_onesided,
                         dropped_subjects=dropped)


def kmeans_labels(x: np.ndarray, k: int, seed: int = 0,
                  max_iters: int = 50, tol: float = 1e-9) -> np.ndarray:
    """Cluster labels from seeded k-means++ plus Lloyd iterations.

    Pure function of (x, k, seed, max_iters, tol); exposed separately so
    a fit's clustering can be reproduced exactly from its recorded
    configuration.
    """
    x = np.atleast_2d(x)
    n = x.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"k must lie in [1, n={n}]")
    if k == n:
        return np.arange(n)
    centers = _kmeans_pp_seed(x, k, np.random.Generator(np.random.Philox(key=seed)))
    for _ in range(max_iters):
        labels = _nearest_center(x, centers)
        new_centers = centers.copy()
        counts = np.bincount(labels, minlength=k)
        for j in range(x.shape[1]):
            sums = np.bincount(labels, weights=x[:, j], minlength=k)
            nz = counts > 0
            new_centers[nz, j] = sums[nz] / counts[nz]
        shift = float(np.max(np.abs(new_centers - centers)))
        centers = new_centers
        if shift <= tol:
            break
    return _nearest_center(x, centers)


def _kmeans_pp_seed(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding: first center uniform, then proportional to the
    squared distance to the nearest chosen center."""
    n = x.shape[0]
    centers = np.empty((k, x.shape[1]))
    first = int(rng.integers(n))
    centers[0] = x[first]
    d2 = np.sum((x - centers[0]) ** 2, axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            # all remaining points coincide with a center; pick lowest index
            idx = int(np.argmax(d2 == 0.0))
        else:
            r = rng.random() * total
            idx = int(np.searchsorted(np.cumsum(d2), r, side="right"))
            idx = min(idx, n - 1)
        centers[j] = x[idx]
        d2 = np.minimum(d2, np.sum((x - centers[j]) ** 2, axis=1))
    return centers


def _nearest_center(x: np.ndarray, centers: np.ndarray) -> np.ndarray:
    """Index of the nearest center per point; ties go to the lower index."""
    # ||x-c||^2 = ||x||^2 - 2 x.c + ||c||^2; the ||x||^2 term is constant per row
    cross = x @ centers.T
    d2 = np.sum(centers**2, axis=1)[None, :] - 2.0 * cross
    return np.argmin(d2, axis=1)
