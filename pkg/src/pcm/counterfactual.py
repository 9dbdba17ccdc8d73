"""Counterfactual outcomes for treated subjects.

Three modes: "given" reads counterfactuals already present on the dataset,
"knn" estimates them by mean-of-k-nearest-controls regression, and
"control_diff" skips per-subject counterfactuals entirely in favour of
per-cluster treated/control outcome differences.

The k-NN regressor indexes controls on the same kind of grid the
pre-clustering uses and expands cell rings per query batch until the k-th
neighbour is provably inside the searched radius; for d > 4 (or too few
controls to grid) it falls back to brute force. Distance ties at the k-th
position break toward the lower control index.
"""

from __future__ import annotations

import numpy as np

from .domain import Dataset
from .errors import (InsufficientControlsError, MissingCounterfactualError,
                     OneSidedClusterError)
from .precluster import box_index, epsilon_of

_GRID_MAX_D = 4


def auto_k(num_controls: int) -> int:
    """Default neighbour count: ceil(sqrt(number of controls))."""
    return int(np.ceil(np.sqrt(num_controls)))


class KnnRegressor:
    """Mean outcome of the k nearest controls in Euclidean distance."""

    def __init__(self, x: np.ndarray, y: np.ndarray, k: int):
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        y = np.asarray(y, dtype=np.float64)
        if k < 1:
            raise InsufficientControlsError("k must be >= 1")
        if x.shape[0] < k:
            raise InsufficientControlsError(
                f"need at least k={k} controls, got {x.shape[0]}"
            )
        self.x = x
        self.y = y
        self.k = int(k)
        n, d = x.shape
        self._use_grid = d <= _GRID_MAX_D and n >= 2**d
        if self._use_grid:
            self._eps = epsilon_of(n, d)
            self._m = int(round(1.0 / self._eps))
            labels = box_index(x, self._eps)
            order = np.argsort(labels, kind="stable")
            uniq, starts = np.unique(labels[order], return_index=True)
            self._cell_of = {int(u): (int(s), int(e)) for u, s, e in
                             zip(uniq, starts, np.append(starts[1:], order.size))}
            self._order = order

    def predict(self, xq: np.ndarray) -> np.ndarray:
        xq = np.atleast_2d(np.asarray(xq, dtype=np.float64))
        if xq.shape[1] != self.x.shape[1]:
            raise ValueError("query dimension mismatch")
        if not self._use_grid:
            return self._predict_block(xq, np.arange(self.x.shape[0]))
        out = np.empty(xq.shape[0])
        labels = box_index(xq, self._eps)
        order = np.argsort(labels, kind="stable")
        uniq, starts = np.unique(labels[order], return_index=True)
        bounds = np.append(starts, order.size)
        for g in range(uniq.size):
            rows = order[bounds[g]:bounds[g + 1]]
            out[rows] = self._predict_cell(int(uniq[g]), xq[rows])
        return out

    def _ring_candidates(self, cell: int, r: int) -> np.ndarray:
        """Control indices in all cells within Chebyshev distance r."""
        d = self.x.shape[1]
        m = self._m
        coords = []
        c = cell
        for _ in range(d):
            coords.append(c % m)
            c //= m
        coords = coords[::-1]
        ranges = [range(max(0, c - r), min(m, c + r + 1)) for c in coords]
        chunks = []
        for idx in np.ndindex(*[len(rg) for rg in ranges]):
            cid = 0
            for a, j in enumerate(idx):
                cid = cid * m + ranges[a][j]
            span = self._cell_of.get(cid)
            if span is not None:
                chunks.append(self._order[span[0]:span[1]])
        if not chunks:
            return np.empty(0, dtype=np.int64)
        return np.concatenate(chunks)

    def _predict_cell(self, cell: int, xq: np.ndarray) -> np.ndarray:
        """Exact k-NN for all queries sharing one grid cell.

        Any control outside the ring of Chebyshev radius r is at Euclidean
        distance > r*eps from every query in the cell, so once each
        query's k-th candidate distance is <= r*eps the candidate set is
        provably complete.
        """
        r = 1
        while True:
            cand = self._ring_candidates(cell, r)
            covers_all = cand.size == self.x.shape[0]
            if cand.size >= self.k:
                d2 = _sq_dists(xq, self.x[cand])
                kth = np.partition(d2, self.k - 1, axis=1)[:, self.k - 1]
                if covers_all or bool(np.all(kth <= (r * self._eps) ** 2)):
                    return self._means_from(d2, cand)
            r += 1

    def _predict_block(self, xq: np.ndarray, cand: np.ndarray) -> np.ndarray:
        out = np.empty(xq.shape[0])
        step = max(1, int(2e7) // max(cand.size, 1))
        for lo in range(0, xq.shape[0], step):
            d2 = _sq_dists(xq[lo:lo + step], self.x[cand])
            out[lo:lo + step] = self._means_from(d2, cand)
        return out

    def _means_from(self, d2: np.ndarray, cand: np.ndarray) -> np.ndarray:
        """Mean y over each row's k nearest candidates with the index tie rule."""
        k = self.k
        if d2.shape[1] == k:
            sel_idx = np.broadcast_to(cand, d2.shape)
            return self.y[sel_idx].mean(axis=1)
        part = np.argpartition(d2, k - 1, axis=1)[:, :k]
        rows = np.arange(d2.shape[0])
        selected = d2[rows[:, None], part]
        kth = selected.max(axis=1)
        out = self.y[cand[part]].mean(axis=1)
        # a tie at the k-th distance makes argpartition's pick arbitrary;
        # redo those rows with the lower-control-index rule
        n_eq_total = (d2 == kth[:, None]).sum(axis=1)
        n_eq_sel = (selected == kth[:, None]).sum(axis=1)
        for i in np.nonzero(n_eq_total > n_eq_sel)[0]:
            row = d2[i]
            kv = kth[i]
            strict = np.nonzero(row < kv)[0]
            ties = np.nonzero(row == kv)[0]
            ties = ties[np.argsort(cand[ties], kind="stable")]
            chosen = np.concatenate([strict, ties[: k - strict.size]])
            out[i] = float(np.mean(self.y[np.sort(cand[chosen])]))
        return out


def fit_knn(controls_x: np.ndarray, controls_y: np.ndarray,
            k: int | str = "auto") -> KnnRegressor:
    """Fit the mean-of-k-nearest-controls regressor.

    k="auto" uses ceil(sqrt(number of controls)).
    """
    controls_x = np.atleast_2d(np.asarray(controls_x, dtype=np.float64))
    if k == "auto":
        k = auto_k(controls_x.shape[0])
    return KnnRegressor(controls_x, controls_y, int(k))


def attach_counterfactuals(dataset: Dataset, mode: str,
                           knn_k: int | str = "auto") -> Dataset:
    """Return a dataset whose treated subjects carry counterfactual outcomes.

    given: pass-through; every treated subject must already have ybar.
    knn: fit on the controls' observed outcomes, predict the untreated arm
    at each treated subject's features; only treated subjects receive
    estimates, and downstream fitting runs on the treated population only.
    control_diff: no-op (cluster-level differences need no ybar).
    """
    if mode == "given":
        treated_missing = np.isnan(dataset.ybar) & (dataset.t == 1)
        if treated_missing.any():
            raise MissingCounterfactualError(
                f"{int(treated_missing.sum())} treated subjects lack ybar"
            )
        return dataset
    if mode == "control_diff":
        return dataset
    if mode != "knn":
        raise ValueError(f"unknown counterfactual mode: {mode}")

    controls = np.nonzero(dataset.t == 0)[0]
    if controls.size == 0:
        raise InsufficientControlsError("knn mode needs control subjects")
    reg = fit_knn(dataset.x[controls], dataset.y[controls], knn_k)
    treated = np.nonzero(dataset.t == 1)[0]
    ybar = dataset.ybar.copy()
    ybar[treated] = reg.predict(dataset.x[treated])
    return Dataset(x=dataset.x, t=dataset.t, y=dataset.y,
                   ybar=ybar, c_true=dataset.c_true)


def control_diff_att(t: np.ndarray, y: np.ndarray) -> float:
    """Treated-minus-control mean outcome for one cluster's members.

    Raises OneSidedClusterError when either arm is empty; callers drop
    such clusters and record the count.
    """
    t = np.asarray(t)
    y = np.asarray(y, dtype=np.float64)
    treated = y[t == 1]
    controls = y[t == 0]
    if treated.size == 0 or controls.size == 0:
        raise OneSidedClusterError("cluster lacks one treatment arm")
    return float(np.mean(treated) - np.mean(controls))


def _sq_dists(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise squared Euclidean distances, clipped at zero."""
    d2 = (np.sum(a**2, axis=1)[:, None] - 2.0 * (a @ b.T)
          + np.sum(b**2, axis=1)[None, :])
    return np.maximum(d2, 0.0)
