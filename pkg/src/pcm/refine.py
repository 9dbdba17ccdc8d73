"""Hypercube smoothing of per-subject effects and EM-style reassignment.

Each subject's effect is smoothed by averaging over all subjects whose
coordinates lie in the closed hypercube of side eps(n) centered on it
(membership by per-axis |dx| <= eps/2, self included). Subjects are then
reassigned to the level whose effect best matches their smoothed value, and
level effects are recomputed from raw ITEs. Smoothed values depend only on
raw ITEs, so one smoothing pass serves any number of EM iterations.

The index buckets subjects by grid cell; a centered hypercube overlaps at
most 2 cells per axis, so queries scan at most 2^d buckets. smoothed_ite is
the exact single-subject path (exactly rounded fsum, order independent);
smoothed_all is the vectorized batch used by the pipeline, which groups
subjects by identical bucket footprints and matches the exact path to
floating-point roundoff.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import product

import numpy as np

from .domain import LevelModel
from .precluster import box_index, epsilon_of


@dataclass(frozen=True)
class SmoothingIndex:
    """Grid-bucket index over the fit population's coordinates and effects.

    For ITE-based fits, values holds per-subject ITEs and arm is None. In
    control-difference mode values holds observed outcomes and arm the
    treatment flags; smoothing then averages each arm separately and
    returns their difference (NaN when the hypercube lacks an arm).
    """

    x: np.ndarray
    values: np.ndarray
    epsilon: float
    arm: np.ndarray | None = None

    def __post_init__(self):
        x = np.atleast_2d(np.asarray(self.x, dtype=np.float64))
        values = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "values", values)
        m = int(round(1.0 / self.epsilon))
        labels = box_index(x, self.epsilon)
        order = np.argsort(labels, kind="stable")
        uniq, starts = np.unique(labels[order], return_index=True)
        spans = {int(u): (int(s), int(e)) for u, s, e in
                 zip(uniq, starts, np.append(starts[1:], order.size))}
        object.__setattr__(self, "_m", m)
        object.__setattr__(self, "_order", order)
        object.__setattr__(self, "_spans", spans)

    @classmethod
    def build(cls, x: np.ndarray, values: np.ndarray,
              arm: np.ndarray | None = None) -> "SmoothingIndex":
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        return cls(x=x, values=values,
                   epsilon=epsilon_of(x.shape[0], x.shape[1]), arm=arm)

    def bucket_members(self, cell_ranges) -> np.ndarray:
        """Member indices of the grid cells spanned by per-axis
        (lo, hi) index ranges, in bucket order."""
        m = self._m
        chunks = []
        for combo in product(*[range(lo, hi + 1) for lo, hi in cell_ranges]):
            cid = 0
            for c in combo:
                cid = cid * m + c
            span = self._spans.get(cid)
            if span is not None:
                chunks.append(self._order[span[0]:span[1]])
        if not chunks:
            return np.empty(0, dtype=np.int64)
        return np.concatenate(chunks)

    def cell_ranges_for(self, xi: np.ndarray):
        """Per-axis (lo, hi) grid index range overlapping the centered
        hypercube [xi - eps/2, xi + eps/2]."""
        h = 0.5 * self.epsilon
        ranges = []
        for a in range(self.x.shape[1]):
            lo = int(math.floor((xi[a] - h) / self.epsilon))
            hi = int(math.floor((xi[a] + h) / self.epsilon))
            ranges.append((max(lo, 0), min(hi, self._m - 1)))
        return tuple(ranges)


def smoothed_ite(i: int, index: SmoothingIndex) -> float:
    """Smoothed effect of subject i: exact mean over the centered hypercube.

    Scans the <= 2^d buckets overlapping the hypercube, filters members by
    per-axis |dx| <= eps/2, and averages with exactly rounded summation so
    the result is independent of member order.
    """
    xi = index.x[i]
    h = 0.5 * index.epsilon
    cand = index.bucket_members(index.cell_ranges_for(xi))
    inside = cand[np.all(np.abs(index.x[cand] - xi) <= h, axis=1)]
    inside = np.sort(inside)
    if index.arm is None:
        return math.fsum(index.values[inside].tolist()) / inside.size
    treated = inside[index.arm[inside] == 1]
    controls = inside[index.arm[inside] == 0]
    if treated.size == 0 or controls.size == 0:
        return float("nan")
    return (math.fsum(index.values[treated].tolist()) / treated.size
            - math.fsum(index.values[controls].tolist()) / controls.size)


def smoothed_all(index: SmoothingIndex) -> np.ndarray:
    """Vectorized smoothed effects for the whole population.

    The hypercube half-width is exactly half the grid pitch, so a
    subject's footprint is the 2-cell-per-axis block on its side of the
    cell midpoint. Subjects are batched by (cell, midpoint quadrant) and
    each batch is one pairwise |dx| <= eps/2 test against its block's
    members, into reused buffers to keep allocation off the hot path.
    """
    x = index.x
    n, d = x.shape
    h = 0.5 * index.epsilon
    eps = index.epsilon
    m = index._m
    values = index.values

    lo = np.floor((x - h) / eps).astype(np.int64)
    hi = np.floor((x + h) / eps).astype(np.int64)
    np.clip(lo, 0, m - 1, out=lo)
    np.clip(hi, 0, m - 1, out=hi)

    # batch key: the exact footprint block, encoded per axis as lo*2+span
    sig = lo[:, 0] * 2 + (hi[:, 0] - lo[:, 0])
    for a in range(1, d):
        sig = sig * (2 * m) + lo[:, a] * 2 + (hi[:, a] - lo[:, a])
    order = np.argsort(sig, kind="stable")
    uniq, starts = np.unique(sig[order], return_index=True)
    bounds = np.append(starts, n)

    out = np.empty(n)
    buf_a = buf_b = buf_m = buf_m2 = buf_w = None
    for g in range(uniq.size):
        rows = order[bounds[g]:bounds[g + 1]]
        ranges = tuple((int(lo[rows[0], a]), int(hi[rows[0], a])) for a in range(d))
        cand = index.bucket_members(ranges)
        nr, nc = rows.size, cand.size
        if buf_a is None or buf_a.shape[0] < nr or buf_a.shape[1] < nc:
            shape = (max(nr, 1 if buf_a is None else buf_a.shape[0]),
                     max(nc, 1 if buf_a is None else buf_a.shape[1]))
            buf_a = np.empty(shape)
            buf_m = np.empty(shape, dtype=bool)
            buf_m2 = np.empty(shape, dtype=bool)
            buf_w = np.empty(shape)
        a_ = buf_a[:nr, :nc]
        mask = buf_m[:nr, :nc]
        m2 = buf_m2[:nr, :nc]
        w = buf_w[:nr, :nc]
        for axis in range(d):
            np.subtract(x[cand, axis][None, :], x[rows, axis][:, None], out=a_)
            np.abs(a_, out=a_)
            if axis == 0:
                np.less_equal(a_, h, out=mask)
            else:
                np.less_equal(a_, h, out=m2)
                mask &= m2
        if index.arm is None:
            np.copyto(w, mask)
            sums = w @ values[cand]
            counts = mask.sum(axis=1)
            out[rows] = sums / counts
        else:
            treated = index.arm[cand] == 1
            np.logical_and(mask, treated[None, :], out=m2)
            np.copyto(w, m2)
            st = w @ values[cand]
            nt = m2.sum(axis=1)
            np.logical_and(mask, ~treated[None, :], out=m2)
            np.copyto(w, m2)
            sc = w @ values[cand]
            ncount = m2.sum(axis=1)
            with np.errstate(invalid="ignore", divide="ignore"):
                vals = st / nt - sc / ncount
            vals[(nt == 0) | (ncount == 0)] = np.nan
            out[rows] = vals
    return out


def reassign_levels(smoothed: np.ndarray, model: LevelModel,
                    ites: np.ndarray | None = None,
                    t: np.ndarray | None = None, y: np.ndarray | None = None):
    """One EM-style update: re-level each subject by its smoothed effect,
    then recompute level effects from raw ITEs.

    Each subject goes to the level minimizing |smoothed - mu_hat[c]| (ties
    to the lower level); subjects with NaN smoothed values (possible only
    in control-difference mode) keep their current level. Levels that end
    up empty are removed and exact effect ties merged, with notes.

    Returns (LevelModel, notes).
    """
    assignment = model.assignment
    eligible = assignment >= 0
    dist = np.abs(smoothed[:, None] - model.mu_hat[None, :])
    new_assign = np.argmin(dist, axis=1).astype(np.int64)
    keep = ~np.isfinite(smoothed)
    new_assign[keep] = assignment[keep]
    new_assign[~eligible] = -1

    notes: list[str] = []
    levels = []
    for c in range(model.ell_hat):
        members = np.nonzero(new_assign == c)[0]
        if members.size == 0:
            notes.append(f"level {c} empty after reassignment; removed")
            continue
        effect = _level_effect(members, ites, t, y)
        if effect is None:
            notes.append(f"level {c} one-sided after reassignment; removed")
            continue
        levels.append((c, members, effect))

    levels.sort(key=lambda item: (item[2], item[0]))
    merged = []
    for c, members, mu in levels:
        if merged and mu == merged[-1][2]:
            prev_c, prev_members, _ = merged[-1]
            notes.append(f"levels {prev_c} and {c} tied at effect {mu}; merged")
            union = np.sort(np.concatenate([prev_members, members]))
            merged[-1] = (prev_c, union, _level_effect(union, ites, t, y))
        else:
            merged.append((c, members, mu))

    final = np.full(new_assign.size, -1, dtype=np.int64)
    for level, (_, members, _) in enumerate(merged):
        final[members] = level
    new_model = LevelModel(
        ell_hat=len(merged),
        mu_hat=np.array([mu for _, _, mu in merged]),
        assignment=final,
        err_curve=model.err_curve,
        threshold_used=model.threshold_used,
    )
    return new_model, notes


def run_em(smoothed: np.ndarray, model: LevelModel, iters: int,
           ites: np.ndarray | None = None,
           t: np.ndarray | None = None, y: np.ndarray | None = None):
    """Apply reassign_levels iters times; iters=0 returns the input model.

    Smoothed values are computed from raw ITEs, which never change, so the
    same smoothed array serves every iteration.
    """
    if iters < 0:
        raise ValueError("iters must be >= 0")
    notes: list[str] = []
    for _ in range(iters):
        model, step_notes = reassign_levels(smoothed, model, ites=ites, t=t, y=y)
        notes.extend(step_notes)
    return model, notes


def _level_effect(members: np.ndarray, ites, t, y) -> float | None:
    """Level effect from raw data; None when a control-difference level
    lacks one arm."""
    if ites is not None:
        return float(np.mean(ites[members]))
    treated = members[t[members] == 1]
    controls = members[t[members] == 0]
    if treated.size == 0 or controls.size == 0:
        return None
    return float(np.mean(y[treated]) - np.mean(y[controls]))
