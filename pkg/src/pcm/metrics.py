"""Evaluation against known true levels: mean absolute effect error,
level confusion, cluster homogeneity, and the threshold-on-raw-ITEs
baseline that gets the true effects handed to it.

Fitted levels are matched to true levels through ascending effect order,
so all metrics are invariant to internal level relabeling. Subjects outside
the fit population (assignment -1) or without a true level are skipped.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .domain import Dataset, LevelModel
from .precluster import PreClustering


def mae(model: LevelModel, dataset: Dataset, true_mu) -> tuple[float, float]:
    """Mean and population std of |true effect - assigned level effect|.

    A subject's predicted effect is the fitted effect of its assigned
    level; its true effect is true_mu at its true level.
    """
    true_mu = np.asarray(true_mu, dtype=np.float64)
    sel = (model.assignment >= 0) & (dataset.c_true >= 0)
    if not sel.any():
        raise ValueError("no subjects with both an assignment and a true level")
    errors = np.abs(true_mu[dataset.c_true[sel]] - model.mu_hat[model.assignment[sel]])
    return float(errors.mean()), float(errors.std())


def raw_ite_mae(ite_values: np.ndarray, c_true: np.ndarray,
                true_mu) -> tuple[float, float]:
    """MAE of raw per-subject effects against the true level effects,
    i.e. the error an analysis quoting unsmoothed ITEs would make."""
    true_mu = np.asarray(true_mu, dtype=np.float64)
    sel = c_true >= 0
    errors = np.abs(true_mu[c_true[sel]] - np.asarray(ite_values)[sel])
    return float(errors.mean()), float(errors.std())


def confusion(model: LevelModel, dataset: Dataset) -> np.ndarray:
    """Row-normalized confusion matrix: entry (a, b) is the fraction of
    true-level-a subjects assigned to fitted level b.

    Rectangular when the fitted level count differs from the true one.
    Rows without fitted subjects are left at zero.
    """
    sel = (model.assignment >= 0) & (dataset.c_true >= 0)
    c_true = dataset.c_true[sel]
    assigned = model.assignment[sel]
    ell_true = int(c_true.max()) + 1 if c_true.size else 0
    matrix = np.zeros((ell_true, model.ell_hat))
    np.add.at(matrix, (c_true, assigned), 1.0)
    row_totals = matrix.sum(axis=1, keepdims=True)
    with np.errstate(invalid="ignore"):
        matrix = np.where(row_totals > 0, matrix / row_totals, 0.0)
    return matrix


def homogeneity(preclustering: PreClustering, dataset: Dataset) -> float:
    """Unweighted mean over retained clusters of the fraction of members
    belonging to the cluster's majority true level."""
    fractions = []
    for cluster in preclustering.cells:
        levels = dataset.c_true[cluster.members]
        counts = np.bincount(levels[levels >= 0])
        if counts.size == 0:
            continue
        fractions.append(counts.max() / levels.size)
    if not fractions:
        raise ValueError("no clusters with true levels")
    return float(np.mean(fractions))


def homogeneity_of_labels(labels: np.ndarray, c_true: np.ndarray) -> float:
    """Homogeneity from raw cluster labels (no ATTs needed).

    Negative labels mark subjects outside any retained cluster and are
    skipped.
    """
    keep = labels >= 0
    labels = labels[keep]
    c_true = c_true[keep]
    order = np.argsort(labels, kind="stable")
    sorted_labels = labels[order]
    _, starts = np.unique(sorted_labels, return_index=True)
    bounds = np.append(starts, labels.size)
    fractions = []
    for g in range(starts.size):
        levels = c_true[order[bounds[g]:bounds[g + 1]]]
        counts = np.bincount(levels[levels >= 0])
        if counts.size:
            fractions.append(counts.max() / levels.size)
    if not fractions:
        raise ValueError("no clusters with true levels")
    return float(np.mean(fractions))


def bayes_baseline(ite_values: np.ndarray, true_mu) -> LevelModel:
    """Classify raw effects by thresholding at consecutive midpoints of the
    (true, normally unknowable) level effects.

    The returned model's effects are the true effects themselves; its MAE
    is conventionally computed on the raw effects via raw_ite_mae, since
    this baseline predicts each subject's effect by its raw value.
    """
    true_mu = np.asarray(true_mu, dtype=np.float64)
    ite_values = np.asarray(ite_values, dtype=np.float64)
    mids = 0.5 * (true_mu[1:] + true_mu[:-1])
    assignment = np.searchsorted(mids, ite_values, side="left").astype(np.int64)
    return LevelModel(
        ell_hat=true_mu.size,
        mu_hat=true_mu.copy(),
        assignment=assignment,
        err_curve=(),
        threshold_used=float("nan"),
    )


@dataclass(frozen=True)
class EvalReport:
    """Everything the evaluation emits for one fitted model."""

    ell_hat: int
    ell_true: int
    mae_mean: float
    mae_std: float
    confusion: np.ndarray
    mu_hat: tuple[float, ...]
    true_mu: tuple[float, ...] | None = None
    homogeneity: float | None = None
    bayes: dict | None = None
    flags: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        doc = {
            "ell_hat": self.ell_hat,
            "ell_true": self.ell_true,
            "mae": {"mean": self.mae_mean, "std": self.mae_std},
            "confusion": np.asarray(self.confusion).tolist(),
            "mu_hat": list(self.mu_hat),
            "flags": list(self.flags),
        }
        if self.true_mu is not None:
            doc["true_mu"] = list(self.true_mu)
        if self.homogeneity is not None:
            doc["homogeneity"] = self.homogeneity
        if self.bayes is not None:
            doc["bayes"] = self.bayes
        return doc


def evaluate(model: LevelModel, dataset: Dataset, true_mu,
             labels: np.ndarray | None = None,
             fit_indices: np.ndarray | None = None,
             ite_values: np.ndarray | None = None) -> EvalReport:
    """Assemble the full evaluation report.

    labels (pre-cluster labels over the fit population) enable the
    homogeneity figure; ite_values (raw effects over the fit population)
    enable the raw-ITE baseline block.
    """
    true_mu = np.asarray(true_mu, dtype=np.float64)
    mae_mean, mae_std = mae(model, dataset, true_mu)
    matrix = confusion(model, dataset)
    flags = []
    ell_true = matrix.shape[0]
    if model.ell_hat != ell_true:
        flags.append(f"level count mismatch: fitted {model.ell_hat}, true {ell_true}")

    homog = None
    if labels is not None and fit_indices is not None:
        homog = homogeneity_of_labels(labels, dataset.c_true[fit_indices])

    bayes = None
    if ite_values is not None and fit_indices is not None:
        base = bayes_baseline(ite_values, true_mu)
        raw_mean, raw_std = raw_ite_mae(
            ite_values, dataset.c_true[fit_indices], true_mu
        )
        base_full = np.full(dataset.n, -1, dtype=np.int64)
        base_full[fit_indices] = base.assignment
        base_model = LevelModel(ell_hat=base.ell_hat, mu_hat=base.mu_hat,
                                assignment=base_full, err_curve=(),
                                threshold_used=float("nan"))
        bayes = {
            "mae_raw": {"mean": raw_mean, "std": raw_std},
            "confusion": confusion(base_model, dataset).tolist(),
        }

    return EvalReport(
        ell_hat=model.ell_hat,
        ell_true=ell_true,
        mae_mean=mae_mean,
        mae_std=mae_std,
        confusion=matrix,
        mu_hat=tuple(float(v) for v in model.mu_hat),
        true_mu=tuple(float(v) for v in true_mu),
        homogeneity=homog,
        bayes=bayes,
        flags=tuple(flags),
    )
