"""End-to-end fit: counterfactuals, pre-clustering, level-count selection,
merge, and EM refinement, with per-stage diagnostics.

The fit population depends on the counterfactual mode: "given" uses every
subject carrying a counterfactual, "knn" the treated population only, and
"control_diff" all subjects. All outputs are index-aligned with the input
dataset; subjects outside the fit population carry assignment -1 and NaN
smoothed effects. Fits are deterministic given (dataset, config); wall-clock
timings live in their own diagnostics entry so reports stay byte-comparable.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .counterfactual import attach_counterfactuals
from .domain import Dataset, LevelModel, PcmConfig, ites, validate_dataset
from .errors import InvalidDatasetError
from .merge1d import merge_to_subpopulations, optimal_1d_clustering, select_num_levels
from .precluster import PreClustering, box_partition, kmeans_partition
from .refine import SmoothingIndex, run_em, smoothed_all


@dataclass(frozen=True)
class FitResult:
    """A fitted level model plus everything needed to report on it.

    fit_ites holds the per-subject effects actually used by the fit (after
    counterfactual attachment), aligned with fit_indices; None in
    control-difference mode.
    """

    model: LevelModel
    diagnostics: dict
    smoothed: np.ndarray
    fit_indices: np.ndarray
    preclustering: PreClustering
    fit_ites: np.ndarray | None = None

    def precluster_labels(self) -> np.ndarray:
        """Cluster index per fit-population subject; -1 for dropped ones."""
        labels = np.full(self.fit_indices.size, -1, dtype=np.int64)
        for j, cluster in enumerate(self.preclustering.cells):
            labels[cluster.members] = j
        return labels


def run_pcm(dataset: Dataset, config: PcmConfig) -> FitResult:
    """Fit effect levels to a dataset."""
    timings: dict[str, float] = {}
    t0 = time.perf_counter()

    report = validate_dataset(dataset)
    if not report.clean:
        raise InvalidDatasetError(
            f"dataset failed validation ({len(report.issues)} issues); "
            f"first: {report.issues[0]}"
        )

    data = attach_counterfactuals(dataset, config.cf_mode, config.knn_k)
    if config.cf_mode == "given":
        fit_idx = np.nonzero(~np.isnan(data.ybar))[0]
    elif config.cf_mode == "knn":
        fit_idx = np.nonzero(data.t == 1)[0]
    else:
        fit_idx = np.arange(data.n)
    if fit_idx.size == 0:
        raise InvalidDatasetError("fit population is empty")
    sub = data.restrict(fit_idx)
    if config.cf_mode == "control_diff":
        fit_ites, arm_t, arm_y = None, sub.t, sub.y
    else:
        fit_ites, arm_t, arm_y = ites(sub), None, None
    timings["counterfactual_ms"] = 1e3 * (time.perf_counter() - t0)

    t0 = time.perf_counter()
    if config.precluster_mode == "box":
        pre = box_partition(sub.x, ites=fit_ites, t=arm_t, y=arm_y)
    else:
        pre = kmeans_partition(sub.x, ites=fit_ites, t=arm_t, y=arm_y,
                               seed=config.seed)
    timings["precluster_ms"] = 1e3 * (time.perf_counter() - t0)

    t0 = time.perf_counter()
    atts = pre.atts
    ell, err_curve, threshold, converged = select_num_levels(
        atts, n=sub.n, d=sub.d, tau_multiplier=config.tau_multiplier,
        k_max=config.k_max,
    )
    oneD = optimal_1d_clustering(atts, ell)
    model, merge_notes = merge_to_subpopulations(
        pre, oneD, n_subjects=sub.n, ites=fit_ites, t=arm_t, y=arm_y,
        err_curve=err_curve, threshold=threshold,
    )
    timings["merge_ms"] = 1e3 * (time.perf_counter() - t0)

    t0 = time.perf_counter()
    if config.cf_mode == "control_diff":
        index = SmoothingIndex.build(sub.x, sub.y, arm=sub.t)
    else:
        index = SmoothingIndex.build(sub.x, fit_ites)
    smoothed_fit = smoothed_all(index)
    model, em_notes = run_em(smoothed_fit, model, config.em_iters,
                             ites=fit_ites, t=arm_t, y=arm_y)
    timings["refine_ms"] = 1e3 * (time.perf_counter() - t0)

    assignment = np.full(dataset.n, -1, dtype=np.int64)
    assignment[fit_idx] = model.assignment
    smoothed = np.full(dataset.n, np.nan)
    smoothed[fit_idx] = smoothed_fit
    full_model = LevelModel(
        ell_hat=model.ell_hat,
        mu_hat=model.mu_hat,
        assignment=assignment,
        err_curve=model.err_curve,
        threshold_used=model.threshold_used,
    )

    diagnostics = {
        "n": dataset.n,
        "d": dataset.d,
        "n_fit": int(fit_idx.size),
        "cf_mode": config.cf_mode,
        "precluster_mode": config.precluster_mode,
        "epsilon": pre.epsilon,
        "smoothing_epsilon": index.epsilon,
        "num_clusters": len(pre.cells),
        "dropped_clusters": pre.dropped,
        "ell_hat": model.ell_hat,
        "err_curve": [[k, e] for k, e in err_curve],
        "threshold": threshold,
        "tau_multiplier": config.tau_multiplier,
        "k_max": config.k_max,
        "em_iters": config.em_iters,
        "seed": config.seed,
        "knn_k": config.knn_k,
        "converged": converged,
        "notes": merge_notes + em_notes,
        "frac_with_counterfactual": report.frac_with_counterfactual,
        "frac_treated": report.frac_treated,
        "timings_ms": timings,
    }
    return FitResult(model=full_model, diagnostics=diagnostics,
                     smoothed=smoothed, fit_indices=fit_idx,
                     preclustering=pre, fit_ites=fit_ites)
