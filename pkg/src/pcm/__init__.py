"""Subpopulation treatment-effect levels from non-targeted trials.

The estimator pre-clusters feature space into about sqrt(n) small clusters,
averages individual treatment effects within each cluster to denoise them,
merges clusters with similar averages into effect levels via exact 1-D
clustering, and refines per-subject level assignments with hypercube
smoothing. A synthetic trial generator, evaluation metrics, and a CLI for
reproducible experiment sweeps ship alongside.
"""

__version__ = "0.1.0"

from .counterfactual import (KnnRegressor, attach_counterfactuals,
                             control_diff_att, fit_knn)
from .domain import (Dataset, LevelModel, PcmConfig, Subject,
                     ValidationReport, compute_ite, ites, validate_dataset)
from .errors import (DatasetTooSmallError, InsufficientControlsError,
                     InvalidConfigError, InvalidDatasetError,
                     InvalidSpecError, MissingCounterfactualError,
                     OneSidedClusterError, PcmError)
from .merge1d import (OneDClustering, level_threshold, merge_to_subpopulations,
                      optimal_1d_clustering, select_num_levels)
from .metrics import (EvalReport, bayes_baseline, confusion, evaluate,
                      homogeneity, homogeneity_of_labels, mae, raw_ite_mae)
from .pipeline import FitResult, run_pcm
from .precluster import (Cluster, PreClustering, box_index, box_partition,
                         epsilon_of, kmeans_labels, kmeans_partition)
from .refine import SmoothingIndex, reassign_levels, run_em, smoothed_all, smoothed_ite
from .synthgen import (Box, SynthSpec, default_spec, generate, level_of,
                       levels_of)

__all__ = [
    "__version__",
    "Box", "Cluster", "Dataset", "EvalReport", "FitResult", "KnnRegressor",
    "LevelModel", "OneDClustering", "PcmConfig", "PreClustering",
    "SmoothingIndex", "Subject", "SynthSpec", "ValidationReport",
    "attach_counterfactuals", "bayes_baseline", "box_index", "box_partition",
    "compute_ite", "confusion", "control_diff_att", "default_spec",
    "epsilon_of", "evaluate", "fit_knn", "generate", "homogeneity",
    "homogeneity_of_labels", "ites", "kmeans_labels", "kmeans_partition",
    "level_of", "level_threshold", "levels_of", "mae",
    "merge_to_subpopulations", "optimal_1d_clustering", "raw_ite_mae",
    "reassign_levels", "run_em", "run_pcm", "select_num_levels",
    "smoothed_all", "smoothed_ite", "validate_dataset",
    "DatasetTooSmallError", "InsufficientControlsError", "InvalidConfigError",
    "InvalidDatasetError", "InvalidSpecError", "MissingCounterfactualError",
    "OneSidedClusterError", "PcmError",
]
