"""Core data types: subjects, datasets, fitted level models, fit configuration.

Datasets are stored column-wise as numpy arrays (float64 outcomes and
coordinates) so that fits over millions of subjects stay cheap. Subject order
is significant and preserved: every per-subject output is index-aligned with
the input. Missing counterfactuals are NaN in ``ybar``; missing true levels
are -1 in ``c_true``. All containers are frozen after construction and safe
to share read-only across workers.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidConfigError, MissingCounterfactualError

PRECLUSTER_MODES = ("box", "kmeans")
CF_MODES = ("given", "knn", "control_diff")


@dataclass(frozen=True)
class Subject:
    """One trial participant.

    x lies in [0,1]^d, t in {0,1}, y is the observed outcome, ybar the
    optional counterfactual outcome and c_true the optional true effect
    level (evaluation only; None when unknown).
    """

    x: np.ndarray
    t: int
    y: float
    ybar: float | None = None
    c_true: int | None = None


@dataclass(frozen=True)
class Dataset:
    """Column-wise container for n subjects of dimension d.

    ybar uses NaN for absent counterfactuals, c_true uses -1 for absent
    true levels.
    """

    x: np.ndarray
    t: np.ndarray
    y: np.ndarray
    ybar: np.ndarray
    c_true: np.ndarray

    def __post_init__(self):
        x = np.atleast_2d(np.asarray(self.x, dtype=np.float64))
        n = x.shape[0]
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "t", np.asarray(self.t, dtype=np.int64).reshape(n))
        object.__setattr__(self, "y", np.asarray(self.y, dtype=np.float64).reshape(n))
        object.__setattr__(self, "ybar", np.asarray(self.ybar, dtype=np.float64).reshape(n))
        object.__setattr__(self, "c_true", np.asarray(self.c_true, dtype=np.int64).reshape(n))
        for arr in (self.x, self.t, self.y, self.ybar, self.c_true):
            arr.setflags(write=False)

    @classmethod
    def from_arrays(cls, x, t, y, ybar=None, c_true=None) -> "Dataset":
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        n = x.shape[0]
        if ybar is None:
            ybar = np.full(n, np.nan)
        if c_true is None:
            c_true = np.full(n, -1, dtype=np.int64)
        return cls(x=x, t=t, y=y, ybar=ybar, c_true=c_true)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def d(self) -> int:
        return self.x.shape[1]

    def subject(self, i: int) -> Subject:
        """Materialize subject i as a scalar view."""
        ybar = self.ybar[i]
        c = self.c_true[i]
        return Subject(
            x=self.x[i],
            t=int(self.t[i]),
            y=float(self.y[i]),
            ybar=None if np.isnan(ybar) else float(ybar),
            c_true=None if c < 0 else int(c),
        )

    def restrict(self, indices: np.ndarray) -> "Dataset":
        """Dataset view of the given subject indices (order preserved)."""
        idx = np.asarray(indices)
        return Dataset(
            x=self.x[idx], t=self.t[idx], y=self.y[idx],
            ybar=self.ybar[idx], c_true=self.c_true[idx],
        )


def compute_ite(subject: Subject) -> float:
    """Individual treatment effect (y - ybar)(2t - 1) for one subject.

    Always treated-minus-untreated: y - ybar for treated subjects,
    ybar - y for controls. Requires the counterfactual outcome.
    """
    if subject.ybar is None:
        raise MissingCounterfactualError("subject has no counterfactual outcome")
    return (subject.y - subject.ybar) * (2 * subject.t - 1)


def ites(dataset: Dataset) -> np.ndarray:
    """Vectorized compute_ite over a dataset; every subject must have ybar."""
    if np.isnan(dataset.ybar).any():
        missing = int(np.isnan(dataset.ybar).sum())
        raise MissingCounterfactualError(
            f"{missing} subjects have no counterfactual outcome"
        )
    return (dataset.y - dataset.ybar) * (2 * dataset.t - 1)


@dataclass(frozen=True)
class ValidationReport:
    """Outcome of validate_dataset. Report-only; never raises."""

    n: int
    d: int
    issues: list[str] = field(default_factory=list)
    frac_with_counterfactual: float = 0.0
    frac_treated: float = 0.0

    @property
    def clean(self) -> bool:
        return not self.issues


def validate_dataset(dataset: Dataset) -> ValidationReport:
    """Check coordinate ranges, outcome finiteness and arm composition.

    Fitting entry points require a clean report; this function only
    collects issues and summary fractions.
    """
    issues: list[str] = []
    n, d = dataset.n, dataset.d
    if n == 0:
        return ValidationReport(n=0, d=d, issues=["dataset is empty (n=0)"])

    bad_coord = ~((dataset.x >= 0.0) & (dataset.x <= 1.0))
    for i in np.unique(np.nonzero(bad_coord)[0]):
        issues.append(f"subject {i}: coordinate outside [0,1]")
    nan_coord = np.nonzero(np.isnan(dataset.x).any(axis=1))[0]
    for i in nan_coord:
        issues.append(f"subject {i}: NaN coordinate")
    for i in np.nonzero(~np.isfinite(dataset.y))[0]:
        issues.append(f"subject {i}: non-finite outcome")
    bad_t = np.nonzero((dataset.t != 0) & (dataset.t != 1))[0]
    for i in bad_t:
        issues.append(f"subject {i}: treatment flag not in {{0,1}}")
    # ybar may be NaN (absent) but not infinite
    for i in np.nonzero(np.isinf(dataset.ybar))[0]:
        issues.append(f"subject {i}: infinite counterfactual")

    return ValidationReport(
        n=n,
        d=d,
        issues=issues,
        frac_with_counterfactual=float(np.mean(~np.isnan(dataset.ybar))),
        frac_treated=float(np.mean(dataset.t == 1)),
    )


@dataclass(frozen=True)
class LevelModel:
    """Fitted result: level count, sorted level effects, per-subject levels.

    assignment is index-aligned with the fit input; subjects outside the
    fitted population carry -1. mu_hat is strictly ascending. err_curve
    holds the (k, err(k)) pairs examined during level-count selection and
    threshold_used the error threshold they were compared against.
    """

    ell_hat: int
    mu_hat: np.ndarray
    assignment: np.ndarray
    err_curve: tuple[tuple[int, float], ...]
    threshold_used: float

    def __post_init__(self):
        mu = np.asarray(self.mu_hat, dtype=np.float64)
        assign = np.asarray(self.assignment, dtype=np.int64)
        object.__setattr__(self, "mu_hat", mu)
        object.__setattr__(self, "assignment", assign)
        mu.setflags(write=False)
        assign.setflags(write=False)
        if self.ell_hat < 1:
            raise ValueError("ell_hat must be >= 1")
        if mu.shape != (self.ell_hat,):
            raise ValueError("mu_hat length must equal ell_hat")
        if self.ell_hat > 1 and not np.all(np.diff(mu) > 0):
            raise ValueError("mu_hat must be strictly ascending")
        fitted = assign[assign >= 0]
        if fitted.size and fitted.max() >= self.ell_hat:
            raise ValueError("assignment references a level >= ell_hat")


@dataclass(frozen=True)
class PcmConfig:
    """Configuration for one fit. Defaults follow the single-update,
    threshold-multiplier-1 setup used throughout the built-in experiments."""

    precluster_mode: str = "box"
    cf_mode: str = "given"
    em_iters: int = 1
    tau_multiplier: float = 1.0
    k_max: int = 10
    seed: int = 0
    knn_k: int | str = "auto"

    def __post_init__(self):
        if self.precluster_mode not in PRECLUSTER_MODES:
            raise InvalidConfigError(f"precluster_mode must be one of {PRECLUSTER_MODES}")
        if self.cf_mode not in CF_MODES:
            raise InvalidConfigError(f"cf_mode must be one of {CF_MODES}")
        if self.em_iters < 0:
            raise InvalidConfigError("em_iters must be >= 0")
        if not self.tau_multiplier > 0:
            raise InvalidConfigError("tau_multiplier must be positive")
        if self.k_max < 1:
            raise InvalidConfigError("k_max must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise InvalidConfigError("seed must fit in 64 unsigned bits")
        if self.knn_k != "auto" and (not isinstance(self.knn_k, int) or self.knn_k < 1):
            raise InvalidConfigError("knn_k must be 'auto' or a positive integer")
