"""Synthetic non-targeted trials: uniform features on [0,1]^d, axis-aligned
effect-level regions, Gaussian potential outcomes for both arms.

Both potential outcomes are always materialized, so the "given"
counterfactual mode can read the unobserved arm directly and isolate the
fitting pipeline from counterfactual-estimator quality. Generation is fully
determined by the spec seed: draws come from a counter-based Philox stream
keyed on the seed, in a fixed order (coordinates, treatment, treated-arm
outcomes, control-arm outcomes), so identical specs give bit-identical
datasets.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .domain import Dataset
from .errors import InvalidSpecError


@dataclass(frozen=True)
class Box:
    """Axis-aligned box [lo, hi) per axis, tagged with an effect level.

    The upper face is inclusive when hi == 1.0 so the domain boundary
    belongs to the box.
    """

    lo: tuple[float, ...]
    hi: tuple[float, ...]
    level: int

    def contains(self, x: np.ndarray) -> np.ndarray:
        """Boolean containment mask for points x of shape (n, d)."""
        x = np.atleast_2d(x)
        lo = np.asarray(self.lo)
        hi = np.asarray(self.hi)
        upper = np.where(hi == 1.0, x <= hi, x < hi)
        return np.all((x >= lo) & upper, axis=1)


@dataclass(frozen=True)
class SynthSpec:
    """Generative description of one synthetic trial.

    mu[t][c] is the expected outcome for arm t and level c; sigma is the
    common outcome standard deviation; p_treat the uniform propensity.
    Later regions overwrite earlier ones where they overlap; points in no
    region take default_level.
    """

    d: int
    regions: tuple[Box, ...]
    default_level: int
    mu: np.ndarray  # shape (2, num_levels)
    sigma: float
    p_treat: float
    n: int
    seed: int = 0

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=np.float64)
        object.__setattr__(self, "mu", mu)
        mu.setflags(write=False)
        object.__setattr__(self, "regions", tuple(self.regions))
        self.validate()

    @property
    def num_levels(self) -> int:
        return self.mu.shape[1]

    def validate(self) -> None:
        if self.d < 1:
            raise InvalidSpecError("d must be >= 1")
        if self.n < 1:
            raise InvalidSpecError("n must be >= 1")
        if self.sigma < 0:
            raise InvalidSpecError("sigma must be >= 0")
        if not 0.0 < self.p_treat < 1.0:
            raise InvalidSpecError("p_treat must lie in (0,1)")
        if not 0 <= self.seed < 2**64:
            raise InvalidSpecError("seed must fit in 64 unsigned bits")
        if self.mu.ndim != 2 or self.mu.shape[0] != 2:
            raise InvalidSpecError("mu must have shape (2, num_levels)")
        ell = self.num_levels
        for box in self.regions:
            if len(box.lo) != self.d or len(box.hi) != self.d:
                raise InvalidSpecError("region dimension mismatch")
            if not all(0.0 <= a < b <= 1.0 for a, b in zip(box.lo, box.hi)):
                raise InvalidSpecError("region faces must satisfy 0 <= lo < hi <= 1")
            if not 0 <= box.level < ell:
                raise InvalidSpecError(f"region level {box.level} outside [0,{ell})")
        if not 0 <= self.default_level < ell:
            raise InvalidSpecError("default_level outside level range")
        measures = self.level_measures()
        if np.any(measures <= 0.0):
            missing = np.nonzero(measures <= 0.0)[0].tolist()
            raise InvalidSpecError(f"levels {missing} have zero measure")
        effects = self.mu[1] - self.mu[0]
        if ell > 1:
            gaps = np.abs(effects[:, None] - effects[None, :])
            separation = gaps[~np.eye(ell, dtype=bool)].min()
            if not separation > 0:
                raise InvalidSpecError("level effects must be distinct")

    def level_measures(self) -> np.ndarray:
        """Exact Lebesgue measure of each level's subpopulation.

        Computed on the grid induced by all region faces (coordinate
        compression), which is exact for axis-aligned boxes.
        """
        cuts = []
        for axis in range(self.d):
            edges = {0.0, 1.0}
            for box in self.regions:
                edges.add(box.lo[axis])
                edges.add(box.hi[axis])
            cuts.append(np.array(sorted(edges)))
        measures = np.zeros(self.num_levels)
        # midpoints of every compressed cell, iterated in mixed radix
        mids = [0.5 * (c[1:] + c[:-1]) for c in cuts]
        widths = [np.diff(c) for c in cuts]
        shape = tuple(len(m) for m in mids)
        for flat in range(int(np.prod(shape))):
            idx = np.unravel_index(flat, shape)
            point = np.array([mids[a][i] for a, i in enumerate(idx)])
            vol = float(np.prod([widths[a][i] for a, i in enumerate(idx)]))
            measures[level_of(point, self)] += vol
        return measures

    def to_json(self) -> str:
        doc = {
            "d": self.d,
            "regions": [
                {"lo": list(b.lo), "hi": list(b.hi), "level": b.level}
                for b in self.regions
            ],
            "default_level": self.default_level,
            "mu": self.mu.tolist(),
            "sigma": self.sigma,
            "p_treat": self.p_treat,
            "n": self.n,
            "seed": self.seed,
        }
        return json.dumps(doc, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "SynthSpec":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise InvalidSpecError(f"spec is not valid JSON: {exc}") from exc
        try:
            regions = tuple(
                Box(lo=tuple(r["lo"]), hi=tuple(r["hi"]), level=int(r["level"]))
                for r in doc.get("regions", [])
            )
            return cls(
                d=int(doc["d"]),
                regions=regions,
                default_level=int(doc.get("default_level", 0)),
                mu=np.asarray(doc["mu"], dtype=np.float64),
                sigma=float(doc["sigma"]),
                p_treat=float(doc.get("p_treat", 0.5)),
                n=int(doc["n"]),
                seed=int(doc.get("seed", 0)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidSpecError(f"malformed spec document: {exc}") from exc


def level_of(x: np.ndarray, spec: SynthSpec) -> int:
    """Effect level of a single point: last containing region wins,
    default_level if no region contains it."""
    x = np.asarray(x, dtype=np.float64).reshape(1, spec.d)
    level = spec.default_level
    for box in spec.regions:
        if box.contains(x)[0]:
            level = box.level
    return level


def levels_of(x: np.ndarray, spec: SynthSpec) -> np.ndarray:
    """Vectorized level_of for points of shape (n, d)."""
    x = np.atleast_2d(x)
    levels = np.full(x.shape[0], spec.default_level, dtype=np.int64)
    for box in spec.regions:
        levels[box.contains(x)] = box.level
    return levels


def generate(spec: SynthSpec) -> Dataset:
    """Sample a dataset from the spec.

    Coordinates are i.i.d. uniform on [0,1]^d, treatment is Bernoulli
    (p_treat), and both potential outcomes are drawn: the treated-arm value
    from N(mu[1][c], sigma) and the control-arm value from N(mu[0][c],
    sigma). y is the observed arm, ybar always the other draw.
    """
    spec.validate()
    rng = np.random.Generator(np.random.Philox(key=spec.seed))
    x = rng.random((spec.n, spec.d))
    t = (rng.random(spec.n) < spec.p_treat).astype(np.int64)
    c = levels_of(x, spec)
    v = rng.normal(spec.mu[1][c], spec.sigma)
    vbar = rng.normal(spec.mu[0][c], spec.sigma)
    y = np.where(t == 1, v, vbar)
    ybar = np.where(t == 1, vbar, v)
    return Dataset(x=x, t=t, y=y, ybar=ybar, c_true=c)


# Default trial: d=2, three effect levels (0, 1, 2). The outer levels each
# occupy two well-separated boxes, so one effect level covers disconnected
# parts of the feature space; the middle level is the background. With the
# middle level as background every region boundary separates levels one
# effect step apart, so a subject's smoothed effect never straddles a
# skipped level; boxes of effects 0 and 2 floating in a zero-effect
# background would put the inner edge bands of the effect-2 boxes nearer
# to effect 1 than to their own level. Level measures are approximately
# 0.25 / 0.50 / 0.25. Box faces are chosen away from the grid lines of the
# eps(n)-nets at n = 20K..2M so that boundary cells carry honest mixtures.
DEFAULT_REGIONS = (
    Box(lo=(0.073, 0.052), hi=(0.425, 0.408), level=0),
    Box(lo=(0.577, 0.575), hi=(0.927, 0.928), level=0),
    Box(lo=(0.530, 0.051), hi=(0.886, 0.399), level=2),
    Box(lo=(0.052, 0.575), hi=(0.415, 0.926), level=2),
)


def default_spec(n: int = 200_000, seed: int = 0, sigma: float = 5.0) -> SynthSpec:
    """The built-in two-dimensional three-level trial."""
    return SynthSpec(
        d=2,
        regions=DEFAULT_REGIONS,
        default_level=1,
        mu=np.array([[0.0, 0.0, 0.0], [0.0, 1.0, 2.0]]),
        sigma=sigma,
        p_treat=0.5,
        n=n,
        seed=seed,
    )
