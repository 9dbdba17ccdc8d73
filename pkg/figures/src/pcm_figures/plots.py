"""The four standard plots, file-in / image-out.

Axes policies: the subpopulation map fixes both axes to [0,1] with equal
aspect; the histogram spans the file's bin range; the homogeneity curve
uses a log-scaled subject-count axis; the error curve uses integer group
counts with a log-scaled error axis. Assigned levels map to a grayscale
ramp (lowest level black, highest white) drawn on a muted blue background
so that white points stay visible.
"""

from __future__ import annotations

import csv
import json
from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

BACKGROUND = "#a9b8c7"

# deterministic SVG output: no embedded date, fixed element-id salt
matplotlib.rcParams["svg.hashsalt"] = "pcm-figures"
_SAVEFIG_META = {".svg": {"metadata": {"Date": None}}}


class FigureInputError(Exception):
    """An input file is missing, empty, or has the wrong shape."""


def _save(fig, out_path: str) -> None:
    path = Path(out_path)
    kwargs = _SAVEFIG_META.get(path.suffix.lower(), {})
    fig.savefig(path, dpi=150, **kwargs)
    plt.close(fig)


def _read_csv(path: str) -> list[dict]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise FigureInputError(f"{path}: no data rows")
    return rows


def level_grayscale(level: int, num_levels: int) -> float:
    """Gray value for an assigned level: lowest black, highest white."""
    if num_levels <= 1:
        return 0.5
    return level / (num_levels - 1)


def plot_subpopulations(data_csv: str, assignments_csv: str, out_path: str) -> None:
    """Scatter of the d=2 feature space colored by assigned level."""
    data_rows = _read_csv(data_csv)
    if "x2" not in data_rows[0] or "x3" in data_rows[0]:
        raise FigureInputError(
            f"{data_csv}: the subpopulation map needs exactly 2 feature "
            f"columns (x1, x2)"
        )
    assign_rows = _read_csv(assignments_csv)
    x1 = np.array([float(r["x1"]) for r in data_rows])
    x2 = np.array([float(r["x2"]) for r in data_rows])
    idx = np.array([int(r["index"]) for r in assign_rows])
    level = np.array([int(r["level"]) for r in assign_rows])
    if idx.max(initial=-1) >= x1.size:
        raise FigureInputError("assignment indices outside the dataset")

    num_levels = int(level.max()) + 1
    grays = np.array([level_grayscale(c, num_levels) for c in level])
    fig, ax = plt.subplots(figsize=(6, 6))
    ax.set_facecolor(BACKGROUND)
    ax.scatter(x1[idx], x2[idx], c=grays, cmap="gray", vmin=0.0, vmax=1.0,
               s=1.5, linewidths=0, rasterized=True)
    ax.set_xlim(0.0, 1.0)
    ax.set_ylim(0.0, 1.0)
    ax.set_aspect("equal")
    ax.set_xlabel("x1")
    ax.set_ylabel("x2")
    ax.set_title(f"assigned effect levels ({num_levels} levels)")
    _save(fig, out_path)


def plot_histogram(histogram_csv: str, out_path: str) -> None:
    """Bar chart of the smoothed-effect histogram emitted by eval."""
    rows = _read_csv(histogram_csv)
    lo = np.array([float(r["bin_lo"]) for r in rows])
    hi = np.array([float(r["bin_hi"]) for r in rows])
    counts = np.array([int(r["count"]) for r in rows])
    centers = 0.5 * (lo + hi)
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.bar(centers, counts, width=hi - lo, color="#3a5a7a", linewidth=0)
    ax.set_xlabel("smoothed treatment effect")
    ax.set_ylabel("subjects")
    ax.set_title("smoothed-effect distribution")
    _save(fig, out_path)


def plot_homogeneity(summary_csv: str, out_path: str) -> None:
    """Mean cluster homogeneity versus subject count, one line per mode."""
    rows = [r for r in _read_csv(summary_csv) if not r.get("error")]
    if not rows:
        raise FigureInputError(f"{summary_csv}: every sweep row failed")
    series: dict[str, dict[int, list[float]]] = defaultdict(lambda: defaultdict(list))
    for r in rows:
        series[r["mode"]][int(r["n"])].append(float(r["homogeneity"]))
    fig, ax = plt.subplots(figsize=(6, 4))
    for mode in sorted(series):
        ns = sorted(series[mode])
        means = [float(np.mean(series[mode][n])) for n in ns]
        ax.plot(ns, means, marker="o", label=mode)
    ax.set_xscale("log")
    ax.set_xlabel("subjects")
    ax.set_ylabel("mean cluster homogeneity")
    ax.set_ylim(top=1.0)
    ax.set_title("pre-cluster homogeneity vs. trial size")
    ax.legend()
    fig.tight_layout()
    _save(fig, out_path)


def plot_errcurve(report_json: str, out_path: str) -> None:
    """Clustering error against group count, marking the selected count."""
    try:
        doc = json.loads(Path(report_json).read_text())
    except json.JSONDecodeError as exc:
        raise FigureInputError(f"{report_json}: not valid JSON: {exc}") from exc
    curve = doc.get("err_curve") or []
    if not curve:
        raise FigureInputError(f"{report_json}: empty err_curve")
    ks = [int(k) for k, _ in curve]
    errs = [float(e) for _, e in curve]
    ell = int(doc["ell_hat"])
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(ks, errs, marker=".", color="#3a5a7a")
    if ell in ks:
        ax.plot([ell], [errs[ks.index(ell)]], marker="o", markersize=11,
                markerfacecolor="none", markeredgecolor="#c23b22",
                markeredgewidth=2, linestyle="none",
                label=f"selected: {ell} levels")
        ax.legend()
    positive = [e for e in errs if e > 0]
    if positive:
        ax.set_yscale("log")
    ax.set_xticks(ks)
    ax.set_xlabel("groups k")
    ax.set_ylabel("optimal 1-D clustering error")
    ax.set_title("error curve")
    fig.tight_layout()
    _save(fig, out_path)
