"""Command-line interface and file formats.

Subcommands: spec (dump the built-in trial spec), generate, fit, eval,
sweep. Exit codes: 0 success, 2 usage or validation failure, 3 I/O failure.
All randomness flows from explicit seeds, so every command is reproducible.

Formats:
- dataset CSV: header x1..xd,t,y,ybar,c_true; one row per subject in
  generation order; floats as shortest round-trip decimals; empty ybar or
  c_true cells mean "absent".
- fit report JSON: fitted levels plus diagnostics; keys sorted; byte-stable
  across identical runs except for the diagnostics.timings_ms entry.
- assignments CSV: index,level,smoothed_ite for every fitted subject.
- eval JSON plus optional CSV sidecars (confusion, smoothed-ITE histogram
  with 100 equal bins, per-level effects).
- sweep summary CSV: one row per (n, seed, mode) cell.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .domain import Dataset, LevelModel, PcmConfig, ites
from .errors import InvalidSpecError, PcmError
from .metrics import evaluate
from .pipeline import run_pcm
from .precluster import box_index, kmeans_labels
from .synthgen import SynthSpec, default_spec, generate

HIST_BINS = 100


def _fmt(v: float) -> str:
    """Shortest decimal that round-trips to the same float."""
    return repr(float(v))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def write_json(path: str, doc: dict) -> None:
    text = json.dumps(_jsonable(doc), indent=2, sort_keys=True)
    Path(path).write_text(text + "\n")


def write_dataset_csv(path: str, dataset: Dataset) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([f"x{j + 1}" for j in range(dataset.d)]
                        + ["t", "y", "ybar", "c_true"])
        for i in range(dataset.n):
            ybar = dataset.ybar[i]
            c = dataset.c_true[i]
            writer.writerow(
                [_fmt(v) for v in dataset.x[i]]
                + [str(int(dataset.t[i])), _fmt(dataset.y[i]),
                   "" if np.isnan(ybar) else _fmt(ybar),
                   "" if c < 0 else str(int(c))]
            )


def read_dataset_csv(path: str) -> Dataset:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise PcmError(f"{path}: empty dataset file")
        cols = {name: j for j, name in enumerate(header)}
        d = 0
        while f"x{d + 1}" in cols:
            d += 1
        if d == 0 or "t" not in cols or "y" not in cols:
            raise PcmError(f"{path}: header must contain x1..xd, t, y")
        xcols = [cols[f"x{j + 1}"] for j in range(d)]
        tcol, ycol = cols["t"], cols["y"]
        ybarcol = cols.get("ybar")
        ccol = cols.get("c_true")

        x_rows, t_rows, y_rows, ybar_rows, c_rows = [], [], [], [], []
        for row in reader:
            if not row:
                continue
            x_rows.append([float(row[j]) for j in xcols])
            t_rows.append(int(row[tcol]))
            y_rows.append(float(row[ycol]))
            if ybarcol is not None and row[ybarcol] != "":
                ybar_rows.append(float(row[ybarcol]))
            else:
                ybar_rows.append(float("nan"))
            if ccol is not None and row[ccol] != "":
                c_rows.append(int(row[ccol]))
            else:
                c_rows.append(-1)
    if not x_rows:
        raise PcmError(f"{path}: dataset has no rows")
    return Dataset(x=np.array(x_rows), t=np.array(t_rows), y=np.array(y_rows),
                   ybar=np.array(ybar_rows), c_true=np.array(c_rows))


def write_assignments_csv(path: str, fit_indices: np.ndarray,
                          assignment: np.ndarray, smoothed: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["index", "level", "smoothed_ite"])
        for i in fit_indices:
            writer.writerow([str(int(i)), str(int(assignment[i])),
                             _fmt(smoothed[i])])


def read_assignments_csv(path: str):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["index", "level", "smoothed_ite"]:
            raise PcmError(f"{path}: not an assignments file")
        idx, level, smoothed = [], [], []
        for row in reader:
            if not row:
                continue
            idx.append(int(row[0]))
            level.append(int(row[1]))
            smoothed.append(float(row[2]))
    return (np.array(idx, dtype=np.int64), np.array(level, dtype=np.int64),
            np.array(smoothed))


def _load_spec(args) -> SynthSpec:
    if args.spec is None:
        spec = default_spec()
    else:
        spec = SynthSpec.from_json(Path(args.spec).read_text())
    overrides = {}
    if getattr(args, "n", None) is not None:
        overrides["n"] = args.n
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if overrides:
        spec = dataclasses.replace(spec, **overrides)
    return spec


def cmd_spec(args) -> int:
    text = default_spec().to_json() + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_generate(args) -> int:
    spec = _load_spec(args)
    dataset = generate(spec)
    write_dataset_csv(args.out, dataset)
    return 0


def _fit_report_doc(result) -> dict:
    return {
        "ell_hat": result.model.ell_hat,
        "mu_hat": [float(v) for v in result.model.mu_hat],
        "err_curve": [[k, e] for k, e in result.model.err_curve],
        "threshold": result.model.threshold_used,
        "converged": result.diagnostics["converged"],
        "diagnostics": result.diagnostics,
    }


def _config_from_args(args) -> PcmConfig:
    knn_k = args.knn_k
    if knn_k != "auto":
        knn_k = int(knn_k)
    return PcmConfig(
        precluster_mode=args.precluster,
        cf_mode=args.cf.replace("-", "_"),
        em_iters=args.em_iters,
        tau_multiplier=args.tau_multiplier,
        k_max=args.k_max,
        seed=args.seed,
        knn_k=knn_k,
    )


def cmd_fit(args) -> int:
    dataset = read_dataset_csv(args.data)
    config = _config_from_args(args)
    if config.cf_mode == "given" and np.isnan(dataset.ybar).all():
        raise PcmError("--cf given needs a ybar column with values")
    result = run_pcm(dataset, config)
    write_json(args.out_report, _fit_report_doc(result))
    write_assignments_csv(args.out_assignments, result.fit_indices,
                          result.model.assignment, result.smoothed)
    return 0


def _rebuild_labels(report: dict, x_fit: np.ndarray) -> np.ndarray:
    """Reproduce the fit's pre-cluster labels from its recorded config."""
    diag = report["diagnostics"]
    if diag["precluster_mode"] == "box":
        return box_index(x_fit, diag["epsilon"])
    k = int(np.ceil(np.sqrt(x_fit.shape[0])))
    return kmeans_labels(x_fit, k, seed=diag["seed"])


def _estimated_true_mu(dataset: Dataset) -> np.ndarray:
    """Per-true-level mean ITE; needs ybar and c_true on the data."""
    have = (~np.isnan(dataset.ybar)) & (dataset.c_true >= 0)
    if not have.any():
        raise PcmError("cannot estimate true effects: need ybar and c_true")
    sub = dataset.restrict(np.nonzero(have)[0])
    vals = ites(sub)
    ell = int(sub.c_true.max()) + 1
    mu = np.array([float(np.mean(vals[sub.c_true == c])) for c in range(ell)])
    if np.any(np.diff(mu) <= 0):
        raise PcmError("estimated true effects are not ascending; pass --true-mu")
    return mu


def _write_confusion_csv(path: str, matrix: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["true_level"] +
                        [f"assigned_{b}" for b in range(matrix.shape[1])])
        for a in range(matrix.shape[0]):
            writer.writerow([str(a)] + [_fmt(v) for v in matrix[a]])


def _write_histogram_csv(path: str, smoothed: np.ndarray) -> None:
    finite = smoothed[np.isfinite(smoothed)]
    if finite.size == 0:
        raise PcmError("no finite smoothed values to histogram")
    lo, hi = float(finite.min()), float(finite.max())
    if hi == lo:
        hi = lo + 1.0
    counts, edges = np.histogram(finite, bins=HIST_BINS, range=(lo, hi))
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["bin_lo", "bin_hi", "count"])
        for b in range(HIST_BINS):
            writer.writerow([_fmt(edges[b]), _fmt(edges[b + 1]), str(int(counts[b]))])


def _write_effects_csv(path: str, mu_hat, counts, true_mu=None) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        header = ["level", "mu_hat", "n_subjects"]
        if true_mu is not None:
            header.append("true_mu")
        writer.writerow(header)
        for c, v in enumerate(mu_hat):
            row = [str(c), _fmt(v), str(int(counts[c]))]
            if true_mu is not None:
                row.append(_fmt(true_mu[c]) if c < len(true_mu) else "")
            writer.writerow(row)


def cmd_eval(args) -> int:
    dataset = read_dataset_csv(args.data)
    report = json.loads(Path(args.report).read_text())
    idx, level, smoothed_vals = read_assignments_csv(args.assignments)

    diag = report.get("diagnostics", {})
    if diag.get("n") != dataset.n:
        raise PcmError(
            f"dataset has {dataset.n} rows but the model was fitted on {diag.get('n')}"
        )
    if idx.size != diag.get("n_fit"):
        raise PcmError(
            f"assignments hold {idx.size} rows but the fit population was "
            f"{diag.get('n_fit')}"
        )
    if idx.size and (idx.min() < 0 or idx.max() >= dataset.n):
        raise PcmError("assignment indices outside the dataset")
    if not (dataset.c_true >= 0).any():
        raise PcmError("supervised metrics need a c_true column")

    assignment = np.full(dataset.n, -1, dtype=np.int64)
    assignment[idx] = level
    model = LevelModel(
        ell_hat=report["ell_hat"],
        mu_hat=np.array(report["mu_hat"]),
        assignment=assignment,
        err_curve=tuple((int(k), float(e)) for k, e in report["err_curve"]),
        threshold_used=report["threshold"],
    )

    if args.true_mu is not None:
        true_mu = np.array([float(v) for v in args.true_mu.split(",")])
        if np.any(np.diff(true_mu) <= 0):
            raise PcmError("--true-mu must be strictly ascending")
    else:
        true_mu = _estimated_true_mu(dataset)

    labels = _rebuild_labels(report, dataset.x[idx])
    ite_values = None
    if args.true_mu is not None and not np.isnan(dataset.ybar[idx]).any():
        ite_values = ites(dataset.restrict(idx))
    ev = evaluate(model, dataset, true_mu, labels=labels, fit_indices=idx,
                  ite_values=ite_values)

    doc = ev.to_dict()
    doc["true_mu_estimated"] = args.true_mu is None
    write_json(args.out, doc)

    if args.out_confusion:
        _write_confusion_csv(args.out_confusion, ev.confusion)
    if args.out_histogram:
        smooth_full = np.full(dataset.n, np.nan)
        smooth_full[idx] = smoothed_vals
        _write_histogram_csv(args.out_histogram, smooth_full)
    if args.out_effects:
        counts = np.bincount(level[level >= 0], minlength=model.ell_hat)
        _write_effects_csv(args.out_effects, list(model.mu_hat), counts,
                           list(true_mu))
    return 0


SWEEP_COLUMNS = ["n", "seed", "mode", "mae_mean", "mae_std", "ell_hat",
                 "homogeneity", "diag0", "diag1", "diag2",
                 "mu_hat0", "mu_hat1", "mu_hat2", "wall_ms", "error"]


def _sweep_cell(spec, n, rep, mode, args, cells_dir: Path):
    """Run generate+fit+eval for one sweep cell; returns a summary row."""
    mode_code = {"box": 0, "kmeans": 1}[mode]
    ss = np.random.SeedSequence(entropy=[args.base_seed, n, mode_code, rep])
    data_seed, fit_seed = (int(s) for s in ss.generate_state(2, np.uint64))
    cell_spec = dataclasses.replace(spec, n=n, seed=data_seed)
    started = time.perf_counter()

    dataset = generate(cell_spec)
    config = PcmConfig(
        precluster_mode=mode,
        cf_mode=args.cf.replace("-", "_"),
        em_iters=args.em_iters,
        tau_multiplier=args.tau_multiplier,
        k_max=args.k_max,
        seed=fit_seed,
        knn_k="auto",
    )
    result = run_pcm(dataset, config)
    true_mu = cell_spec.mu[1] - cell_spec.mu[0]
    if np.any(np.diff(true_mu) <= 0):
        raise PcmError("sweep needs spec levels in ascending effect order")
    ev = evaluate(result.model, dataset, true_mu,
                  labels=result.precluster_labels(),
                  fit_indices=result.fit_indices, ite_values=result.fit_ites)
    wall_ms = 1e3 * (time.perf_counter() - started)

    stem = f"n{n}_seed{rep}_{mode}"
    write_json(cells_dir / f"{stem}_report.json", _fit_report_doc(result))
    write_assignments_csv(cells_dir / f"{stem}_assignments.csv",
                          result.fit_indices, result.model.assignment,
                          result.smoothed)
    write_json(cells_dir / f"{stem}_eval.json", ev.to_dict())
    _write_confusion_csv(cells_dir / f"{stem}_confusion.csv", ev.confusion)
    _write_histogram_csv(cells_dir / f"{stem}_histogram.csv", result.smoothed)
    if args.keep_data:
        write_dataset_csv(cells_dir / f"{stem}_data.csv", dataset)

    diag = np.diag(ev.confusion)
    row = {
        "n": n, "seed": rep, "mode": mode,
        "mae_mean": _fmt(ev.mae_mean), "mae_std": _fmt(ev.mae_std),
        "ell_hat": ev.ell_hat,
        "homogeneity": _fmt(ev.homogeneity),
        "wall_ms": _fmt(wall_ms), "error": "",
    }
    for j in range(3):
        row[f"diag{j}"] = _fmt(diag[j]) if j < diag.size else ""
        row[f"mu_hat{j}"] = _fmt(ev.mu_hat[j]) if j < len(ev.mu_hat) else ""
    return row


def cmd_sweep(args) -> int:
    spec = _load_spec(args)
    n_grid = [int(v) for v in args.n_grid.split(",")]
    modes = [m.strip() for m in args.modes.split(",")]
    for m in modes:
        if m not in ("box", "kmeans"):
            raise PcmError(f"unknown pre-cluster mode {m!r}")
    out_dir = Path(args.out_dir)
    cells_dir = out_dir / "cells"
    cells_dir.mkdir(parents=True, exist_ok=True)

    rows = []
    succeeded = 0
    for n in n_grid:
        for mode in modes:
            for rep in range(args.seeds):
                try:
                    row = _sweep_cell(spec, n, rep, mode, args, cells_dir)
                    succeeded += 1
                except Exception as exc:  # recorded per-row, sweep continues
                    row = {c: "" for c in SWEEP_COLUMNS}
                    row.update({"n": n, "seed": rep, "mode": mode,
                                "error": f"{type(exc).__name__}: {exc}"})
                rows.append(row)

    with open(out_dir / "summary.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=SWEEP_COLUMNS, lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
    return 0 if succeeded > 0 else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pcm",
        description="Extract subpopulation treatment-effect levels from "
                    "non-targeted trials by pre-clustering and merging.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("spec", help="dump the built-in synthetic trial spec")
    p.add_argument("--out", help="write to this path instead of stdout")
    p.set_defaults(func=cmd_spec)

    p = sub.add_parser("generate", help="sample a synthetic trial to CSV")
    p.add_argument("--spec", help="spec JSON path (default: built-in trial)")
    p.add_argument("--out", required=True, help="output dataset CSV")
    p.add_argument("--n", type=int, help="override subject count")
    p.add_argument("--seed", type=int, help="override generation seed")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("fit", help="fit effect levels to a dataset")
    p.add_argument("--data", required=True, help="dataset CSV")
    p.add_argument("--out-report", required=True, help="fit report JSON")
    p.add_argument("--out-assignments", required=True, help="assignments CSV")
    _add_fit_flags(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("eval", help="score a fit against true levels")
    p.add_argument("--data", required=True, help="dataset CSV (needs c_true)")
    p.add_argument("--report", required=True, help="fit report JSON")
    p.add_argument("--assignments", required=True, help="assignments CSV")
    p.add_argument("--out", required=True, help="evaluation report JSON")
    p.add_argument("--true-mu", help="comma-separated true level effects, "
                                     "ascending (default: estimated from data)")
    p.add_argument("--out-confusion", help="confusion matrix CSV")
    p.add_argument("--out-histogram", help="smoothed-ITE histogram CSV")
    p.add_argument("--out-effects", help="per-level effects CSV")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="generate+fit+eval over an (n, seed, "
                                     "mode) grid")
    p.add_argument("--spec", help="spec JSON path (default: built-in trial)")
    p.add_argument("--out-dir", required=True, help="output directory")
    p.add_argument("--n-grid", required=True,
                   help="comma-separated subject counts")
    p.add_argument("--seeds", type=int, default=3,
                   help="replicates per cell (default 3)")
    p.add_argument("--modes", default="box",
                   help="comma-separated pre-cluster modes (default box)")
    p.add_argument("--base-seed", type=int, default=0,
                   help="root seed; each cell derives its stream from "
                        "(base seed, n, mode, replicate)")
    p.add_argument("--keep-data", action="store_true",
                   help="also write each cell's dataset CSV")
    _add_fit_flags(p, with_seed=False)
    p.set_defaults(func=cmd_sweep)
    return parser


def _add_fit_flags(p: argparse.ArgumentParser, with_seed: bool = True) -> None:
    p.add_argument("--cf", default="given",
                   choices=["given", "knn", "control-diff"],
                   help="counterfactual mode (default given)")
    p.add_argument("--precluster", default="box", choices=["box", "kmeans"],
                   help="pre-clustering mode (default box)")
    p.add_argument("--em-iters", type=int, default=1,
                   help="EM refinement passes (default 1)")
    p.add_argument("--tau-multiplier", type=float, default=1.0,
                   help="level-selection threshold multiplier (default 1)")
    p.add_argument("--k-max", type=int, default=10,
                   help="largest level count examined (default 10)")
    p.add_argument("--knn-k", default="auto",
                   help="neighbour count for --cf knn (default auto)")
    if with_seed:
        p.add_argument("--seed", type=int, default=0,
                       help="fit seed (k-means seeding)")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InvalidSpecError as exc:
        print(f"pcm: invalid spec: {exc}", file=sys.stderr)
        return 2
    except PcmError as exc:
        print(f"pcm: {exc}", file=sys.stderr)
        return 2
    except (ValueError, json.JSONDecodeError) as exc:
        print(f"pcm: bad input: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"pcm: I/O error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
