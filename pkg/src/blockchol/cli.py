"""Command-line harness: fitting, tuning, simulation campaigns, prediction.

Subcommands
-----------
fit       estimate a precision matrix from a CSV data file
simulate  run seeded replicate campaigns over the built-in scenarios
predict   conditional-Gaussian prediction of late coordinates with APE
edges     dump the nonzero off-diagonal entries of a saved estimate

Exit codes: 0 success, 2 malformed flags or input files, 3 positive
definiteness failures. All randomness is seeded; outputs are byte-identical
for a fixed seed regardless of the worker count.
"""

from __future__ import annotations

import argparse
import datetime
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .blocks import GroupPartition, estimate_from_json, estimate_to_json, format_float
from .errors import InvalidInputError, NotPositiveDefiniteError
from .estimator import Dataset, FitConfig, center_columns, fit
from .linalg import spd_cholesky, spd_solve, symmetrize
from .metrics import LOSS_FIELDS, aggregate, losses
from .scenarios import ScenarioSpec, generate, sample_mvn
from .selection import TuningGrid, auto_grid, bic, bic_table_csv, select

METHOD_NAMES = ("prop", "mcd", "glasso", "block-diag")


def _parse_method(name: str) -> FitConfig:
    """Map a CLI method name to a FitConfig template (penalties filled later)."""
    if name.startswith("banded:"):
        try:
            k = int(name.split(":", 1)[1])
        except ValueError:
            raise InvalidInputError(f"bad banded method spec {name!r}, expected banded:K") from None
        return FitConfig(0.0, 0.0, method_mode="banded", banded_k=k)
    modes = {
        "prop": "bcd",
        "mcd": "mcd",
        "glasso": "glasso_only",
        "block-diag": "block_diagonal",
    }
    if name not in modes:
        raise InvalidInputError(f"unknown method {name!r}; choose from {METHOD_NAMES} or banded:K")
    return FitConfig(0.0, 0.0, method_mode=modes[name])


def _parse_groups(text: str, p: int) -> GroupPartition:
    try:
        sizes = [int(s) for s in text.split(",") if s.strip() != ""]
    except ValueError:
        raise InvalidInputError(f"bad --groups value {text!r}") from None
    part = GroupPartition(sizes)
    if part.total != p:
        raise InvalidInputError(f"partition total {part.total} != p = {p}")
    return part


def read_data_csv(path: str) -> np.ndarray:
    """Load a numeric CSV; a non-numeric first row is treated as a header."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            first = fh.readline()
            skip = 0
            try:
                [float(v) for v in first.strip().split(",")]
            except ValueError:
                skip = 1
        data = np.loadtxt(path, delimiter=",", skiprows=skip, ndmin=2, dtype=np.float64)
    except (OSError, ValueError) as exc:
        raise InvalidInputError(f"cannot read data CSV {path}: {exc}") from exc
    if data.size == 0:
        raise InvalidInputError(f"data CSV {path} is empty")
    return data


def _resolve_workers(flag_value: int | None) -> int:
    env = os.environ.get("BLOCKCHOL_WORKERS")
    if env is not None:
        try:
            return max(1, int(env))
        except ValueError:
            raise InvalidInputError(f"bad BLOCKCHOL_WORKERS value {env!r}") from None
    if flag_value is not None:
        return max(1, flag_value)
    return os.cpu_count() or 1


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def _manifest(args, seed=None) -> str:
    doc = {
        "command": " ".join(sys.argv) if sys.argv else "",
        "seed": seed,
        "config": {k: v for k, v in sorted(vars(args).items()) if k != "func"},
        "version": __version__,
        "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(),
    }
    return json.dumps(doc, indent=2, default=str) + "\n"


def _grid_for(template: FitConfig, dataset: Dataset, grid_size: int, min_ratio: float) -> TuningGrid:
    """Shared auto grid, with the lambda1 axis collapsed for methods that
    never run the regression step."""
    grid = auto_grid(dataset, grid_size=grid_size, min_ratio=min_ratio)
    if template.method_mode in ("glasso_only", "block_diagonal"):
        return TuningGrid((0.0,), grid.lambda2_values, generated_from="auto")
    return grid


def cmd_fit(args) -> int:
    data = read_data_csv(args.data)
    partition = _parse_groups(args.groups, data.shape[1])
    template = _parse_method(args.method)
    if template.method_mode == "glasso_only" and partition.n_groups > 1:
        print("warning: --method glasso ignores --groups", file=sys.stderr)
    dataset = center_columns(Dataset(data, partition))
    outdir = Path(args.outdir)

    if args.auto_bic:
        grid = _grid_for(template, dataset, args.grid_size, args.min_ratio)
        best, table = select(dataset, grid, template, workers=_resolve_workers(args.workers))
        _write(outdir / "bic_table.csv", bic_table_csv(table))
        est = best
    else:
        if args.lambda1 is None or args.lambda2 is None:
            raise InvalidInputError("provide --lambda1 and --lambda2, or --auto-bic")
        cfg = replace(template, lambda1=args.lambda1, lambda2=args.lambda2)
        est = fit(dataset, cfg)

    spd_cholesky(est.omega)  # never write a non-PD estimate
    _write(outdir / "estimate.json", estimate_to_json(est) + "\n")
    _write(outdir / "manifest.json", _manifest(args))
    return 0


def _simulate_one(rep: int, args, partition: GroupPartition, templates) -> list[dict]:
    rep_seed = args.seed ^ rep
    spec = ScenarioSpec(args.scenario, args.p, partition, seed=rep_seed)
    truth = generate(spec)
    dataset = center_columns(sample_mvn(truth, args.n, rep_seed))
    rows = []
    for name, template in templates:
        grid = _grid_for(template, dataset, args.grid_size, args.min_ratio)
        best, table = select(dataset, grid, template, workers=1)
        s = symmetrize(dataset.data.T @ dataset.data / dataset.n)
        rows.append(
            {
                "replicate": rep,
                "method": name,
                "lambda1": best.lambda1,
                "lambda2": best.lambda2,
                "bic": bic(best, s, dataset.n),
                "losses": losses(truth, best.omega),
            }
        )
    return rows


def cmd_simulate(args) -> int:
    partition = _parse_groups(args.groups, args.p)
    method_names = [m.strip() for m in args.methods.split(",") if m.strip()]
    if not method_names:
        raise InvalidInputError("--methods must name at least one method")
    templates = [(name, _parse_method(name)) for name in method_names]
    if args.reps < 1:
        raise InvalidInputError("--reps must be >= 1")
    # fail fast on invalid scenario/size combinations before spawning work
    generate(ScenarioSpec(args.scenario, args.p, partition, seed=args.seed))

    workers = _resolve_workers(args.workers)
    reps = list(range(args.reps))
    if workers > 1 and len(reps) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            per_rep = list(pool.map(lambda r: _simulate_one(r, args, partition, templates), reps))
    else:
        per_rep = [_simulate_one(r, args, partition, templates) for r in reps]

    raw_lines = ["replicate,method,lambda1,lambda2,bic," + ",".join(LOSS_FIELDS)]
    for rows in per_rep:
        for row in rows:
            vals = [str(row["replicate"]), row["method"]]
            vals += [format_float(row[k]) for k in ("lambda1", "lambda2", "bic")]
            vals += [format_float(v) for v in row["losses"].as_tuple()]
            raw_lines.append(",".join(vals))

    summary_lines = []
    header = ["scenario", "method"]
    for f in LOSS_FIELDS:
        header += [f, f + "_mean", f + "_se"]
    summary_lines.append(",".join(header))
    for name, _ in templates:
        reports = [row["losses"] for rows in per_rep for row in rows if row["method"] == name]
        if len(reports) >= 2:
            means, ses = aggregate(reports)
            mvals, svals = means.as_tuple(), ses.as_tuple()
        else:
            mvals = reports[0].as_tuple()
            svals = (0.0,) * len(LOSS_FIELDS)
        cells = [str(args.scenario), name]
        for m, s in zip(mvals, svals):
            cells += [f"{m:.4g} ({s:.3g})", format_float(m), format_float(s)]
        summary_lines.append(",".join(cells))

    outdir = Path(args.outdir)
    _write(outdir / "replicates.csv", "\n".join(raw_lines) + "\n")
    _write(outdir / "summary.csv", "\n".join(summary_lines) + "\n")
    _write(outdir / "manifest.json", _manifest(args, seed=args.seed))
    return 0


def _conditional_predictor(omega: np.ndarray, split: int):
    """K such that yhat_late = mu2 + K (y_early - mu1), from the precision blocks."""
    o22 = omega[split:, split:]
    o12 = omega[:split, split:]
    return -spd_solve(spd_cholesky(o22), o12.T)


def _fit_for_predict(train: np.ndarray, partition: GroupPartition, args):
    dataset = center_columns(Dataset(train, partition))
    template = _parse_method(args.method)
    if args.auto_bic:
        grid = _grid_for(template, dataset, args.grid_size, args.min_ratio)
        best, _ = select(dataset, grid, template, workers=1)
        return best
    if args.lambda1 is None or args.lambda2 is None:
        raise InvalidInputError("provide --lambda1 and --lambda2, or --auto-bic")
    return fit(dataset, replace(template, lambda1=args.lambda1, lambda2=args.lambda2))


def cmd_predict(args) -> int:
    data = read_data_csv(args.data)
    partition = _parse_groups(args.groups, data.shape[1])
    p = data.shape[1]
    boundaries = set(partition.offsets[1:])
    if args.split not in boundaries:
        raise InvalidInputError(
            f"--split {args.split} is not a group boundary (valid: {sorted(boundaries)})"
        )
    if args.sqrt_transform:
        if np.any(data < 0):
            raise InvalidInputError("--sqrt-transform needs non-negative counts")
        data = np.sqrt(data + 0.25)

    n = data.shape[0]
    if args.loo:
        splits = [(np.delete(np.arange(n), i), np.array([i])) for i in range(n)]
    else:
        if args.train is None or not (2 <= args.train < n):
            raise InvalidInputError("--train must leave at least 2 training and 1 test row")
        idx = np.arange(n)
        splits = [(idx[: args.train], idx[args.train :])]

    split = args.split
    pred_rows = []  # (row, coordinate, actual, predicted)
    for train_idx, test_idx in splits:
        train = data[train_idx]
        mu = train.mean(axis=0)
        est = _fit_for_predict(train, partition, args)
        k = _conditional_predictor(est.omega, split)
        for i in test_idx:
            y_early = data[i, :split]
            y_late = data[i, split:]
            y_hat = mu[split:] + k @ (y_early - mu[:split])
            for j in range(p - split):
                pred_rows.append((int(i), split + j, float(y_late[j]), float(y_hat[j])))

    abs_err: dict[int, list[float]] = {}
    for _, coord, actual, predicted in pred_rows:
        abs_err.setdefault(coord, []).append(abs(predicted - actual))
    ape_lines = ["coordinate,ape,se"]
    for coord in sorted(abs_err):
        errs = np.array(abs_err[coord])
        se = errs.std(ddof=1) / np.sqrt(len(errs)) if len(errs) > 1 else 0.0
        ape_lines.append(f"{coord},{format_float(errs.mean())},{format_float(se)}")

    pred_lines = ["row,coordinate,actual,predicted"]
    for row, coord, actual, predicted in pred_rows:
        pred_lines.append(f"{row},{coord},{format_float(actual)},{format_float(predicted)}")

    outdir = Path(args.outdir)
    _write(outdir / "ape.csv", "\n".join(ape_lines) + "\n")
    _write(outdir / "predictions.csv", "\n".join(pred_lines) + "\n")
    _write(outdir / "manifest.json", _manifest(args))
    return 0


def cmd_edges(args) -> int:
    try:
        doc = estimate_from_json(Path(args.estimate).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise InvalidInputError(f"cannot read estimate JSON: {exc}") from exc
    omega = doc["omega"]
    lines = ["i,j,value"]
    p = omega.shape[0]
    for i in range(p):
        for j in range(i + 1, p):
            if abs(omega[i, j]) > args.threshold:
                lines.append(f"{i},{j},{format_float(omega[i, j])}")
    _write(Path(args.out), "\n".join(lines) + "\n")
    return 0


def _add_fitting_flags(sub):
    sub.add_argument("--method", default="prop", help="prop | mcd | glasso | block-diag | banded:K")
    sub.add_argument("--lambda1", type=float, default=None)
    sub.add_argument("--lambda2", type=float, default=None)
    sub.add_argument("--auto-bic", action="store_true", help="tune penalties by BIC grid search")
    sub.add_argument("--grid-size", type=int, default=10)
    sub.add_argument("--min-ratio", type=float, default=0.01)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="blockchol",
        description="Sparse precision estimation under partial variable ordering.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    subs = parser.add_subparsers(dest="command", required=True)

    p_fit = subs.add_parser("fit", help="fit a precision matrix from CSV data")
    p_fit.add_argument("--data", required=True)
    p_fit.add_argument("--groups", required=True, help="comma-separated group sizes")
    _add_fitting_flags(p_fit)
    p_fit.add_argument("--workers", type=int, default=None)
    p_fit.add_argument("--outdir", default=".")
    p_fit.set_defaults(func=cmd_fit)

    p_sim = subs.add_parser("simulate", help="run a seeded replicate campaign")
    p_sim.add_argument("--scenario", type=int, required=True, choices=range(1, 8))
    p_sim.add_argument("--n", type=int, required=True)
    p_sim.add_argument("--p", type=int, required=True)
    p_sim.add_argument("--groups", required=True)
    p_sim.add_argument("--reps", type=int, required=True)
    p_sim.add_argument("--seed", type=int, required=True)
    p_sim.add_argument("--methods", default="prop,glasso")
    p_sim.add_argument("--grid-size", type=int, default=10)
    p_sim.add_argument("--min-ratio", type=float, default=0.01)
    p_sim.add_argument("--workers", type=int, default=None)
    p_sim.add_argument("--outdir", default=".")
    p_sim.set_defaults(func=cmd_simulate)

    p_pred = subs.add_parser("predict", help="conditional prediction of late coordinates")
    p_pred.add_argument("--data", required=True)
    p_pred.add_argument("--groups", required=True)
    p_pred.add_argument("--split", type=int, required=True, help="early-coordinate count (a group boundary)")
    p_pred.add_argument("--loo", action="store_true", help="leave-one-out over rows")
    p_pred.add_argument("--train", type=int, default=None, help="first N rows train, the rest test")
    p_pred.add_argument("--sqrt-transform", action="store_true", help="apply y = sqrt(N + 1/4) first")
    _add_fitting_flags(p_pred)
    p_pred.add_argument("--outdir", default=".")
    p_pred.set_defaults(func=cmd_predict)

    p_edges = subs.add_parser("edges", help="nonzero off-diagonals of a saved estimate")
    p_edges.add_argument("--estimate", required=True)
    p_edges.add_argument("--threshold", type=float, default=1e-6)
    p_edges.add_argument("--out", default="edges.csv")
    p_edges.set_defaults(func=cmd_edges)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except NotPositiveDefiniteError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except InvalidInputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
