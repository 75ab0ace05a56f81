"""Command-line entry point: ``forest-transfer <subcommand> [options]``.

Exit status is 0 on success, 1 with a one-line diagnostic on a data or
runtime failure, and 2 on usage errors.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .core import DataError, SplitSpec, derive_seed, one_hot_encode, split_dataset
from .effort import Recipe, ThinningPlan, effort_experiment, effort_to_csv
from .forest import Forest, Hyperparameters, fit_forest, oob_error, predict
from .hull import CalibrationEnvelope, build_envelope, classify_many
from .io import read_ascii_grid, read_plots_csv, read_stack, write_plots_csv
from .maps import predict_raster, write_bundle
from .metrics import FitMetrics, transfer_matrix
from .selection import ConvergenceError, SelectionResult, select_predictors
from .study import DemoConfig, run_demo, save_synth
from .synth import SynthConfig, synth_generate

DEFAULT_SEED = 7


def _floats(text: str) -> tuple:
    try:
        return tuple(float(t) for t in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _ints(text: str) -> tuple:
    try:
        return tuple(int(t) for t in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def _hp(args, seed=None) -> Hyperparameters:
    return Hyperparameters(n_trees=args.ntrees, mtry=args.mtry, min_node_size=args.min_node,
                           seed=args.seed if seed is None else seed)


def _load_model(path) -> Forest:
    return Forest.from_json(Path(path).read_text())


def _load_envelope(path) -> CalibrationEnvelope:
    return CalibrationEnvelope.from_json(Path(path).read_text())


def _predictors_of(forest: Forest) -> tuple:
    from .core import INDICATOR_NAMES
    return tuple(c for c in forest.columns if c not in INDICATOR_NAMES)


def _out(args) -> Path:
    p = Path(args.out)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _say(path):
    print(path)


# --------------------------------------------------------------------------- subcommands

def cmd_synth(args):
    cfg = SynthConfig(cellsize=args.cellsize, seed=args.seed)
    for p in save_synth(synth_generate(cfg), _out(args)):
        _say(p)


def cmd_select(args):
    table = read_plots_csv(args.plots)
    sel = select_predictors(table, k=args.folds, seed=args.seed, cap=args.cap, rule=args.rule,
                            hp=_hp(args), threads=args.threads)
    p = _out(args) / "selection.json"
    p.write_text(sel.to_json())
    _say(p)


def cmd_fit(args):
    table = read_plots_csv(args.plots)
    if args.selection:
        predictors = SelectionResult.from_dict(json.loads(Path(args.selection).read_text())).retained
    elif args.predictors:
        predictors = tuple(args.predictors.split(","))
    else:
        predictors = table.schema
    out = _out(args)
    if args.split:
        parts = split_dataset(table, SplitSpec(seed=args.seed))
        for part in ("calib", "valid", "test"):
            write_plots_csv(getattr(parts, part), out / f"{part}.csv")
            _say(out / f"{part}.csv")
        table = parts.calib
    design = one_hot_encode(table, predictors)
    forest = fit_forest(design.X, table.ba, _hp(args), columns=design.columns,
                        row_keys=table.ids, threads=args.threads)
    env = build_envelope(table, predictors)
    (out / "model.json").write_text(forest.to_json())
    (out / "envelope.json").write_text(env.to_json())
    oob = oob_error(forest, table.ba)
    _say(out / "model.json")
    _say(out / "envelope.json")
    print(f"oob_rmse={oob.rmse:.4f} oob_r2={oob.r2:.4f}", file=sys.stderr)


def cmd_eval(args):
    forest = _load_model(args.model)
    table = read_plots_csv(args.plots)
    yhat = predict(forest, one_hot_encode(table, _predictors_of(forest)).X, threads=args.threads)
    m = FitMetrics.compute(table.ba, yhat)
    p = _out(args) / "eval.csv"
    p.write_text("r2,rmse,bias,n\n" + f"{m.r2:.6f},{m.rmse:.6f},{m.bias:.6f},{m.n}\n")
    _say(p)


def cmd_transfer(args):
    """Every model directory (model.json + test.csv) against every test set."""
    root = Path(args.models)
    dirs = sorted(d for d in root.iterdir() if (d / "model.json").exists()) if root.is_dir() else []
    if not dirs:
        raise DataError(f"{root}: no model directories with model.json found")
    models, tests = [], []
    for d in dirs:
        forest = _load_model(d / "model.json")
        models.append((d.name, forest, _predictors_of(forest)))
        tests.append((d.name, read_plots_csv(d / "test.csv", name=d.name)))
    tm = transfer_matrix(models, tests, threads=args.threads)
    p = _out(args) / "transfer.csv"
    p.write_text(tm.to_csv())
    _say(p)


def cmd_hull(args):
    out = _out(args)
    if args.hull_cmd == "build":
        table = read_plots_csv(args.plots)
        predictors = tuple(args.predictors.split(",")) if args.predictors else table.schema
        p = out / "envelope.json"
        p.write_text(build_envelope(table, predictors).to_json())
        _say(p)
        return
    env = _load_envelope(args.envelope)
    table = read_plots_csv(args.plots)
    cls, dist = classify_many(env, table.features(env.names))
    p = out / "classes.csv"
    lines = ["id,class,distance"]
    for pid, c, d in zip(table.ids, cls, dist):
        lines.append(f"{pid},{('inside', 'near', 'far')[c]},{'' if np.isnan(d) else repr(float(d))}")
    p.write_text("\n".join(lines) + "\n")
    _say(p)


def cmd_thin(args):
    table = read_plots_csv(args.plots)
    test = read_plots_csv(args.test)
    forest = _load_model(args.model) if args.model else None
    predictors = _predictors_of(forest) if forest else table.schema
    hp = replace(forest.hyperparameters, seed=args.seed) if forest and args.ntrees is None \
        else _hp(args)
    stack = read_stack(args.stack)
    X, _, valid = stack.pixels(predictors)
    idx = np.flatnonzero(valid)
    rng = np.random.default_rng(derive_seed(args.seed, 3))
    pick = np.sort(rng.choice(idx.size, size=min(args.queries, idx.size), replace=False))
    plan = ThinningPlan(args.resolutions, args.iterations, args.seed)
    points = effort_experiment(table, plan, Recipe(predictors, hp), test, X[idx[pick]],
                               stack.template.extent, threads=args.threads)
    p = _out(args) / "effort.csv"
    p.write_text(effort_to_csv(points))
    _say(p)


def cmd_map(args):
    stack = read_stack(args.stack)
    bundle = predict_raster(stack, _load_model(args.model), _load_envelope(args.envelope),
                            threads=args.threads)
    for p in write_bundle(bundle, _out(args), args.name, previews=not args.no_preview,
                          args=_provenance_args(args)):
        _say(p)


def cmd_demo(args):
    hp = Hyperparameters(n_trees=args.ntrees or 500, mtry=args.mtry, min_node_size=args.min_node)
    cfg = DemoConfig(seed=args.seed, threads=args.threads, hp=hp, cap=args.cap,
                     plan_resolutions=args.resolutions, plan_iterations=args.iterations,
                     cellsize=args.cellsize)
    run_demo(args.out, cfg, log=_say)


def _provenance_args(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k != "func"}


# --------------------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=DEFAULT_SEED, help="root seed (default 7)")
    common.add_argument("--threads", type=_positive, default=1, help="worker threads")
    common.add_argument("--out", default="out", help="output directory")
    common.add_argument("--ntrees", type=_positive, default=None, help="trees per forest (500)")
    common.add_argument("--mtry", type=_positive, default=None, help="features tried per split")
    common.add_argument("--min-node", type=_positive, default=5, help="minimum node size")
    common.add_argument("--cap", type=_positive, default=5, help="maximum retained predictors")
    common.add_argument("--resolutions", type=_floats, default=ThinningPlan().resolutions_km,
                        help="thinning grid sizes in km, comma-separated")
    common.add_argument("--iterations", type=_ints, default=ThinningPlan().iterations,
                        help="iterations per resolution, comma-separated")
    common.add_argument("--cellsize", type=float, default=120.0, help="synthetic pixel size (m)")

    parser = argparse.ArgumentParser(prog="forest-transfer",
                                     description="Basal-area models, transferability and "
                                                 "extrapolation-risk mapping.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        p = sub.add_parser(name, parents=[common], help=help_)
        p.set_defaults(func=func)
        return p

    add("synth", cmd_synth, "generate synthetic plots and rasters")
    p = add("select", cmd_select, "lasso + importance predictor selection")
    p.add_argument("--plots", required=True)
    p.add_argument("--folds", type=int, default=10)
    p.add_argument("--rule", choices=("1se", "min"), default="1se")
    p = add("fit", cmd_fit, "fit a forest and its calibration envelope")
    p.add_argument("--plots", required=True)
    p.add_argument("--selection", help="selection.json from `select`")
    p.add_argument("--predictors", help="comma-separated continuous predictors")
    p.add_argument("--split", action="store_true", help="split first and fit on the calibration part")
    p = add("eval", cmd_eval, "metrics of a model on a plot table")
    p.add_argument("--model", required=True)
    p.add_argument("--plots", required=True)
    p = add("transfer", cmd_transfer, "model-by-dataset transfer matrix")
    p.add_argument("--models", required=True, help="directory of model directories")
    p = add("hull", cmd_hull, "build an envelope or classify plots against one")
    hsub = p.add_subparsers(dest="hull_cmd", required=True)
    hb = hsub.add_parser("build", parents=[common])
    hb.add_argument("--plots", required=True)
    hb.add_argument("--predictors")
    hc = hsub.add_parser("classify", parents=[common])
    hc.add_argument("--envelope", required=True)
    hc.add_argument("--plots", required=True)
    for h in (hb, hc):
        h.set_defaults(func=cmd_hull)
    p = add("thin", cmd_thin, "sampling-effort curves by grid thinning")
    p.add_argument("--plots", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--stack", required=True)
    p.add_argument("--model", help="model.json whose predictors and settings to reuse")
    p.add_argument("--queries", type=_positive, default=5000, help="pixel sample size")
    p = add("map", cmd_map, "basal-area and extrapolation-risk rasters")
    p.add_argument("--stack", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--envelope", required=True)
    p.add_argument("--name", default="map")
    p.add_argument("--no-preview", action="store_true")
    add("demo", cmd_demo, "run the full synthetic study")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.ntrees is None and args.command not in ("thin", "demo"):
        args.ntrees = 500
    try:
        args.func(args)
    except (DataError, ConvergenceError, OSError, ValueError, KeyError, RuntimeError) as exc:
        msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        if isinstance(exc, FileNotFoundError) and exc.filename:
            msg = f"no such file: {exc.filename}"
        print(f"forest-transfer {args.command}: error: {msg}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
