"""End-to-end study on synthetic data: calibration, transfer, extrapolation, effort, maps.

Seeds
-----
Everything derives from one root seed ``s``:

* synthetic landscape: ``s`` itself;
* dataset ``i`` (locals 0..4, then regional): ``derive_seed(s, 1, i)`` for
  the split, lasso folds, forest and importance shuffles;
* effort experiment plan: ``derive_seed(s, 2)``;
* pixel query sample for the effort experiment: ``derive_seed(s, 3)``.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .core import PlotTable, Split, SplitSpec, derive_seed, one_hot_encode, split_dataset
from .effort import Recipe, ThinningPlan, effort_experiment, effort_to_csv
from .forest import Forest, Hyperparameters, predict
from .hull import CalibrationEnvelope, build_envelope, classify_many, ExtrapolationClass
from .io import write_ascii_grid, write_plots_csv, write_stack
from .maps import predict_raster, write_bundle
from .metrics import FitMetrics, TransferMatrix, transfer_matrix
from .selection import SelectionResult, select_with_forest
from .synth import SynthConfig, SynthData, synth_generate

EFFORT_QUERY_PIXELS = 5000


@dataclass
class CalibratedModel:
    label: str
    split: Split
    selection: SelectionResult
    forest: Forest
    envelope: CalibrationEnvelope
    valid_metrics: FitMetrics | None

    @property
    def predictors(self) -> tuple[str, ...]:
        return self.selection.retained

    def save(self, directory) -> list[Path]:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        paths = [d / "model.json", d / "envelope.json", d / "selection.json"]
        paths[0].write_text(self.forest.to_json())
        paths[1].write_text(self.envelope.to_json())
        paths[2].write_text(self.selection.to_json())
        for part in ("calib", "valid", "test"):
            p = d / f"{part}.csv"
            write_plots_csv(getattr(self.split, part), p)
            paths.append(p)
        return paths


def calibrate(table: PlotTable, seed: int, hp: Hyperparameters | None = None, cap: int = 5,
              folds: int = 10, split: SplitSpec | None = None, threads: int = 1) -> CalibratedModel:
    """Split, select predictors on the calibration part, fit the forest and envelope there."""
    spec = split or SplitSpec(seed=seed)
    parts = split_dataset(table, replace(spec, seed=seed))
    hp = replace(hp or Hyperparameters(), seed=seed)
    sel, forest = select_with_forest(parts.calib, k=folds, seed=seed, cap=cap, hp=hp,
                                     threads=threads)
    env = build_envelope(parts.calib, sel.retained)
    valid = None
    if len(parts.valid) >= 2:
        yhat = predict(forest, one_hot_encode(parts.valid, sel.retained).X, threads=threads)
        try:
            valid = FitMetrics.compute(parts.valid.ba, yhat)
        except ValueError:
            valid = None
    return CalibratedModel(table.name, parts, sel, forest, env, valid)


def model_transfer(models: list[CalibratedModel], threads: int = 1) -> TransferMatrix:
    """Every model against every dataset's held-out test split."""
    return transfer_matrix([(m.label, m.forest, m.predictors) for m in models],
                           [(m.label, m.split.test) for m in models], threads=threads)


def far_table(models: list[CalibratedModel], regions: list[tuple]) -> str:
    """CSV of the percentage of Far pixels for every (region, model) pair.

    `regions` holds (label, RasterStack) pairs; a final row averages the regions.
    """
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["region", "pixels"] + [f"{m.label}_far_pct" for m in models])
    acc = np.zeros(len(models))
    for label, stack in regions:
        row = [label, None]
        for k, m in enumerate(models):
            X, _, valid = stack.pixels(m.predictors)
            cls, _ = classify_many(m.envelope, X[valid])
            row[1] = int(valid.sum())
            pct = 100.0 * float(np.mean(cls == ExtrapolationClass.FAR))
            acc[k] += pct
            row.append(f"{pct:.2f}")
        w.writerow(row)
    w.writerow(["mean", ""] + [f"{v / len(regions):.2f}" for v in acc])
    return buf.getvalue()


def effort_queries(data: SynthData, predictors, seed: int, n: int = EFFORT_QUERY_PIXELS):
    """A fixed random sample of valid AOI pixels (raw predictor rows)."""
    X, _, valid = data.stack.pixels(predictors)
    idx = np.flatnonzero(valid)
    rng = np.random.default_rng(seed)
    pick = np.sort(rng.choice(idx.size, size=min(n, idx.size), replace=False))
    return X[idx[pick]]


@dataclass(frozen=True)
class DemoConfig:
    seed: int = 7
    threads: int = 1
    hp: Hyperparameters = Hyperparameters()
    cap: int = 5
    plan_resolutions: tuple = ThinningPlan().resolutions_km
    plan_iterations: tuple = ThinningPlan().iterations
    cellsize: float = 120.0
    map_subforest: int = 4  # 1-based sub-forest mapped under its local and the regional model


def calibrate_all(data: SynthData, cfg: DemoConfig) -> list[CalibratedModel]:
    tables = list(data.local) + [data.regional]
    return [calibrate(t, derive_seed(cfg.seed, 1, i), hp=cfg.hp, cap=cfg.cap, threads=cfg.threads)
            for i, t in enumerate(tables)]


def run_effort(data: SynthData, regional: CalibratedModel, cfg: DemoConfig):
    plan = ThinningPlan(cfg.plan_resolutions, cfg.plan_iterations, derive_seed(cfg.seed, 2))
    pool = regional.split.calib
    queries = effort_queries(data, regional.predictors, derive_seed(cfg.seed, 3))
    recipe = Recipe(regional.predictors, cfg.hp)
    return effort_experiment(pool, plan, recipe, regional.split.test, queries, data.extent,
                             network=regional.label, threads=cfg.threads)


def run_demo(out, cfg: DemoConfig = DemoConfig(), log=print) -> list[Path]:
    """Run the whole synthetic study, writing every artifact under `out`."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    def emit(paths):
        for p in paths:
            written.append(p)
            log(str(p))

    data = synth_generate(SynthConfig(cellsize=cfg.cellsize, seed=cfg.seed))
    emit(save_synth(data, out / "synth"))

    models = calibrate_all(data, cfg)
    for m in models:
        emit(m.save(out / "models" / m.label))

    tm = model_transfer(models, threads=cfg.threads)
    p = out / "transfer.csv"
    p.write_text(tm.to_csv())
    emit([p])

    regions = [(f"local{b + 1}", data.stack.window(*blk)) for b, blk in enumerate(data.blocks)]
    regions.append(("aoi", data.stack))
    p = out / "extrapolation.csv"
    p.write_text(far_table(models, regions))
    emit([p])

    points = run_effort(data, models[-1], cfg)
    p = out / "effort.csv"
    p.write_text(effort_to_csv(points))
    emit([p])

    b = cfg.map_subforest - 1
    sub = data.stack.window(*data.blocks[b])
    args = {"seed": cfg.seed, "threads": cfg.threads, "ntrees": cfg.hp.n_trees,
            "mtry": cfg.hp.mtry, "min_node": cfg.hp.min_node_size, "cap": cfg.cap,
            "cellsize": cfg.cellsize}
    for m in (models[b], models[-1]):
        bundle = predict_raster(sub, m.forest, m.envelope, threads=cfg.threads)
        emit(write_bundle(bundle, out / "maps", f"{models[b].label}_{m.label}", args=args))
    return written


def save_synth(data: SynthData, directory) -> list[Path]:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    paths = []
    for t in list(data.local) + [data.regional]:
        p = d / f"{t.name}.csv"
        write_plots_csv(t, p)
        paths.append(p)
    write_stack(data.stack, d / "stack")
    paths.append(d / "stack")
    p = d / "truth_ba.asc"
    write_ascii_grid(data.truth, p)
    paths.append(p)
    p = d / "blocks.json"
    p.write_text(json.dumps({f"local{i + 1}": list(map(int, b)) for i, b in enumerate(data.blocks)},
                            indent=2) + "\n")
    paths.append(p)
    return paths
