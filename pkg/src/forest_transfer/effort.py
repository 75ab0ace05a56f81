"""Grid thinning of a plot network and effort-versus-quality curves."""

from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .core import DataError, PlotTable, derive_seed, one_hot_encode
from .forest import Hyperparameters, fit_forest, predict
from .hull import build_envelope, classify_many, ExtrapolationSummary
from .metrics import mean_bias, relative, rmse

MIN_THINNED_PLOTS = 10


@dataclass(frozen=True)
class ThinningPlan:
    resolutions_km: tuple = (2.0, 4.0, 6.0, 10.0, 20.0)
    iterations: tuple = (4, 4, 5, 6, 7)
    seed: int = 7

    def __post_init__(self):
        object.__setattr__(self, "resolutions_km", tuple(float(r) for r in self.resolutions_km))
        object.__setattr__(self, "iterations", tuple(int(i) for i in self.iterations))
        if len(self.resolutions_km) != len(self.iterations):
            raise DataError("resolutions and iterations must have the same length")
        r = self.resolutions_km
        if not r or min(r) <= 0 or any(b <= a for a, b in zip(r, r[1:])):
            raise DataError("resolutions must be positive and strictly increasing")
        if min(self.iterations) < 1:
            raise DataError("iteration counts must be >= 1")


@dataclass(frozen=True)
class Cell:
    ix: int
    iy: int
    xmin: float
    ymin: float
    xmax: float
    ymax: float


def grid_cells(extent: Sequence[float], resolution_km: float) -> list[Cell]:
    """Square cells anchored at the lower-left AOI corner, clipped at the top/right edges.

    `extent` is (xmin, ymin, xmax, ymax) in metres.
    """
    x0, y0, x1, y1 = map(float, extent)
    if not (x1 > x0 and y1 > y0 and resolution_km > 0):
        raise DataError("extent and resolution must be positive")
    res = resolution_km * 1000.0
    nx = max(1, math.ceil((x1 - x0) / res - 1e-9))
    ny = max(1, math.ceil((y1 - y0) / res - 1e-9))
    return [Cell(ix, iy, x0 + ix * res, y0 + iy * res,
                 min(x0 + (ix + 1) * res, x1), min(y0 + (iy + 1) * res, y1))
            for iy in range(ny) for ix in range(nx)]


def cell_index(cells: Sequence[Cell], xy: np.ndarray) -> np.ndarray:
    """Position in `cells` of the cell holding each point (half-open cells, closed outer edge)."""
    xs = np.unique([c.xmin for c in cells])
    ys = np.unique([c.ymin for c in cells])
    xmax = max(c.xmax for c in cells)
    ymax = max(c.ymax for c in cells)
    x, y = xy[:, 0], xy[:, 1]
    if np.any((x < xs[0]) | (x > xmax) | (y < ys[0]) | (y > ymax)):
        raise DataError("plot coordinates fall outside the grid")
    ix = np.searchsorted(xs, x, side="right") - 1
    iy = np.searchsorted(ys, y, side="right") - 1
    lookup = {(c.ix, c.iy): k for k, c in enumerate(cells)}
    return np.array([lookup[(int(a), int(b))] for a, b in zip(ix, iy)], dtype=int)


def thin_sample(table: PlotTable, cells: Sequence[Cell], seed: int) -> PlotTable:
    """Keep one uniformly drawn plot per non-empty cell."""
    if len(table) == 0:
        return table
    owner = cell_index(cells, table.xy)
    rng = np.random.default_rng(seed)
    keep = []
    for k in np.unique(owner):
        members = np.flatnonzero(owner == k)
        keep.append(members[rng.integers(members.size)])
    return table.subset(sorted(keep))


@dataclass(frozen=True)
class Recipe:
    predictors: tuple
    hp: Hyperparameters = Hyperparameters()


@dataclass(frozen=True)
class EffortCurvePoint:
    network: str
    resolution_km: float
    iteration: int
    n_plots: int
    rmse_pct: float = math.nan
    bias_pct: float = math.nan
    prop_exterior: float = math.nan
    prop_far: float = math.nan
    mean_distance: float = math.nan

    @property
    def defined(self) -> bool:
        return not math.isnan(self.rmse_pct)


def _one_run(pool, cells, run_seed, recipe, test, queries, label, res, it, threads):
    thinned = thin_sample(pool, cells, run_seed)
    n = len(thinned)
    if n < MIN_THINNED_PLOTS:
        warnings.warn(f"{label} {res:g} km iteration {it}: only {n} plots after thinning")
        return EffortCurvePoint(label, res, it, n)
    predictors = recipe.predictors
    design = one_hot_encode(thinned, predictors)
    hp = replace(recipe.hp, seed=derive_seed(run_seed, 1))
    try:
        forest = fit_forest(design.X, thinned.ba, hp, columns=design.columns,
                            row_keys=thinned.ids, threads=threads)
        env = build_envelope(thinned, predictors)
    except DataError as exc:
        warnings.warn(f"{label} {res:g} km iteration {it}: {exc}")
        return EffortCurvePoint(label, res, it, n)
    y = test.ba
    yhat = predict(forest, one_hot_encode(test, predictors).X, threads=threads)
    summary = ExtrapolationSummary.from_classes(*classify_many(env, queries))
    return EffortCurvePoint(
        label, res, it, n,
        rmse_pct=relative(rmse(y, yhat), y),
        bias_pct=relative(mean_bias(y, yhat), y),
        prop_exterior=summary.exterior,
        prop_far=summary.far,
        mean_distance=math.nan if summary.mean_distance is None else summary.mean_distance,
    )


def effort_experiment(table: PlotTable, plan: ThinningPlan, recipe: Recipe, test: PlotTable,
                      queries, extent: Sequence[float], network: str | None = None,
                      threads: int = 1) -> list[EffortCurvePoint]:
    """Thin, refit, re-evaluate and re-envelope for every (resolution, iteration).

    Parameters
    ----------
    table : the plot network to thin.
    recipe : retained continuous predictors and forest hyperparameters.
    test : fixed evaluation plots; relative metrics use its mean basal area.
    queries : fixed raw predictor rows (pixels) classified against each envelope.
    extent : AOI (xmin, ymin, xmax, ymax) in metres anchoring the grids.

    Run ``(i, j)`` uses seed ``derive_seed(plan.seed, i, j)`` for the thinning
    draw and a seed derived from it for the forest.
    """
    queries = np.asarray(queries, dtype=float)
    label = network or table.name
    points = []
    for i, (res, iters) in enumerate(zip(plan.resolutions_km, plan.iterations)):
        cells = grid_cells(extent, res)
        for j in range(iters):
            points.append(_one_run(table, cells, derive_seed(plan.seed, i, j), recipe, test,
                                   queries, label, res, j, threads))
    return points


CSV_FIELDS = ("network", "resolution_km", "iteration", "n_plots", "rmse_pct", "bias_pct",
              "prop_exterior", "prop_far", "mean_distance")


def effort_to_csv(points: Sequence[EffortCurvePoint]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_FIELDS)
    for p in points:
        row = []
        for f in CSV_FIELDS:
            v = getattr(p, f)
            if isinstance(v, float) and f not in ("resolution_km",):
                row.append("undefined" if math.isnan(v) else f"{v:.6f}")
            else:
                row.append(f"{v:g}" if isinstance(v, float) else v)
        w.writerow(row)
    return buf.getvalue()


def curve_means(points: Sequence[EffortCurvePoint]) -> dict:
    """Per-resolution means over defined iterations: {res: {field: mean, 'n': ...}}."""
    out = {}
    for res in sorted({p.resolution_km for p in points}):
        pts = [p for p in points if p.resolution_km == res and p.defined]
        out[res] = {f: float(np.mean([getattr(p, f) for p in pts])) if pts else math.nan
                    for f in ("n_plots", "rmse_pct", "bias_pct", "prop_exterior", "prop_far")}
    return out
