"""Goodness-of-fit metrics and the model-by-dataset transfer matrix."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import DataError


def _pair(y, yhat, min_n: int):
    y = np.asarray(y, dtype=float)
    yhat = np.asarray(yhat, dtype=float)
    if y.shape != yhat.shape or y.ndim != 1:
        raise DataError("observed and predicted values must be 1-D of equal length")
    if len(y) < min_n:
        raise DataError(f"need at least {min_n} observations, got {len(y)}")
    return y, yhat


def r_squared(y, yhat) -> float:
    """1 - SS_res / SS_tot; negative when worse than predicting the mean."""
    y, yhat = _pair(y, yhat, 2)
    ss_tot = np.sum((y - y.mean()) ** 2)
    if ss_tot == 0:
        raise DataError("R² undefined: observed values are constant")
    return float(1.0 - np.sum((y - yhat) ** 2) / ss_tot)


def rmse(y, yhat) -> float:
    """Root mean square error with an n - 1 denominator."""
    y, yhat = _pair(y, yhat, 2)
    return float(math.sqrt(np.sum((y - yhat) ** 2) / (len(y) - 1)))


def mean_bias(y, yhat) -> float:
    """Mean of observed minus predicted; positive means underprediction."""
    y, yhat = _pair(y, yhat, 1)
    return float(np.sum(y - yhat) / len(y))


def relative(value: float, y) -> float:
    """`value` as a percentage of the observed mean."""
    return 100.0 * value / float(np.mean(y))


@dataclass(frozen=True)
class FitMetrics:
    r2: float
    rmse: float
    bias: float
    n: int

    @classmethod
    def compute(cls, y, yhat) -> "FitMetrics":
        return cls(r_squared(y, yhat), rmse(y, yhat), mean_bias(y, yhat), len(y))


@dataclass(frozen=True)
class TransferMatrix:
    """``cells[(model, dataset)]`` holds FitMetrics, or None where undefined."""

    models: tuple[str, ...]
    datasets: tuple[str, ...]
    cells: dict

    def __getitem__(self, key) -> FitMetrics | None:
        return self.cells[key]

    def local(self, model: str) -> FitMetrics | None:
        return self.cells[(model, model)]

    def transferred(self, model: str) -> list:
        return [self.cells[(model, d)] for d in self.datasets
                if d != model and self.cells[(model, d)] is not None]

    def model_means(self) -> dict:
        """Simple (unweighted) mean of each metric over a model's defined cells."""
        out = {}
        for m in self.models:
            vals = [self.cells[(m, d)] for d in self.datasets if self.cells[(m, d)] is not None]
            out[m] = tuple(float(np.mean([getattr(v, k) for v in vals])) if vals else math.nan
                           for k in ("r2", "rmse", "bias"))
        return out

    def to_csv(self, decimals: int = 2) -> str:
        """Rows are test datasets, column triples (r2, rmse, bias) per model, then a mean row."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["dataset"] + [f"{m}_{k}" for m in self.models for k in ("r2", "rmse", "bias")])
        fmt = f"{{:.{decimals}f}}"
        for d in self.datasets:
            row = [d]
            for m in self.models:
                c = self.cells[(m, d)]
                row += ["undefined"] * 3 if c is None else [fmt.format(c.r2), fmt.format(c.rmse),
                                                           fmt.format(c.bias)]
            w.writerow(row)
        means = self.model_means()
        w.writerow(["mean"] + [fmt.format(v) for m in self.models for v in means[m]])
        return buf.getvalue()


def transfer_matrix(models: Sequence[tuple], tests: Sequence[tuple], threads: int = 1) -> TransferMatrix:
    """Evaluate every labelled model on every labelled test table.

    Parameters
    ----------
    models : sequence of (label, Forest, continuous predictor names).
    tests : sequence of (label, PlotTable), usually held-out test splits.
    """
    from .core import one_hot_encode
    from .forest import predict

    cells = {}
    for mlabel, forest, predictors in models:
        for dlabel, table in tests:
            missing = [p for p in predictors if p not in table.schema]
            if missing:
                raise DataError(
                    f"model {mlabel} needs predictors missing from dataset {dlabel}: {', '.join(missing)}"
                )
            design = one_hot_encode(table, predictors)
            yhat = predict(forest, design.X, threads=threads)
            try:
                cells[(mlabel, dlabel)] = FitMetrics.compute(table.ba, yhat)
            except DataError:
                cells[(mlabel, dlabel)] = None
    return TransferMatrix(tuple(m[0] for m in models), tuple(t[0] for t in tests), cells)
