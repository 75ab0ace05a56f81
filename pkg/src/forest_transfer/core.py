"""Plot tables, data splitting, forest-type encoding and standardization."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from typing import Iterable, Sequence

import numpy as np

MIN_SPLIT_PLOTS = 10
INDICATOR_NAMES = ("is_broadleaves", "is_mixed", "is_conifers")


class DataError(ValueError):
    """Raised when input data violate a structural requirement."""


class ForestType(enum.IntEnum):
    """Forest type; the integer value is the raster code."""

    BROADLEAVES = 1
    MIXED = 2
    CONIFERS = 3

    @property
    def label(self) -> str:
        return self.name.capitalize()

    @classmethod
    def parse(cls, text: str) -> "ForestType":
        key = text.strip().upper()
        try:
            return cls[key]
        except KeyError:
            raise DataError(f"unknown forest type {text!r}") from None


@dataclass(frozen=True)
class Plot:
    id: str
    x: float
    y: float
    ba: float
    features: tuple[float, ...]
    forest_type: ForestType

    def __post_init__(self):
        if not self.ba >= 0:
            raise DataError(f"plot {self.id}: basal area must be >= 0, got {self.ba}")
        if not all(np.isfinite(self.features)):
            raise DataError(f"plot {self.id}: non-finite predictor value")


@dataclass(frozen=True)
class PlotTable:
    """An immutable collection of plots sharing one predictor schema."""

    schema: tuple[str, ...]
    plots: tuple[Plot, ...]
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "schema", tuple(self.schema))
        object.__setattr__(self, "plots", tuple(self.plots))
        if not self.schema:
            raise DataError("schema must name at least one predictor")
        if len(set(self.schema)) != len(self.schema):
            raise DataError("duplicate predictor names in schema")
        seen = set()
        for p in self.plots:
            if p.id in seen:
                raise DataError(f"duplicate plot id {p.id!r}")
            seen.add(p.id)
            if len(p.features) != len(self.schema):
                raise DataError(
                    f"plot {p.id} has {len(p.features)} predictors, schema has {len(self.schema)}"
                )

    def __len__(self):
        return len(self.plots)

    @property
    def ids(self) -> list[str]:
        return [p.id for p in self.plots]

    @property
    def ba(self) -> np.ndarray:
        return np.array([p.ba for p in self.plots], dtype=float)

    @property
    def xy(self) -> np.ndarray:
        return np.array([(p.x, p.y) for p in self.plots], dtype=float).reshape(-1, 2)

    @property
    def forest_types(self) -> np.ndarray:
        return np.array([int(p.forest_type) for p in self.plots], dtype=int)

    def features(self, names: Sequence[str] | None = None) -> np.ndarray:
        """Continuous predictors as an (n, k) array, optionally restricted to `names`."""
        X = np.array([p.features for p in self.plots], dtype=float).reshape(-1, len(self.schema))
        if names is None:
            return X
        return X[:, self.columns(names)]

    def columns(self, names: Sequence[str]) -> list[int]:
        missing = [n for n in names if n not in self.schema]
        if missing:
            raise DataError(f"table {self.name or '<unnamed>'} lacks predictors: {', '.join(missing)}")
        return [self.schema.index(n) for n in names]

    def subset(self, indices: Iterable[int], name: str | None = None) -> "PlotTable":
        return PlotTable(self.schema, tuple(self.plots[i] for i in indices),
                         self.name if name is None else name)

    def select_ids(self, ids: Iterable[str], name: str | None = None) -> "PlotTable":
        pos = {p.id: i for i, p in enumerate(self.plots)}
        return self.subset([pos[i] for i in ids], name)


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.8
    calib_fraction_within_train: float = 0.8
    seed: int = 7
    stratify: bool = False

    def __post_init__(self):
        for f in (self.train_fraction, self.calib_fraction_within_train):
            if not 0.0 < f < 1.0:
                raise DataError(f"split fractions must lie strictly between 0 and 1, got {f}")


@dataclass(frozen=True)
class Split:
    train: PlotTable
    test: PlotTable
    calib: PlotTable
    valid: PlotTable


def round_half_up(x: float) -> int:
    return int(Decimal(repr(x)).quantize(Decimal(1), rounding=ROUND_HALF_UP))


def _share(fraction: float, n: int) -> int:
    return int((Decimal(repr(fraction)) * n).quantize(Decimal(1), rounding=ROUND_HALF_UP))


def _draw(labels: np.ndarray, fraction: float, rng: np.random.Generator,
          stratify: bool) -> tuple[np.ndarray, np.ndarray]:
    """Positions drawn into the first part and the remainder, both sorted."""
    n = len(labels)
    k = _share(fraction, n)
    if not stratify:
        perm = rng.permutation(n)
        return np.sort(perm[:k]), np.sort(perm[k:])
    # largest-remainder allocation keeps the overall size at round(fraction * n)
    groups = [np.flatnonzero(labels == g) for g in np.unique(labels)]
    quotas = np.array([fraction * len(g) for g in groups])
    alloc = np.floor(quotas).astype(int)
    order = np.argsort(-(quotas - alloc), kind="stable")
    alloc[order[: k - alloc.sum()]] += 1
    first = []
    for g, a in zip(groups, alloc):
        first.extend(g[rng.permutation(len(g))[:a]])
    first = np.sort(np.array(first, dtype=int))
    rest = np.setdiff1d(np.arange(n), first)
    return first, rest


def split_dataset(table: PlotTable, spec: SplitSpec) -> Split:
    """Random train/test split, then calibration/validation split of train.

    Sizes use round-half-up: ``|train| = round(train_fraction * n)`` and
    ``|calib| = round(calib_fraction_within_train * |train|)``. Members keep
    the table order within each part.
    """
    n = len(table)
    if n < MIN_SPLIT_PLOTS:
        raise DataError(f"need at least {MIN_SPLIT_PLOTS} plots to split, got {n}")
    rng = np.random.default_rng(spec.seed)
    types = table.forest_types
    train_pos, test_pos = _draw(types, spec.train_fraction, rng, spec.stratify)
    calib_rel, valid_rel = _draw(types[train_pos], spec.calib_fraction_within_train, rng,
                                 spec.stratify)
    base = table.name
    return Split(
        train=table.subset(train_pos, f"{base}:train"),
        test=table.subset(test_pos, f"{base}:test"),
        calib=table.subset(train_pos[calib_rel], f"{base}:calib"),
        valid=table.subset(train_pos[valid_rel], f"{base}:valid"),
    )


def indicator_block(codes: np.ndarray) -> np.ndarray:
    """One-hot (broadleaves, mixed, conifers) columns for forest-type codes 1..3."""
    codes = np.asarray(codes, dtype=int)
    return (codes[:, None] == np.arange(1, 4)[None, :]).astype(float)


@dataclass(frozen=True)
class Design:
    """Numeric design matrix with its column names."""

    columns: tuple[str, ...]
    X: np.ndarray


def one_hot_encode(table: PlotTable, predictors: Sequence[str] | None = None) -> Design:
    """Continuous predictors followed by the three forest-type indicators."""
    if len(table) == 0:
        raise DataError("cannot encode an empty table")
    names = tuple(table.schema if predictors is None else predictors)
    X = np.hstack([table.features(names), indicator_block(table.forest_types)])
    return Design(names + INDICATOR_NAMES, X)


@dataclass(frozen=True)
class Standardizer:
    names: tuple[str, ...]
    mean: np.ndarray
    sd: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "mean", np.asarray(self.mean, dtype=float))
        object.__setattr__(self, "sd", np.asarray(self.sd, dtype=float))
        if np.any(~(self.sd > 0)):
            bad = [n for n, s in zip(self.names, self.sd) if not s > 0]
            raise DataError(f"standard deviation must be positive for: {', '.join(bad)}")

    @classmethod
    def identity(cls, d: int, names: Sequence[str] | None = None) -> "Standardizer":
        names = tuple(names) if names is not None else tuple(f"x{i}" for i in range(d))
        return cls(names, np.zeros(d), np.ones(d))

    def apply(self, values) -> np.ndarray:
        return (np.asarray(values, dtype=float) - self.mean) / self.sd

    def invert(self, values) -> np.ndarray:
        return np.asarray(values, dtype=float) * self.sd + self.mean

    def to_dict(self) -> dict:
        return {"names": list(self.names), "mean": self.mean.tolist(), "sd": self.sd.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Standardizer":
        return cls(tuple(d["names"]), np.array(d["mean"], dtype=float), np.array(d["sd"], dtype=float))


def standardizer_from_array(X: np.ndarray, names: Sequence[str]) -> Standardizer:
    X = np.asarray(X, dtype=float)
    if X.shape[0] < 2:
        raise DataError("need at least 2 rows to estimate a standard deviation")
    mean = X.mean(axis=0)
    sd = X.std(axis=0, ddof=1)
    for name, m, s in zip(names, mean, sd):
        if not s > 1e-12 * max(1.0, abs(m)):
            raise DataError(f"predictor {name!r} has zero variance")
    return Standardizer(tuple(names), mean, sd)


def fit_standardizer(table: PlotTable, predictors: Sequence[str]) -> Standardizer:
    """Per-predictor mean and n-1 standard deviation on `table`."""
    return standardizer_from_array(table.features(predictors), predictors)


def derive_seed(root: int, *keys: int) -> int:
    """Deterministic 63-bit child seed of `root` for the integer path `keys`."""
    ss = np.random.SeedSequence(int(root), spawn_key=tuple(int(k) for k in keys))
    return int(ss.generate_state(1, np.uint64)[0] >> np.uint64(1))
