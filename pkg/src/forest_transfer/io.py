"""Plot CSV tables, ESRI ASCII grids and raster stacks."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import DataError, ForestType, Plot, PlotTable

RESERVED_COLUMNS = ("id", "x", "y", "ba", "forest_type")
DEFAULT_NODATA = -9999.0
HEADER_KEYS = ("ncols", "nrows", "xllcorner", "yllcorner", "cellsize", "nodata_value")


def format_number(v: float) -> str:
    """Shortest text that parses back to the same double."""
    v = float(v)
    if v.is_integer() and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


# --------------------------------------------------------------------------- plots

def read_plots_csv(path, name: str | None = None) -> PlotTable:
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        if [h.lower() for h in header[:5]] != list(RESERVED_COLUMNS) or len(header) < 6:
            raise DataError(
                f"{path}: header must start with {','.join(RESERVED_COLUMNS)} "
                "followed by at least one predictor column"
            )
        schema = tuple(header[5:])
        plots = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DataError(f"{path}:{lineno}: expected {len(header)} columns, got {len(row)}")
            try:
                x, y, ba = (float(row[i]) for i in (1, 2, 3))
                feats = tuple(float(c) for c in row[5:])
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: unparseable number ({exc})") from None
            try:
                ftype = ForestType.parse(row[4])
            except DataError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
            try:
                plots.append(Plot(row[0].strip(), x, y, ba, feats, ftype))
            except DataError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
    return PlotTable(schema, tuple(plots), name if name is not None else path.stem)


def write_plots_csv(table: PlotTable, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RESERVED_COLUMNS + table.schema)
        for p in table.plots:
            w.writerow([p.id, format_number(p.x), format_number(p.y), format_number(p.ba),
                        p.forest_type.label] + [format_number(v) for v in p.features])


# --------------------------------------------------------------------------- grids

@dataclass(frozen=True)
class RasterGrid:
    """ESRI-style grid; ``values[0]`` is the northern row."""

    ncols: int
    nrows: int
    xllcorner: float
    yllcorner: float
    cellsize: float
    nodata_value: float
    values: np.ndarray

    def __post_init__(self):
        vals = np.array(self.values, dtype=float).reshape(self.nrows, self.ncols)
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        if self.ncols <= 0 or self.nrows <= 0:
            raise DataError("grid dimensions must be positive")
        if not self.cellsize > 0:
            raise DataError("cellsize must be positive")

    @classmethod
    def like(cls, other: "RasterGrid", values, nodata_value: float | None = None) -> "RasterGrid":
        return cls(other.ncols, other.nrows, other.xllcorner, other.yllcorner, other.cellsize,
                   other.nodata_value if nodata_value is None else nodata_value, values)

    @property
    def georef(self) -> tuple:
        return (self.ncols, self.nrows, self.xllcorner, self.yllcorner, self.cellsize)

    @property
    def extent(self) -> tuple[float, float, float, float]:
        """(xmin, ymin, xmax, ymax) in map units."""
        return (self.xllcorner, self.yllcorner,
                self.xllcorner + self.ncols * self.cellsize,
                self.yllcorner + self.nrows * self.cellsize)

    @property
    def nodata_mask(self) -> np.ndarray:
        return ~np.isfinite(self.values) | (self.values == self.nodata_value)

    def cell_center(self, row, col):
        x = self.xllcorner + (np.asarray(col) + 0.5) * self.cellsize
        y = self.yllcorner + (self.nrows - np.asarray(row) - 0.5) * self.cellsize
        return x, y

    def cell_of(self, x, y):
        """(row, col) of the cell containing map coordinates (x, y)."""
        col = np.floor((np.asarray(x) - self.xllcorner) / self.cellsize).astype(int)
        row = self.nrows - 1 - np.floor((np.asarray(y) - self.yllcorner) / self.cellsize).astype(int)
        if np.any((col < 0) | (col >= self.ncols) | (row < 0) | (row >= self.nrows)):
            raise DataError("coordinate outside grid extent")
        return row, col

    def sample(self, x, y) -> np.ndarray:
        row, col = self.cell_of(x, y)
        return self.values[row, col]

    def window(self, row0: int, row1: int, col0: int, col1: int) -> "RasterGrid":
        """Sub-grid covering rows [row0, row1) and columns [col0, col1)."""
        return RasterGrid(col1 - col0, row1 - row0,
                          self.xllcorner + col0 * self.cellsize,
                          self.yllcorner + (self.nrows - row1) * self.cellsize,
                          self.cellsize, self.nodata_value, self.values[row0:row1, col0:col1])


def write_ascii_grid(grid: RasterGrid, path) -> None:
    lines = [
        f"ncols {grid.ncols}",
        f"nrows {grid.nrows}",
        f"xllcorner {format_number(grid.xllcorner)}",
        f"yllcorner {format_number(grid.yllcorner)}",
        f"cellsize {format_number(grid.cellsize)}",
        f"NODATA_value {format_number(grid.nodata_value)}",
    ]
    vals = np.where(np.isfinite(grid.values), grid.values, grid.nodata_value)
    for row in vals:
        lines.append(" ".join(format_number(v) for v in row.tolist()))
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


def read_ascii_grid(path) -> RasterGrid:
    path = Path(path)
    with open(path, encoding="ascii") as fh:
        text = fh.read().splitlines()
    header = {}
    pos = 0
    while pos < len(text):
        tokens = text[pos].split()
        if not tokens:
            pos += 1
            continue
        key = tokens[0].lower()
        if key not in HEADER_KEYS + ("xllcenter", "yllcenter"):
            break
        if len(tokens) != 2:
            raise DataError(f"{path}: malformed header line {pos + 1}")
        header[key] = tokens[1]
        pos += 1
    for corner in ("xll", "yll"):
        if f"{corner}center" in header and f"{corner}corner" not in header:
            c = float(header.pop(f"{corner}center"))
            header[f"{corner}corner"] = repr(c - 0.5 * float(header.get("cellsize", "nan")))
    missing = [k for k in HEADER_KEYS if k not in header]
    if missing:
        raise DataError(f"{path}: header key missing: {', '.join(missing)}")
    try:
        ncols, nrows = int(header["ncols"]), int(header["nrows"])
        xll, yll, cs, nodata = (float(header[k]) for k in HEADER_KEYS[2:])
    except ValueError:
        raise DataError(f"{path}: unparseable header value") from None

    values = np.empty((nrows, ncols), dtype=float)
    r = 0
    for line in text[pos:]:
        tokens = line.split()
        if not tokens:
            continue
        if r >= nrows:
            raise DataError(f"{path}: more than nrows={nrows} data rows")
        if len(tokens) != ncols:
            raise DataError(f"{path}: data row {r} has {len(tokens)} values, expected ncols={ncols}")
        try:
            values[r] = [float(t) for t in tokens]
        except ValueError:
            raise DataError(f"{path}: data row {r} has an unparseable value") from None
        r += 1
    if r != nrows:
        raise DataError(f"{path}: expected {nrows} data rows, found {r}")
    return RasterGrid(ncols, nrows, xll, yll, cs, nodata, values)


# --------------------------------------------------------------------------- stacks

@dataclass(frozen=True)
class RasterStack:
    """Aligned continuous predictor bands plus a forest-type band (codes 1..3)."""

    bands: dict
    forest_type: RasterGrid

    def __post_init__(self):
        ref = self.forest_type.georef
        for name, g in self.bands.items():
            if g.georef != ref:
                raise DataError(f"band {name!r} georeferencing differs from the forest-type band")
        ft = self.forest_type
        codes = ft.values[~ft.nodata_mask]
        if codes.size and not np.isin(codes, (1, 2, 3)).all():
            raise DataError("forest-type band holds codes outside {1, 2, 3}")

    @property
    def names(self) -> list[str]:
        return list(self.bands)

    @property
    def template(self) -> RasterGrid:
        return self.forest_type

    def band(self, name: str) -> RasterGrid:
        try:
            return self.bands[name]
        except KeyError:
            raise DataError(f"raster stack has no band for predictor {name!r}") from None

    def window(self, row0, row1, col0, col1) -> "RasterStack":
        return RasterStack({k: g.window(row0, row1, col0, col1) for k, g in self.bands.items()},
                           self.forest_type.window(row0, row1, col0, col1))

    def pixels(self, names: Sequence[str]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Flattened (features, forest-type codes, valid mask) for all cells."""
        grids = [self.band(n) for n in names]
        valid = ~self.forest_type.nodata_mask.ravel()
        for g in grids:
            valid &= ~g.nodata_mask.ravel()
        X = np.column_stack([g.values.ravel() for g in grids]) if grids else \
            np.empty((self.forest_type.values.size, 0))
        codes = np.where(valid, self.forest_type.values.ravel(), 0).astype(int)
        return X, codes, valid


STACK_MANIFEST = "stack.json"
FOREST_TYPE_FILE = "forest_type.asc"


def write_stack(stack: RasterStack, directory) -> None:
    """Write one ``<band>.asc`` per band, ``forest_type.asc`` and a ``stack.json`` index."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for name, g in stack.bands.items():
        write_ascii_grid(g, directory / f"{name}.asc")
    write_ascii_grid(stack.forest_type, directory / FOREST_TYPE_FILE)
    manifest = {"bands": stack.names, "forest_type": FOREST_TYPE_FILE}
    (directory / STACK_MANIFEST).write_text(json.dumps(manifest, indent=2) + "\n")


def read_stack(directory) -> RasterStack:
    directory = Path(directory)
    manifest_path = directory / STACK_MANIFEST
    if manifest_path.exists():
        manifest = json.loads(manifest_path.read_text())
        names = manifest["bands"]
        ft_file = manifest.get("forest_type", FOREST_TYPE_FILE)
    else:
        ft_file = FOREST_TYPE_FILE
        names = sorted(p.stem for p in directory.glob("*.asc") if p.name != ft_file)
    if not (directory / ft_file).exists():
        raise DataError(f"{directory}: missing forest-type band {ft_file}")
    bands = {n: read_ascii_grid(directory / f"{n}.asc") for n in names}
    return RasterStack(bands, read_ascii_grid(directory / ft_file))
