"""Wall-to-wall basal-area and extrapolation-risk rasters, with plain-text previews."""

from __future__ import annotations

import datetime as _dt
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import INDICATOR_NAMES, DataError, indicator_block
from .forest import Forest, predict
from .hull import CalibrationEnvelope, ExtrapolationSummary, classify_many
from .io import RasterGrid, RasterStack, write_ascii_grid

RISK_NODATA = -9999.0
# Inside, Near, Far, nodata
RISK_PALETTE = ((26, 150, 65), (253, 174, 97), (43, 87, 151), (255, 255, 255))
GRAY_NODATA = 256  # one above the data range, hence maxval 256 in the graymap


@dataclass
class MapBundle:
    ba_map: RasterGrid
    risk_map: RasterGrid
    distance: np.ndarray  # nearest-plot distance per pixel, NaN when Inside or nodata
    provenance: dict = field(default_factory=dict)

    def valid(self) -> np.ndarray:
        return ~self.risk_map.nodata_mask

    def summary(self) -> ExtrapolationSummary:
        """Class proportions over mapped pixels."""
        v = self.valid()
        return ExtrapolationSummary.from_classes(self.risk_map.values[v].astype(np.int8),
                                                 self.distance[v])


def pixel_design(stack: RasterStack, columns):
    """Design rows for every pixel in the forest's column order, and the valid mask."""
    continuous = [c for c in columns if c not in INDICATOR_NAMES]
    X, codes, valid = stack.pixels(continuous)
    ind = indicator_block(np.where(valid, codes, 1))
    cols = []
    for c in columns:
        if c in INDICATOR_NAMES:
            cols.append(ind[:, INDICATOR_NAMES.index(c)])
        else:
            cols.append(X[:, continuous.index(c)])
    return np.column_stack(cols), valid


def predict_raster(stack: RasterStack, forest: Forest, env: CalibrationEnvelope,
                   threads: int = 1) -> MapBundle:
    """Predict basal area and classify extrapolation risk for every stack pixel.

    A pixel with nodata in any needed band, or in the forest-type band, is
    nodata in both output maps.
    """
    design, valid = pixel_design(stack, forest.columns)
    Xenv, _, valid_env = stack.pixels(env.names)
    valid &= valid_env
    tpl = stack.template
    idx = np.flatnonzero(valid)

    ba = np.full(valid.size, tpl.nodata_value)
    risk = np.full(valid.size, RISK_NODATA)
    dist = np.full(valid.size, np.nan)
    if idx.size:
        ba[idx] = predict(forest, design[idx], threads=threads)
        cls, d = classify_many(env, Xenv[idx])
        risk[idx] = cls
        dist[idx] = d
    shape = (tpl.nrows, tpl.ncols)
    geo = dict(ncols=tpl.ncols, nrows=tpl.nrows, xllcorner=tpl.xllcorner,
               yllcorner=tpl.yllcorner, cellsize=tpl.cellsize)
    ba_map = RasterGrid(values=ba.reshape(shape), nodata_value=tpl.nodata_value, **geo)
    risk_map = RasterGrid(values=risk.reshape(shape), nodata_value=RISK_NODATA, **geo)
    bundle = MapBundle(ba_map, risk_map, dist.reshape(shape))
    bundle.provenance = {
        "model_id": forest_id(forest),
        "envelope_id": env.id,
        "created": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
    }
    return bundle


def forest_id(forest: Forest) -> str:
    return hashlib.sha256(forest.to_json().encode()).hexdigest()[:16]


def render_preview(grid: RasterGrid, palette: str = "gray") -> str:
    """Plain PGM (``gray``) or PPM (``risk``) text for quick inspection.

    Gray scales linearly from the grid minimum (0) to its maximum (255);
    nodata takes the reserved level 256. The risk palette maps codes 0, 1, 2
    to fixed colours and nodata to white.
    """
    if grid.values.size == 0:
        raise DataError("cannot render an empty grid")
    nod = grid.nodata_mask
    v = grid.values
    head = f"{grid.ncols} {grid.nrows}\n"
    if palette == "gray":
        data = v[~nod]
        lo, hi = (data.min(), data.max()) if data.size else (0.0, 0.0)
        span = hi - lo
        level = np.zeros(v.shape, dtype=int) if span == 0 else \
            np.rint((np.where(nod, lo, v) - lo) / span * 255).astype(int)
        level = np.where(nod, GRAY_NODATA, level)
        rows = [" ".join(map(str, r)) for r in level]
        return "P2\n" + head + f"{GRAY_NODATA}\n" + "\n".join(rows) + "\n"
    if palette == "risk":
        codes = np.where(nod, 3, v).astype(int)
        if not np.isin(codes, (0, 1, 2, 3)).all():
            raise DataError("risk grid holds codes outside {0, 1, 2}")
        lut = np.array(RISK_PALETTE)
        rows = [" ".join(map(str, lut[r].ravel())) for r in codes]
        return "P3\n" + head + "255\n" + "\n".join(rows) + "\n"
    raise DataError(f"unknown palette {palette!r}")


def write_bundle(bundle: MapBundle, directory, name: str, previews: bool = True,
                 args: dict | None = None) -> list[Path]:
    """Write ``<name>_ba.asc``, ``<name>_risk.asc``, previews and ``<name>_manifest.json``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = [directory / f"{name}_ba.asc", directory / f"{name}_risk.asc"]
    write_ascii_grid(bundle.ba_map, paths[0])
    write_ascii_grid(bundle.risk_map, paths[1])
    if previews:
        paths.append(directory / f"{name}_ba.pgm")
        paths[-1].write_text(render_preview(bundle.ba_map, "gray"))
        paths.append(directory / f"{name}_risk.ppm")
        paths[-1].write_text(render_preview(bundle.risk_map, "risk"))
    s = bundle.summary()
    manifest = dict(bundle.provenance)
    manifest.update({
        "pixels": s.n,
        "proportions": {"inside": s.inside, "near": s.near, "far": s.far},
        "mean_exterior_distance": s.mean_distance,
        "arguments": args or {},
    })
    paths.append(directory / f"{name}_manifest.json")
    paths[-1].write_text(json.dumps(manifest, indent=2) + "\n")
    return paths
