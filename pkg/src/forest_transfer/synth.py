"""Synthetic stand-in for plot networks and auxiliary rasters.

Every continuous predictor is a standardized sum of 10 Gaussian bumps over
the AOI plus pixel-scale texture, shifted inside each sub-forest block. Basal area is a known
monotone function of two latent predictor fields plus a forest-type offset;
plots sit at cell centres, so the truth raster sampled at a plot reproduces
its noiseless basal area.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import DataError, ForestType, Plot, PlotTable
from .io import DEFAULT_NODATA, RasterGrid, RasterStack

# name, mean, scale of the affine map from latent field to predictor units
PREDICTORS = (
    ("volin", 4500.0, 1800.0),
    ("gap_ratio", 0.35, 0.12),
    ("b11", 0.16, 0.03),
    ("b12", 0.08, 0.02),
    ("zmean", 14.0, 4.0),
    ("canopy_closure", 0.75, 0.1),
    ("zq30", 9.0, 3.5),
    ("p2th", 0.85, 0.06),
)
# predictor -> (driver, weight): latent = weight * driver + sqrt(1 - weight²) * own field
CORRELATED = {"b11": ("volin", -0.6), "b12": ("gap_ratio", 0.6), "zmean": ("volin", 0.5)}
TYPE_OFFSET = {ForestType.BROADLEAVES: -3.0, ForestType.MIXED: 0.0, ForestType.CONIFERS: 3.0}
BA_INTERCEPT = 27.0
VOLIN_GAIN = 11.0
GAP_GAIN = 6.5
N_BUMPS = 10
BUMP_WIDTH = (0.05, 0.15)  # bump sd as a fraction of the shorter AOI side
BLOCK_FILL = 0.8  # sub-forest block side as a fraction of its tile
TEXTURE_SD = 0.3  # pixel-scale white noise added to each predictor field


@dataclass(frozen=True)
class SynthConfig:
    width_km: float = 61.44
    height_km: float = 61.44
    cellsize: float = 120.0
    n_subforests: int = 5
    plots_per_subforest: int = 200
    n_regional: int = 900
    shift: tuple = (0.8, 0.8, 0.8, 0.8, 0.8)
    gain_spread: float = 0.25
    noise_sd: float = 4.0
    forest_cover: float = 0.85
    seed: int = 7

    def __post_init__(self):
        if isinstance(self.shift, (int, float)):
            object.__setattr__(self, "shift", (float(self.shift),) * self.n_subforests)
        object.__setattr__(self, "shift", tuple(float(s) for s in self.shift))
        if min(self.n_subforests, self.plots_per_subforest, self.n_regional) < 1:
            raise DataError("plot and sub-forest counts must be positive")
        if len(self.shift) != self.n_subforests:
            raise DataError("need one shift magnitude per sub-forest")
        if not self.noise_sd >= 0:
            raise DataError("noise sd must be >= 0")
        if not (self.width_km > 0 and self.height_km > 0 and self.cellsize > 0):
            raise DataError("AOI size and cellsize must be positive")
        if not 0 <= self.gain_spread < 1:
            raise DataError("gain spread must lie in [0, 1)")
        if not 0 < self.forest_cover <= 1:
            raise DataError("forest cover must lie in (0, 1]")

    @property
    def ncols(self) -> int:
        return int(round(self.width_km * 1000 / self.cellsize))

    @property
    def nrows(self) -> int:
        return int(round(self.height_km * 1000 / self.cellsize))


@dataclass
class SynthData:
    local: list
    regional: PlotTable
    stack: RasterStack
    truth: RasterGrid
    blocks: list = field(default_factory=list)

    @property
    def extent(self):
        return self.truth.extent


def _bump_field(rng, nrows, ncols, cellsize):
    """Standardized sum of Gaussian bumps on the cell-centre grid."""
    w, h = ncols * cellsize, nrows * cellsize
    xs = (np.arange(ncols) + 0.5) * cellsize
    ys = (nrows - np.arange(nrows) - 0.5) * cellsize
    f = np.zeros((nrows, ncols))
    for _ in range(N_BUMPS):
        cx, cy = rng.uniform(0, w), rng.uniform(0, h)
        s = rng.uniform(*BUMP_WIDTH) * min(w, h)
        a = rng.normal()
        gx = np.exp(-((xs - cx) ** 2) / (2 * s * s))
        gy = np.exp(-((ys - cy) ** 2) / (2 * s * s))
        f += a * gy[:, None] * gx[None, :]
    return (f - f.mean()) / f.std()


def _blocks(cfg: SynthConfig):
    """Disjoint (row0, row1, col0, col1) windows, one per sub-forest."""
    n = cfg.n_subforests
    gc = int(np.ceil(np.sqrt(n)))
    gr = int(np.ceil(n / gc))
    th, tw = cfg.nrows // gr, cfg.ncols // gc
    side_r, side_c = int(BLOCK_FILL * th), int(BLOCK_FILL * tw)
    out = []
    for i in range(n):
        r, c = divmod(i, gc)
        r0 = r * th + (th - side_r) // 2
        c0 = c * tw + (tw - side_c) // 2
        out.append((r0, r0 + side_r, c0, c0 + side_c))
    return out


def basal_area(z_volin, z_gap, type_codes):
    g = lambda z: 1.5 * np.tanh(z / 1.5)  # noqa: E731
    offset = np.select([type_codes == t for t in TYPE_OFFSET], list(TYPE_OFFSET.values()), 0.0)
    return np.maximum(BA_INTERCEPT + VOLIN_GAIN * g(z_volin) - GAP_GAIN * g(z_gap) + offset, 0.0)


def synth_generate(cfg: SynthConfig = SynthConfig()) -> SynthData:
    rng = np.random.default_rng(cfg.seed)
    nr, nc, cs = cfg.nrows, cfg.ncols, cfg.cellsize
    blocks = _blocks(cfg)
    names = [p[0] for p in PREDICTORS]

    # white texture keeps predictors from being near-collinear inside small blocks
    own = {n: _bump_field(rng, nr, nc, cs) + TEXTURE_SD * rng.normal(size=(nr, nc)) for n in names}
    latent = {}
    for n in names:
        if n in CORRELATED:
            driver, wgt = CORRELATED[n]
            latent[n] = wgt * own[driver] + np.sqrt(1 - wgt * wgt) * own[n]
        else:
            latent[n] = own[n].copy()
    mask_field = _bump_field(rng, nr, nc, cs) + 0.5 * rng.normal(size=(nr, nc))
    forest = mask_field >= np.quantile(mask_field, 1 - cfg.forest_cover)

    # Inside each sub-forest the drivers are re-standardized over forest cells,
    # then the observed bands get a block-specific gain and offset (a separate
    # acquisition), while basal area keeps following the latent structure.
    observed = {n: latent[n].copy() for n in names}
    for b, (r0, r1, c0, c1) in enumerate(blocks):
        signs = rng.choice([-1.0, 1.0], size=len(names))
        offsets = signs * cfg.shift[b] * rng.uniform(0.6, 1.0, size=len(names))
        gains = rng.uniform(1 - cfg.gain_spread, 1 + cfg.gain_spread, size=len(names))
        fm = forest[r0:r1, c0:c1]
        v, g = (latent[n][r0:r1, c0:c1] for n in names[:2])
        v = (v - v[fm].mean()) / v[fm].std()
        g = g - g[fm].mean()
        g = g - np.mean(g[fm] * v[fm]) * v
        latent[names[0]][r0:r1, c0:c1] = v
        latent[names[1]][r0:r1, c0:c1] = g / g[fm].std()
        for n, a, o in zip(names, gains, offsets):
            observed[n][r0:r1, c0:c1] = a * latent[n][r0:r1, c0:c1] + o

    type_field = _bump_field(rng, nr, nc, cs)
    for r0, r1, c0, c1 in blocks:
        type_field[r0:r1, c0:c1] += rng.uniform(-0.8, 0.8)
    codes = np.where(type_field < -0.45, 1, np.where(type_field < 0.35, 2, 3))

    truth_vals = basal_area(latent["volin"], latent["gap_ratio"], codes)
    truth_vals = np.where(forest, truth_vals, DEFAULT_NODATA)
    ft_vals = np.where(forest, codes, DEFAULT_NODATA)

    georef = dict(ncols=nc, nrows=nr, xllcorner=0.0, yllcorner=0.0, cellsize=cs,
                  nodata_value=DEFAULT_NODATA)
    bands = {}
    for n, mean, scale in PREDICTORS:
        bands[n] = RasterGrid(values=np.where(forest, mean + scale * observed[n], DEFAULT_NODATA),
                              **georef)
    stack = RasterStack(bands, RasterGrid(values=ft_vals, **georef))
    truth = RasterGrid(values=truth_vals, **georef)

    def draw(cells, k, label):
        k = min(k, cells.size)
        chosen = cells[np.sort(rng.choice(cells.size, size=k, replace=False))]
        rows, cols = np.unravel_index(chosen, (nr, nc))
        xs, ys = truth.cell_center(rows, cols)
        noise = rng.normal(0.0, cfg.noise_sd, size=k) if cfg.noise_sd > 0 else np.zeros(k)
        plots = []
        for i in range(k):
            r, c = rows[i], cols[i]
            plots.append(Plot(
                id=f"{label}-{i + 1:04d}",
                x=float(xs[i]), y=float(ys[i]),
                ba=float(max(truth_vals[r, c] + noise[i], 0.0)),
                features=tuple(float(bands[n].values[r, c]) for n in names),
                forest_type=ForestType(int(codes[r, c])),
            ))
        return PlotTable(tuple(names), tuple(plots), label)

    flat_forest = forest.ravel()
    local = []
    for b, (r0, r1, c0, c1) in enumerate(blocks):
        in_block = np.zeros((nr, nc), dtype=bool)
        in_block[r0:r1, c0:c1] = True
        cells = np.flatnonzero(in_block.ravel() & flat_forest)
        local.append(draw(cells, cfg.plots_per_subforest, f"local{b + 1}"))
    regional = draw(np.flatnonzero(flat_forest), cfg.n_regional, "regional")
    return SynthData(local, regional, stack, truth, blocks)
