import csv
import io
import math

import numpy as np
import pytest

from conftest import make_table
from forest_transfer.core import DataError
from forest_transfer.forest import Hyperparameters
from forest_transfer.hull import build_envelope, inside_mask
from forest_transfer.effort import (
    Recipe, ThinningPlan, cell_index, curve_means, effort_experiment, effort_to_csv, grid_cells,
    thin_sample,
)


def spatial_table(n, seed=0, size=20_000.0):
    rng = np.random.default_rng(seed)
    xy = rng.uniform(0, size, (n, 2))
    X = rng.normal(size=(n, 2))
    y = 25 + 6 * X[:, 0] + rng.normal(size=n)
    return make_table(X, np.clip(y, 0, None), types=rng.integers(1, 4, n), xy=xy)


@pytest.mark.parametrize("extent, res, expected", [
    ((0, 0, 20_000, 20_000), 10, 4),
    ((0, 0, 25_000, 20_000), 10, 6),
    ((0, 0, 20_000, 20_000), 50, 1),
])
def test_cell_counts(extent, res, expected):
    assert len(grid_cells(extent, res)) == expected


def test_partial_cells_clipped_and_anchored():
    cells = grid_cells((100, 200, 25_100, 20_200), 10)
    assert (cells[0].xmin, cells[0].ymin) == (100, 200)
    assert max(c.xmax for c in cells) == 25_100 and min(c.xmax - c.xmin for c in cells) == 5_000


def test_plan_validation():
    with pytest.raises(DataError):
        ThinningPlan((2.0, 4.0), (1,))
    with pytest.raises(DataError):
        ThinningPlan((4.0, 2.0), (1, 1))
    assert ThinningPlan().iterations == (4, 4, 5, 6, 7)


def test_identity_when_each_cell_holds_one_plot():
    centres = np.array([[5_000.0, 5_000], [15_000, 5_000], [5_000, 15_000], [15_000, 15_000]])
    t = make_table(np.arange(8.0).reshape(4, 2), np.arange(4.0), xy=centres)
    out = thin_sample(t, grid_cells((0, 0, 20_000, 20_000), 10), seed=3)
    assert out == t


def test_one_cell_three_plots_deterministic():
    t = make_table(np.zeros((3, 1)), [1.0, 2, 3], xy=[[1, 1], [2, 2], [3, 3]])
    cells = grid_cells((0, 0, 10_000, 10_000), 10)
    a, b = thin_sample(t, cells, 11), thin_sample(t, cells, 11)
    assert len(a) == 1 and a.ids == b.ids


def test_selection_frequencies_uniform():
    t = make_table(np.zeros((3, 1)), [1.0, 2, 3], xy=[[1, 1], [2, 2], [3, 3]])
    cells = grid_cells((0, 0, 10_000, 10_000), 10)
    counts = {i: 0 for i in t.ids}
    n = 10_000
    for s in range(n):
        counts[thin_sample(t, cells, s).ids[0]] += 1
    sd = math.sqrt(n * (1 / 3) * (2 / 3))
    assert all(abs(c - n / 3) <= 3 * sd for c in counts.values())


@pytest.mark.parametrize("res", [2, 4, 6, 10, 20])
def test_subset_and_count_of_nonempty_cells(res):
    t = spatial_table(300, seed=res)
    cells = grid_cells((0, 0, 20_000, 20_000), res)
    out = thin_sample(t, cells, seed=res)
    assert set(out.ids) <= set(t.ids)
    assert len(out) == len(np.unique(cell_index(cells, t.xy)))
    assert len(np.unique(cell_index(cells, out.xy))) == len(out)


def test_points_outside_grid_rejected():
    t = make_table(np.zeros((1, 1)), [1.0], xy=[[30_000, 1]])
    with pytest.raises(DataError, match="outside"):
        thin_sample(t, grid_cells((0, 0, 20_000, 20_000), 10), 0)


def test_thinned_hull_contained_in_full_hull():
    t = spatial_table(400, seed=1)
    full = build_envelope(t, ["f0", "f1"])
    q = np.random.default_rng(2).normal(scale=1.5, size=(2000, 2))
    full_in = inside_mask(full, full.standardizer.apply(q))
    for seed in range(5):
        thin = thin_sample(t, grid_cells((0, 0, 20_000, 20_000), 4), seed)
        env = build_envelope(thin, ["f0", "f1"])
        thin_in = inside_mask(env, env.standardizer.apply(q))
        assert np.all(full_in[thin_in])


def test_experiment_records_and_undefined_points():
    t = spatial_table(300, seed=4)
    test = spatial_table(60, seed=5)
    q = np.random.default_rng(6).normal(size=(300, 2))
    plan = ThinningPlan((2.0, 10.0), (2, 1), seed=3)
    recipe = Recipe(("f0", "f1"), Hyperparameters(n_trees=20))
    with pytest.warns(UserWarning, match="only 4 plots"):
        pts = effort_experiment(t, plan, recipe, test, q, (0, 0, 20_000, 20_000), network="net")
    assert [(p.resolution_km, p.iteration) for p in pts] == [(2.0, 0), (2.0, 1), (10.0, 0)]
    assert pts[0].defined and not pts[2].defined and pts[2].n_plots == 4
    assert 0 <= pts[0].prop_far <= pts[0].prop_exterior <= 1
    rows = list(csv.DictReader(io.StringIO(effort_to_csv(pts))))
    assert rows[2]["rmse_pct"] == "undefined" and rows[0]["network"] == "net"
    means = curve_means(pts)
    assert math.isnan(means[10.0]["rmse_pct"]) and means[2.0]["n_plots"] == pts[0].n_plots


def test_experiment_deterministic():
    t = spatial_table(200, seed=7)
    test = spatial_table(40, seed=8)
    q = np.random.default_rng(9).normal(size=(100, 2))
    plan = ThinningPlan((2.0, 4.0), (1, 1), seed=1)
    recipe = Recipe(("f0",), Hyperparameters(n_trees=15))
    a = effort_to_csv(effort_experiment(t, plan, recipe, test, q[:, :1], (0, 0, 20_000, 20_000)))
    b = effort_to_csv(effort_experiment(t, plan, recipe, test, q[:, :1], (0, 0, 20_000, 20_000)))
    assert a == b
