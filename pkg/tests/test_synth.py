import numpy as np
import pytest

from forest_transfer.core import DataError
from forest_transfer.synth import SynthConfig, basal_area, synth_generate


@pytest.fixture(scope="module")
def default_data():
    return synth_generate(SynthConfig(seed=7))


def test_default_sizes(default_data):
    d = default_data
    assert d.truth.ncols == d.truth.nrows == 512
    assert [len(t) for t in d.local] == [200] * 5 and len(d.regional) == 900
    assert d.extent == (0.0, 0.0, 61440.0, 61440.0)


def test_regional_mean_within_reference_range(default_data):
    assert 20.0 <= default_data.regional.ba.mean() <= 32.0


def test_table_distributions_near_reference_ranges(default_data):
    for t in default_data.local + [default_data.regional]:
        assert 20.0 <= t.ba.mean() <= 32.0, t.name
        assert 8.0 <= t.ba.std(ddof=1) <= 14.0, t.name


def test_plots_inside_their_blocks(default_data):
    d = default_data
    for t, (r0, r1, c0, c1) in zip(d.local, d.blocks):
        rows, cols = d.truth.cell_of(t.xy[:, 0], t.xy[:, 1])
        assert np.all((rows >= r0) & (rows < r1) & (cols >= c0) & (cols < c1))


def test_blocks_disjoint(default_data):
    masks = []
    for r0, r1, c0, c1 in default_data.blocks:
        m = np.zeros((512, 512), bool)
        m[r0:r1, c0:c1] = True
        masks.append(m)
    assert np.sum(masks, axis=0).max() == 1


def test_noiseless_plots_equal_truth_raster():
    d = synth_generate(SynthConfig(seed=3, noise_sd=0.0, plots_per_subforest=30, n_regional=50))
    for t in d.local + [d.regional]:
        assert np.array_equal(d.truth.sample(t.xy[:, 0], t.xy[:, 1]), t.ba)


def test_plot_features_equal_band_values(default_data):
    d = default_data
    t = d.local[2]
    for j, name in enumerate(t.schema):
        assert np.array_equal(d.stack.band(name).sample(t.xy[:, 0], t.xy[:, 1]), t.features()[:, j])
    assert np.array_equal(d.stack.forest_type.sample(t.xy[:, 0], t.xy[:, 1]), t.forest_types)


def test_same_seed_is_identical():
    cfg = SynthConfig(seed=11, plots_per_subforest=20, n_regional=30)
    a, b = synth_generate(cfg), synth_generate(cfg)
    assert a.regional == b.regional and a.local == b.local
    assert np.array_equal(a.truth.values, b.truth.values)
    for n in a.stack.names:
        assert np.array_equal(a.stack.band(n).values, b.stack.band(n).values)


def test_basal_area_is_monotone_in_drivers():
    z = np.linspace(-3, 3, 50)
    codes = np.full(50, 2)
    assert np.all(np.diff(basal_area(z, np.zeros(50), codes)) > 0)
    assert np.all(np.diff(basal_area(np.zeros(50), z, codes)) < 0)
    assert basal_area(np.zeros(3), np.zeros(3), np.array([1, 2, 3])).tolist() == [24.0, 27.0, 30.0]


@pytest.mark.parametrize("kw", [dict(n_subforests=0), dict(noise_sd=-1.0), dict(cellsize=0.0),
                                dict(shift=(1.0, 2.0)), dict(forest_cover=0.0)])
def test_config_validation(kw):
    with pytest.raises(DataError):
        SynthConfig(**kw)
