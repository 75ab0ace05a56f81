import numpy as np
import pytest

from forest_transfer.core import DataError, one_hot_encode
from forest_transfer.forest import (
    Forest, Hyperparameters, Tree, _best_split, fit_forest, grow_tree, oob_error,
    permutation_importance, predict, tree_rng,
)
from forest_transfer.synth import SynthConfig, synth_generate


def step_data(n=200, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.uniform(-1, 1, size=(n, 3))
    y = np.where(X[:, 0] < 0, 10.0, 30.0)
    return X, y


def brute_best_split(x, y):
    """Exhaustive midpoint search for the minimum summed child SSE."""
    best = None
    u = np.unique(x)
    for a, b in zip(u[:-1], u[1:]):
        t = 0.5 * (a + b)
        l, r = y[x < t], y[x >= t]
        sse = ((l - l.mean()) ** 2).sum() + ((r - r.mean()) ** 2).sum()
        if best is None or sse < best[0] - 1e-9:
            best = (sse, t)
    return best


@pytest.mark.parametrize("seed", range(10))
def test_best_split_matches_exhaustive_search(seed):
    rng = np.random.default_rng(seed)
    x = rng.integers(0, 15, 40).astype(float)
    y = rng.normal(size=40) + (x > 7)
    sse, t = _best_split(x, y)
    sse_b, t_b = brute_best_split(x, y)
    assert t == t_b and sse == pytest.approx(sse_b, rel=1e-9, abs=1e-9)


def test_best_split_constant_feature_is_none():
    assert _best_split(np.ones(5), np.arange(5.0)) is None


def test_constant_response_predicts_exactly():
    X = np.random.default_rng(1).normal(size=(30, 2))
    f = fit_forest(X, np.full(30, 25.0), Hyperparameters(n_trees=20))
    assert np.all(predict(f, np.random.default_rng(2).normal(size=(50, 2))) == 25.0)


def test_unsplit_tree_predicts_training_mean():
    X = np.random.default_rng(1).normal(size=(8, 2))
    y = np.arange(8.0)
    f = fit_forest(X, y, Hyperparameters(n_trees=1, min_node_size=5, bootstrap=False))
    assert f.trees[0].n_nodes == 1
    assert predict(f, X[0]) == y.mean()


def test_fully_grown_tree_interpolates_training_points():
    rng = np.random.default_rng(4)
    X = rng.normal(size=(60, 3))
    y = rng.normal(size=60)
    f = fit_forest(X, y, Hyperparameters(n_trees=1, mtry=3, min_node_size=1, bootstrap=False))
    assert np.array_equal(predict(f, X), y)


def test_step_function_recovered_by_one_split():
    rng = np.random.default_rng(0)
    X = rng.uniform(-1, 1, (200, 1))
    y = np.where(X[:, 0] < 0, 10.0, 30.0)
    f = fit_forest(X, y, Hyperparameters(n_trees=200, seed=3))
    assert all(t.n_nodes == 3 for t in f.trees)
    # OOB error can only come from plots between the step and its nearest in-bag neighbours
    far = np.abs(X[:, 0]) > 0.05
    assert np.array_equal(f.oob_predictions[far], y[far])
    assert oob_error(f, y).r2 > 0.95


def test_noise_oob_r2_small():
    rng = np.random.default_rng(5)
    X, y = rng.normal(size=(300, 4)), rng.normal(size=300)
    f = fit_forest(X, y, Hyperparameters(n_trees=200))
    assert oob_error(f, y).r2 <= 0.05


def test_learnable_signal_oob_r2_high():
    rng = np.random.default_rng(6)
    X = rng.uniform(-2, 2, size=(500, 3))
    y = 3 * X[:, 0] + np.sin(2 * X[:, 1])
    f = fit_forest(X, y, Hyperparameters(n_trees=150))
    assert oob_error(f, y).r2 > 0.8


def test_single_tree_never_oob_error():
    X, y = step_data(n=60)
    f = fit_forest(X, y, Hyperparameters(n_trees=1))
    with pytest.raises(DataError, match="more trees"):
        oob_error(f, y)


def test_predictions_within_training_range():
    rng = np.random.default_rng(8)
    X, y = rng.normal(size=(80, 3)), rng.gamma(2.0, 10.0, 80)
    f = fit_forest(X, y, Hyperparameters(n_trees=60))
    probes = rng.normal(scale=10, size=(10_000, 3))
    pred = predict(f, probes)
    assert pred.min() >= y.min() and pred.max() <= y.max()


def test_deterministic_and_thread_invariant():
    X, y = step_data(n=120, seed=2)
    y = y + np.random.default_rng(0).normal(size=120)
    hp = Hyperparameters(n_trees=40, seed=11)
    a = fit_forest(X, y, hp)
    b = fit_forest(X, y, hp, threads=3)
    probe = np.random.default_rng(9).uniform(-1, 1, (500, 3))
    pa = predict(a, probe)
    assert np.array_equal(pa, predict(b, probe))
    assert np.array_equal(pa, predict(a, probe, threads=4))
    assert np.array_equal(a.oob_predictions, b.oob_predictions)
    assert a.to_json() == b.to_json()


def test_row_order_invariance_with_row_keys():
    X, y = step_data(n=100, seed=4)
    y = y + np.random.default_rng(1).normal(size=100)
    keys = [f"plot{i:03d}" for i in range(100)]
    perm = np.random.default_rng(2).permutation(100)
    hp = Hyperparameters(n_trees=30)
    a = fit_forest(X, y, hp, row_keys=keys)
    b = fit_forest(X[perm], y[perm], hp, row_keys=[keys[i] for i in perm])
    probe = np.random.default_rng(3).uniform(-1, 1, (200, 3))
    assert np.array_equal(predict(a, probe), predict(b, probe))
    assert np.array_equal(a.oob_predictions[perm], b.oob_predictions)


def test_json_round_trip_bit_exact():
    X, y = step_data(n=90, seed=5)
    y = y + np.random.default_rng(4).normal(size=90)
    f = fit_forest(X, y, Hyperparameters(n_trees=25), columns=("a", "b", "c"))
    g = Forest.from_json(f.to_json())
    probe = np.random.default_rng(5).normal(size=(300, 3))
    assert np.array_equal(predict(f, probe), predict(g, probe))
    assert g.columns == ("a", "b", "c") and g.hyperparameters == f.hyperparameters
    assert np.array_equal(g.oob_predictions, f.oob_predictions)


def test_schema_mismatch_and_bad_hyperparameters():
    X, y = step_data(n=40)
    f = fit_forest(X, y, Hyperparameters(n_trees=5))
    with pytest.raises(DataError, match="expected 3"):
        predict(f, np.zeros(2))
    with pytest.raises(DataError, match="mtry"):
        fit_forest(X, y, Hyperparameters(mtry=4))
    with pytest.raises(DataError):
        fit_forest(X[:3], y[:3], Hyperparameters(n_trees=5))
    with pytest.raises(DataError):
        fit_forest(np.where(X == X[0, 0], np.nan, X), y)


def test_tree_apply_matches_recursive_walk():
    rng = np.random.default_rng(7)
    X, y = rng.normal(size=(150, 4)), rng.normal(size=150)
    tree = grow_tree(X, y, 2, 3, tree_rng(1, 0))

    def walk(x, i=0):
        if tree.feature[i] < 0:
            return tree.value[i]
        nxt = tree.left[i] if x[tree.feature[i]] < tree.threshold[i] else tree.right[i]
        return walk(x, nxt)

    probe = rng.normal(size=(200, 4))
    assert np.array_equal(tree.apply(probe), [walk(x) for x in probe])
    assert isinstance(Tree.from_dict(tree.to_dict()), Tree)


def test_importance_concentrates_on_the_signal():
    rng = np.random.default_rng(12)
    X = rng.normal(size=(300, 5))
    y = 5 * X[:, 0] + rng.normal(scale=0.5, size=300)
    f = fit_forest(X, y, Hyperparameters(n_trees=100, mtry=2))
    imp = permutation_importance(f, X, y, seed=1)
    assert imp[0] > 5 * imp[1:].max()


def test_noise_importance_below_permutation_null():
    """Observed max |score| on noise stays under the 95th percentile of a
    null built by refitting on shuffled responses."""
    rng = np.random.default_rng(13)
    X, y = rng.normal(size=(150, 4)), rng.normal(size=150)
    hp = Hyperparameters(n_trees=60)

    def stat(yy, seed):
        f = fit_forest(X, yy, hp)
        return np.abs(permutation_importance(f, X, yy, seed=seed)).max()

    null = [stat(rng.permutation(y), s) for s in range(19)]
    assert stat(y, 99) <= np.quantile(null, 0.95)


def test_duplicated_column_shares_importance():
    rng = np.random.default_rng(14)
    x = rng.normal(size=300)
    X = np.column_stack([x, x, rng.normal(size=300)])
    y = 4 * x + rng.normal(scale=0.3, size=300)
    hp = Hyperparameters(n_trees=100, mtry=1)
    pair = permutation_importance(fit_forest(X, y, hp), X, y)
    alone = permutation_importance(fit_forest(X[:, [0, 2]], y, hp), X[:, [0, 2]], y)
    assert pair[0] < alone[0] and pair[1] < alone[0]
    assert pair[0] > pair[2] and pair[1] > pair[2]


def test_permutation_importance_needs_inbag():
    X, y = step_data(n=40)
    f = fit_forest(X, y, Hyperparameters(n_trees=5))
    g = Forest.from_json(f.to_json())
    with pytest.raises(DataError, match="in-bag"):
        permutation_importance(g, X, y)


@pytest.mark.slow
def test_oob_rmse_stable_from_100_to_500_trees():
    d = synth_generate(SynthConfig(seed=7))
    t = d.regional
    design = one_hot_encode(t)
    r = [oob_error(fit_forest(design.X, t.ba, Hyperparameters(n_trees=k), row_keys=t.ids), t.ba).rmse
         for k in (100, 500)]
    assert abs(r[1] - r[0]) / r[1] < 0.05
