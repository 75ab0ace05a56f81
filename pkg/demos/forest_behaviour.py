"""Random forest on a step, on noise, and on the synthetic regional network."""

import numpy as np

from forest_transfer.core import one_hot_encode
from forest_transfer.forest import Hyperparameters, fit_forest, oob_error, permutation_importance, predict
from forest_transfer.synth import SynthConfig, synth_generate

rng = np.random.default_rng(1)
x = rng.uniform(-1, 1, (200, 1))
step = np.where(x[:, 0] < 0, 10.0, 30.0)
f = fit_forest(x, step, Hyperparameters(n_trees=300))
print(f"step: OOB RMSE {oob_error(f, step).rmse:.3f}, every tree has {f.trees[0].n_nodes} nodes")

noise = rng.normal(25, 8, 200)
g = fit_forest(rng.normal(size=(200, 4)), noise, Hyperparameters(n_trees=300))
print(f"noise: OOB R2 {oob_error(g, noise).r2:.3f}")

far = predict(f, np.array([[-100.0], [100.0]]))
print(f"far outside the training range the forest stays within [10, 30]: {far}")

t = synth_generate(SynthConfig(seed=7)).regional
d = one_hot_encode(t)
h = fit_forest(d.X, t.ba, Hyperparameters(n_trees=300), columns=d.columns, row_keys=t.ids)
m = oob_error(h, t.ba)
print(f"regional network: OOB R2 {m.r2:.2f}, RMSE {m.rmse:.2f} m2/ha")
imp = permutation_importance(h, d.X, t.ba, seed=7)
for name, v in sorted(zip(d.columns, imp), key=lambda p: -p[1]):
    print(f"  {name:16s} {v:7.2f}")
