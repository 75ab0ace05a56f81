"""Calibrate the five local models and the regional one, then test each on every test split."""

import numpy as np

from forest_transfer.core import derive_seed
from forest_transfer.forest import Hyperparameters
from forest_transfer.study import calibrate, model_transfer
from forest_transfer.synth import SynthConfig, synth_generate

SEED = 7
data = synth_generate(SynthConfig(seed=SEED))
tables = list(data.local) + [data.regional]
models = [calibrate(t, derive_seed(SEED, 1, i), hp=Hyperparameters(n_trees=200))
          for i, t in enumerate(tables)]
for m in models:
    print(f"{m.label:9s} keeps {', '.join(m.predictors)}")

tm = model_transfer(models)
print()
print(tm.to_csv())

labels = [m.label for m in models[:5]]
for m in labels:
    own = tm.local(m)
    others = [tm[(m, d)] for d in labels if d != m]
    print(f"{m}: own R2 {own.r2:5.2f}, elsewhere {np.mean([c.r2 for c in others]):5.2f}; "
          f"|bias| {abs(own.bias):4.2f} vs {np.mean([abs(c.bias) for c in others]):4.2f}")
