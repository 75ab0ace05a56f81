"""Lasso path, cross-validated lambda and the importance cap on one local network."""

import numpy as np

from forest_transfer.core import SplitSpec, split_dataset
from forest_transfer.forest import Hyperparameters
from forest_transfer.selection import cv_lasso, select_predictors
from forest_transfer.synth import SynthConfig, synth_generate

data = synth_generate(SynthConfig(seed=7))
calib = split_dataset(data.local[1], SplitSpec(seed=7)).calib

path = cv_lasso(calib, k=10, seed=7)
print(f"lambda_min {path.lambda_min:.4f}  keeps {path.nonzero(path.i_min)}")
print(f"lambda_1se {path.lambda_1se:.4f}  keeps {path.nonzero(path.i_1se)}")

# how many predictors enter as lambda shrinks
counts = [len(path.nonzero(i)) for i in range(len(path.lambdas))]
for i in range(0, len(counts), 20):
    print(f"  lambda {path.lambdas[i]:8.4f}: {counts[i]} nonzero, cv mse {path.cv_mean[i]:.2f}")

sel = select_predictors(calib, seed=7, cap=3, hp=Hyperparameters(n_trees=200))
print("retained with a cap of 3:", sel.retained, "(cap applied)" if sel.cap_applied else "")
print("design columns:", sel.design_columns)
