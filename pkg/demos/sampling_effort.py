"""Thin the regional network on coarser and coarser grids and watch the envelope shrink."""

from forest_transfer.core import derive_seed
from forest_transfer.effort import curve_means
from forest_transfer.forest import Hyperparameters
from forest_transfer.study import DemoConfig, calibrate, run_effort
from forest_transfer.synth import SynthConfig, synth_generate

SEED = 7
cfg = DemoConfig(seed=SEED, hp=Hyperparameters(n_trees=200), plan_iterations=(2, 2, 2, 3, 3))
data = synth_generate(SynthConfig(seed=SEED))
regional = calibrate(data.regional, derive_seed(SEED, 1, 5), hp=cfg.hp)
points = run_effort(data, regional, cfg)

print(" km   plots  RMSE%  bias%  exterior%  far%")
for res, m in sorted(curve_means(points).items()):
    print(f"{res:3g} {m['n_plots']:7.0f} {m['rmse_pct']:6.1f} {m['bias_pct']:6.1f} "
          f"{100 * m['prop_exterior']:9.1f} {100 * m['prop_far']:5.1f}")
