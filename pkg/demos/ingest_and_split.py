"""Generate the synthetic landscape, write it as CSV/ASCII grids, read it back and split it."""

import sys
import tempfile
from pathlib import Path

import numpy as np

from forest_transfer.core import SplitSpec, split_dataset
from forest_transfer.io import read_plots_csv, read_stack
from forest_transfer.study import save_synth
from forest_transfer.synth import SynthConfig, synth_generate

out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(tempfile.mkdtemp())
data = synth_generate(SynthConfig(seed=7))
save_synth(data, out)

plots = read_plots_csv(out / "local1.csv")
stack = read_stack(out / "stack")
print(f"{plots.name}: {len(plots)} plots, predictors {', '.join(plots.schema)}")
print(f"stack: {stack.template.ncols}x{stack.template.nrows} pixels of {stack.template.cellsize:g} m, "
      f"bands {', '.join(stack.names)}")

parts = split_dataset(plots, SplitSpec(seed=7))
for name in ("calib", "valid", "test"):
    t = getattr(parts, name)
    print(f"  {name:5s} n={len(t):3d}  mean Ba {t.ba.mean():5.1f}  sd {t.ba.std(ddof=1):4.1f}")
print("forest-type shares:", np.bincount(plots.forest_types, minlength=4)[1:] / len(plots))
