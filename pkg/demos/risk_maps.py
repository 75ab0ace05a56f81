"""Map one sub-forest under its own model and under the regional model."""

import sys
import tempfile
from pathlib import Path

from forest_transfer.core import derive_seed
from forest_transfer.forest import Hyperparameters
from forest_transfer.maps import predict_raster, write_bundle
from forest_transfer.study import calibrate
from forest_transfer.synth import SynthConfig, synth_generate

SEED = 7
out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(tempfile.mkdtemp())
data = synth_generate(SynthConfig(seed=SEED))
window = data.stack.window(*data.blocks[3])

for i, table in ((3, data.local[3]), (5, data.regional)):
    m = calibrate(table, derive_seed(SEED, 1, i), hp=Hyperparameters(n_trees=200))
    bundle = predict_raster(window, m.forest, m.envelope)
    s = bundle.summary()
    print(f"{m.label:9s} inside {100 * s.inside:5.1f}%  near {100 * s.near:5.1f}%  far {100 * s.far:5.1f}%")
    for p in write_bundle(bundle, out, f"local4_{m.label}"):
        print("  ", p)
