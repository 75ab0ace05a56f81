"""Calibration envelope: hull membership, MCD and the Inside/Near/Far classes."""

import numpy as np

from forest_transfer.core import SplitSpec, split_dataset
from forest_transfer.hull import CalibrationEnvelope, build_envelope, classify, extrapolation_summary
from forest_transfer.synth import SynthConfig, synth_generate

env = CalibrationEnvelope.from_raw([[0.0, 0.0], [3.0, 0.0], [0.0, 4.0]])
print(f"triangle MCD {env.mcd}")
for q in ([1.0, 1.0], [3.0, 3.0], [0.0, -4.0], [0.0, -12.0]):
    c = classify(env, q)
    print(f"  {q} -> {c.cls.name}" + ("" if c.distance is None else f" at {c.distance:.2f}"))

data = synth_generate(SynthConfig(seed=7))
predictors = ("volin", "gap_ratio", "canopy_closure")
X, _, valid = data.stack.pixels(predictors)
aoi = X[valid]
print(f"\nAOI pixels classified against each network's envelope ({len(aoi)} pixels):")
for t in list(data.local) + [data.regional]:
    env = build_envelope(split_dataset(t, SplitSpec(seed=7)).calib, predictors)
    s = extrapolation_summary(env, aoi)
    print(f"  {t.name:9s} inside {100 * s.inside:5.1f}%  near {100 * s.near:5.1f}%  "
          f"far {100 * s.far:5.1f}%  mean distance {s.mean_distance:.2f}")
