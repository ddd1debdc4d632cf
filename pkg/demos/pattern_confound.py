"""Optical flow mistakes a change of illumination pattern for motion.

Run: python3 demos/pattern_confound.py
The sample never moves; only the pattern does. Flow between consecutive
raw frames should be zero, but it grows with the modulation depth.
"""
import numpy as np

from simkit.flowmetrics import pattern_confound_score
from simkit.optics import NoiseConfig, OpticalConfig, default_pattern_set, form_stack
from simkit.phantoms import cell_like


def main():
    config = OpticalConfig()
    sample = cell_like((128, 128), np.random.default_rng(0))
    print("modulation  median spurious flow (px)")
    for m in (0.0, 0.2, 0.4, 0.6, 0.8, 1.0):
        rng = np.random.default_rng(1)
        stack = form_stack(sample, default_pattern_set(config, rng, modulation=m), config,
                           NoiseConfig(), rng)
        print(f"{m:10.1f}  {pattern_confound_score(stack):.3f}")


if __name__ == "__main__":
    main()
