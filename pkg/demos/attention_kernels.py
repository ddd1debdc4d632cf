"""The toy windowed-attention network: a forward pass and its gradient checks.

Run: python3 demos/attention_kernels.py
No training happens here. The network runs with random weights to show
shapes, and every analytic backward is compared with finite differences.
"""
import numpy as np

from simkit.attention import (NetworkConfig, WindowConfig, attention_mask, init_params,
                              param_count, run_check, vsr_sim_forward)


def main():
    full = NetworkConfig()
    print(f"default network: {full.n_wcab} blocks x {full.n_stl} layers, D={full.embed}, "
          f"{full.heads} heads, window {full.temporal_window}x{full.window}x{full.window}, "
          f"{param_count(full):,} parameters")

    toy = NetworkConfig.toy()
    params = init_params(toy, np.random.default_rng(0))
    frames = np.random.default_rng(1).random((9, 32, 32))
    out = vsr_sim_forward(frames, params, toy)
    print(f"toy network ({param_count(toy):,} parameters): {frames.shape} -> {out.shape}")

    mask = attention_mask(WindowConfig(window=4, temporal=1, shifted=True), (1, 8, 8))
    blocked = (mask < 0).mean(axis=(1, 2))
    print("share of blocked token pairs per shifted window:", np.round(blocked, 3).tolist())

    for op, label in (("msa", "attention"), ("ca", "channel attention"),
                      ("e2e", "whole network")):
        errs = [run_check(op, seed) for seed in range(5)]
        worst = max(e for e, _ in errs)
        print(f"{label:>17}: max relative error {worst:.1e} (tolerance {errs[0][1]:.0e})")


if __name__ == "__main__":
    main()
