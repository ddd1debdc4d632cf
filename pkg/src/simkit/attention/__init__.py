"""Numpy kernels for a windowed channel-attention video SIM network."""
from .gradcheck import check_channel_attention, check_msa, check_network, rel_error, run_check
from .layers import (channel_attention_backward, channel_attention_forward, pixel_shuffle,
                     pixel_unshuffle)
from .msa import AttentionWeights, msa_backward, msa_forward, softmax
from .network import (NetworkConfig, fuse_and_upsample, fuse_and_upsample_backward,
                      init_params, load_weights, param_count, param_shapes, save_weights,
                      stl_backward, stl_forward, stl_shifted, vsr_sim_backward,
                      vsr_sim_forward, wcab_backward, wcab_forward, zero_params)
from .windows import (MASK_VALUE, WindowConfig, WindowLayout, attention_mask, bias_table_size,
                      cyclic_shift, region_ids, relative_position_index, window_partition,
                      window_reverse)

__all__ = [
    "AttentionWeights", "MASK_VALUE", "NetworkConfig", "WindowConfig", "WindowLayout",
    "attention_mask", "bias_table_size", "channel_attention_backward",
    "channel_attention_forward", "check_channel_attention", "check_msa", "check_network",
    "cyclic_shift", "fuse_and_upsample", "fuse_and_upsample_backward", "init_params",
    "load_weights", "msa_backward", "msa_forward", "param_count", "param_shapes",
    "pixel_shuffle", "pixel_unshuffle", "region_ids", "rel_error", "relative_position_index",
    "run_check", "save_weights", "softmax", "stl_backward", "stl_forward", "stl_shifted",
    "vsr_sim_backward", "vsr_sim_forward", "wcab_backward", "wcab_forward",
    "window_partition", "window_reverse", "zero_params",
]
