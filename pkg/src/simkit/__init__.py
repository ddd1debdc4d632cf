"""simkit: structured illumination microscopy simulation and reconstruction toolkit.

Submodules
----------
image        image/stack data model and the ``.vsim`` container
optics       OTF/PSF, stripe patterns, noisy frame formation
datagen      paired training data from frame sequences
recon        wide-field, Wiener and Fourier SIM reconstruction
flowmetrics  PSNR, Horn-Schunck flow, motion regimes
rolling      sliding-window reconstruction of continuous acquisitions
attention    numpy kernels of a windowed channel-attention network
"""
from .image import (FrameStream, PatternMeta, SimStack, read_container, read_image, read_stack,
                    write_container, write_png16)
from .optics import (NoiseConfig, OpticalConfig, Otf, default_pattern_set, form_frame, form_stack,
                     make_otf, make_pattern, otf_to_psf)
from .recon import (EstimationError, PatternEstimate, ReconConfig, estimate_patterns,
                    sim_reconstruct, widefield, wiener_deconvolve)
from .flowmetrics import (FlowField, MotionStats, Regime, classify_regime, motion_stats,
                          optical_flow, pattern_confound_score, psnr)

__version__ = "0.1.0"

__all__ = [
    "EstimationError", "FlowField", "FrameStream", "MotionStats", "NoiseConfig", "OpticalConfig",
    "Otf", "PatternEstimate", "PatternMeta", "ReconConfig", "Regime", "SimStack",
    "classify_regime", "default_pattern_set", "estimate_patterns", "form_frame", "form_stack",
    "make_otf", "make_pattern", "motion_stats", "optical_flow", "otf_to_psf",
    "pattern_confound_score", "psnr", "read_container", "read_image", "read_stack",
    "sim_reconstruct", "widefield", "wiener_deconvolve", "write_container", "write_png16",
]
