"""Rolling SIM: reconstruct from every 9-frame window of a continuous acquisition.

While the illumination cycles through its 9 patterns, any 9 consecutive
frames hold a full cycle, only rotated. Stepping the window by one frame
gives one reconstruction per raw frame instead of one per 9 frames.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .image import STACK_SIZE, FrameStream, PatternMeta, SimStack
from .optics import NoiseConfig, OpticalConfig, Otf, form_frame, jitter_patterns, make_otf
from .recon import ReconConfig, sim_reconstruct


@dataclass(frozen=True)
class RollingOutput:
    start: int  # first frame of the window
    time: int  # centre frame index, the output timestamp
    image: np.ndarray


def acquire_stream(samples, cycle: Sequence[PatternMeta], n_frames: int,
                   config: OpticalConfig, noise: NoiseConfig, rng: np.random.Generator,
                   otf: Otf | None = None) -> FrameStream:
    """Continuous acquisition: frame i images ``samples[i]`` under ``cycle[i % 9]``.

    ``samples`` is one static (H, W) image or an (n_frames, H, W) sequence.
    Pattern jitter is drawn once for the whole stream.
    """
    if len(cycle) != STACK_SIZE:
        raise ValueError("the pattern cycle must hold 9 patterns")
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim == 2:
        samples = np.broadcast_to(samples, (n_frames, *samples.shape))
    if samples.shape[0] != n_frames:
        raise ValueError(f"need {n_frames} samples, got {samples.shape[0]}")
    if otf is None:
        otf = make_otf(config, *samples.shape[1:])
    cycle = jitter_patterns(cycle, noise, rng)
    metas = [cycle[i % STACK_SIZE] for i in range(n_frames)]
    frames = [form_frame(s, m, otf, noise, rng, config.intensity) for s, m in zip(samples, metas)]
    return FrameStream(np.stack(frames), tuple(metas))


def window_starts(n_frames: int, step: int = 1) -> range:
    if step < 1:
        raise ValueError("step must be >= 1")
    if n_frames < STACK_SIZE:
        raise ValueError(f"stream has {n_frames} frames; a window needs {STACK_SIZE}")
    return range(0, n_frames - STACK_SIZE + 1, step)


def rolling_windows(stream: FrameStream, step: int = 1) -> list[SimStack]:
    """Complete windows [i, i + 9) for i = 0, step, 2 step, ..."""
    return [SimStack(stream.frames[i:i + STACK_SIZE], stream.metas[i:i + STACK_SIZE])
            for i in window_starts(len(stream), step)]


def sim_reconstructor(otf: Otf, cfg: ReconConfig = ReconConfig()) -> Callable[[SimStack], np.ndarray]:
    return lambda stack: sim_reconstruct(stack, otf, cfg)


def rolling_reconstruct(stream: FrameStream, reconstructor: Callable[[SimStack], np.ndarray],
                        step: int = 1, threads: int = 1) -> list[RollingOutput]:
    """One reconstruction per window, in window order, stamped at the window centre."""
    starts = list(window_starts(len(stream), step))
    windows = rolling_windows(stream, step)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            images = list(pool.map(reconstructor, windows))
    else:
        images = [reconstructor(w) for w in windows]
    return [RollingOutput(s, s + STACK_SIZE // 2, im) for s, im in zip(starts, images)]
