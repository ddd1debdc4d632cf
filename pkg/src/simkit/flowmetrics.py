"""Image quality and motion metrics: PSNR, Horn-Schunck flow, motion regimes."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .image import SimStack

REFERENCE_SIZE = 512

# derivative and averaging stencils from Horn & Schunck (1981)
_AVG = np.array([[1, 2, 1], [2, 0, 2], [1, 2, 1]], dtype=np.float64) / 12.0


class Regime(str, enum.Enum):
    STATIC = "Static"
    MEDIUM = "Medium"
    FAST = "Fast"
    EXTREME = "Extreme"


# Upper bounds on 512x512-equivalent median flow, placed between the medians
# of the published test sets (0, 1.5, 10.4, 18.1 px).
REGIME_BOUNDS = ((0.5, Regime.STATIC), (6.0, Regime.MEDIUM), (14.0, Regime.FAST))


def psnr(a: np.ndarray, b: np.ndarray, peak: float = 1.0) -> float:
    """Peak signal-to-noise ratio in dB; ``math.inf`` for identical images."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    if peak <= 0:
        raise ValueError("peak must be positive")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


@dataclass(frozen=True)
class FlowField:
    u: np.ndarray  # horizontal displacement, pixels
    v: np.ndarray  # vertical displacement, pixels

    @property
    def magnitude(self) -> np.ndarray:
        return np.hypot(self.u, self.v)


def _hs_derivatives(f1, f2):
    # first differences averaged over the 2x2x2 cube, then centred with
    # edge replication so the estimates sit on the pixel grid
    p1 = np.pad(f1, ((0, 1), (0, 1)), mode="edge")
    p2 = np.pad(f2, ((0, 1), (0, 1)), mode="edge")

    def cube(p):
        return (p[:-1, :-1], p[:-1, 1:], p[1:, :-1], p[1:, 1:])

    a00, a01, a10, a11 = cube(p1)
    b00, b01, b10, b11 = cube(p2)
    ix = 0.25 * ((a01 - a00) + (a11 - a10) + (b01 - b00) + (b11 - b10))
    iy = 0.25 * ((a10 - a00) + (a11 - a01) + (b10 - b00) + (b11 - b01))
    it = 0.25 * ((b00 - a00) + (b01 - a01) + (b10 - a10) + (b11 - a11))
    # shift the half-pixel staggered estimates back onto pixel centres
    shift = lambda g: 0.5 * (g + np.pad(g, ((1, 0), (1, 0)), mode="edge")[:-1, :-1])  # noqa: E731
    return shift(ix), shift(iy), shift(it)


def optical_flow(f1: np.ndarray, f2: np.ndarray, alpha: float = 10.0,
                 iterations: int = 200) -> FlowField:
    """Horn-Schunck flow from ``f1`` to ``f2``.

    Both frames are rescaled jointly so that their largest absolute value is
    255, which makes ``alpha`` an 8-bit-intensity quantity and the result
    independent of a global intensity scale.
    """
    f1 = np.asarray(f1, dtype=np.float64)
    f2 = np.asarray(f2, dtype=np.float64)
    if f1.shape != f2.shape:
        raise ValueError(f"shape mismatch {f1.shape} vs {f2.shape}")
    u = np.zeros_like(f1)
    v = np.zeros_like(f1)
    scale = max(np.abs(f1).max(initial=0.0), np.abs(f2).max(initial=0.0))
    if scale == 0.0:
        return FlowField(u, v)
    f1 = f1 * (255.0 / scale)
    f2 = f2 * (255.0 / scale)
    ix, iy, it = _hs_derivatives(f1, f2)
    denom = alpha * alpha + ix * ix + iy * iy
    for _ in range(iterations):
        # new arrays each sweep: a Jacobi update, never in place
        ubar = ndimage.convolve(u, _AVG, mode="nearest")
        vbar = ndimage.convolve(v, _AVG, mode="nearest")
        t = (ix * ubar + iy * vbar + it) / denom
        u = ubar - ix * t
        v = vbar - iy * t
    return FlowField(u, v)


@dataclass(frozen=True)
class MotionStats:
    max_flow: float
    median_flow: float
    shape: tuple[int, int] = (REFERENCE_SIZE, REFERENCE_SIZE)

    @property
    def median_flow_ref(self) -> float:
        """Median flow rescaled to a 512 x 512 frame."""
        return self.median_flow * REFERENCE_SIZE / math.sqrt(self.shape[0] * self.shape[1])

    @property
    def regime(self) -> Regime:
        return classify_regime(self)


def motion_stats(sequence, alpha: float = 10.0, iterations: int = 200) -> MotionStats:
    """Max and median flow magnitude between the first and the centre frame."""
    frames = np.asarray(sequence, dtype=np.float64)
    if frames.ndim != 3 or frames.shape[0] < 5:
        raise ValueError("need at least 5 frames of equal size")
    mag = optical_flow(frames[0], frames[4], alpha, iterations).magnitude
    return MotionStats(float(mag.max()), float(np.median(mag)), frames.shape[1:])


def classify_regime(stats: MotionStats | float) -> Regime:
    """Regime from the 512-equivalent median flow (a bare float is taken as already scaled)."""
    median = stats if isinstance(stats, (int, float)) else stats.median_flow_ref
    for bound, regime in REGIME_BOUNDS:
        if median < bound:
            return regime
    return Regime.EXTREME


def pattern_confound_score(stack: SimStack, alpha: float = 10.0, iterations: int = 200) -> float:
    """Median flow magnitude between consecutive frames of a static-sample stack.

    Any flow found is spurious: only the illumination changed.
    """
    mags = [optical_flow(stack.frames[t], stack.frames[t + 1], alpha, iterations).magnitude
            for t in range(len(stack) - 1)]
    return float(np.median(np.stack(mags)))
