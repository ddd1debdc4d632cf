"""SIM image formation: ideal OTF/PSF, stripe patterns and noisy raw frames.

Frequencies are in cycles/pixel throughout. Convolution with the PSF is
circular (FFT based, no padding), so structure near one edge leaks into the
opposite edge within a PSF radius.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .image import PatternMeta, SimStack, STACK_SIZE


class OpticsConfigError(ValueError):
    pass


@dataclass(frozen=True)
class OpticalConfig:
    na: float = 1.2
    lambda_em: float = 600.0  # nm
    pixel_size: float = 60.0  # nm, object space
    intensity: float = 1.0  # I0

    def __post_init__(self):
        if self.na <= 0 or self.lambda_em <= 0 or self.pixel_size <= 0:
            raise OpticsConfigError("na, lambda_em and pixel_size must be positive")

    @property
    def cutoff(self) -> float:
        """Incoherent cutoff 2 NA / lambda in cycles/nm."""
        return 2.0 * self.na / self.lambda_em

    @property
    def cutoff_pix(self) -> float:
        return self.cutoff * self.pixel_size

    @property
    def rayleigh(self) -> float:
        """Two-point resolution 0.61 lambda / NA in nm."""
        return 0.61 * self.lambda_em / self.na


@dataclass(frozen=True)
class NoiseConfig:
    gaussian_sigma: float = 0.0
    poisson_photons: float = 0.0
    jitter_k0_rel: float = 0.0
    jitter_theta: float = 0.0
    jitter_phi: float = 0.0

    def __post_init__(self):
        for name, value in vars(self).items():
            if value < 0:
                raise OpticsConfigError(f"{name} must be >= 0, got {value}")

    @classmethod
    def default(cls) -> "NoiseConfig":
        """Toolkit defaults: 1% k0, 0.5 deg theta, 3 deg phi jitter, no pixel noise."""
        return cls(jitter_k0_rel=0.01, jitter_theta=np.deg2rad(0.5), jitter_phi=np.deg2rad(3.0))

    @property
    def pixel_noise(self) -> bool:
        return self.gaussian_sigma > 0 or self.poisson_photons > 0


def chat(rho):
    """Diffraction-limited incoherent OTF profile for normalized radius ``rho``."""
    rho = np.clip(np.asarray(rho, dtype=np.float64), 0.0, 1.0)
    return (2.0 / np.pi) * (np.arccos(rho) - rho * np.sqrt(1.0 - rho * rho))


@dataclass(frozen=True, eq=False)
class Otf:
    """Real OTF sampled on the centered (fftshift-ed) frequency grid.

    ``cutoff`` is in cycles/pixel; ``evaluate`` gives the analytic value at
    arbitrary frequencies, which reconstruction needs off the sampling grid.
    """

    values: np.ndarray
    cutoff: float

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    @property
    def unshifted(self) -> np.ndarray:
        """Values in numpy FFT order (DC at [0, 0])."""
        return np.fft.ifftshift(self.values)

    def evaluate(self, fy, fx):
        return chat(np.hypot(fy, fx) / self.cutoff)


def freq_grid(height: int, width: int, centered: bool = True):
    fy = np.fft.fftfreq(height)
    fx = np.fft.fftfreq(width)
    if centered:
        fy, fx = np.fft.fftshift(fy), np.fft.fftshift(fx)
    return np.meshgrid(fy, fx, indexing="ij")


def make_otf(config: OpticalConfig, height: int, width: int) -> Otf:
    fc = config.cutoff_pix
    if fc >= 0.5:
        raise OpticsConfigError(
            f"OTF cutoff {fc:.4f} cycles/pixel is at or above Nyquist; use a smaller pixel size"
        )
    fy, fx = freq_grid(height, width)
    values = chat(np.hypot(fy, fx) / fc)
    values.setflags(write=False)
    return Otf(values, fc)


def otf_to_psf(otf: Otf) -> np.ndarray:
    """Centered, non-negative, unit-sum PSF."""
    psf = np.fft.fftshift(np.fft.ifft2(otf.unshifted).real)
    psf[psf < 0] = 0.0
    return psf / psf.sum()


def pattern_coords(height: int, width: int, step: float = 1.0):
    """Pattern coordinates in raw pixels, origin at pixel (height // 2, width // 2).

    ``step`` < 1 samples the same field of view on a finer grid.
    """
    n_y, n_x = int(round(height / step)), int(round(width / step))
    y = np.arange(n_y) * step - height // 2
    x = np.arange(n_x) * step - width // 2
    return np.meshgrid(y, x, indexing="ij")


def make_pattern(meta: PatternMeta, height: int, width: int, intensity: float = 1.0) -> np.ndarray:
    """Stripe pattern I0 [1 - m/2 cos(2 pi (kx x + ky y) + phi)].

    The coordinate origin is the center pixel (see :func:`pattern_coords`).
    """
    y, x = pattern_coords(height, width)
    arg = 2.0 * np.pi * (meta.kx * x + meta.ky * y) + meta.phi
    return intensity * (1.0 - 0.5 * meta.m * np.cos(arg))


def blur(image: np.ndarray, otf: Otf) -> np.ndarray:
    return np.fft.ifft2(np.fft.fft2(image) * otf.unshifted).real


def add_noise(frame: np.ndarray, noise: NoiseConfig, rng: np.random.Generator) -> np.ndarray:
    out = frame
    if noise.poisson_photons > 0:
        lam = np.clip(frame, 0.0, None) * noise.poisson_photons
        out = rng.poisson(lam).astype(np.float64) / noise.poisson_photons
    if noise.gaussian_sigma > 0:
        out = out + rng.normal(0.0, noise.gaussian_sigma, size=frame.shape)
    return out


def form_frame(sample: np.ndarray, meta: PatternMeta, otf: Otf, noise: NoiseConfig,
               rng: np.random.Generator | None = None, intensity: float = 1.0) -> np.ndarray:
    """One raw frame: (sample x pattern) blurred by the OTF, plus optional noise."""
    sample = np.asarray(sample, dtype=np.float64)
    if sample.shape != otf.shape:
        raise ValueError(f"sample shape {sample.shape} does not match OTF shape {otf.shape}")
    pattern = make_pattern(meta, *sample.shape, intensity=intensity)
    frame = blur(sample * pattern, otf)
    if noise.pixel_noise:
        if rng is None:
            raise ValueError("an RNG is required when pixel noise is enabled")
        frame = add_noise(frame, noise, rng)
    return frame


def default_pattern_set(config: OpticalConfig, rng: np.random.Generator,
                        pattern_factor: float = 0.8, modulation: float = 0.8) -> list[PatternMeta]:
    """Three orientations 60 degrees apart, three equally spaced phases each."""
    k0 = pattern_factor * config.cutoff_pix
    theta0 = rng.uniform(0.0, np.pi)
    metas = []
    for o in range(3):
        for p in range(3):
            metas.append(PatternMeta(theta=theta0 + o * np.pi / 3, phi=p * 2 * np.pi / 3,
                                     k0=k0, m=modulation, order_index=3 * o + p))
    return metas


def jitter_patterns(metas: Sequence[PatternMeta], noise: NoiseConfig,
                    rng: np.random.Generator) -> list[PatternMeta]:
    """Apply one shared random perturbation of k0, theta and phi to all patterns."""
    if not (noise.jitter_k0_rel or noise.jitter_theta or noise.jitter_phi):
        return list(metas)
    dk = rng.normal(0.0, noise.jitter_k0_rel) if noise.jitter_k0_rel else 0.0
    dtheta = rng.normal(0.0, noise.jitter_theta) if noise.jitter_theta else 0.0
    dphi = rng.normal(0.0, noise.jitter_phi) if noise.jitter_phi else 0.0
    return [replace(m, k0=m.k0 * (1.0 + dk), theta=m.theta + dtheta, phi=m.phi + dphi)
            for m in metas]


def form_stack(samples, metas: Sequence[PatternMeta], config: OpticalConfig,
               noise: NoiseConfig, rng: np.random.Generator, otf: Otf | None = None) -> SimStack:
    """Nine raw frames, frame t imaging ``samples[t]`` under ``metas[t]``.

    Parameter jitter is drawn once for the whole stack; the returned metas
    carry the jittered values.
    """
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim == 2:
        samples = np.broadcast_to(samples, (STACK_SIZE, *samples.shape))
    if samples.shape[0] != STACK_SIZE or len(metas) != STACK_SIZE:
        raise ValueError(f"need 9 samples and 9 patterns, got {samples.shape[0]} and {len(metas)}")
    if otf is None:
        otf = make_otf(config, *samples.shape[1:])
    metas = jitter_patterns(metas, noise, rng)
    frames = [form_frame(s, m, otf, noise, rng, config.intensity) for s, m in zip(samples, metas)]
    return SimStack(np.stack(frames), tuple(metas))
