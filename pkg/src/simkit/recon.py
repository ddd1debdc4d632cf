"""Classical reconstruction: wide-field, Wiener deconvolution and 2D SIM.

The SIM path follows the usual Fourier recipe. Per orientation, the three
phase-shifted frames are unmixed into the zero-order band and the two
first-order bands. The first-order bands are moved to their true position
on a 2x finer frequency grid, and all bands are merged with a generalized
Wiener filter followed by a triangular apodization.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np

from .image import SimStack
from .optics import Otf, chat, pattern_coords

STEP_PHASES = np.array([0.0, 2 * np.pi / 3, 4 * np.pi / 3])


class EstimationError(RuntimeError):
    """No significant illumination peak was found."""


class SingularPhaseError(ValueError):
    pass


@dataclass(frozen=True)
class ReconConfig:
    wiener_w: float = 0.05
    apodization: Literal["none", "triangle"] = "triangle"
    assume_known_patterns: bool = True
    estimate_modulation: bool = True
    score_threshold: float = 0.1

    def __post_init__(self):
        if not self.wiener_w > 0:
            raise ValueError("wiener_w must be positive")
        if self.apodization not in ("none", "triangle"):
            raise ValueError(f"unknown apodization {self.apodization!r}")


@dataclass(frozen=True)
class PatternEstimate:
    """Illumination parameters recovered for one orientation."""

    k0: float
    theta: float
    phi: float  # phase of the first phase step
    m: float
    score: float

    @property
    def kx(self) -> float:
        return self.k0 * np.cos(self.theta)

    @property
    def ky(self) -> float:
        return self.k0 * np.sin(self.theta)


# --- baselines ---------------------------------------------------------------

def widefield(stack: SimStack) -> np.ndarray:
    """Pixelwise mean of the nine frames."""
    return stack.frames.mean(axis=0)


def wiener_deconvolve(image: np.ndarray, otf: Otf, w: float) -> np.ndarray:
    image = np.asarray(image, dtype=np.float64)
    if image.shape != otf.shape:
        raise ValueError(f"image shape {image.shape} does not match OTF shape {otf.shape}")
    h = otf.unshifted
    return np.fft.ifft2(np.fft.fft2(image) * h / (h * h + w * w)).real


# --- spectral helpers --------------------------------------------------------

def pad_spectrum(spectrum: np.ndarray, factor: int = 2) -> np.ndarray:
    """Embed an FFT-ordered spectrum in the center of a ``factor``-times larger grid."""
    n, m = spectrum.shape
    big = np.zeros((factor * n, factor * m), dtype=np.complex128)
    oy = (factor * n) // 2 - n // 2
    ox = (factor * m) // 2 - m // 2
    big[oy:oy + n, ox:ox + m] = np.fft.fftshift(spectrum)
    return np.fft.ifftshift(big)


def upsample(image: np.ndarray, factor: int = 2) -> np.ndarray:
    """Band-limited (Fourier zero-padding) interpolation; keeps the coarse samples."""
    up = np.fft.ifft2(pad_spectrum(np.fft.fft2(image), factor)) * factor**2
    return up.real if np.isrealobj(image) else up


def separation_matrix(phases: Sequence[float]) -> np.ndarray:
    """Inverse of the 3x3 phase mixing matrix rows [1, e^{i phi}, e^{-i phi}]."""
    phases = np.asarray(phases, dtype=np.float64)
    mix = np.stack([np.ones(3), np.exp(1j * phases), np.exp(-1j * phases)], axis=1)
    if np.linalg.cond(mix) > 1e8:
        raise SingularPhaseError(f"phase set {phases} does not allow band separation")
    return np.linalg.inv(mix)


def separate_bands(frames: np.ndarray, phases: Sequence[float]) -> np.ndarray:
    """Unmix three frames into (zero order, +1 order, -1 order) components.

    Works on real-space frames or spectra alike; the unmixing is linear.
    """
    inv = separation_matrix(phases)
    return np.tensordot(inv, np.asarray(frames), axes=(1, 0))


def mix_bands(bands: np.ndarray, phases: Sequence[float]) -> np.ndarray:
    phases = np.asarray(phases, dtype=np.float64)
    mix = np.stack([np.ones(3), np.exp(1j * phases), np.exp(-1j * phases)], axis=1)
    return np.tensordot(mix, np.asarray(bands), axes=(1, 0))


def _edge_taper(shape, fraction: float = 0.125) -> np.ndarray:
    def tukey(n):
        w = np.ones(n)
        edge = max(1, int(round(fraction * n)))
        ramp = 0.5 * (1 - np.cos(np.pi * (np.arange(edge) + 0.5) / edge))
        w[:edge] = ramp
        w[n - edge:] = ramp[::-1]
        return w
    return np.outer(tukey(shape[0]), tukey(shape[1]))


def _dft_at(p: np.ndarray, kys: np.ndarray, kxs: np.ndarray) -> np.ndarray:
    """sum_{y,x} p[y, x] exp(-2 pi i (ky y + kx x)) on the outer grid kys x kxs."""
    h, w = p.shape
    ey = np.exp(-2j * np.pi * np.outer(kys, np.arange(h)))
    ex = np.exp(-2j * np.pi * np.outer(np.arange(w), kxs))
    return ey @ p @ ex


def _quadratic_peak(z: np.ndarray) -> tuple[float, float]:
    """Sub-sample offset of the maximum of a 3x3 patch from a 2D quadratic fit."""
    yy, xx = np.mgrid[-1:2, -1:2]
    a = np.stack([np.ones(9), yy.ravel(), xx.ravel(), yy.ravel() ** 2,
                  xx.ravel() ** 2, (yy * xx).ravel()], axis=1)
    c = np.linalg.lstsq(a, z.ravel(), rcond=None)[0]
    hess = np.array([[2 * c[3], c[5]], [c[5], 2 * c[4]]])
    grad = np.array([c[1], c[2]])
    try:
        off = -np.linalg.solve(hess, grad)
    except np.linalg.LinAlgError:
        return 0.0, 0.0
    if np.linalg.det(hess) <= 0 or hess[0, 0] >= 0:
        return 0.0, 0.0
    return tuple(np.clip(off, -1.0, 1.0))


def _refine_peak(p: np.ndarray, ky: float, kx: float, step: float, rounds: int = 6):
    for _ in range(rounds):
        offs = np.arange(-2, 3) * step
        mag = np.abs(_dft_at(p, ky + offs, kx + offs))
        iy, ix = np.unravel_index(np.argmax(mag), mag.shape)
        iy, ix = min(max(iy, 1), 3), min(max(ix, 1), 3)
        dy, dx = _quadratic_peak(mag[iy - 1:iy + 2, ix - 1:ix + 2])
        ky += offs[iy] + dy * step
        kx += offs[ix] + dx * step
        step /= 4.0
    return ky, kx


def _modulation_factor(g0: np.ndarray, gs: np.ndarray, otf_here: np.ndarray,
                       otf_shifted: np.ndarray, floor: float = 0.05):
    """Least-squares ratio gs/g0 on the band overlap, compensating each OTF.

    Returns (complex ratio, normalized correlation in [0, 1]).
    """
    region = (otf_here > floor) & (otf_shifted > floor)
    x = (g0 * otf_shifted)[region]
    y = (gs * otf_here)[region]
    xx = np.vdot(x, x).real
    yy = np.vdot(y, y).real
    if xx == 0.0:
        return 0.0j, 0.0
    xy = np.vdot(x, y)
    corr = abs(xy) / np.sqrt(xx * yy) if yy > 0 else 0.0
    return xy / xx, float(corr)


# --- parameter estimation ----------------------------------------------------

def _matched_bands(a_spec, b_spec_shifted, fyc, fxc, ky, kx, fc):
    """Zero- and first-order band spectra filtered to the same transfer function."""
    x = a_spec * chat(np.hypot(fyc + ky, fxc + kx) / fc)
    y = b_spec_shifted * chat(np.hypot(fyc, fxc) / fc)
    return x, y


def estimate_patterns(stack: SimStack, otf: Otf, threshold: float = 0.1,
                      k_range: tuple[float, float] = (0.3, 1.9),
                      refine_rounds: int = 3) -> list[PatternEstimate]:
    """Estimate k0, theta, phase and modulation for each of the three orientations.

    Frames are grouped by ``order_index`` and assumed to be phase-stepped by
    2 pi / 3. The first-order band is cross-correlated with the zero-order
    band over trial pattern frequencies. The coarse peak is then refined on
    OTF-matched bands. In those bands the two components differ only by a
    complex factor, -m/4 e^{i phi}. The phase and the modulation come from
    that factor. The score is their magnitude-squared normalized correlation:
    the fraction of first-order band energy explained by a modulated copy of
    the zero-order band.
    """
    h, w = stack.shape
    taper = _edge_taper((h, w))
    fc = otf.cutoff
    fy, fx = np.meshgrid(np.fft.fftfreq(2 * h), np.fft.fftfreq(2 * w), indexing="ij")
    kr = np.hypot(fy, fx)
    search = (kr > k_range[0] * fc) & (kr < k_range[1] * fc)
    fyc, fxc = np.meshgrid(np.fft.fftfreq(h), np.fft.fftfreq(w), indexing="ij")
    yy, xx = pattern_coords(h, w)
    step0 = 1.0 / (2 * max(h, w))

    estimates = []
    for group in stack.by_orientation():
        c0, cp, _ = separate_bands(stack.frames[group], STEP_PHASES)
        a = c0.real
        energy_a = np.sum(taper * a * a)
        energy_b = np.sum(taper * np.abs(cp) ** 2)
        if energy_a == 0.0 or energy_b <= 1e-24 * energy_a:
            raise EstimationError("first-order band carries no energy; stack is unmodulated")

        # coarse peak of the real-space cross-correlation
        p = taper * a * cp
        padded = np.zeros((2 * h, 2 * w), dtype=np.complex128)
        padded[:h, :w] = p
        mag = np.abs(np.fft.fft2(padded))
        mag[~search] = 0.0
        iy, ix = np.unravel_index(np.argmax(mag), mag.shape)
        ky, kx = _refine_peak(p, fy[iy, ix], fx[iy, ix], step=step0)

        a_spec = np.fft.fft2(a)
        for it in range(refine_rounds + 1):
            ramp = np.exp(-2j * np.pi * (kx * xx + ky * yy))
            x, y = _matched_bands(a_spec, np.fft.fft2(cp * ramp), fyc, fxc, ky, kx, fc)
            r, s = np.fft.ifft2(x), np.fft.ifft2(y)
            q = taper * np.conj(r) * s
            if it == refine_rounds:
                break
            # q ~ c |r|^2 exp(2 pi i (k - k_est) . x): its spectral peak is the residual
            dky, dkx = _refine_peak(q, 0.0, 0.0, step=step0 / 2, rounds=4)
            ky, kx = ky + dky, kx + dkx

        rr = np.sum(taper * np.abs(r) ** 2)
        ss = np.sum(taper * np.abs(s) ** 2)
        xy = q.sum()
        # magnitude-squared coherence of the matched bands
        score = float(min(1.0, abs(xy) ** 2 / (rr * ss))) if rr > 0 and ss > 0 else 0.0
        if score < threshold:
            raise EstimationError(
                f"no significant illumination peak (score {score:.3f} < {threshold})"
            )
        ratio = xy / rr
        estimates.append(PatternEstimate(
            k0=float(np.hypot(ky, kx)), theta=float(np.arctan2(ky, kx)),
            phi=float(np.angle(-ratio)), m=float(min(1.0, 4 * abs(ratio))), score=score,
        ))
    return estimates


# --- SIM reconstruction ------------------------------------------------------

@dataclass
class _Orientation:
    kx: float
    ky: float
    phases: np.ndarray
    m: float


def _orientation_params(stack: SimStack, otf: Otf, cfg: ReconConfig,
                        estimates: Sequence[PatternEstimate] | None) -> list[_Orientation]:
    groups = stack.by_orientation()
    if cfg.assume_known_patterns and estimates is None:
        out = []
        for group in groups:
            metas = [stack.metas[i] for i in group]
            out.append(_Orientation(
                kx=float(np.mean([m.kx for m in metas])),
                ky=float(np.mean([m.ky for m in metas])),
                phases=np.array([m.phi for m in metas]),
                m=float(np.mean([m.m for m in metas])),
            ))
        return out
    if estimates is None:
        estimates = estimate_patterns(stack, otf, threshold=cfg.score_threshold)
    return [_Orientation(e.kx, e.ky, e.phi + STEP_PHASES, e.m) for e in estimates]


def sim_reconstruct(stack: SimStack, otf: Otf, cfg: ReconConfig = ReconConfig(),
                    estimates: Sequence[PatternEstimate] | None = None,
                    intensity: float = 1.0, return_complex: bool = False) -> np.ndarray:
    """Super-resolved image on a grid twice as fine as the raw frames.

    Fine pixel (2y, 2x) coincides with raw pixel (y, x).
    """
    h, w = stack.shape
    if otf.shape != (h, w):
        raise ValueError(f"OTF shape {otf.shape} does not match stack shape {(h, w)}")
    params = _orientation_params(stack, otf, cfg, estimates)
    fc = otf.cutoff

    fy, fx = np.meshgrid(np.fft.fftfreq(2 * h, d=0.5), np.fft.fftfreq(2 * w, d=0.5), indexing="ij")
    yy, xx = pattern_coords(h, w, step=0.5)
    otf0 = intensity * chat(np.hypot(fy, fx) / fc)

    zero_bands = []
    side = []  # (spectrum, otf at shifted position, sign)
    for par, group in zip(params, stack.by_orientation()):
        bands = separate_bands(np.fft.fft2(stack.frames[group]), par.phases)
        zero_bands.append(bands[0])
        ramp = np.exp(-2j * np.pi * (par.kx * xx + par.ky * yy))
        plus = np.fft.fft2(np.fft.ifft2(pad_spectrum(bands[1])) * ramp)
        minus = np.fft.fft2(np.fft.ifft2(pad_spectrum(bands[2])) * ramp.conj())
        otf_p = intensity * chat(np.hypot(fy + par.ky, fx + par.kx) / fc)
        otf_m = intensity * chat(np.hypot(fy - par.ky, fx - par.kx) / fc)
        side.append((plus, minus, otf_p, otf_m, par.m))

    g0 = pad_spectrum(np.mean(zero_bands, axis=0))
    num = otf0 * g0
    den = otf0 * otf0
    for plus, minus, otf_p, otf_m, m in side:
        if cfg.estimate_modulation:
            cp, _ = _modulation_factor(g0, plus, otf0, otf_p)
            cm, _ = _modulation_factor(g0, minus, otf0, otf_m)
            c = 0.5 * (cp + np.conj(cm))
        else:
            c = -m / 4.0 + 0j
        num = num + np.conj(c) * otf_p * plus + c * otf_m * minus
        den = den + abs(c) ** 2 * (otf_p * otf_p + otf_m * otf_m)

    spectrum = num / (den + cfg.wiener_w ** 2)
    if cfg.apodization == "triangle":
        spectrum = spectrum * np.clip(1.0 - np.hypot(fy, fx) / (2 * fc), 0.0, None)
    # ifft2 on the 2x grid divides by 4x the raw pixel count
    out = np.fft.ifft2(spectrum) * 4.0
    return out if return_complex else out.real
