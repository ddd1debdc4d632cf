import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from simkit.image import PatternMeta
from simkit.optics import (NoiseConfig, OpticalConfig, OpticsConfigError, Otf, chat,
                           default_pattern_set, form_frame, form_stack, make_otf, make_pattern,
                           otf_to_psf, pattern_coords)


def test_default_cutoff_and_rayleigh(config):
    assert config.cutoff_pix == pytest.approx(0.24)
    assert config.rayleigh == pytest.approx(305.0)


def test_config_validation():
    with pytest.raises(OpticsConfigError):
        OpticalConfig(na=0.0)
    with pytest.raises(OpticsConfigError):
        NoiseConfig(gaussian_sigma=-1.0)
    with pytest.raises(OpticsConfigError):
        make_otf(OpticalConfig(pixel_size=130.0), 32, 32)  # f_c = 0.52 cycles/px


def test_otf_values(otf64, config):
    v = otf64.values
    assert v[32, 32] == 1.0
    assert v.min() >= 0.0 and v.max() <= 1.0
    fy, fx = np.meshgrid(np.fft.fftshift(np.fft.fftfreq(64)), np.fft.fftshift(np.fft.fftfreq(64)),
                         indexing="ij")
    assert np.all(v[np.hypot(fy, fx) >= config.cutoff_pix] == 0.0)
    np.testing.assert_allclose(v, v.T)  # radial symmetry on a square grid


def test_chat_at_half_radius():
    expected = (2 / np.pi) * (np.arccos(0.5) - 0.5 * np.sqrt(0.75))
    assert chat(0.5) == pytest.approx(expected, rel=1e-15)
    assert chat(0.5) == pytest.approx(0.3910, abs=5e-5)
    assert chat(0.0) == 1.0 and chat(1.0) == 0.0 and chat(2.0) == 0.0


def test_psf_of_flat_otf_is_delta():
    psf = otf_to_psf(Otf(np.ones((16, 16)), 0.4))
    expected = np.zeros((16, 16))
    expected[8, 8] = 1.0
    np.testing.assert_allclose(psf, expected, atol=1e-15)


def test_psf_properties(otf64):
    psf = otf_to_psf(otf64)
    assert psf.min() >= 0.0
    assert psf.sum() == pytest.approx(1.0, abs=1e-9)
    assert np.unravel_index(psf.argmax(), psf.shape) == (32, 32)
    row = psf[32, 32:36]
    assert np.all(np.diff(row) < 0)
    recovered = np.fft.fftshift(np.fft.fft2(np.fft.ifftshift(psf)).real)
    np.testing.assert_allclose(recovered, otf64.values, atol=1e-6)


def test_pattern_examples():
    meta = PatternMeta(theta=0.0, phi=0.0, k0=0.25, m=1.0, order_index=0)
    pat = make_pattern(meta, 16, 16)
    assert pat[8, 8] == pytest.approx(0.5)  # coordinate origin
    flat = make_pattern(PatternMeta(0.3, 1.0, 0.2, 0.0, 0), 16, 16, intensity=2.5)
    assert np.all(flat == 2.5)
    # integer number of periods along both axes
    meta = PatternMeta(np.arctan2(3, 5), 0.7, np.hypot(3, 5) / 32, 0.9, 0)
    assert make_pattern(meta, 32, 32, 1.7).mean() == pytest.approx(1.7, abs=1e-9)


def test_pattern_formula_matches_coordinates():
    meta = PatternMeta(0.4, 1.1, 0.17, 0.6, 2)
    y, x = pattern_coords(12, 10)
    expected = 1.3 * (1 - 0.3 * np.cos(2 * np.pi * (meta.kx * x + meta.ky * y) + 1.1))
    np.testing.assert_allclose(make_pattern(meta, 12, 10, 1.3), expected, rtol=1e-14)


@settings(max_examples=30, deadline=None)
@given(theta=st.floats(0, 2 * np.pi), phi=st.floats(-np.pi, np.pi), k0=st.floats(0.01, 0.45),
       m=st.floats(0, 1))
def test_pattern_phase_periodicity(theta, phi, k0, m):
    a = make_pattern(PatternMeta(theta, phi, k0, m, 0), 8, 8)
    b = make_pattern(PatternMeta(theta, phi + 2 * np.pi, k0, m, 0), 8, 8)
    np.testing.assert_allclose(a, b, atol=1e-12)


def test_identity_optics():
    rng = np.random.default_rng(0)
    sample = rng.random((16, 16))
    ones = Otf(np.ones((16, 16)), 0.4)
    meta = PatternMeta(0.2, 0.0, 0.2, 0.0, 0)
    out = form_frame(sample, meta, ones, NoiseConfig(), intensity=1.5)
    np.testing.assert_allclose(out, 1.5 * sample, rtol=1e-13, atol=1e-15)


def test_uniform_sample_spectrum_oracle(config):
    n = 128
    otf = make_otf(config, n, n)
    ky_i, kx_i = 9, 19
    k0 = np.hypot(ky_i, kx_i) / n
    meta = PatternMeta(np.arctan2(ky_i, kx_i), 0.9, k0, 0.8, 0)
    spec = np.fft.fft2(form_frame(np.ones((n, n)), meta, otf, NoiseConfig()))
    dc = spec[0, 0]
    expected = 0.8 / 4 * chat(k0 / config.cutoff_pix)
    for sy, sx in ((ky_i, kx_i), (-ky_i, -kx_i)):
        assert abs(spec[sy, sx]) / abs(dc) == pytest.approx(expected, rel=1e-6)
    # +k carries -m/4 e^{+i phi}, up to the ramp from placing the origin at the centre pixel
    shift = np.exp(-2j * np.pi * (kx_i * (n // 2) + ky_i * (n // 2)) / n)
    coef = spec[ky_i, kx_i] / dc / chat(k0 / config.cutoff_pix) / shift
    assert coef == pytest.approx(-0.2 * np.exp(0.9j), rel=1e-6)
    mags = np.abs(spec)
    mags[0, 0] = mags[ky_i, kx_i] = mags[-ky_i, -kx_i] = 0.0
    assert mags.max() < 1e-9 * abs(dc)


def test_form_frame_linearity(otf64):
    rng = np.random.default_rng(1)
    s1, s2 = rng.random((2, 64, 64))
    a, b = rng.normal(size=2)
    meta = PatternMeta(0.5, 0.3, 0.19, 0.8, 0)
    lhs = form_frame(a * s1 + b * s2, meta, otf64, NoiseConfig())
    rhs = a * form_frame(s1, meta, otf64, NoiseConfig()) + b * form_frame(s2, meta, otf64,
                                                                          NoiseConfig())
    np.testing.assert_allclose(lhs, rhs, rtol=1e-9, atol=1e-12)


def test_gaussian_noise_statistics(config):
    n = 256
    otf = make_otf(config, n, n)
    meta = PatternMeta(0.0, 0.0, 0.19, 0.8, 0)
    out = form_frame(np.zeros((n, n)), meta, otf, NoiseConfig(gaussian_sigma=0.1),
                     np.random.default_rng(2))
    assert out.var() == pytest.approx(0.01, rel=0.05)


def test_poisson_then_gaussian(otf64):
    meta = PatternMeta(0.0, 0.0, 0.19, 0.0, 0)
    sample = np.full((64, 64), 0.5)
    noise = NoiseConfig(poisson_photons=100.0)
    out = form_frame(sample, meta, otf64, noise, np.random.default_rng(3))
    # counts are integers before rescaling
    np.testing.assert_allclose(out * 100.0, np.round(out * 100.0), atol=1e-9)
    assert out.mean() == pytest.approx(0.5, rel=0.02)
    assert out.var() == pytest.approx(0.5 / 100.0, rel=0.1)
    with pytest.raises(ValueError):
        form_frame(sample, meta, otf64, noise, rng=None)


def test_default_pattern_set(config):
    metas = default_pattern_set(config, np.random.default_rng(4))
    assert [m.order_index for m in metas] == list(range(9))
    assert all(m.k0 == pytest.approx(0.8 * 0.24) for m in metas)
    thetas = [metas[3 * o].theta for o in range(3)]
    assert thetas[1] - thetas[0] == pytest.approx(np.pi / 3)
    assert thetas[2] - thetas[0] == pytest.approx(2 * np.pi / 3)
    for o in range(3):
        phases = [metas[3 * o + p].phi for p in range(3)]
        np.testing.assert_allclose(phases, [0, 2 * np.pi / 3, 4 * np.pi / 3])
    assert len({(m.theta, m.phi) for m in metas}) == 9


def test_form_stack_jitter_shared_and_recorded(config):
    rng = np.random.default_rng(5)
    metas = default_pattern_set(config, rng)
    noise = NoiseConfig(jitter_k0_rel=0.05, jitter_theta=0.1, jitter_phi=0.2)
    stack = form_stack(np.ones((32, 32)), metas, config, noise, rng)
    dk = {round(b.k0 / a.k0, 12) for a, b in zip(metas, stack.metas)}
    dth = {round(b.theta - a.theta, 12) for a, b in zip(metas, stack.metas)}
    dph = {round(b.phi - a.phi, 12) for a, b in zip(metas, stack.metas)}
    assert len(dk) == len(dth) == len(dph) == 1
    assert dk != {1.0}


def test_form_stack_deterministic_and_static(config):
    sample = np.random.default_rng(6).random((32, 32))

    def make(seed):
        rng = np.random.default_rng(seed)
        return form_stack(sample, default_pattern_set(config, rng), config,
                          NoiseConfig(gaussian_sigma=0.01), rng)

    a, b = make(7), make(7)
    assert a.frames.tobytes() == b.frames.tobytes() and a.metas == b.metas
    assert not np.array_equal(a.frames, make(8).frames)


def test_form_stack_zero_samples_pure_noise(config):
    rng = np.random.default_rng(9)
    metas = default_pattern_set(config, rng)
    clean = form_stack(np.zeros((9, 16, 16)), metas, config, NoiseConfig(), rng)
    assert np.all(clean.frames == 0.0)
    noisy = form_stack(np.zeros((9, 16, 16)), metas, config, NoiseConfig(gaussian_sigma=0.1), rng)
    assert noisy.frames.std() == pytest.approx(0.1, rel=0.1)


def test_form_stack_count_mismatch(config):
    metas = default_pattern_set(config, np.random.default_rng(0))
    with pytest.raises(ValueError):
        form_stack(np.zeros((8, 16, 16)), metas, config, NoiseConfig(), np.random.default_rng(0))
    with pytest.raises(ValueError):
        form_stack(np.zeros((16, 16)), metas[:8], config, NoiseConfig(), np.random.default_rng(0))
