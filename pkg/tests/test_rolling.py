import numpy as np
import pytest

from conftest import textured
from simkit.flowmetrics import psnr
from simkit.image import FrameStream
from simkit.optics import NoiseConfig, OpticalConfig, default_pattern_set, form_stack, make_otf
from simkit.recon import sim_reconstruct
from simkit.rolling import (acquire_stream, rolling_reconstruct, rolling_windows,
                            sim_reconstructor, window_starts)


@pytest.fixture(scope="module")
def stream27():
    config = OpticalConfig()
    rng = np.random.default_rng(0)
    cycle = default_pattern_set(config, rng)
    cycle = [cycle[i] for i in rng.permutation(9)]
    return acquire_stream(textured(32, 0), cycle, 27, config, NoiseConfig(), rng), cycle


@pytest.mark.parametrize("n, step, count", [(9, 1, 1), (27, 1, 19), (27, 9, 3), (20, 1, 12),
                                            (26, 4, 5)])
def test_window_counts(n, step, count):
    assert len(window_starts(n, step)) == count == (n - 9) // step + 1


def test_short_stream_and_bad_step():
    with pytest.raises(ValueError):
        window_starts(8)
    with pytest.raises(ValueError):
        window_starts(9, 0)


def test_windows_are_rotated_cycles(stream27):
    stream, cycle = stream27
    order = [m.order_index for m in cycle]
    for o, win in enumerate(rolling_windows(stream)):
        assert sorted(m.order_index for m in win.metas) == list(range(9))
        assert [m.order_index for m in win.metas] == order[o % 9:] + order[:o % 9]


def test_step9_is_classical_stacking():
    config = OpticalConfig()
    otf = make_otf(config, 32, 32)
    sample = textured(32, 1)
    rng = np.random.default_rng(1)
    cycle = default_pattern_set(config, rng)
    stream = acquire_stream(sample, cycle, 27, config, NoiseConfig(), rng)
    outs = rolling_reconstruct(stream, sim_reconstructor(otf), step=9)
    assert [o.start for o in outs] == [0, 9, 18]
    # the same frames stacked by hand, through the forward model directly
    direct = form_stack(sample, list(stream.metas[:9]), config, NoiseConfig(),
                        np.random.default_rng(2), otf=otf)
    for out in outs:
        np.testing.assert_array_equal(out.image, sim_reconstruct(direct, otf))


def test_step1_matches_step9_at_shared_starts(stream27):
    stream, _ = stream27
    otf = make_otf(OpticalConfig(), 32, 32)
    one = rolling_reconstruct(stream, sim_reconstructor(otf), step=1)
    nine = rolling_reconstruct(stream, sim_reconstructor(otf), step=9)
    for out in nine:
        np.testing.assert_array_equal(out.image, one[out.start].image)


def test_static_stream_outputs_agree(stream27):
    stream, _ = stream27
    otf = make_otf(OpticalConfig(), 32, 32)
    outs = rolling_reconstruct(stream, sim_reconstructor(otf))
    assert len(outs) == 19
    for a, b in zip(outs, outs[1:]):
        assert psnr(a.image, b.image, peak=b.image.max()) > 40.0


def test_timestamps_and_threads(stream27):
    stream, _ = stream27
    otf = make_otf(OpticalConfig(), 32, 32)
    serial = rolling_reconstruct(stream, sim_reconstructor(otf), step=2)
    parallel = rolling_reconstruct(stream, sim_reconstructor(otf), step=2, threads=4)
    assert [o.time for o in serial] == [s + 4 for s in range(0, 19, 2)]
    for a, b in zip(serial, parallel):
        assert (a.start, a.time) == (b.start, b.time)
        np.testing.assert_array_equal(a.image, b.image)


def test_acquire_stream_moving_samples():
    config = OpticalConfig()
    rng = np.random.default_rng(3)
    cycle = default_pattern_set(config, rng)
    samples = np.stack([textured(16, s) for s in range(12)])
    stream = acquire_stream(samples, cycle, 12, config, NoiseConfig(), rng)
    assert isinstance(stream, FrameStream) and len(stream) == 12
    assert stream.metas[9] == stream.metas[0]
    with pytest.raises(ValueError):
        acquire_stream(samples, cycle, 10, config, NoiseConfig(), rng)
    with pytest.raises(ValueError):
        acquire_stream(samples[0], cycle[:8], 10, config, NoiseConfig(), rng)
