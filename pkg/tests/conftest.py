import numpy as np
import pytest
from PIL import Image

from simkit.optics import OpticalConfig, make_otf
from simkit.phantoms import smooth_texture, translate

ACCEPTANCE_LINES = []


def record_criterion(number, name, passed, detail=""):
    line = f"criterion {number:>2} {'PASS' if passed else 'FAIL'}  {name}  {detail}".rstrip()
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)


@pytest.fixture
def config():
    return OpticalConfig()


@pytest.fixture
def otf64(config):
    return make_otf(config, 64, 64)


@pytest.fixture
def otf128(config):
    return make_otf(config, 128, 128)


def textured(n, seed, scale=2.0):
    rng = np.random.default_rng(seed)
    return 0.2 + 0.8 * smooth_texture((n, n), rng, scale)


def write_frames(directory, frames):
    directory.mkdir(parents=True, exist_ok=True)
    for i, f in enumerate(frames):
        Image.fromarray(np.round(np.clip(f, 0, 1) * 255).astype(np.uint8)).save(
            directory / f"frame_{i:04d}.png")
    return directory


@pytest.fixture
def moving_frames(tmp_path):
    """Directory of 20 frames (96 x 96) drifting 0.75 px/frame to the right."""
    base = smooth_texture((96, 96), np.random.default_rng(5), 3.0)
    frames = [translate(base, 0.0, 0.75 * t) for t in range(20)]
    return write_frames(tmp_path / "video", frames)
