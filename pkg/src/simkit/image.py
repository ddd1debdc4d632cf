"""Image and stack data model plus the ``.vsim`` binary container.

Images are plain 2-D ``float64`` arrays. A SIM stack is nine equally sized
frames with one :class:`PatternMeta` per frame; longer acquisitions are a
:class:`FrameStream`.

Container layout (all little-endian)::

    magic      4 bytes   b"VSIM"
    version    uint16    1
    T, H, W    uint32 x3
    dtype      uint8     0 = float32
    T records  float64 x4 (theta, phi, k0, m) + uint8 order_index
    T frames   float32, row-major, H*W each
"""
from __future__ import annotations

import contextlib
import os
import struct
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np
from PIL import Image

MAGIC = b"VSIM"
VERSION = 1
DTYPE_F32 = 0

_HEADER = struct.Struct("<4sHIIIB")
_RECORD = struct.Struct("<ddddB")

STACK_SIZE = 9


class ContainerError(ValueError):
    """Malformed or truncated ``.vsim`` file."""


class ImageReadError(ValueError):
    """Raster file that cannot be turned into a normalized intensity image."""


@dataclass(frozen=True)
class PatternMeta:
    """Parameters of one sinusoidal illumination pattern.

    ``k0`` is in cycles/pixel, angles in radians. ``order_index`` identifies
    the pattern within the 3 orientations x 3 phases cycle
    (orientation-major, phase-minor).
    """

    theta: float
    phi: float
    k0: float
    m: float
    order_index: int

    def __post_init__(self):
        if not self.k0 > 0:
            raise ValueError(f"k0 must be positive, got {self.k0}")
        if not 0.0 <= self.m <= 1.0:
            raise ValueError(f"modulation depth must be in [0, 1], got {self.m}")
        if not 0 <= self.order_index <= 8:
            raise ValueError(f"order_index must be in 0..8, got {self.order_index}")

    @property
    def kx(self) -> float:
        return self.k0 * np.cos(self.theta)

    @property
    def ky(self) -> float:
        return self.k0 * np.sin(self.theta)

    @property
    def orientation(self) -> int:
        return self.order_index // 3

    @property
    def phase_step(self) -> int:
        return self.order_index % 3


def _as_frames(frames) -> np.ndarray:
    arr = np.array(frames, dtype=np.float64)
    if arr.ndim != 3:
        raise ValueError(f"frames must be a (T, H, W) array, got shape {arr.shape}")
    if arr.shape[1] < 1 or arr.shape[2] < 1:
        raise ValueError("frames must have positive height and width")
    return arr


@dataclass(frozen=True, eq=False)
class FrameStream:
    """Any number of frames, each with its illumination pattern."""

    frames: np.ndarray
    metas: tuple[PatternMeta, ...]

    def __post_init__(self):
        frames = _as_frames(self.frames)
        frames.setflags(write=False)
        object.__setattr__(self, "frames", frames)
        object.__setattr__(self, "metas", tuple(self.metas))
        if len(self.metas) != frames.shape[0]:
            raise ValueError(
                f"{frames.shape[0]} frames but {len(self.metas)} pattern records"
            )

    def __len__(self) -> int:
        return self.frames.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.frames.shape[1], self.frames.shape[2]

    def as_stack(self) -> "SimStack":
        return SimStack(self.frames, self.metas)

    def __eq__(self, other):
        if not isinstance(other, FrameStream):
            return NotImplemented
        return (
            self.frames.shape == other.frames.shape
            and self.metas == other.metas
            and np.array_equal(self.frames, other.frames)
        )


class SimStack(FrameStream):
    """Nine frames whose order indices form a permutation of 0..8."""

    def __post_init__(self):
        super().__post_init__()
        if len(self.metas) != STACK_SIZE:
            raise ValueError(f"a SIM stack needs exactly 9 frames, got {len(self.metas)}")
        order = sorted(m.order_index for m in self.metas)
        if order != list(range(STACK_SIZE)):
            raise ValueError(f"order indices must be a permutation of 0..8, got {order}")

    def by_orientation(self) -> list[list[int]]:
        """Frame positions grouped by orientation, each sorted by phase step."""
        groups: list[list[int]] = [[], [], []]
        for pos, meta in sorted(enumerate(self.metas), key=lambda p: p[1].order_index):
            groups[meta.orientation].append(pos)
        return groups


# --- raster images -----------------------------------------------------------

def read_image(path) -> np.ndarray:
    """Read an 8/16-bit grayscale or RGB raster as intensities in [0, 1].

    RGB is reduced by the unweighted channel mean.
    """
    path = Path(path)
    try:
        img = Image.open(path)
        img.load()
    except (OSError, Image.UnidentifiedImageError) as exc:
        raise ImageReadError(f"cannot read image {path}: {exc}") from exc

    mode = img.mode
    if mode == "P":
        img = img.convert("RGBA" if "transparency" in img.info else "RGB")
        mode = img.mode
    if mode in ("L", "LA"):
        arr = np.asarray(img.getchannel(0), dtype=np.float64) / 255.0
    elif mode in ("RGB", "RGBA"):
        rgb = np.asarray(img, dtype=np.float64)[..., :3]
        arr = rgb.sum(axis=-1) / (3 * 255.0)
    elif mode.startswith("I;16"):
        arr = np.asarray(img, dtype=np.float64) / 65535.0
    elif mode == "I":
        # 16-bit PNGs may surface as 32-bit integer mode
        raw = np.asarray(img, dtype=np.int64)
        if raw.min(initial=0) < 0 or raw.max(initial=0) > 65535:
            raise ImageReadError(f"{path}: integer image outside 16-bit range")
        arr = raw.astype(np.float64) / 65535.0
    else:
        raise ImageReadError(f"{path}: unsupported image mode {mode!r}")
    return np.ascontiguousarray(arr)


def to_uint16(image: np.ndarray) -> np.ndarray:
    return np.round(np.clip(image, 0.0, 1.0) * 65535.0).astype(np.uint16)


def write_png16(image: np.ndarray, path) -> None:
    """Write a [0, 1] image as a 16-bit grayscale PNG (values clipped)."""
    img = Image.fromarray(to_uint16(np.asarray(image, dtype=np.float64)))
    with atomic_write(path) as tmp:
        img.save(tmp, format="PNG")


# --- container ---------------------------------------------------------------

@contextlib.contextmanager
def atomic_write(path) -> Iterator[str]:
    """Yield a temporary path in the target directory; rename over ``path`` on success."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    os.close(fd)
    try:
        yield tmp
        os.replace(tmp, path)
    except BaseException:
        with contextlib.suppress(FileNotFoundError):
            os.unlink(tmp)
        raise


def container_size(t: int, h: int, w: int) -> int:
    return _HEADER.size + t * _RECORD.size + t * h * w * 4


def encode_container(stream: FrameStream) -> bytes:
    t = len(stream)
    h, w = stream.shape
    parts = [_HEADER.pack(MAGIC, VERSION, t, h, w, DTYPE_F32)]
    for meta in stream.metas:
        parts.append(_RECORD.pack(meta.theta, meta.phi, meta.k0, meta.m, meta.order_index))
    parts.append(np.ascontiguousarray(stream.frames, dtype="<f4").tobytes())
    return b"".join(parts)


def decode_container(data: bytes) -> FrameStream:
    if len(data) < _HEADER.size:
        raise ContainerError("truncated header")
    magic, version, t, h, w, dtype = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise ContainerError(f"bad magic {magic!r}")
    if version != VERSION:
        raise ContainerError(f"unsupported container version {version}")
    if dtype != DTYPE_F32:
        raise ContainerError(f"unsupported dtype tag {dtype}")
    expected = container_size(t, h, w)
    if len(data) != expected:
        raise ContainerError(f"payload is {len(data)} bytes, header implies {expected}")
    metas = []
    offset = _HEADER.size
    for _ in range(t):
        theta, phi, k0, m, idx = _RECORD.unpack_from(data, offset)
        metas.append(PatternMeta(theta, phi, k0, m, idx))
        offset += _RECORD.size
    frames = np.frombuffer(data, dtype="<f4", offset=offset).reshape(t, h, w)
    return FrameStream(frames.astype(np.float64), tuple(metas))


def write_container(stream: FrameStream, path) -> None:
    data = encode_container(stream)
    with atomic_write(path) as tmp:
        with open(tmp, "wb") as fh:
            fh.write(data)


def read_container(path) -> FrameStream:
    return decode_container(Path(path).read_bytes())


def read_stack(path) -> SimStack:
    """Read a container that must hold exactly one full 9-pattern cycle."""
    stream = read_container(path)
    try:
        return stream.as_stack()
    except ValueError as exc:
        raise ContainerError(f"{path} is not a 9-frame SIM stack: {exc}") from exc


def stack_from_frames(frames: Sequence[np.ndarray], metas: Sequence[PatternMeta]) -> SimStack:
    return SimStack(np.stack([np.asarray(f, dtype=np.float64) for f in frames]), tuple(metas))
