"""3D window partitioning, cyclic shifts, shift masks and relative position indices.

Feature tensors are (T, H, W, D) arrays. A window holds P x M x M tokens,
flattened in (t, y, x) row-major order; windows are enumerated the same way.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MASK_VALUE = -1e9


@dataclass(frozen=True)
class WindowConfig:
    window: int = 8  # M, spatial
    temporal: int = 3  # P
    shifted: bool = False

    def __post_init__(self):
        if self.window < 1 or self.temporal < 1:
            raise ValueError("window sizes must be positive")

    @property
    def size(self) -> tuple[int, int, int]:
        return self.temporal, self.window, self.window

    @property
    def shift(self) -> tuple[int, int, int]:
        if not self.shifted:
            return 0, 0, 0
        return self.temporal // 2, self.window // 2, self.window // 2

    @property
    def tokens(self) -> int:
        return self.temporal * self.window * self.window

    def unshifted(self) -> "WindowConfig":
        return WindowConfig(self.window, self.temporal, False)


@dataclass(frozen=True)
class WindowLayout:
    """Bookkeeping needed to undo :func:`window_partition`."""

    padded: tuple[int, int, int]
    padding: tuple[tuple[int, int], tuple[int, int], tuple[int, int]]


def symmetric_padding(dims, sizes):
    pads = []
    for n, s in zip(dims, sizes):
        extra = (-n) % s
        pads.append((extra // 2, extra - extra // 2))
    return tuple(pads)


def pad_features(x: np.ndarray, cfg: WindowConfig):
    pads = symmetric_padding(x.shape[:3], cfg.size)
    if any(p != (0, 0) for p in pads):
        x = np.pad(x, pads + ((0, 0),))
    return x, pads


def unpad_features(x: np.ndarray, pads) -> np.ndarray:
    sl = tuple(slice(b, n - a) for (b, a), n in zip(pads, x.shape[:3]))
    return x[sl]


def blocks(x: np.ndarray, cfg: WindowConfig) -> np.ndarray:
    """Split an already padded (T, H, W, D) tensor into (nW, P*M*M, D) windows."""
    t, h, w, d = x.shape
    p, m, _ = cfg.size
    x = x.reshape(t // p, p, h // m, m, w // m, m, d)
    x = x.transpose(0, 2, 4, 1, 3, 5, 6)
    return x.reshape(-1, p * m * m, d)


def unblocks(windows: np.ndarray, cfg: WindowConfig, padded) -> np.ndarray:
    t, h, w = padded
    p, m, _ = cfg.size
    d = windows.shape[-1]
    x = windows.reshape(t // p, h // m, w // m, p, m, m, d)
    x = x.transpose(0, 3, 1, 4, 2, 5, 6)
    return x.reshape(t, h, w, d)


def window_partition(x: np.ndarray, cfg: WindowConfig):
    """Pad symmetrically to whole windows and split into token groups.

    Returns ``(windows, layout)``; ``window_reverse(windows, cfg, layout)``
    restores ``x`` exactly.
    """
    x = np.asarray(x)
    xp, pads = pad_features(x, cfg)
    return blocks(xp, cfg), WindowLayout(xp.shape[:3], pads)


def window_reverse(windows: np.ndarray, cfg: WindowConfig, layout: WindowLayout) -> np.ndarray:
    return unpad_features(unblocks(windows, cfg, layout.padded), layout.padding)


def cyclic_shift(x: np.ndarray, cfg: WindowConfig, inverse: bool = False) -> np.ndarray:
    """Roll by -shift along (T, H, W) with wraparound; ``inverse`` rolls back."""
    shift = cfg.shift
    if shift == (0, 0, 0):
        return x
    sign = 1 if inverse else -1
    return np.roll(x, tuple(sign * s for s in shift), axis=(0, 1, 2))


def region_ids(padded, cfg: WindowConfig) -> np.ndarray:
    """Label each position of the rolled grid with the contiguous region it came from."""
    ids = np.zeros(padded, dtype=np.int64)
    cnt = 0
    ranges = []
    for n, win, s in zip(padded, cfg.size, cfg.shift):
        if s == 0:
            ranges.append((slice(0, n),))
        else:
            ranges.append((slice(0, n - win), slice(n - win, n - s), slice(n - s, n)))
    for st in ranges[0]:
        for sh in ranges[1]:
            for sw in ranges[2]:
                ids[st, sh, sw] = cnt
                cnt += 1
    return ids


def attention_mask(cfg: WindowConfig, padded) -> np.ndarray:
    """Additive (nW, N, N) mask blocking pairs from different shift regions."""
    p, m, _ = cfg.size
    n_win = (padded[0] // p) * (padded[1] // m) * (padded[2] // m)
    if cfg.shift == (0, 0, 0):
        return np.zeros((n_win, cfg.tokens, cfg.tokens))
    ids = region_ids(padded, cfg)[..., None]
    win = blocks(ids, cfg)[..., 0]
    same = win[:, :, None] == win[:, None, :]
    return np.where(same, 0.0, MASK_VALUE)


def relative_position_index(temporal: int, window: int) -> np.ndarray:
    """(N, N) index into a ((2P-1)(2M-1)^2)-row bias table, N = P*M*M.

    Token pairs with the same displacement (dt, dy, dx) share an entry.
    """
    coords = np.stack(np.meshgrid(np.arange(temporal), np.arange(window), np.arange(window),
                                  indexing="ij")).reshape(3, -1)
    rel = coords[:, :, None] - coords[:, None, :]
    rt = rel[0] + temporal - 1
    ry = rel[1] + window - 1
    rx = rel[2] + window - 1
    span = 2 * window - 1
    return (rt * span + ry) * span + rx


def bias_table_size(temporal: int, window: int) -> int:
    return (2 * temporal - 1) * (2 * window - 1) ** 2
