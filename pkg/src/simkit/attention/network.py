"""STL, WCAB, fusion/upsampling and the full video SIM network, forward and backward.

Weights live in a flat ``dict[str, ndarray]``. Names follow a dotted scheme::

    shallow.{weight,bias}                       3D conv, (3, 3, 3, 1, D)
    wcab.{i}.stl.{l}.norm1.{weight,bias}
    wcab.{i}.stl.{l}.attn.{q,k,v,proj}.{weight,bias}
    wcab.{i}.stl.{l}.attn.bias_table            ((2P-1)(2M-1)^2, heads)
    wcab.{i}.stl.{l}.norm2.{weight,bias}
    wcab.{i}.stl.{l}.mlp.{fc1,fc2}.{weight,bias}
    wcab.{i}.conv.{weight,bias}                 3D conv, (3, 3, 3, D, D)
    wcab.{i}.ca.{fc1,fc2}.{weight,bias}
    fusion.{weight,bias}                        (T*D, D)
    upsample.{weight,bias}                      conv, (1, 3, 3, D, scale^2)

Linear weights are stored (in, out) so that ``y = x @ W + b``.
"""
from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass

import numpy as np

from ..image import STACK_SIZE, SimStack, atomic_write
from . import layers as L
from .msa import AttentionWeights, msa_backward, msa_forward
from .windows import (WindowConfig, attention_mask, bias_table_size, blocks, cyclic_shift,
                      pad_features, unblocks, unpad_features)

INIT_STD = 0.02
CONFIG_KEY = "__config__"


@dataclass(frozen=True)
class NetworkConfig:
    n_wcab: int = 6
    n_stl: int = 6
    window: int = 8
    embed: int = 96
    heads: int = 6
    scale: int = 2
    mlp_ratio: float = 4.0
    temporal_window: int = 3
    frames: int = STACK_SIZE
    ca_reduction: int = 16
    shallow_kernel: int = 3

    def __post_init__(self):
        positive = ("n_wcab", "n_stl", "window", "embed", "heads", "scale",
                    "temporal_window", "frames", "ca_reduction", "shallow_kernel")
        for name in positive:
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.embed % self.heads:
            raise ValueError(f"heads ({self.heads}) must divide embed ({self.embed})")
        if self.embed < self.ca_reduction:
            raise ValueError("ca_reduction larger than embed leaves no hidden units")
        if self.shallow_kernel % 2 == 0:
            raise ValueError("shallow_kernel must be odd")
        if self.mlp_hidden < 1:
            raise ValueError("mlp_ratio too small")

    @classmethod
    def toy(cls) -> "NetworkConfig":
        return cls(n_wcab=1, n_stl=2, window=4, embed=8, heads=2, ca_reduction=4)

    @property
    def mlp_hidden(self) -> int:
        return int(round(self.mlp_ratio * self.embed))

    @property
    def ca_hidden(self) -> int:
        return self.embed // self.ca_reduction

    def window_config(self, shifted: bool) -> WindowConfig:
        return WindowConfig(self.window, self.temporal_window, shifted)


def stl_shifted(layer: int) -> bool:
    """Odd layers of a WCAB use shifted windows, even layers plain ones."""
    return layer % 2 == 1


def param_shapes(cfg: NetworkConfig) -> dict[str, tuple[int, ...]]:
    d, k = cfg.embed, cfg.shallow_kernel
    shapes = {"shallow.weight": (k, k, k, 1, d), "shallow.bias": (d,)}
    for i in range(cfg.n_wcab):
        for l in range(cfg.n_stl):
            p = f"wcab.{i}.stl.{l}."
            shapes[p + "norm1.weight"] = (d,)
            shapes[p + "norm1.bias"] = (d,)
            for n in ("q", "k", "v", "proj"):
                shapes[p + f"attn.{n}.weight"] = (d, d)
                shapes[p + f"attn.{n}.bias"] = (d,)
            shapes[p + "attn.bias_table"] = (bias_table_size(cfg.temporal_window, cfg.window),
                                              cfg.heads)
            shapes[p + "norm2.weight"] = (d,)
            shapes[p + "norm2.bias"] = (d,)
            shapes[p + "mlp.fc1.weight"] = (d, cfg.mlp_hidden)
            shapes[p + "mlp.fc1.bias"] = (cfg.mlp_hidden,)
            shapes[p + "mlp.fc2.weight"] = (cfg.mlp_hidden, d)
            shapes[p + "mlp.fc2.bias"] = (d,)
        p = f"wcab.{i}."
        shapes[p + "conv.weight"] = (3, 3, 3, d, d)
        shapes[p + "conv.bias"] = (d,)
        shapes[p + "ca.fc1.weight"] = (d, cfg.ca_hidden)
        shapes[p + "ca.fc1.bias"] = (cfg.ca_hidden,)
        shapes[p + "ca.fc2.weight"] = (cfg.ca_hidden, d)
        shapes[p + "ca.fc2.bias"] = (d,)
    shapes["fusion.weight"] = (cfg.frames * d, d)
    shapes["fusion.bias"] = (d,)
    shapes["upsample.weight"] = (1, 3, 3, d, cfg.scale ** 2)
    shapes["upsample.bias"] = (cfg.scale ** 2,)
    return shapes


def param_count(cfg: NetworkConfig) -> int:
    return sum(int(np.prod(s)) for s in param_shapes(cfg).values())


def truncated_normal(rng: np.random.Generator, shape, std: float = INIT_STD) -> np.ndarray:
    """Normal samples redrawn until they fall within two standard deviations."""
    out = rng.standard_normal(shape)
    bad = np.abs(out) > 2.0
    while bad.any():
        out[bad] = rng.standard_normal(int(bad.sum()))
        bad = np.abs(out) > 2.0
    return std * out


def init_params(cfg: NetworkConfig, rng: np.random.Generator, std: float = INIT_STD) -> dict:
    """Truncated-normal weights, zero biases, unit LayerNorm gains."""
    params = {}
    for name, shape in param_shapes(cfg).items():
        if name.endswith("norm1.weight") or name.endswith("norm2.weight"):
            params[name] = np.ones(shape)
        elif name.endswith(".bias"):
            params[name] = np.zeros(shape)
        else:
            params[name] = truncated_normal(rng, shape, std)
    return params


def zero_params(cfg: NetworkConfig) -> dict:
    return {name: np.zeros(shape) for name, shape in param_shapes(cfg).items()}


def _sub(params: dict, prefix: str) -> dict:
    n = len(prefix)
    return {k[n:]: v for k, v in params.items() if k.startswith(prefix)}


def _prefixed(grads: dict, prefix: str) -> dict:
    return {prefix + k: v for k, v in grads.items()}


# -- Swin transformer layer --------------------------------------------------

def stl_forward(x: np.ndarray, params: dict, shifted: bool, cfg: NetworkConfig,
                prefix: str = "", return_cache: bool = False):
    """x + MSA(LN(x)), then + MLP(LN(.)); shifted layers roll the grid and mask."""
    x = np.asarray(x, dtype=np.float64)
    wcfg = cfg.window_config(shifted)
    p = _sub(params, prefix)
    h1, c_ln1 = L.layer_norm_forward(x, p["norm1.weight"], p["norm1.bias"])
    hp, pads = pad_features(h1, wcfg)
    padded = hp.shape[:3]
    mask = attention_mask(wcfg, padded) if shifted else None
    w = AttentionWeights.from_params(p, "attn.", cfg.heads, cfg.temporal_window, cfg.window)
    win = blocks(cyclic_shift(hp, wcfg), wcfg)
    a_win, c_msa = msa_forward(win, w, mask, return_cache=True)
    a = unpad_features(cyclic_shift(unblocks(a_win, wcfg, padded), wcfg, inverse=True), pads)
    x2 = x + a
    h2, c_ln2 = L.layer_norm_forward(x2, p["norm2.weight"], p["norm2.bias"])
    f1, c1 = L.dense_forward(h2, p, "mlp.fc1.")
    g, cg = L.gelu_forward(f1)
    f2, c2 = L.dense_forward(g, p, "mlp.fc2.")
    out = x2 + f2
    if return_cache:
        return out, dict(ln1=c_ln1, ln2=c_ln2, msa=c_msa, fc1=c1, fc2=c2, gelu=cg,
                         wcfg=wcfg, pads=pads, padded=padded, mask=mask, prefix=prefix)
    return out


def stl_backward(dout: np.ndarray, cache: dict):
    wcfg, pads, padded, prefix = cache["wcfg"], cache["pads"], cache["padded"], cache["prefix"]
    grads = {}
    dg, gr = L.dense_backward(dout, cache["fc2"])
    grads.update(_prefixed(gr, "mlp.fc2."))
    dh2, gr = L.dense_backward(L.gelu_backward(dg, cache["gelu"]), cache["fc1"])
    grads.update(_prefixed(gr, "mlp.fc1."))
    dln2, gr = L.layer_norm_backward(dh2, cache["ln2"])
    grads.update(_prefixed(gr, "norm2."))
    dx2 = dout + dln2

    da = np.pad(dx2, pads + ((0, 0),))
    dwin = blocks(cyclic_shift(da, wcfg), wcfg)
    dhwin, gr = msa_backward(dwin, cache["msa"])
    grads.update(_prefixed(gr, "attn."))
    dh1 = unpad_features(cyclic_shift(unblocks(dhwin, wcfg, padded), wcfg, inverse=True), pads)
    dln1, gr = L.layer_norm_backward(dh1, cache["ln1"])
    grads.update(_prefixed(gr, "norm1."))
    return dx2 + dln1, _prefixed(grads, prefix)


# -- window channel attention block ------------------------------------------

def wcab_forward(x: np.ndarray, params: dict, cfg: NetworkConfig, prefix: str = "",
                 return_cache: bool = False):
    """STLs (alternately plain and shifted) -> 3D conv -> channel attention, plus skip."""
    x = np.asarray(x, dtype=np.float64)
    y = x
    stl_caches = []
    for l in range(cfg.n_stl):
        y, c = stl_forward(y, params, stl_shifted(l), cfg, f"{prefix}stl.{l}.", True)
        stl_caches.append(c)
    y, c_conv = L.conv3d_forward(y, params[prefix + "conv.weight"], params[prefix + "conv.bias"])
    y, c_ca = L.channel_attention_forward(y, params, prefix + "ca.")
    out = x + y
    if return_cache:
        return out, dict(stl=stl_caches, conv=c_conv, ca=c_ca, prefix=prefix)
    return out


def wcab_backward(dout: np.ndarray, cache: dict):
    prefix = cache["prefix"]
    grads = {}
    dy, gr = L.channel_attention_backward(dout, cache["ca"])
    grads.update(_prefixed(gr, prefix + "ca."))
    dy, gr = L.conv3d_backward(dy, cache["conv"])
    grads.update(_prefixed(gr, prefix + "conv."))
    for c in reversed(cache["stl"]):
        dy, gr = stl_backward(dy, c)
        grads.update(gr)
    return dout + dy, grads


# -- fusion and sub-pixel upsampling ------------------------------------------

def fuse_and_upsample(x: np.ndarray, params: dict, scale: int = 2, return_cache: bool = False):
    """(T, H, W, D) features -> (scale H, scale W) image.

    Channels of all T frames are stacked (index t*D + c), linearly fused to D,
    convolved (3x3) to scale^2 channels and pixel-shuffled.
    """
    t, h, w, d = x.shape
    stacked = x.transpose(1, 2, 0, 3).reshape(h, w, t * d)
    fused, c_fuse = L.dense_forward(stacked, params, "fusion.")
    sub, c_conv = L.conv3d_forward(fused[None], params["upsample.weight"],
                                   params["upsample.bias"])
    out = L.pixel_shuffle(sub[0], scale)
    if return_cache:
        return out, dict(fuse=c_fuse, conv=c_conv, shape=x.shape, scale=scale)
    return out


def fuse_and_upsample_backward(dout: np.ndarray, cache: dict):
    t, h, w, d = cache["shape"]
    grads = {}
    dsub = L.pixel_unshuffle(dout, cache["scale"])[None]
    dfused, gr = L.conv3d_backward(dsub, cache["conv"])
    grads.update(_prefixed(gr, "upsample."))
    dstacked, gr = L.dense_backward(dfused[0], cache["fuse"])
    grads.update(_prefixed(gr, "fusion."))
    dx = dstacked.reshape(h, w, t, d).transpose(2, 0, 1, 3)
    return dx, grads


# -- full network ---------------------------------------------------------------

def _frames(stack) -> np.ndarray:
    frames = stack.frames if isinstance(stack, SimStack) else np.asarray(stack, dtype=np.float64)
    if frames.ndim != 3:
        raise ValueError("expected a (T, H, W) stack")
    return frames


def vsr_sim_forward(stack, params: dict, cfg: NetworkConfig, return_cache: bool = False):
    """Shallow 3D conv -> WCABs -> fusion/upsampling; returns a (2H, 2W) image."""
    frames = _frames(stack)
    if frames.shape[0] != cfg.frames:
        raise ValueError(f"network expects {cfg.frames} frames, got {frames.shape[0]}")
    x, c_shallow = L.conv3d_forward(frames[..., None], params["shallow.weight"],
                                    params["shallow.bias"])
    wcabs = []
    for i in range(cfg.n_wcab):
        x, c = wcab_forward(x, params, cfg, f"wcab.{i}.", True)
        wcabs.append(c)
    out, c_up = fuse_and_upsample(x, params, cfg.scale, True)
    if return_cache:
        return out, dict(shallow=c_shallow, wcab=wcabs, up=c_up)
    return out


def vsr_sim_backward(dout: np.ndarray, cache: dict):
    """Gradients w.r.t. the input frames (T, H, W) and every parameter."""
    dx, grads = fuse_and_upsample_backward(dout, cache["up"])
    for c in reversed(cache["wcab"]):
        dx, gr = wcab_backward(dx, c)
        grads.update(gr)
    dframes, gr = L.conv3d_backward(dx, cache["shallow"])
    grads.update(_prefixed(gr, "shallow."))
    return dframes[..., 0], grads


# -- serialization ----------------------------------------------------------------

def check_params(params: dict, cfg: NetworkConfig) -> None:
    shapes = param_shapes(cfg)
    missing = shapes.keys() - params.keys()
    extra = params.keys() - shapes.keys()
    if missing or extra:
        raise ValueError(f"parameter names mismatch: missing {sorted(missing)[:3]}, "
                         f"unexpected {sorted(extra)[:3]}")
    for name, shape in shapes.items():
        if params[name].shape != shape:
            raise ValueError(f"{name}: shape {params[name].shape}, expected {shape}")


def save_weights(path, params: dict, cfg: NetworkConfig) -> None:
    """Write an .npz of named float64 arrays plus the config as JSON text."""
    check_params(params, cfg)
    arrays = {k: np.asarray(v, dtype=np.float64) for k, v in params.items()}
    arrays[CONFIG_KEY] = np.array(json.dumps(asdict(cfg), sort_keys=True))
    with atomic_write(path) as tmp, open(tmp, "wb") as fh:
        np.savez(fh, **arrays)


def load_weights(path: str | os.PathLike):
    with np.load(path, allow_pickle=False) as data:
        cfg = NetworkConfig(**json.loads(str(data[CONFIG_KEY])))
        params = {k: data[k].astype(np.float64) for k in data.files if k != CONFIG_KEY}
    check_params(params, cfg)
    return cfg, params
