"""Windowed multi-head self-attention with relative position bias: forward and backward."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .windows import bias_table_size, relative_position_index

WEIGHT_NAMES = ("q.weight", "q.bias", "k.weight", "k.bias", "v.weight", "v.bias",
                "proj.weight", "proj.bias", "bias_table")


@dataclass
class AttentionWeights:
    wq: np.ndarray  # (D, D); columns grouped per head
    bq: np.ndarray
    wk: np.ndarray
    bk: np.ndarray
    wv: np.ndarray
    bv: np.ndarray
    wo: np.ndarray
    bo: np.ndarray
    bias_table: np.ndarray  # ((2P-1)(2M-1)^2, heads)
    bias_index: np.ndarray  # (N, N) int
    heads: int

    def __post_init__(self):
        dim = self.wq.shape[0]
        if dim % self.heads:
            raise ValueError(f"{self.heads} heads do not divide embedding dim {dim}")
        if self.bias_index.max(initial=0) >= self.bias_table.shape[0]:
            raise ValueError("bias_index addresses rows outside the bias table")

    @property
    def dim(self) -> int:
        return self.wq.shape[0]

    @classmethod
    def from_params(cls, params: dict, prefix: str, heads: int, temporal: int, window: int):
        g = lambda n: params[prefix + n]  # noqa: E731
        return cls(g("q.weight"), g("q.bias"), g("k.weight"), g("k.bias"), g("v.weight"),
                   g("v.bias"), g("proj.weight"), g("proj.bias"), g("bias_table"),
                   relative_position_index(temporal, window), heads)

    @classmethod
    def random(cls, dim: int, heads: int, temporal: int, window: int,
               rng: np.random.Generator, scale: float = 0.3):
        def r(*shape):
            return scale * rng.standard_normal(shape)
        return cls(r(dim, dim), r(dim), r(dim, dim), r(dim), r(dim, dim), r(dim),
                   r(dim, dim), r(dim), r(bias_table_size(temporal, window), heads),
                   relative_position_index(temporal, window), heads)

    def as_dict(self) -> dict:
        return dict(zip(WEIGHT_NAMES, (self.wq, self.bq, self.wk, self.bk, self.wv, self.bv,
                                        self.wo, self.bo, self.bias_table)))


def softmax(z: np.ndarray, axis: int = -1) -> np.ndarray:
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def _split(x, heads):
    nw, n, d = x.shape
    return x.reshape(nw, n, heads, d // heads).transpose(0, 2, 1, 3)


def _merge(x):
    nw, h, n, dh = x.shape
    return x.transpose(0, 2, 1, 3).reshape(nw, n, h * dh)


def msa_forward(tokens: np.ndarray, w: AttentionWeights, mask: np.ndarray | None = None,
                return_cache: bool = False):
    """softmax(Q K^T / sqrt(d) + B + mask) V per head, heads concatenated and projected.

    ``tokens`` is (nW, N, D); ``mask`` is (nW, N, N) or None.
    """
    x = np.asarray(tokens, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite attention input")
    n = x.shape[1]
    if w.bias_index.shape != (n, n):
        raise ValueError(f"window of {n} tokens does not match bias index {w.bias_index.shape}")
    dh = w.dim // w.heads
    scale = 1.0 / np.sqrt(dh)
    q = _split(x @ w.wq + w.bq, w.heads)
    k = _split(x @ w.wk + w.bk, w.heads)
    v = _split(x @ w.wv + w.bv, w.heads)
    bias = w.bias_table[w.bias_index].transpose(2, 0, 1)  # (h, N, N)
    logits = (q @ k.transpose(0, 1, 3, 2)) * scale + bias[None]
    if mask is not None:
        logits = logits + mask[:, None]
    attn = softmax(logits)
    o = _merge(attn @ v)
    y = o @ w.wo + w.bo
    if return_cache:
        return y, dict(x=x, q=q, k=k, v=v, attn=attn, o=o, w=w, scale=scale)
    return y


def msa_backward(dy: np.ndarray, cache: dict):
    """Gradients w.r.t. the tokens and every learned weight (keys as in ``WEIGHT_NAMES``)."""
    w: AttentionWeights = cache["w"]
    x, q, k, v, attn, o, scale = (cache[n] for n in ("x", "q", "k", "v", "attn", "o", "scale"))
    heads = w.heads
    flat = lambda a: a.reshape(-1, a.shape[-1])  # noqa: E731

    grads = {"proj.weight": flat(o).T @ flat(dy), "proj.bias": dy.sum(axis=(0, 1))}
    do = _split(dy @ w.wo.T, heads)
    dattn = do @ v.transpose(0, 1, 3, 2)
    dv = attn.transpose(0, 1, 3, 2) @ do
    dlogits = attn * (dattn - np.sum(dattn * attn, axis=-1, keepdims=True))

    dbias = dlogits.sum(axis=0)  # (h, N, N)
    table = np.zeros_like(w.bias_table)
    np.add.at(table, w.bias_index.ravel(), dbias.transpose(1, 2, 0).reshape(-1, heads))
    grads["bias_table"] = table

    dq = _merge((dlogits @ k) * scale)
    dk = _merge((dlogits.transpose(0, 1, 3, 2) @ q) * scale)
    dv = _merge(dv)
    fx = flat(x)
    for name, dproj in (("q", dq), ("k", dk), ("v", dv)):
        grads[f"{name}.weight"] = fx.T @ flat(dproj)
        grads[f"{name}.bias"] = dproj.sum(axis=(0, 1))
    dx = dq @ w.wq.T + dk @ w.wk.T + dv @ w.wv.T
    return dx, grads
