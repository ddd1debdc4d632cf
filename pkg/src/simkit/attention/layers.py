"""Elementary layers with analytic backward passes.

Every ``*_forward`` returns ``(out, cache)``; the matching ``*_backward``
takes ``(dout, cache)`` and returns ``(dx, grads)`` with ``grads`` keyed by
the same local parameter names the forward read.
"""
from __future__ import annotations

import numpy as np
from scipy.special import erf

LN_EPS = 1e-5


def dense_forward(x, params, prefix):
    w, b = params[prefix + "weight"], params[prefix + "bias"]
    return x @ w + b, (x, w)


def dense_backward(dy, cache):
    x, w = cache
    fx = x.reshape(-1, x.shape[-1])
    fdy = dy.reshape(-1, dy.shape[-1])
    return dy @ w.T, {"weight": fx.T @ fdy, "bias": fdy.sum(axis=0)}


def layer_norm_forward(x, gamma, beta, eps: float = LN_EPS):
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + eps)
    xhat = xc * inv
    return xhat * gamma + beta, (xhat, inv, gamma)


def layer_norm_backward(dy, cache):
    xhat, inv, gamma = cache
    d = xhat.shape[-1]
    flat = lambda a: a.reshape(-1, d)  # noqa: E731
    grads = {"weight": (flat(dy) * flat(xhat)).sum(axis=0), "bias": flat(dy).sum(axis=0)}
    g = dy * gamma
    dx = inv * (g - g.mean(axis=-1, keepdims=True)
                - xhat * (g * xhat).mean(axis=-1, keepdims=True))
    return dx, grads


def gelu_forward(x):
    """Exact (erf) GELU."""
    cdf = 0.5 * (1.0 + erf(x / np.sqrt(2.0)))
    return x * cdf, (x, cdf)


def gelu_backward(dy, cache):
    x, cdf = cache
    pdf = np.exp(-0.5 * x * x) / np.sqrt(2.0 * np.pi)
    return dy * (cdf + x * pdf)


def conv3d_forward(x, weight, bias):
    """'Same' zero-padded stride-1 3D correlation.

    ``x`` is (T, H, W, Cin), ``weight`` is (kt, kh, kw, Cin, Cout) with odd
    kernel sizes.
    """
    kt, kh, kw = weight.shape[:3]
    t, h, w = x.shape[:3]
    pt, ph, pw = kt // 2, kh // 2, kw // 2
    xp = np.pad(x, ((pt, pt), (ph, ph), (pw, pw), (0, 0)))
    out = np.zeros((t, h, w, weight.shape[-1]))
    for a in range(kt):
        for b in range(kh):
            for c in range(kw):
                out += xp[a:a + t, b:b + h, c:c + w] @ weight[a, b, c]
    return out + bias, (xp, weight, x.shape)


def conv3d_backward(dy, cache):
    xp, weight, shape = cache
    kt, kh, kw = weight.shape[:3]
    t, h, w = shape[:3]
    cin = shape[3]
    fdy = dy.reshape(-1, dy.shape[-1])
    dxp = np.zeros_like(xp)
    dw = np.zeros_like(weight)
    for a in range(kt):
        for b in range(kh):
            for c in range(kw):
                patch = xp[a:a + t, b:b + h, c:c + w]
                dw[a, b, c] = patch.reshape(-1, cin).T @ fdy
                dxp[a:a + t, b:b + h, c:c + w] += dy @ weight[a, b, c].T
    pt, ph, pw = kt // 2, kh // 2, kw // 2
    dx = dxp[pt:pt + t, ph:ph + h, pw:pw + w]
    return dx, {"weight": dw, "bias": fdy.sum(axis=0)}


def sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def channel_attention_forward(x, params, prefix: str = ""):
    """Squeeze-and-excitation gating: x * sigmoid(W2 relu(W1 mean(x) + b1) + b2)."""
    w1, b1 = params[prefix + "fc1.weight"], params[prefix + "fc1.bias"]
    w2, b2 = params[prefix + "fc2.weight"], params[prefix + "fc2.bias"]
    s = x.reshape(-1, x.shape[-1]).mean(axis=0)
    pre = s @ w1 + b1
    z = np.maximum(pre, 0.0)
    gate = sigmoid(z @ w2 + b2)
    return x * gate, (x, s, pre, z, gate, w1, w2)


def channel_attention_backward(dy, cache):
    x, s, pre, z, gate, w1, w2 = cache
    d = x.shape[-1]
    count = x.size // d
    dgate = (dy * x).reshape(-1, d).sum(axis=0)
    du = dgate * gate * (1.0 - gate)
    dz = (w2 @ du) * (pre > 0)
    ds = w1 @ dz
    dx = dy * gate + ds / count
    grads = {"fc1.weight": np.outer(s, dz), "fc1.bias": dz,
             "fc2.weight": np.outer(z, du), "fc2.bias": du}
    return dx, grads


def pixel_shuffle(x: np.ndarray, scale: int = 2) -> np.ndarray:
    """(H, W, scale^2) -> (scale H, scale W); out[y, x] = in[y//s, x//s, s*(y%s) + x%s]."""
    h, w, c = x.shape
    if c != scale * scale:
        raise ValueError(f"need {scale * scale} channels, got {c}")
    return x.reshape(h, w, scale, scale).transpose(0, 2, 1, 3).reshape(h * scale, w * scale)


def pixel_unshuffle(y: np.ndarray, scale: int = 2) -> np.ndarray:
    hs, ws = y.shape
    h, w = hs // scale, ws // scale
    return y.reshape(h, scale, w, scale).transpose(0, 2, 1, 3).reshape(h, w, scale * scale)
