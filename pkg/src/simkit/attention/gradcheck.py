"""Central finite-difference checks of the analytic backward passes."""
from __future__ import annotations

import numpy as np

from . import layers as L
from .msa import AttentionWeights, msa_backward, msa_forward
from .network import NetworkConfig, init_params, vsr_sim_backward, vsr_sim_forward

EPS = 1e-5
GRAD_TOL = 1e-4
E2E_TOL = 1e-3


def rel_error(analytic, numeric, floor: float = 1e-3, scale: float | None = None) -> float:
    """Largest elementwise relative error.

    Entries far below the gradient scale (``floor`` times ``scale``, by
    default the largest magnitude present) are compared against that scale
    instead, so near-zero gradients cannot dominate through round-off alone.
    """
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    if scale is None:
        scale = max(np.abs(a).max(initial=0.0), np.abs(n).max(initial=0.0))
    if scale == 0.0:
        return 0.0
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor * scale)
    return float(np.max(np.abs(a - n) / denom))


def numeric_grad(loss, x: np.ndarray, eps: float = EPS) -> np.ndarray:
    """d loss / d x by central differences, perturbing ``x`` in place."""
    grad = np.zeros_like(x)
    flat, gflat = x.reshape(-1), grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        up = loss()
        flat[i] = orig - eps
        down = loss()
        flat[i] = orig
        gflat[i] = (up - down) / (2.0 * eps)
    return grad


def _compare(pairs) -> float:
    # one shared scale: a gradient that is identically zero in exact
    # arithmetic (e.g. the key bias under softmax) must not be judged
    # against its own round-off
    scale = max(max(np.abs(a).max(), np.abs(n).max()) for a, n in pairs)
    return max(rel_error(a, n, scale=scale) for a, n in pairs)


def check_msa(seed: int, dim: int = 8, heads: int = 2, temporal: int = 2, window: int = 2) -> float:
    """One window of P*M*M tokens; compares gradients of every input and weight."""
    rng = np.random.default_rng(seed)
    w = AttentionWeights.random(dim, heads, temporal, window, rng, scale=0.5)
    x = rng.standard_normal((1, temporal * window * window, dim))
    probe = rng.standard_normal(x.shape)
    y, cache = msa_forward(x, w, return_cache=True)
    dx, grads = msa_backward(probe, cache)
    loss = lambda: float(np.sum(msa_forward(x, w) * probe))  # noqa: E731
    pairs = [(dx, numeric_grad(loss, x))]
    pairs += [(grads[name], numeric_grad(loss, arr)) for name, arr in w.as_dict().items()]
    return _compare(pairs)


def check_channel_attention(seed: int, shape=(2, 4, 4, 8), reduction: int = 4) -> float:
    rng = np.random.default_rng(seed)
    d = shape[-1]
    hid = d // reduction
    params = {"fc1.weight": rng.standard_normal((d, hid)), "fc1.bias": rng.standard_normal(hid),
              "fc2.weight": rng.standard_normal((hid, d)), "fc2.bias": rng.standard_normal(d)}
    x = rng.standard_normal(shape)
    probe = rng.standard_normal(shape)
    _, cache = L.channel_attention_forward(x, params)
    dx, grads = L.channel_attention_backward(probe, cache)

    def loss():
        return float(np.sum(L.channel_attention_forward(x, params)[0] * probe))

    pairs = [(dx, numeric_grad(loss, x))]
    pairs += [(grads[name], numeric_grad(loss, arr)) for name, arr in params.items()]
    return _compare(pairs)


def check_network(seed: int, cfg: NetworkConfig | None = None, size: int = 8,
                  std: float = 0.2) -> float:
    """Directional derivative of the full network along a random joint direction.

    The direction perturbs the input frames and every parameter at once.
    """
    cfg = cfg or NetworkConfig.toy()
    rng = np.random.default_rng(seed)
    params = init_params(cfg, rng, std=std)
    for name in params:
        if name.endswith(".bias") or "norm" in name:
            params[name] = params[name] + std * rng.standard_normal(params[name].shape)
    frames = rng.standard_normal((cfg.frames, size, size))
    out, cache = vsr_sim_forward(frames, params, cfg, return_cache=True)
    probe = rng.standard_normal(out.shape)
    dframes, grads = vsr_sim_backward(probe, cache)

    dir_x = rng.standard_normal(frames.shape)
    dir_p = {k: rng.standard_normal(v.shape) for k, v in params.items()}
    analytic = float(np.sum(dframes * dir_x) + sum(np.sum(grads[k] * dir_p[k]) for k in params))

    def loss(step):
        p = {k: v + step * dir_p[k] for k, v in params.items()}
        return float(np.sum(vsr_sim_forward(frames + step * dir_x, p, cfg) * probe))

    numeric = (loss(EPS) - loss(-EPS)) / (2.0 * EPS)
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-300)


CHECKS = {"msa": (check_msa, GRAD_TOL), "ca": (check_channel_attention, GRAD_TOL),
          "e2e": (check_network, E2E_TOL)}


def run_check(op: str, seed: int) -> tuple[float, float]:
    """Return ``(error, tolerance)`` for one named check."""
    if op not in CHECKS:
        raise KeyError(f"unknown op {op!r}; choose from {sorted(CHECKS)}")
    fn, tol = CHECKS[op]
    return fn(seed), tol
