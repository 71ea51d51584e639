"""Small encoder-decoder reconstruction network with exact reverse-mode gradients.

The architecture is a tiny U-Net: per encoder level two 3x3 convolutions
with ReLU and a 2x2 max-pool, a double-convolution bottleneck, and a
mirrored decoder using 2x nearest-neighbor upsampling with channel
concatenation of the skip, finished by a 1x1 projection to one channel.
Everything runs in float64 numpy with hand-written backward passes, so
parameter and input gradients agree with finite differences to tight
tolerances and training is bit-reproducible on one thread.

Parameters live in a flat list of arrays in a declared order (weights and
biases per convolution, encoder to decoder); the checkpoint format and the
Adam state follow that order.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from . import binio

CHECKPOINT_MAGIC = b"KDGW"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class ReconNetConfig:
    depth: int = 2
    base_channels: int = 8

    def __post_init__(self) -> None:
        if self.depth < 1:
            raise ValueError("depth must be >= 1")
        if self.base_channels < 1:
            raise ValueError("base_channels must be >= 1")


@dataclass(frozen=True)
class GradBundle:
    """Loss gradients w.r.t. every parameter and w.r.t. the input image."""

    param_grads: list[np.ndarray]
    input_grad: np.ndarray


def loss_l1(pred: np.ndarray, target: np.ndarray) -> float:
    """Mean absolute difference (mean, not sum, so learning rates transfer across sizes)."""
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {target.shape}")
    return float(np.mean(np.abs(pred - target)))


def _loss_l1_grad(pred: np.ndarray, target: np.ndarray) -> np.ndarray:
    # subgradient at 0 defined as 0 via np.sign
    return np.sign(pred - target) / pred.size


def _conv_forward(w: np.ndarray, b: np.ndarray, x: np.ndarray):
    c_out, c_in, k, _ = w.shape
    _, h, width = x.shape
    if k == 1:
        y = np.tensordot(w[:, :, 0, 0], x, axes=(1, 0)) + b[:, None, None]
        return y, x
    pad = k // 2
    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad)))
    win = sliding_window_view(xp, (k, k), axis=(1, 2))  # (C, H, W, k, k)
    cols = win.transpose(0, 3, 4, 1, 2).reshape(c_in * k * k, h * width)
    y = (w.reshape(c_out, -1) @ cols + b[:, None]).reshape(c_out, h, width)
    return y, cols


def _conv_backward(w: np.ndarray, cache, gy: np.ndarray):
    c_out, c_in, k, _ = w.shape
    _, h, width = gy.shape
    if k == 1:
        x = cache
        gw = np.tensordot(gy, x, axes=((1, 2), (1, 2)))[:, :, None, None]
        gb = gy.sum(axis=(1, 2))
        gx = np.tensordot(w[:, :, 0, 0].T, gy, axes=(1, 0))
        return gw, gb, gx
    cols = cache
    gy_mat = gy.reshape(c_out, h * width)
    gw = (gy_mat @ cols.T).reshape(w.shape)
    gb = gy_mat.sum(axis=1)
    gcols = (w.reshape(c_out, -1).T @ gy_mat).reshape(c_in, k, k, h, width)
    pad = k // 2
    gx = np.zeros((c_in, h + 2 * pad, width + 2 * pad))
    for i in range(k):
        for j in range(k):
            gx[:, i:i + h, j:j + width] += gcols[:, i, j]
    return gw, gb, gx[:, pad:pad + h, pad:pad + width]


def _relu_forward(x: np.ndarray):
    mask = x > 0
    return x * mask, mask


def _pool_forward(x: np.ndarray):
    c, h, w = x.shape
    xr = x.reshape(c, h // 2, 2, w // 2, 2).transpose(0, 1, 3, 2, 4).reshape(c, h // 2, w // 2, 4)
    idx = xr.argmax(axis=3)
    y = np.take_along_axis(xr, idx[..., None], axis=3)[..., 0]
    return y, idx


def _pool_backward(gy: np.ndarray, idx: np.ndarray):
    c, h2, w2 = gy.shape
    g4 = np.zeros((c, h2, w2, 4))
    np.put_along_axis(g4, idx[..., None], gy[..., None], axis=3)
    return g4.reshape(c, h2, w2, 2, 2).transpose(0, 1, 3, 2, 4).reshape(c, h2 * 2, w2 * 2)


def _up_forward(x: np.ndarray) -> np.ndarray:
    return np.repeat(np.repeat(x, 2, axis=1), 2, axis=2)


def _up_backward(gy: np.ndarray) -> np.ndarray:
    c, h, w = gy.shape
    return gy.reshape(c, h // 2, 2, w // 2, 2).sum(axis=(2, 4))


class ReconNet:
    """Architecture object: holds the layer plan, operates on external params."""

    def __init__(self, config: ReconNetConfig):
        self.config = config
        d, base = config.depth, config.base_channels
        specs: list[tuple[str, int, int, int]] = []  # (name, c_in, c_out, kernel)
        ch = 1
        for lvl in range(d):
            out = base * 2 ** lvl
            specs.append((f"enc{lvl}_conv0", ch, out, 3))
            specs.append((f"enc{lvl}_conv1", out, out, 3))
            ch = out
        out = base * 2 ** d
        specs.append(("bottleneck_conv0", ch, out, 3))
        specs.append(("bottleneck_conv1", out, out, 3))
        ch = out
        for lvl in reversed(range(d)):
            skip = base * 2 ** lvl
            specs.append((f"dec{lvl}_conv0", ch + skip, skip, 3))
            specs.append((f"dec{lvl}_conv1", skip, skip, 3))
            ch = skip
        specs.append(("final", ch, 1, 1))
        self.conv_specs = specs

    @property
    def param_shapes(self) -> list[tuple[str, tuple[int, ...]]]:
        shapes = []
        for name, c_in, c_out, k in self.conv_specs:
            shapes.append((f"{name}.w", (c_out, c_in, k, k)))
            shapes.append((f"{name}.b", (c_out,)))
        return shapes

    def n_params(self) -> int:
        return sum(int(np.prod(s)) for _, s in self.param_shapes)

    def _check_input(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2:
            raise ValueError(f"input must be a 2D real image, got shape {x.shape}")
        div = 2 ** self.config.depth
        if x.shape[0] % div or x.shape[1] % div:
            raise ValueError(f"input dims {x.shape} must be divisible by {div}")
        return x

    def _forward_full(self, params: list[np.ndarray], x: np.ndarray):
        d = self.config.depth
        pw = {name: (params[2 * i], params[2 * i + 1])
              for i, (name, *_rest) in enumerate(self.conv_specs)}
        caches: dict[str, object] = {}
        cur = x[None]
        skips = []
        for lvl in range(d):
            for c in range(2):
                name = f"enc{lvl}_conv{c}"
                cur, caches[name] = _conv_forward(*pw[name], cur)
                cur, caches[name + ".relu"] = _relu_forward(cur)
            skips.append(cur)
            cur, caches[f"pool{lvl}"] = _pool_forward(cur)
        for c in range(2):
            name = f"bottleneck_conv{c}"
            cur, caches[name] = _conv_forward(*pw[name], cur)
            cur, caches[name + ".relu"] = _relu_forward(cur)
        for lvl in reversed(range(d)):
            cur = _up_forward(cur)
            caches[f"split{lvl}"] = cur.shape[0]
            cur = np.concatenate([cur, skips[lvl]], axis=0)
            for c in range(2):
                name = f"dec{lvl}_conv{c}"
                cur, caches[name] = _conv_forward(*pw[name], cur)
                cur, caches[name + ".relu"] = _relu_forward(cur)
        out, caches["final"] = _conv_forward(*pw["final"], cur)
        return out[0], caches

    def forward(self, params: list[np.ndarray], x: np.ndarray) -> np.ndarray:
        x = self._check_input(x)
        out, _ = self._forward_full(params, x)
        return out

    def backward(self, params: list[np.ndarray], x: np.ndarray, target: np.ndarray):
        """Full reverse-mode pass: returns (loss, GradBundle)."""
        x = self._check_input(x)
        pred, caches = self._forward_full(params, x)
        loss = loss_l1(pred, target)
        gy = _loss_l1_grad(pred, target)

        d = self.config.depth
        index = {name: i for i, (name, *_r) in enumerate(self.conv_specs)}
        grads: list[np.ndarray | None] = [None] * (2 * len(self.conv_specs))

        def conv_back(name: str, g):
            i = index[name]
            w = params[2 * i]
            gw, gb, gx = _conv_backward(w, caches[name], g)
            grads[2 * i] = gw
            grads[2 * i + 1] = gb
            return gx

        cur = gy[None]
        cur = conv_back("final", cur)
        skip_grads: dict[int, np.ndarray] = {}
        for lvl in range(d):
            for c in (1, 0):
                name = f"dec{lvl}_conv{c}"
                cur = cur * caches[name + ".relu"]
                cur = conv_back(name, cur)
            n_up = caches[f"split{lvl}"]
            skip_grads[lvl] = cur[n_up:]
            cur = _up_backward(cur[:n_up])
        for c in (1, 0):
            name = f"bottleneck_conv{c}"
            cur = cur * caches[name + ".relu"]
            cur = conv_back(name, cur)
        for lvl in reversed(range(d)):
            cur = _pool_backward(cur, caches[f"pool{lvl}"])
            cur = cur + skip_grads[lvl]
            for c in (1, 0):
                name = f"enc{lvl}_conv{c}"
                cur = cur * caches[name + ".relu"]
                cur = conv_back(name, cur)
        return loss, GradBundle([g for g in grads], cur[0])


def init_params(config: ReconNetConfig, rng_seed=0) -> list[np.ndarray]:
    """Fan-in-scaled uniform weights, zero biases; deterministic per seed."""
    rng = np.random.default_rng(rng_seed)
    net = ReconNet(config)
    params: list[np.ndarray] = []
    for name, shape in net.param_shapes:
        if name.endswith(".b"):
            params.append(np.zeros(shape))
        else:
            fan_in = int(np.prod(shape[1:]))
            bound = 1.0 / np.sqrt(fan_in)
            params.append(rng.uniform(-bound, bound, shape))
    return params


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    step: int = 0


def init_adam(params: list[np.ndarray]) -> AdamState:
    return AdamState([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params])


def adam_step(
    params: list[np.ndarray],
    grads: list[np.ndarray],
    lr: float,
    state: AdamState,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
    weight_decay: float = 0.0,
) -> list[np.ndarray]:
    """One adaptive-moment update; returns new parameter arrays, mutates `state`."""
    state.step += 1
    t = state.step
    out = []
    for i, (p, g) in enumerate(zip(params, grads)):
        if weight_decay:
            g = g + weight_decay * p
        state.m[i] = beta1 * state.m[i] + (1 - beta1) * g
        state.v[i] = beta2 * state.v[i] + (1 - beta2) * g * g
        m_hat = state.m[i] / (1 - beta1 ** t)
        v_hat = state.v[i] / (1 - beta2 ** t)
        out.append(p - lr * m_hat / (np.sqrt(v_hat) + eps))
    return out


def save_checkpoint(path, config: ReconNetConfig, params: list[np.ndarray]) -> None:
    """Binary checkpoint: magic, version, JSON config block, raw float64 params."""
    net = ReconNet(config)
    expected = [s for _, s in net.param_shapes]
    if [p.shape for p in params] != expected:
        raise ValueError("params do not match the declared layer shapes for this config")
    cfg_json = json.dumps({"depth": config.depth, "base_channels": config.base_channels}).encode()
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", CHECKPOINT_VERSION))
        fh.write(struct.pack("<I", len(cfg_json)))
        fh.write(cfg_json)
        for p in params:
            fh.write(np.ascontiguousarray(p, dtype="<f8").tobytes())


def load_checkpoint(path) -> tuple[ReconNetConfig, list[np.ndarray]]:
    with open(path, "rb") as fh:
        magic = binio.read_exact(fh, 4, "checkpoint magic")
        if magic != CHECKPOINT_MAGIC:
            raise binio.BadMagicError(f"bad checkpoint magic {magic!r}")
        (version,) = struct.unpack("<I", binio.read_exact(fh, 4, "checkpoint version"))
        if version != CHECKPOINT_VERSION:
            raise binio.VersionMismatchError(
                f"checkpoint version {version}, expected {CHECKPOINT_VERSION}"
            )
        (cfg_len,) = struct.unpack("<I", binio.read_exact(fh, 4, "config length"))
        cfg = json.loads(binio.read_exact(fh, cfg_len, "config block"))
        config = ReconNetConfig(**cfg)
        net = ReconNet(config)
        params = []
        for name, shape in net.param_shapes:
            n = int(np.prod(shape))
            raw = binio.read_exact(fh, 8 * n, f"parameter {name}")
            params.append(np.frombuffer(raw, dtype="<f8").reshape(shape).copy())
    return config, params
