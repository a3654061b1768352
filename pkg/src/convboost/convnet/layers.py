"""Layer definitions with batched forward/backward passes.

All activations are channels-last. Batched arrays carry a leading sample
axis, so an image batch is ``[N, H, W, C]`` and a feature batch is ``[N, D]``.
Each layer implements ``forward(x, training, rng) -> (out, cache)`` and
``backward(dout, cache) -> (dx, grads)`` where ``grads`` maps parameter
names to arrays shaped like the parameters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ConfigError, GeometryError, ShapeError


class Layer:
    kind = "layer"
    name = ""

    @property
    def params(self) -> dict[str, np.ndarray]:
        return {}

    def output_shape(self, in_shape: tuple[int, ...]) -> tuple[int, ...]:
        return in_shape

    def describe(self) -> dict:
        return {"type": self.kind}


def _pad_amount(kernel: int, padding: str) -> int:
    if padding == "valid":
        return 0
    if padding == "same":
        return kernel // 2
    raise ConfigError(f"padding must be 'valid' or 'same', got {padding!r}")


@dataclass(eq=False)
class ConvLayer(Layer):
    """2-D convolution (cross-correlation) with kernels ``[F_out, K_h, K_w, F_in]``."""

    kernels: np.ndarray
    bias: np.ndarray
    stride: int = 1
    padding: str = "valid"
    name: str = "conv"
    kind = "conv"

    def __post_init__(self):
        if self.kernels.ndim != 4:
            raise ShapeError(f"kernels must be [F_out, K_h, K_w, F_in], got {self.kernels.shape}")
        f_out, kh, kw, _ = self.kernels.shape
        if kh % 2 == 0 or kw % 2 == 0:
            raise ConfigError(f"kernel dims must be odd, got {kh}x{kw}")
        if self.bias.shape != (f_out,):
            raise ShapeError(f"bias shape {self.bias.shape} does not match {f_out} filters")
        if self.stride < 1:
            raise ConfigError("stride must be >= 1")
        _pad_amount(kh, self.padding)

    @property
    def params(self):
        return {"kernels": self.kernels, "bias": self.bias}

    def _geometry(self, h: int, w: int) -> tuple[int, int, int, int]:
        _, kh, kw, _ = self.kernels.shape
        ph, pw = _pad_amount(kh, self.padding), _pad_amount(kw, self.padding)
        if h + 2 * ph < kh or w + 2 * pw < kw:
            raise GeometryError(f"kernel {kh}x{kw} larger than padded input {h + 2 * ph}x{w + 2 * pw}")
        return ph, pw, (h + 2 * ph - kh) // self.stride + 1, (w + 2 * pw - kw) // self.stride + 1

    def output_shape(self, in_shape):
        if len(in_shape) != 3:
            raise ShapeError(f"conv expects [H, W, C] input, got {in_shape}")
        h, w, c = in_shape
        if c != self.kernels.shape[3]:
            raise ShapeError(f"input has {c} channels, kernels expect {self.kernels.shape[3]}")
        _, _, ho, wo = self._geometry(h, w)
        return (ho, wo, self.kernels.shape[0])

    def describe(self):
        f, kh, kw, c = self.kernels.shape
        return {"type": self.kind, "filters": f, "kernel": [kh, kw], "in_channels": c,
                "stride": self.stride, "padding": self.padding}

    def _windows(self, x):
        _, kh, kw, _ = self.kernels.shape
        ph, pw, ho, wo = self._geometry(x.shape[1], x.shape[2])
        xp = np.pad(x, ((0, 0), (ph, ph), (pw, pw), (0, 0))) if ph or pw else x
        s = self.stride
        # [N, H', W', C, K_h, K_w]
        win = sliding_window_view(xp, (kh, kw), axis=(1, 2))[:, ::s, ::s][:, :ho, :wo]
        return xp, win

    def forward(self, x, training=False, rng=None):
        self.output_shape(x.shape[1:])
        xp, win = self._windows(x)
        f_out, kh, kw, c_in = self.kernels.shape
        out = np.broadcast_to(self.bias, win.shape[:3] + (f_out,)).copy()
        # Fixed (channel, row, col) accumulation order; see tests for the
        # direct-summation oracle this must match exactly.
        for c in range(c_in):
            for u in range(kh):
                for v in range(kw):
                    out += win[:, :, :, c, u, v, None] * self.kernels[:, u, v, c]
        return out, (x.shape, xp.shape, win)

    def backward(self, dout, cache):
        x_shape, xp_shape, win = cache
        f_out, kh, kw, c_in = self.kernels.shape
        s = self.stride
        ho, wo = dout.shape[1], dout.shape[2]
        # dW[f, u, v, c] = sum_{n,h,w} dout[n,h,w,f] * win[n,h,w,c,u,v]
        dk = np.tensordot(dout, win, axes=([0, 1, 2], [0, 1, 2]))  # [F, C, K_h, K_w]
        dk = dk.transpose(0, 2, 3, 1)
        db = dout.sum(axis=(0, 1, 2))
        dxp = np.zeros(xp_shape)
        for u in range(kh):
            for v in range(kw):
                dxp[:, u:u + s * ho:s, v:v + s * wo:s, :] += dout @ self.kernels[:, u, v, :]
        ph = (xp_shape[1] - x_shape[1]) // 2
        pw = (xp_shape[2] - x_shape[2]) // 2
        dx = dxp[:, ph:ph + x_shape[1], pw:pw + x_shape[2], :]
        return dx, {"kernels": dk, "bias": db}


class ReLU(Layer):
    kind = "relu"

    def __init__(self, name: str = "relu"):
        self.name = name

    def forward(self, x, training=False, rng=None):
        return np.maximum(x, 0.0), x

    def backward(self, dout, cache):
        return dout * (cache > 0), {}


@dataclass(eq=False)
class PoolLayer(Layer):
    """Max or average pooling over ``window`` (rows, cols) at ``stride``."""

    window: tuple[int, int] = (2, 2)
    stride: int = 2
    mode: str = "max"
    name: str = "pool"
    kind = "pool"

    def __post_init__(self):
        self.window = tuple(int(w) for w in self.window)
        if len(self.window) != 2 or min(self.window) < 1 or self.stride < 1:
            raise ConfigError("pool window and stride must be positive")
        if self.mode not in ("max", "average"):
            raise ConfigError(f"pool mode must be 'max' or 'average', got {self.mode!r}")

    def output_shape(self, in_shape):
        if len(in_shape) != 3:
            raise ShapeError(f"pool expects [H, W, C] input, got {in_shape}")
        h, w, c = in_shape
        vp, wp = self.window
        if vp > h or wp > w:
            raise GeometryError(f"pool window {vp}x{wp} exceeds input {h}x{w}")
        return ((h - vp) // self.stride + 1, (w - wp) // self.stride + 1, c)

    def describe(self):
        return {"type": self.kind, "window": list(self.window), "stride": self.stride, "mode": self.mode}

    def forward(self, x, training=False, rng=None):
        ho, wo, _ = self.output_shape(x.shape[1:])
        s = self.stride
        win = sliding_window_view(x, self.window, axis=(1, 2))[:, ::s, ::s][:, :ho, :wo]
        flat = win.reshape(win.shape[:4] + (-1,))
        if self.mode == "max":
            idx = flat.argmax(axis=-1)
            out = np.take_along_axis(flat, idx[..., None], axis=-1)[..., 0]
        else:
            idx = None
            out = flat.mean(axis=-1)
        return out, (x.shape, idx)

    def backward(self, dout, cache):
        x_shape, idx = cache
        vp, wp = self.window
        s = self.stride
        ho, wo = dout.shape[1], dout.shape[2]
        dx = np.zeros(x_shape)
        for u in range(vp):
            for v in range(wp):
                if self.mode == "max":
                    contrib = dout * (idx == u * wp + v)
                else:
                    contrib = dout / (vp * wp)
                dx[:, u:u + s * ho:s, v:v + s * wo:s, :] += contrib
        return dx, {}


class Dropout(Layer):
    """Inverted dropout: survivors are scaled by ``1/(1-rate)`` at train time."""

    kind = "dropout"

    def __init__(self, rate: float, name: str = "dropout"):
        if not 0.0 <= rate < 1.0:
            raise ConfigError(f"dropout rate must be in [0, 1), got {rate}")
        self.rate = float(rate)
        self.name = name

    def describe(self):
        return {"type": self.kind, "rate": self.rate}

    def forward(self, x, training=False, rng=None):
        if not training or self.rate == 0.0:
            return x, None
        if rng is None:
            raise ValueError("training-mode dropout needs a random generator")
        keep = rng.random(x.shape) >= self.rate
        mask = keep / (1.0 - self.rate)
        return x * mask, mask

    def backward(self, dout, cache):
        return (dout if cache is None else dout * cache), {}


class GlobalAveragePool(Layer):
    kind = "global_average_pool"

    def __init__(self, name: str = "global_average_pool"):
        self.name = name

    def output_shape(self, in_shape):
        if len(in_shape) != 3:
            raise ShapeError(f"global average pool expects [H, W, C] input, got {in_shape}")
        return (in_shape[2],)

    def forward(self, x, training=False, rng=None):
        return x.mean(axis=(1, 2)), x.shape

    def backward(self, dout, cache):
        n, h, w, c = cache
        return np.broadcast_to(dout[:, None, None, :] / (h * w), cache).copy(), {}


class Flatten(Layer):
    kind = "flatten"

    def __init__(self, name: str = "flatten"):
        self.name = name

    def output_shape(self, in_shape):
        return (math.prod(in_shape),)

    def forward(self, x, training=False, rng=None):
        return x.reshape(x.shape[0], -1), x.shape

    def backward(self, dout, cache):
        return dout.reshape(cache), {}


@dataclass(eq=False)
class DenseLayer(Layer):
    """Fully connected layer ``out = weights @ x + bias`` with optional L2 penalty."""

    weights: np.ndarray
    bias: np.ndarray
    l2: float = 0.0
    name: str = "dense"
    kind = "dense"

    def __post_init__(self):
        if self.weights.ndim != 2:
            raise ShapeError(f"dense weights must be rank 2, got {self.weights.shape}")
        if self.bias.shape != (self.weights.shape[0],):
            raise ShapeError(f"bias shape {self.bias.shape} does not match {self.weights.shape[0]} units")
        if self.l2 < 0:
            raise ConfigError("l2 must be >= 0")

    @property
    def params(self):
        return {"weights": self.weights, "bias": self.bias}

    def output_shape(self, in_shape):
        if in_shape != (self.weights.shape[1],):
            raise ShapeError(f"dense layer expects input ({self.weights.shape[1]},), got {in_shape}")
        return (self.weights.shape[0],)

    def describe(self):
        units, n_in = self.weights.shape
        return {"type": self.kind, "units": units, "in_features": n_in, "l2": self.l2}

    def penalty(self) -> float:
        if self.l2 == 0.0:
            return 0.0
        return self.l2 * (float(np.sum(self.weights ** 2)) + float(np.sum(self.bias ** 2)))

    def forward(self, x, training=False, rng=None):
        return x @ self.weights.T + self.bias, x

    def backward(self, dout, cache):
        return dout @ self.weights, {"weights": dout.T @ cache, "bias": dout.sum(axis=0)}


class Softmax(Layer):
    kind = "softmax"

    def __init__(self, name: str = "softmax"):
        self.name = name

    def forward(self, x, training=False, rng=None):
        z = x - x.max(axis=-1, keepdims=True)
        e = np.exp(z)
        p = e / e.sum(axis=-1, keepdims=True)
        return p, p

    def backward(self, dout, cache):
        p = cache
        return p * (dout - np.sum(dout * p, axis=-1, keepdims=True)), {}
