"""Sequential network: construction, forward/backward passes, truncation."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..errors import ArchitectureError, ConfigError, LabelError, ShapeError, StateError
from .layers import (ConvLayer, DenseLayer, Dropout, Flatten, GlobalAveragePool, Layer,
                     PoolLayer, ReLU, Softmax)

CE_EPS = 1e-12


def default_architecture(n_classes: int, dropout: float = 0.8, l2: float = 1e-4,
                         filters: Sequence[int] = (8, 16)) -> list[dict]:
    """Small conv body followed by the dropout / GAP / dropout / dense softmax head."""
    spec: list[dict] = []
    for f in filters:
        spec += [
            {"type": "conv", "filters": f, "kernel": 3, "stride": 1, "padding": "valid"},
            {"type": "relu"},
            {"type": "pool", "window": 2, "stride": 2, "mode": "max"},
        ]
    spec += [
        {"type": "dropout", "rate": dropout},
        {"type": "global_average_pool"},
        {"type": "dropout", "rate": dropout},
        {"type": "dense", "units": n_classes, "l2": l2},
        {"type": "softmax"},
    ]
    return spec


class Network:
    """Ordered layer stack with an input shape ``[H, W, C]``.

    The shape chain is validated on construction. ``version`` increments
    whenever parameters change, which lets ``backward`` reject caches produced
    before an update.
    """

    def __init__(self, layers: Sequence[Layer], input_shape: Sequence[int]):
        self.layers = list(layers)
        self.input_shape = tuple(int(s) for s in input_shape)
        self.version = 0
        if not self.layers:
            raise ArchitectureError("network needs at least one layer")
        self._name_layers()
        shape = self.input_shape
        self.shapes = [shape]
        for layer in self.layers:
            try:
                shape = layer.output_shape(shape)
            except (ShapeError, ValueError) as exc:
                raise ArchitectureError(f"layer {layer.name!r}: {exc}") from exc
            self.shapes.append(shape)
        n_softmax = sum(isinstance(l, Softmax) for l in self.layers)
        if n_softmax > 1 or (n_softmax == 1 and not isinstance(self.layers[-1], Softmax)):
            raise ArchitectureError("softmax may only appear once, as the last layer")

    def _name_layers(self):
        counts: dict[str, int] = {}
        for layer in self.layers:
            if isinstance(layer, GlobalAveragePool):
                layer.name = "global_average_pool"
                continue
            i = counts.get(layer.kind, 0)
            counts[layer.kind] = i + 1
            layer.name = f"{layer.kind}_{i}"

    @property
    def output_shape(self) -> tuple[int, ...]:
        return self.shapes[-1]

    @property
    def is_classifier(self) -> bool:
        return isinstance(self.layers[-1], Softmax)

    def parameters(self) -> dict[str, np.ndarray]:
        """Live parameter arrays keyed ``"<layer>.<param>"`` in layer order."""
        out = {}
        for layer in self.layers:
            for pname, arr in layer.params.items():
                out[f"{layer.name}.{pname}"] = arr
        return out

    def set_parameters(self, params: dict[str, np.ndarray]) -> None:
        current = self.parameters()
        if params.keys() != current.keys():
            raise ShapeError("parameter names do not match the network")
        for key, arr in params.items():
            if arr.shape != current[key].shape:
                raise ShapeError(f"{key}: shape {arr.shape} != {current[key].shape}")
        by_name = {layer.name: layer for layer in self.layers}
        for key, arr in params.items():
            lname, pname = key.rsplit(".", 1)
            setattr(by_name[lname], pname, np.array(arr, dtype=np.float64))
        self.version += 1

    def penalty(self) -> float:
        return sum(l.penalty() for l in self.layers if isinstance(l, DenseLayer))

    def _as_batch(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape == self.input_shape:
            return x[None], True
        if x.shape[1:] == self.input_shape:
            return x, False
        raise ShapeError(f"input shape {x.shape} does not match network input {self.input_shape}")

    def forward(self, x, training: bool = False, rng: np.random.Generator | None = None):
        """Run the stack on one image ``[H, W, C]`` or a batch ``[N, H, W, C]``.

        Returns ``(output, cache)``. The cache keeps every layer's input and
        output activations along with per-layer backward state.
        """
        batch, single = self._as_batch(x)
        acts = [batch]
        states = []
        out = batch
        for layer in self.layers:
            out, state = layer.forward(out, training=training, rng=rng)
            acts.append(out)
            states.append(state)
        cache = ForwardCache(acts=acts, states=states, training=training, version=self.version,
                             single=single)
        return (out[0] if single else out), cache

    def predict_proba(self, x) -> np.ndarray:
        return self.forward(x, training=False)[0]

    def loss(self, probs: np.ndarray, one_hot: np.ndarray) -> float:
        """Mean categorical cross-entropy over the batch plus the L2 penalty."""
        probs = np.atleast_2d(probs)
        one_hot = np.atleast_2d(one_hot)
        ce = -np.sum(one_hot * np.log(probs + CE_EPS), axis=1)
        return float(np.mean(ce)) + self.penalty()

    def backward(self, cache: "ForwardCache", one_hot, reduction: str = "mean") -> dict[str, np.ndarray]:
        """Gradients of the regularized loss for every parameter.

        The data term is averaged over the batch (``reduction="mean"``) or
        summed (``"sum"``); the L2 term is added once either way.
        """
        if cache is None or not isinstance(cache, ForwardCache):
            raise StateError("backward needs the cache from a forward pass")
        if cache.version != self.version:
            raise StateError("cache is stale: parameters changed since the forward pass")
        if not cache.training:
            raise StateError("backward needs a training-mode forward pass")
        if not self.is_classifier:
            raise ArchitectureError("backward needs a network ending in softmax")
        probs = cache.acts[-1]
        y = np.asarray(one_hot, dtype=np.float64).reshape(probs.shape)
        n = probs.shape[0]
        # Fused softmax + cross-entropy gradient: (y_hat - Y).
        dout = probs - y
        if reduction == "mean":
            dout = dout / n
        elif reduction != "sum":
            raise ConfigError(f"reduction must be 'mean' or 'sum', got {reduction!r}")
        grads: dict[str, np.ndarray] = {}
        for layer, state in zip(reversed(self.layers[:-1]), reversed(cache.states[:-1])):
            dout, g = layer.backward(dout, state)
            for pname, arr in g.items():
                if isinstance(layer, DenseLayer) and layer.l2 > 0:
                    arr = arr + 2.0 * layer.l2 * layer.params[pname]
                grads[f"{layer.name}.{pname}"] = arr
        return {k: grads[k] for k in self.parameters()}

    def describe(self) -> dict:
        return {"input_shape": list(self.input_shape), "layers": [l.describe() for l in self.layers]}


@dataclass
class ForwardCache:
    acts: list
    states: list
    training: bool
    version: int
    single: bool

    def activation(self, index: int) -> np.ndarray:
        """Output of layer ``index`` (single-image inputs lose the batch axis)."""
        a = self.acts[index + 1]
        return a[0] if self.single else a


def build_layer(entry: dict, in_shape: tuple[int, ...], rng: np.random.Generator | None,
                init_stddev: float = 1.0) -> Layer:
    """Instantiate one layer from its dict description.

    With ``rng`` weights are drawn from N(0, init_stddev**2 / fan_in); without
    it parameters are zero (used when loading saved weights).
    """
    kind = entry.get("type")

    def normal(shape, fan_in):
        if rng is None:
            return np.zeros(shape)
        return rng.normal(0.0, init_stddev / np.sqrt(fan_in), size=shape)

    if kind == "conv":
        if len(in_shape) != 3:
            raise ArchitectureError(f"conv needs [H, W, C] input, got {in_shape}")
        k = entry.get("kernel", 3)
        kh, kw = (k, k) if isinstance(k, int) else tuple(k)
        f = int(entry["filters"])
        c = in_shape[2]
        return ConvLayer(normal((f, kh, kw, c), kh * kw * c), np.zeros(f),
                         stride=int(entry.get("stride", 1)), padding=entry.get("padding", "valid"))
    if kind == "relu":
        return ReLU()
    if kind in ("pool", "maxpool", "avgpool"):
        w = entry.get("window", 2)
        window = (w, w) if isinstance(w, int) else tuple(w)
        mode = entry.get("mode", "average" if kind == "avgpool" else "max")
        return PoolLayer(window=window, stride=int(entry.get("stride", window[0])), mode=mode)
    if kind == "dropout":
        return Dropout(float(entry["rate"]))
    if kind in ("global_average_pool", "gap"):
        return GlobalAveragePool()
    if kind == "flatten":
        return Flatten()
    if kind == "dense":
        if len(in_shape) != 1:
            raise ArchitectureError(f"dense needs a flat input, got {in_shape}; add flatten or gap")
        units = int(entry["units"])
        return DenseLayer(normal((units, in_shape[0]), in_shape[0]), np.zeros(units),
                          l2=float(entry.get("l2", 0.0)))
    if kind == "softmax":
        return Softmax()
    raise ArchitectureError(f"unknown layer type {kind!r}")


def init_network(spec: Sequence[dict], input_shape: Sequence[int], cfg=None, *,
                 seed: int | None = None, init_stddev: float | None = None) -> Network:
    """Build a network from a layer list with seeded Gaussian weights and zero biases."""
    if cfg is not None:
        seed = cfg.seed if seed is None else seed
        init_stddev = cfg.init_stddev if init_stddev is None else init_stddev
    seed = 0 if seed is None else seed
    init_stddev = 1.0 if init_stddev is None else init_stddev
    if init_stddev <= 0:
        raise ConfigError("init_stddev must be > 0")
    rng = np.random.default_rng(seed)
    shape = tuple(int(s) for s in input_shape)
    layers = []
    for entry in spec:
        try:
            layer = build_layer(entry, shape, rng, init_stddev)
            shape = layer.output_shape(shape)
        except (ShapeError, ValueError) as exc:
            if isinstance(exc, ArchitectureError):
                raise
            raise ArchitectureError(f"layer {len(layers)} ({entry.get('type')}): {exc}") from exc
        layers.append(layer)
    return Network(layers, input_shape)


class FeatureExtractor:
    """Inference-only prefix of a network, ending at a named layer (inclusive)."""

    def __init__(self, net: Network, stop: int):
        self.net = net
        self.stop = stop
        self.layer_name = net.layers[stop].name

    @property
    def width(self) -> int:
        return int(np.prod(self.net.shapes[self.stop + 1]))

    def __call__(self, x) -> np.ndarray:
        batch, single = self.net._as_batch(x)
        out = batch
        for layer in self.net.layers[:self.stop + 1]:
            out, _ = layer.forward(out, training=False)
        out = out.reshape(out.shape[0], -1)
        return out[0] if single else out


def truncate_at(net: Network, layer_name: str = "global_average_pool") -> FeatureExtractor:
    for i, layer in enumerate(net.layers):
        if layer.name == layer_name or layer.kind == layer_name:
            return FeatureExtractor(net, i)
    raise ArchitectureError(f"network has no layer named {layer_name!r}")


def validate_one_hot(one_hot: np.ndarray) -> None:
    oh = np.atleast_2d(one_hot)
    if not (np.all((oh == 0) | (oh == 1)) and np.all(oh.sum(axis=1) == 1)):
        raise LabelError("one-hot rows must contain a single 1 and zeros elsewhere")
