"""Single-sample versions of the layer operations."""

from __future__ import annotations

import numpy as np

from .. import tensor
from ..errors import ConfigError, LabelError, ShapeError
from .layers import ConvLayer, DenseLayer, Dropout, PoolLayer
from .network import CE_EPS


def conv_forward(x: np.ndarray, layer: ConvLayer) -> np.ndarray:
    """Pre-activation convolution output ``[H', W', F_out]`` for one image."""
    if x.ndim != 3:
        raise ShapeError(f"expected [H, W, C] input, got {x.shape}")
    return layer.forward(x[None])[0][0]


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def pool_forward(x: np.ndarray, layer: PoolLayer) -> np.ndarray:
    if x.ndim != 3:
        raise ShapeError(f"expected [H, W, C] input, got {x.shape}")
    return layer.forward(x[None])[0][0]


def pool_output_size(size: int, window: int, stride: int) -> int:
    return (size - window) // stride + 1


def global_average_pool(x: np.ndarray) -> np.ndarray:
    if x.ndim != 3:
        raise ShapeError(f"expected [H, W, C] input, got {x.shape}")
    return x.mean(axis=(0, 1))


def dense_forward(features: np.ndarray, layer: DenseLayer) -> np.ndarray:
    if features.shape != (layer.weights.shape[1],):
        raise ShapeError(f"expected {layer.weights.shape[1]} features, got {features.shape}")
    return tensor.elementwise("add", tensor.matvec(layer.weights, features), layer.bias)


def softmax(logits: np.ndarray) -> np.ndarray:
    if logits.ndim != 1 or logits.shape[0] < 2:
        raise ShapeError("softmax needs a vector of at least 2 logits")
    e = np.exp(logits - logits.max())
    return e / e.sum()


def cross_entropy(probs: np.ndarray, one_hot: np.ndarray) -> float:
    """Categorical cross-entropy ``-sum_c y_c log(p_c + 1e-12)``."""
    if probs.shape != one_hot.shape:
        raise ShapeError(f"shape mismatch {probs.shape} vs {one_hot.shape}")
    if not (np.all((one_hot == 0) | (one_hot == 1)) and one_hot.sum() == 1):
        raise LabelError("one_hot must contain exactly one 1")
    return float(-np.sum(one_hot * np.log(probs + CE_EPS)))


def dropout(x: np.ndarray, rate: float, rng: np.random.Generator | None = None,
            training: bool = True) -> np.ndarray:
    if not 0.0 <= rate < 1.0:
        raise ConfigError(f"dropout rate must be in [0, 1), got {rate}")
    return Dropout(rate).forward(x, training=training, rng=rng)[0]
