"""Dense float64 arrays with strict shape rules.

Tensors are plain ``numpy.ndarray`` objects of dtype float64. The helpers
here enforce the invariants the rest of the package relies on: rank >= 1,
every dimension >= 1, finite values, and no broadcasting between operands.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .errors import ShapeError

_OPS = {
    "add": np.add,
    "sub": np.subtract,
    "mul": np.multiply,
}


def _check_shape(shape: Sequence[int]) -> tuple[int, ...]:
    shape = tuple(int(s) for s in shape)
    if len(shape) == 0 or any(s < 1 for s in shape):
        raise ShapeError(f"invalid shape {shape}: need rank >= 1 and every dimension >= 1")
    return shape


def as_tensor(data, shape: Sequence[int] | None = None) -> np.ndarray:
    """Copy ``data`` into a validated float64 tensor, optionally reshaped."""
    arr = np.array(data, dtype=np.float64)
    if shape is not None:
        shape = _check_shape(shape)
        if arr.size != int(np.prod(shape)):
            raise ShapeError(f"{arr.size} elements cannot fill shape {shape}")
        arr = arr.reshape(shape)
    check(arr)
    return arr


def check(t: np.ndarray) -> np.ndarray:
    """Raise if ``t`` violates the tensor invariants; return it unchanged."""
    if not isinstance(t, np.ndarray) or t.dtype != np.float64:
        raise ShapeError("tensor must be a float64 ndarray")
    _check_shape(t.shape)
    if not np.all(np.isfinite(t)):
        raise ValueError("tensor contains NaN or Inf")
    return t


def zeros(shape: Sequence[int]) -> np.ndarray:
    return np.zeros(_check_shape(shape), dtype=np.float64)


def elementwise(op: str, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Apply ``add``, ``sub`` or ``mul`` element by element. Shapes must match exactly."""
    try:
        fn = _OPS[op]
    except KeyError:
        raise ValueError(f"unknown elementwise op {op!r}; expected one of {sorted(_OPS)}") from None
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch {a.shape} vs {b.shape}")
    return check(fn(a, b))


def matvec(w: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Matrix-vector product ``y[r] = sum_c w[r, c] * x[c]``."""
    if w.ndim != 2 or x.ndim != 1:
        raise ShapeError(f"matvec needs rank-2 and rank-1 operands, got {w.shape} and {x.shape}")
    if w.shape[1] != x.shape[0]:
        raise ShapeError(f"inner dimensions disagree: {w.shape} vs {x.shape}")
    # Column-by-column accumulation keeps the summation order of a plain
    # left-to-right loop, so results are reproducible bit for bit.
    y = np.zeros(w.shape[0], dtype=np.float64)
    for c in range(w.shape[1]):
        y += w[:, c] * x[c]
    return check(y)
