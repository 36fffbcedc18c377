"""Small deterministic tensor primitives used by the routing attention layer.

Tensors are plain ``numpy.ndarray`` objects in float64. The products here
accumulate left to right over the inner dimension with separate multiply and
add steps, so results do not depend on the BLAS build and match a naive
triple loop bit for bit.
"""
from __future__ import annotations

import numpy as np


class ShapeError(ValueError):
    """Operand shapes are incompatible with the requested operation."""


class NonFiniteError(ValueError):
    """A tensor holds NaN or Inf."""


def as_tensor(x, name: str = "tensor") -> np.ndarray:
    t = np.asarray(x, dtype=np.float64)
    if t.ndim == 0:
        raise ShapeError(f"{name} must have at least one dimension")
    if not np.all(np.isfinite(t)):
        raise NonFiniteError(f"{name} contains non-finite values")
    return t


def _finite(t: np.ndarray, op: str) -> np.ndarray:
    if not np.all(np.isfinite(t)):
        raise NonFiniteError(f"{op} produced non-finite values")
    return t


def matmul(a, b) -> np.ndarray:
    """Matrix product ``a @ b`` for 2-D operands."""
    a = as_tensor(a, "a")
    b = as_tensor(b, "b")
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    return _finite(_accumulate(a[None], b[None])[0], "matmul")


def bmm(a, b) -> np.ndarray:
    """Batched matrix product over the leading axis: (b,m,p) x (b,p,n)."""
    a = as_tensor(a, "a")
    b = as_tensor(b, "b")
    if a.ndim != 3 or b.ndim != 3:
        raise ShapeError(f"bmm expects 3-D operands, got {a.shape} and {b.shape}")
    if a.shape[0] != b.shape[0]:
        raise ShapeError(f"bmm batch mismatch: {a.shape} x {b.shape}")
    if a.shape[2] != b.shape[1]:
        raise ShapeError(f"bmm inner dimension mismatch: {a.shape} x {b.shape}")
    return _finite(_accumulate(a, b), "bmm")


def _accumulate(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # out[:, i, j] = ((0 + a0*b0) + a1*b1) + ... in that exact order
    out = np.zeros((a.shape[0], a.shape[1], b.shape[2]), dtype=np.float64)
    for p in range(a.shape[2]):
        out += a[:, :, p, None] * b[:, None, p, :]
    return out


def softmax_lastdim(t) -> np.ndarray:
    t = as_tensor(t)
    if t.shape[-1] < 1:
        raise ShapeError("softmax over an empty last dimension")
    e = np.exp(t - t.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def mean_axis(t, axis: int) -> np.ndarray:
    t = as_tensor(t)
    if not -t.ndim <= axis < t.ndim:
        raise ShapeError(f"axis {axis} out of range for shape {t.shape}")
    return t.sum(axis=axis) / t.shape[axis]


def topk_lastdim(t, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Top-``k`` entries along the last axis.

    Rows are ordered by descending value; equal values keep ascending index
    order. Returns ``(values, indices)``.
    """
    t = as_tensor(t)
    n = t.shape[-1]
    if not 1 <= k <= n:
        raise ValueError(f"k={k} out of range [1, {n}]")
    order = np.argsort(-t, axis=-1, kind="stable")[..., :k]
    return np.take_along_axis(t, order, axis=-1), order


def gather_regions(t, idx) -> np.ndarray:
    """Concatenate, for each region r, the token blocks of regions ``idx[r]``.

    ``t`` is (R, m, C) and ``idx`` is (R, k); the result is (R, k*m, C).
    """
    t = as_tensor(t)
    idx = np.asarray(idx)
    if t.ndim != 3:
        raise ShapeError(f"gather_regions expects (R, m, C), got {t.shape}")
    if idx.ndim != 2 or idx.shape[0] != t.shape[0]:
        raise ShapeError(f"index shape {idx.shape} does not match regions {t.shape}")
    if idx.size and (idx.min() < 0 or idx.max() >= t.shape[0]):
        raise IndexError(f"region index out of range [0, {t.shape[0]})")
    r, k = idx.shape
    return t[idx.astype(np.intp)].reshape(r, k * t.shape[1], t.shape[2])


def depthwise_conv3x3(fm, kernels) -> np.ndarray:
    """Per-channel 3x3 cross-correlation, stride 1, zero padding 1.

    ``fm`` is (H, W, C), ``kernels`` is (C, 3, 3); output keeps (H, W, C).
    """
    fm = as_tensor(fm, "feature map")
    kernels = as_tensor(kernels, "kernels")
    if fm.ndim != 3:
        raise ShapeError(f"feature map must be (H, W, C), got {fm.shape}")
    h, w, c = fm.shape
    if kernels.shape != (c, 3, 3):
        raise ShapeError(f"kernels must be ({c}, 3, 3), got {kernels.shape}")
    padded = np.pad(fm, ((1, 1), (1, 1), (0, 0)))
    out = np.zeros_like(fm)
    for di in range(3):
        for dj in range(3):
            out += kernels[:, di, dj] * padded[di:di + h, dj:dj + w, :]
    return _finite(out, "depthwise_conv3x3")
