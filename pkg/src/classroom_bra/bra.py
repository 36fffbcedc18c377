"""Bi-level routing attention over an (H, W, C) feature map.

Tokens are split into an S x S grid of regions. Region-level queries and keys
(token means) build a region adjacency matrix; each region keeps its top-k
neighbours and attends, token to token, only to the keys and values gathered
from those regions. A depthwise 3x3 convolution of the values is added as a
local context term.

Single head, one fused qkv projection without bias, no output projection.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np

from .tensor import (
    ShapeError,
    as_tensor,
    bmm,
    depthwise_conv3x3,
    gather_regions,
    matmul,
    mean_axis,
    softmax_lastdim,
    topk_lastdim,
)


class ConfigError(ValueError):
    """Routing configuration is invalid for the given input."""


@dataclass(frozen=True)
class BRAConfig:
    s: int
    """Regions per side; the map is cut into ``s * s`` regions."""
    k: int
    """Number of regions each region attends to."""
    scale_qk: bool = True

    def __post_init__(self):
        if self.s < 1:
            raise ConfigError(f"S must be positive, got {self.s}")
        if not 1 <= self.k <= self.s * self.s:
            raise ConfigError(f"k must lie in [1, S^2={self.s * self.s}], got {self.k}")

    @property
    def n_regions(self) -> int:
        return self.s * self.s

    def check(self, height: int, width: int) -> None:
        if height % self.s:
            raise ConfigError(f"S must divide height (S={self.s}, height={height})")
        if width % self.s:
            raise ConfigError(f"S must divide width (S={self.s}, width={width})")


@dataclass(frozen=True)
class BRAParams:
    w_qkv: np.ndarray
    """(C, 3C); column blocks are the query, key and value projections."""
    lce_kernels: np.ndarray
    """(C, 3, 3) depthwise kernels for the local context term."""

    def __post_init__(self):
        w = as_tensor(self.w_qkv, "w_qkv")
        lce = as_tensor(self.lce_kernels, "lce_kernels")
        if w.ndim != 2 or w.shape[1] != 3 * w.shape[0]:
            raise ShapeError(f"w_qkv must be (C, 3C), got {w.shape}")
        if lce.shape != (w.shape[0], 3, 3):
            raise ShapeError(f"lce_kernels must be ({w.shape[0]}, 3, 3), got {lce.shape}")
        object.__setattr__(self, "w_qkv", w)
        object.__setattr__(self, "lce_kernels", lce)

    @property
    def channels(self) -> int:
        return self.w_qkv.shape[0]


@dataclass(frozen=True)
class RoutingTrace:
    a_r: np.ndarray  # (S^2, S^2) region adjacency
    i_r: np.ndarray  # (S^2, k) routed region indices, best first


def _feature_map(fm) -> np.ndarray:
    fm = as_tensor(fm, "feature map")
    if fm.ndim != 3:
        raise ShapeError(f"feature map must be (H, W, C), got {fm.shape}")
    return fm


def patchify(fm, s: int) -> np.ndarray:
    """(H, W, C) -> (S^2, HW/S^2, C), regions and their pixels both row-major."""
    fm = _feature_map(fm)
    h, w, c = fm.shape
    if s < 1 or h % s or w % s:
        raise ConfigError(f"S={s} must divide height {h} and width {w}")
    ph, pw = h // s, w // s
    return fm.reshape(s, ph, s, pw, c).transpose(0, 2, 1, 3, 4).reshape(s * s, ph * pw, c)


def unpatchify(t, s: int, height: int, width: int) -> np.ndarray:
    t = as_tensor(t)
    if s < 1 or height % s or width % s:
        raise ConfigError(f"S={s} must divide height {height} and width {width}")
    ph, pw = height // s, width // s
    if t.ndim != 3 or t.shape[:2] != (s * s, ph * pw):
        raise ShapeError(
            f"tensor of shape {t.shape} cannot be unpatchified to "
            f"({height}, {width}, C) with S={s}"
        )
    c = t.shape[2]
    return t.reshape(s, s, ph, pw, c).transpose(0, 2, 1, 3, 4).reshape(height, width, c)


def route(query, key, k: int) -> RoutingTrace:
    query = as_tensor(query, "query")
    key = as_tensor(key, "key")
    if query.shape != key.shape or query.ndim != 3:
        raise ShapeError(f"query {query.shape} and key {key.shape} must match as (R, m, C)")
    q_r = mean_axis(query, 1)
    k_r = mean_axis(key, 1)
    a_r = matmul(q_r, k_r.T)
    _, i_r = topk_lastdim(a_r, k)
    return RoutingTrace(a_r=a_r, i_r=i_r)


def project_qkv(tokens: np.ndarray, w_qkv: np.ndarray):
    """Apply the fused projection to (R, m, C) tokens; returns (q, k, v)."""
    r, m, c = tokens.shape
    qkv = matmul(tokens.reshape(r * m, c), w_qkv).reshape(r, m, 3 * c)
    return qkv[..., :c], qkv[..., c:2 * c], qkv[..., 2 * c:]


def routed_attention(tokens, w_qkv, k: int, scale_qk: bool = True, _fault: bool = False):
    """Token-to-token attention restricted to routed regions.

    ``tokens`` is the patchified (S^2, m, C) input. Returns
    ``(out, trace, attn, value)`` where ``out`` is (S^2, m, C) without the
    local context term and ``attn`` is (S^2, m, k*m).
    """
    tokens = as_tensor(tokens, "tokens")
    c = tokens.shape[2]
    query, key, value = project_qkv(tokens, w_qkv)
    trace = route(query, key, k)
    key_g = gather_regions(key, trace.i_r)
    value_g = gather_regions(value, trace.i_r)
    if _fault:
        key_g = -key_g
    logits = bmm(query, key_g.transpose(0, 2, 1))
    if scale_qk:
        logits = logits / np.sqrt(c)
    attn = softmax_lastdim(logits)
    return bmm(attn, value_g), trace, attn, value


def bra_forward(fm, cfg: BRAConfig, params: BRAParams, *, _fault: bool = False):
    """Run one routing attention layer; returns ``(output, trace)``.

    The output has the input's (H, W, C) shape.
    """
    fm = _feature_map(fm)
    h, w, c = fm.shape
    cfg.check(h, w)
    if c != params.channels:
        raise ShapeError(f"feature map has C={c}, params expect C={params.channels}")
    tokens = patchify(fm, cfg.s)
    out, trace, _, value = routed_attention(tokens, params.w_qkv, cfg.k, cfg.scale_qk, _fault)
    lce = depthwise_conv3x3(unpatchify(value, cfg.s, h, w), params.lce_kernels)
    return unpatchify(out, cfg.s, h, w) + lce, trace


def dense_attention_forward(fm, params: BRAParams, scale_qk: bool = True) -> np.ndarray:
    """Full attention over all HW tokens with the same projection and LCE term."""
    fm = _feature_map(fm)
    h, w, c = fm.shape
    if c != params.channels:
        raise ShapeError(f"feature map has C={c}, params expect C={params.channels}")
    tokens = fm.reshape(h * w, c)
    qkv = matmul(tokens, params.w_qkv)
    query, key, value = qkv[:, :c], qkv[:, c:2 * c], qkv[:, 2 * c:]
    logits = matmul(query, key.T)
    if scale_qk:
        logits = logits / np.sqrt(c)
    out = matmul(softmax_lastdim(logits), value)
    lce = depthwise_conv3x3(value.reshape(h, w, c), params.lce_kernels)
    return out.reshape(h, w, c) + lce


class BiLevelRoutingAttention:
    """Layer wrapper: holds config and weights, maps (H, W, C) -> (H, W, C)."""

    def __init__(self, cfg: BRAConfig, params: BRAParams):
        self.cfg = cfg
        self.params = params
        self.last_trace: RoutingTrace | None = None

    def __call__(self, fm) -> np.ndarray:
        out, self.last_trace = bra_forward(fm, self.cfg, self.params)
        return out


@dataclass(frozen=True)
class FlopReport:
    """Multiply-accumulate counts per stage. Softmax and top-k are not counted."""

    qkv: int
    pooling: int
    adjacency: int
    token_to_token: int
    lce: int
    dense_token_to_token: int

    @property
    def total(self) -> int:
        return self.qkv + self.pooling + self.adjacency + self.token_to_token + self.lce

    @property
    def ratio(self) -> Fraction:
        """Routed over dense token-to-token MACs (equals k / S^2)."""
        return Fraction(self.token_to_token, self.dense_token_to_token)


def flops(cfg: BRAConfig, height: int, width: int, channels: int) -> FlopReport:
    cfg.check(height, width)
    hw = height * width
    return FlopReport(
        qkv=3 * hw * channels * channels,
        pooling=2 * hw * channels,
        adjacency=cfg.s ** 4 * channels,
        token_to_token=2 * hw * (cfg.k * hw // cfg.n_regions) * channels,
        lce=9 * hw * channels,
        dense_token_to_token=2 * hw * hw * channels,
    )


# Parameter snapshot layout (little endian):
#   8 bytes  magic b"BRAPARM1"
#   4 x int32  C, S, k, scale_qk (0/1)
#   C*3C float64  w_qkv, row-major
#   C*9 float64   lce_kernels, row-major (C, 3, 3)
_MAGIC = b"BRAPARM1"
_HEADER = struct.Struct("<8s4i")


def save_params(path, cfg: BRAConfig, params: BRAParams) -> None:
    c = params.channels
    header = _HEADER.pack(_MAGIC, c, cfg.s, cfg.k, int(cfg.scale_qk))
    body = (
        params.w_qkv.astype("<f8").tobytes(order="C")
        + params.lce_kernels.astype("<f8").tobytes(order="C")
    )
    Path(path).write_bytes(header + body)


def load_params(path) -> tuple[BRAConfig, BRAParams]:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise ValueError(f"{path}: truncated parameter snapshot header")
    magic, c, s, k, scale = _HEADER.unpack_from(raw)
    if magic != _MAGIC:
        raise ValueError(f"{path}: not a parameter snapshot (bad magic {magic!r})")
    n_w, n_l = c * 3 * c, c * 9
    expected = _HEADER.size + 8 * (n_w + n_l)
    if c < 1 or len(raw) != expected:
        raise ValueError(f"{path}: expected {expected} bytes for C={c}, found {len(raw)}")
    data = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size).astype(np.float64)
    params = BRAParams(
        w_qkv=data[:n_w].reshape(c, 3 * c),
        lce_kernels=data[n_w:].reshape(c, 3, 3),
    )
    return BRAConfig(s=s, k=k, scale_qk=bool(scale)), params
