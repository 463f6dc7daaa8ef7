"""Rotary position embedding and multi-head attention."""
from __future__ import annotations

from functools import lru_cache

import numpy as np

from ..errors import ConfigError, DimensionError
from ..tensor import Tensor, as_tensor, matmul, reshape, softmax, transpose
from ..tensor.core import _make
from .module import Linear, Module


@lru_cache(maxsize=256)
def _rope_tables(positions: tuple, head_dim: int, base: float, dtype: str):
    pos = np.asarray(positions, dtype=np.float64)
    inv_freq = base ** (-np.arange(0, head_dim, 2, dtype=np.float64) / head_dim)
    angles = pos[:, None] * inv_freq[None, :]
    # [seq, 1, head_dim/2] so the tables broadcast over heads
    cos = np.cos(angles)[:, None, :].astype(dtype)
    sin = np.sin(angles)[:, None, :].astype(dtype)
    return cos, sin


def rope_apply(x, positions, base: float = 10000.0) -> Tensor:
    """Rotate each (even, odd) channel pair by ``pos * base**(-2i/head_dim)``.

    ``x`` has shape [..., seq, heads, head_dim]; ``positions`` has length seq.
    """
    x = as_tensor(x)
    head_dim = x.shape[-1]
    if head_dim % 2:
        raise ConfigError(f"rotary embedding needs an even head_dim, got {head_dim}")
    positions = tuple(float(p) for p in positions)
    if x.ndim < 3 or len(positions) != x.shape[-3]:
        raise DimensionError(f"{len(positions)} positions for input of shape {x.shape}")
    cos, sin = _rope_tables(positions, head_dim, float(base), x.dtype.str)
    xd = x.data
    x0, x1 = xd[..., 0::2], xd[..., 1::2]
    out = np.empty_like(xd)
    out[..., 0::2] = x0 * cos - x1 * sin
    out[..., 1::2] = x0 * sin + x1 * cos

    def bw(g):
        g0, g1 = g[..., 0::2], g[..., 1::2]
        gx = np.empty_like(g)
        gx[..., 0::2] = g0 * cos + g1 * sin
        gx[..., 1::2] = g1 * cos - g0 * sin
        return (gx,)

    return _make(out, (x,), bw, "rope")


def attention(
    q,
    k,
    v,
    positions_q=None,
    positions_kv=None,
    use_rope: bool = True,
    scale: float | None = None,
    base: float = 10000.0,
    return_weights: bool = False,
):
    """Scaled dot-product attention per head.

    Inputs are [B, L, heads, head_dim] (or unbatched [L, heads, head_dim]);
    the output has the query's shape.
    """
    q, k, v = as_tensor(q), as_tensor(k), as_tensor(v)
    if k.shape[-3] != v.shape[-3]:
        raise DimensionError(f"key length {k.shape[-3]} != value length {v.shape[-3]}")
    if q.shape[-1] != k.shape[-1] or q.shape[-2] != k.shape[-2]:
        raise DimensionError(f"query {q.shape} and key {k.shape} disagree on heads/head_dim")
    unbatched = q.ndim == 3
    if unbatched:
        q, k, v = (reshape(t, (1,) + t.shape) for t in (q, k, v))
    head_dim = q.shape[-1]
    if scale is None:
        scale = head_dim**-0.5
    if use_rope:
        pq = range(q.shape[1]) if positions_q is None else positions_q
        pk = range(k.shape[1]) if positions_kv is None else positions_kv
        q = rope_apply(q, pq, base)
        k = rope_apply(k, pk, base)
    qh = transpose(q, (0, 2, 1, 3))
    kt = transpose(k, (0, 2, 3, 1))
    vh = transpose(v, (0, 2, 1, 3))
    weights = softmax(matmul(qh, kt) * scale, axis=-1)
    out = transpose(matmul(weights, vh), (0, 2, 1, 3))
    if unbatched:
        out = reshape(out, out.shape[1:])
        weights = reshape(weights, weights.shape[1:])
    return (out, weights) if return_weights else out


class MultiHeadAttention(Module):
    """Self- or cross-attention with square projections; ``Wo`` starts at zero."""

    def __init__(self, d_model: int, heads: int, rng: np.random.Generator, rope_base: float = 10000.0):
        if d_model % heads:
            raise ConfigError("d_model must be divisible by heads")
        self._heads = heads
        self._base = rope_base
        self.Wq = Linear(d_model, d_model, rng, bias=False).W
        self.Wk = Linear(d_model, d_model, rng, bias=False).W
        self.Wv = Linear(d_model, d_model, rng, bias=False).W
        self.Wo = Linear(d_model, d_model, rng, bias=False, zero=True).W

    def forward(self, x: Tensor, ctx: Tensor | None = None, positions_q=None, positions_kv=None,
                return_weights: bool = False):
        ctx = x if ctx is None else ctx
        B, L, d = x.shape
        Lc = ctx.shape[1]
        h = self._heads
        q = reshape(matmul(x, self.Wq), (B, L, h, d // h))
        k = reshape(matmul(ctx, self.Wk), (B, Lc, h, d // h))
        v = reshape(matmul(ctx, self.Wv), (B, Lc, h, d // h))
        out, w = attention(q, k, v, positions_q, positions_kv, True, None, self._base, return_weights=True)
        y = matmul(reshape(out, (B, L, d)), self.Wo)
        return (y, w) if return_weights else y
