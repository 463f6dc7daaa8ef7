"""Transformer block and timestep embedding of the velocity model."""
from __future__ import annotations

import numpy as np

from ..errors import ConfigError
from ..tensor import Tensor, as_tensor, gelu

from .attention import MultiHeadAttention
from .module import LayerNorm, Linear, Module


def sinusoidal_features(t, dim: int, max_period: float = 10000.0, t_scale: float = 1000.0) -> np.ndarray:
    """[cos | sin] features of ``t * t_scale`` at geometrically spaced frequencies."""
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    half = dim // 2
    freqs = np.exp(-np.log(max_period) * np.arange(half) / half)
    args = t[:, None] * t_scale * freqs[None, :]
    return np.concatenate([np.cos(args), np.sin(args)], axis=-1)


class TimestepEmbedding(Module):
    """Sinusoidal table followed by a two-layer MLP; one d_model vector per t."""

    def __init__(self, freq_dim: int, d_model: int, rng: np.random.Generator):
        self._freq_dim = freq_dim
        self.fc1 = Linear(freq_dim, d_model, rng)
        self.fc2 = Linear(d_model, d_model, rng)

    def forward(self, t) -> Tensor:
        dtype = self.fc1.W.dtype
        feats = as_tensor(sinusoidal_features(t, self._freq_dim).astype(dtype))
        return self.fc2(gelu(self.fc1(feats)))


class MLP(Module):
    def __init__(self, d_model: int, hidden: int, rng: np.random.Generator):
        self.fc1 = Linear(d_model, hidden, rng)
        self.fc2 = Linear(hidden, d_model, rng, zero=True)

    def forward(self, x: Tensor) -> Tensor:
        return self.fc2(gelu(self.fc1(x)))


class DiTBlock(Module):
    """Pre-norm residual block: self-attention, optional cross-attention, MLP.

    Both attentions apply rotary embedding to queries and keys; latent tokens
    use their frame index, prefix tokens use 0, and cross-attention keys use
    the condition's own frame indices.
    """

    def __init__(self, d_model: int, heads: int, rng: np.random.Generator, cross: bool,
                 mlp_ratio: int = 4, rope_base: float = 10000.0):
        self._cross = cross
        self.norm1 = LayerNorm(d_model)
        self.self = MultiHeadAttention(d_model, heads, rng, rope_base)
        if cross:
            self.norm2 = LayerNorm(d_model)
            self.cross = MultiHeadAttention(d_model, heads, rng, rope_base)
        self.norm3 = LayerNorm(d_model)
        self.mlp = MLP(d_model, mlp_ratio * d_model, rng)

    @property
    def has_cross(self) -> bool:
        return self._cross

    def forward(self, x: Tensor, cross_ctx: Tensor | None, positions, cross_positions=None) -> Tensor:
        if self._cross and cross_ctx is None:
            raise ConfigError("block has cross-attention but no cross context was given")
        if not self._cross and cross_ctx is not None:
            raise ConfigError("block has no cross-attention but a cross context was given")
        x = x + self.self(self.norm1(x), None, positions, positions)
        if self._cross:
            x = x + self.cross(self.norm2(x), cross_ctx, positions, cross_positions)
        return x + self.mlp(self.norm3(x))


def dit_block_forward(block: DiTBlock, x, cross_ctx, positions, cross_positions=None) -> Tensor:
    """Functional entry point; accepts unbatched [L, d] inputs as well."""
    x = as_tensor(x)
    unbatched = x.ndim == 2
    if unbatched:
        x = x.reshape((1,) + x.shape)
        if cross_ctx is not None:
            cross_ctx = as_tensor(cross_ctx)
            cross_ctx = cross_ctx.reshape((1,) + cross_ctx.shape)
    out = block(x, cross_ctx, positions, cross_positions)
    return out.reshape(out.shape[1:]) if unbatched else out


__all__ = ["DiTBlock", "MLP", "TimestepEmbedding", "dit_block_forward", "sinusoidal_features"]
