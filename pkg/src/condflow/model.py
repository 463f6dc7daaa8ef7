"""Velocity-field model: input assembly, DiT stack, output projection."""
from __future__ import annotations

import numpy as np

from .conditioning import ConditionBundle, ConditionRouter
from .errors import DimensionError
from .nn.config import ModelConfig
from .nn.dit import DiTBlock, TimestepEmbedding
from .nn.module import Linear, Module
from .tensor import Tensor, as_tensor, concat


class VelocityModel(Module):
    """Predicts dx/dt for a noisy latent given time and conditions.

    Input sequence layout (before the blocks)::

        [timestep token | speaker prefix? | sequence-mode condition tokens? | T_a latent tokens]

    Prefix tokens are dropped before the output projection, so the output is
    always [T_a, D_a] (or [B, T_a, D_a]).
    """

    def __init__(self, config: ModelConfig, seed: int = 0):
        self.config = config
        rng = np.random.default_rng(seed)
        d = config.d_model
        self.in_proj = Linear(config.in_channels, d, rng)
        self.time_embed = TimestepEmbedding(config.t_freq_dim, d, rng)
        self.router = ConditionRouter(config, rng)
        blocks = []
        for i in range(config.depth):
            block = DiTBlock(d, config.heads, rng, cross=config.has_cross,
                             mlp_ratio=config.mlp_ratio, rope_base=config.rope_base)
            setattr(self, f"block{i}", block)
            blocks.append(block)
        self._blocks = tuple(blocks)
        self.out_proj = Linear(d, config.D_a, rng)

    @property
    def blocks(self) -> tuple:
        return self._blocks

    @property
    def dtype(self):
        return self.out_proj.W.dtype

    def embed_inputs(self, x_t, t, bundle: ConditionBundle):
        """Build the token sequence, positions and cross context (steps 1-2)."""
        cfg = self.config
        dtype = self.dtype
        x = x_t if isinstance(x_t, Tensor) else as_tensor(np.asarray(x_t, dtype=dtype))
        if x.ndim == 2:
            x = x.reshape((1,) + x.shape)
        if x.ndim != 3 or x.shape[1:] != (cfg.T_a, cfg.D_a):
            raise DimensionError(f"x_t must be [B, {cfg.T_a}, {cfg.D_a}], got {x.shape}")
        B = x.shape[0]
        bundle = bundle.as_batch()
        if bundle.batch_size != B:
            raise DimensionError(f"bundle batch {bundle.batch_size} != latent batch {B}")
        t = np.broadcast_to(np.asarray(t, dtype=np.float64), (B,))

        asm = self.router(bundle, dtype)
        h = x
        if asm.in_context is not None and cfg.concat_axis == "channel":
            h = concat([x, asm.in_context], axis=-1)
        h = self.in_proj(h)

        temb = self.time_embed(t).reshape(B, 1, cfg.d_model)
        tokens = [temb] + asm.prefixes
        positions = [0] * len(tokens)
        if asm.in_context is not None and cfg.concat_axis == "sequence":
            tokens.append(asm.in_context)
            positions.extend(asm.in_context_positions)
        tokens.append(h)
        positions.extend(range(cfg.T_a))
        return concat(tokens, axis=1), positions, asm

    def forward(self, x_t, t, bundle: ConditionBundle) -> Tensor:
        unbatched = np.ndim(x_t.data if isinstance(x_t, Tensor) else x_t) == 2
        h, positions, asm = self.embed_inputs(x_t, t, bundle)
        for block in self._blocks:
            h = block(h, asm.cross_ctx, positions, asm.cross_positions)
        n_prefix = h.shape[1] - self.config.T_a
        out = self.out_proj(h[:, n_prefix:, :])
        return out.reshape(out.shape[1:]) if unbatched else out


def model_forward(x_t, t, bundle: ConditionBundle, model: VelocityModel) -> Tensor:
    return model(x_t, t, bundle)
