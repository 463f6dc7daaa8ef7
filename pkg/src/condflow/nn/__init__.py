from .attention import MultiHeadAttention, attention, rope_apply
from .config import CONCAT_AXES, ROUTES, VARIANTS, ModelConfig
from .dit import DiTBlock, MLP, TimestepEmbedding, dit_block_forward, sinusoidal_features
from .module import LayerNorm, Linear, Module

__all__ = [
    "CONCAT_AXES", "DiTBlock", "LayerNorm", "Linear", "MLP", "ModelConfig", "Module",
    "MultiHeadAttention", "ROUTES", "TimestepEmbedding", "VARIANTS", "attention",
    "dit_block_forward", "rope_apply", "sinusoidal_features",
]
