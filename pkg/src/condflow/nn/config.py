"""Architecture hyperparameters."""
from __future__ import annotations

from dataclasses import asdict, dataclass, fields

from ..errors import ConfigError

VARIANTS = ("CrossV", "CrossVS", "ConcatV", "ConcatVS")
CONCAT_AXES = ("channel", "sequence")

# Where each condition enters the backbone: "cross" (cross-attention keys and
# values) or "context" (concatenated with the noisy latent).
ROUTES = {
    "CrossV": {"video": "cross", "phoneme": "context"},
    "CrossVS": {"video": "cross", "phoneme": "cross"},
    "ConcatV": {"video": "context", "phoneme": "cross"},
    "ConcatVS": {"video": "context", "phoneme": "context"},
}


@dataclass(frozen=True)
class ModelConfig:
    variant: str = "CrossV"
    depth: int = 4
    d_model: int = 128
    heads: int = 4
    T_a: int = 64
    D_a: int = 8
    D_v: int = 16
    D_p: int = 8
    concat_axis: str = "channel"
    rope_base: float = 10000.0
    mlp_ratio: int = 4
    t_freq_dim: int = 32
    use_speaker: bool = True

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        for f in fields(self):
            value = getattr(self, f.name)
            expected = {"int": int, "float": (int, float), "str": str, "bool": bool}[f.type]
            if not isinstance(value, expected) or (f.type == "int" and isinstance(value, bool)):
                raise ConfigError(f"{f.name} must be {f.type}, got {value!r}")
        if self.variant not in VARIANTS:
            raise ConfigError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.concat_axis not in CONCAT_AXES:
            raise ConfigError(f"concat_axis must be one of {CONCAT_AXES}, got {self.concat_axis!r}")
        for name in ("depth", "d_model", "heads", "T_a", "D_a", "D_v", "D_p", "mlp_ratio", "t_freq_dim"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.d_model % self.heads:
            raise ConfigError(f"d_model={self.d_model} is not divisible by heads={self.heads}")
        if self.head_dim % 2:
            raise ConfigError(f"head_dim={self.head_dim} must be even for rotary embedding")
        if self.t_freq_dim % 2:
            raise ConfigError("t_freq_dim must be even")
        if self.rope_base <= 0:
            raise ConfigError("rope_base must be positive")

    @property
    def head_dim(self) -> int:
        return self.d_model // self.heads

    @property
    def video_route(self) -> str:
        return ROUTES[self.variant]["video"]

    @property
    def phoneme_route(self) -> str:
        return ROUTES[self.variant]["phoneme"]

    @property
    def has_cross(self) -> bool:
        return "cross" in ROUTES[self.variant].values()

    @property
    def in_channels(self) -> int:
        """Channels entering the input projection."""
        ch = self.D_a
        if self.concat_axis == "channel":
            if self.video_route == "context":
                ch += self.D_v
            if self.phoneme_route == "context":
                ch += self.D_p
        return ch

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown model fields: {sorted(unknown)}")
        return cls(**d)
