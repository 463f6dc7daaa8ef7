"""Frame-aligned condition features and their routing into the backbone."""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .errors import AlignmentError, ConfigError, ContractError, DimensionError, EmptyInputError
from .nn.config import ModelConfig
from .nn.module import Linear, Module
from .tensor import Tensor, as_tensor, concat

TASKS = ("V2S", "VisualTTS", "TTS", "MIX")


@dataclass(frozen=True)
class PhonemeTrack:
    """Token ids with per-token frame durations, starting at frame ``offset``."""

    tokens: tuple
    durations: tuple
    offset: int = 0

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(int(t) for t in self.tokens))
        object.__setattr__(self, "durations", tuple(int(d) for d in self.durations))
        if len(self.tokens) != len(self.durations):
            raise ContractError(f"{len(self.tokens)} tokens but {len(self.durations)} durations")
        if any(d < 1 for d in self.durations):
            raise ContractError("durations must be positive frame counts")
        if self.offset < 0:
            raise ContractError("offset must be non-negative")

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def end(self) -> int:
        return self.offset + sum(self.durations)

    def windows(self) -> list[tuple[int, int]]:
        """Half-open frame interval of every token."""
        out, start = [], self.offset
        for d in self.durations:
            out.append((start, start + d))
            start += d
        return out


def interpolate_video(raw, T_a: int) -> np.ndarray:
    """Linearly resample [T_v, D_v] features onto T_a frames spanning [0, T_v - 1]."""
    raw = np.asarray(raw)
    if raw.ndim != 2:
        raise DimensionError(f"video features must be [T_v, D_v], got {raw.shape}")
    T_v = raw.shape[0]
    if T_v == 0:
        raise EmptyInputError("video has no frames")
    if T_a < 1:
        raise ContractError("T_a must be >= 1")
    if T_v == T_a:
        return raw.copy()
    if T_v == 1:
        return np.repeat(raw, T_a, axis=0)
    pos = np.linspace(0.0, T_v - 1, T_a)
    lo = np.minimum(np.floor(pos).astype(int), T_v - 2)
    frac = (pos - lo)[:, None]
    return (raw[lo] * (1.0 - frac) + raw[lo + 1] * frac).astype(raw.dtype)


def expand_phonemes(track: PhonemeTrack | None, embedding_table, T_a: int) -> np.ndarray:
    """Repeat each token's embedding for its duration; zero elsewhere."""
    table = np.asarray(embedding_table)
    out = np.zeros((T_a, table.shape[1]), dtype=table.dtype)
    if track is None or len(track) == 0:
        return out
    if track.end > T_a:
        raise AlignmentError(f"track ends at frame {track.end} but T_a={T_a}")
    if min(track.tokens) < 0 or max(track.tokens) >= table.shape[0]:
        raise AlignmentError("token id outside the embedding vocabulary")
    for tok, (lo, hi) in zip(track.tokens, track.windows()):
        out[lo:hi] = table[tok]
    return out


@dataclass
class ConditionBundle:
    """Per-sample (or stacked batch) conditioning state.

    ``video`` is [T_a, D_v], ``phoneme`` is [T_a, D_p], ``speaker`` is
    [1, D_v] or None; batched bundles carry a leading batch axis and boolean
    flag arrays.  A set null flag forces the matching tensor to zeros.
    """

    video: np.ndarray
    phoneme: np.ndarray
    speaker: np.ndarray | None = None
    video_null: bool | np.ndarray = False
    phoneme_null: bool | np.ndarray = False

    def __post_init__(self):
        self.video = np.asarray(self.video)
        self.phoneme = np.asarray(self.phoneme)
        if self.video.ndim != self.phoneme.ndim or self.video.ndim not in (2, 3):
            raise DimensionError(f"video {self.video.shape} / phoneme {self.phoneme.shape} ranks differ")
        if self.video.shape[:-1] != self.phoneme.shape[:-1]:
            raise AlignmentError(f"video {self.video.shape} and phoneme {self.phoneme.shape} are not frame-aligned")
        if self.batched:
            B = self.video.shape[0]
            self.video_null = np.broadcast_to(np.asarray(self.video_null, bool), (B,)).copy()
            self.phoneme_null = np.broadcast_to(np.asarray(self.phoneme_null, bool), (B,)).copy()
            if self.video_null.any() or self.phoneme_null.any():
                self.video = self.video.copy()
                self.phoneme = self.phoneme.copy()
                self.video[self.video_null] = 0.0
                self.phoneme[self.phoneme_null] = 0.0
        else:
            self.video_null = bool(self.video_null)
            self.phoneme_null = bool(self.phoneme_null)
            if self.video_null:
                self.video = np.zeros_like(self.video)
            if self.phoneme_null:
                self.phoneme = np.zeros_like(self.phoneme)
        if self.speaker is not None:
            self.speaker = np.asarray(self.speaker)
            expect = (self.video.shape[0], 1) if self.batched else (1,)
            if self.speaker.shape[:-1] != expect:
                raise DimensionError(f"speaker shape {self.speaker.shape} does not match bundle")

    @property
    def batched(self) -> bool:
        return self.video.ndim == 3

    @property
    def batch_size(self) -> int:
        return self.video.shape[0] if self.batched else 1

    @property
    def T_a(self) -> int:
        return self.video.shape[-2]

    def nulled(self, video: bool = True, phoneme: bool = True) -> "ConditionBundle":
        """Copy with the chosen conditions replaced by the null condition."""
        return replace(
            self,
            video_null=np.logical_or(self.video_null, video) if self.batched else (self.video_null or video),
            phoneme_null=np.logical_or(self.phoneme_null, phoneme) if self.batched else (self.phoneme_null or phoneme),
        )

    def as_batch(self) -> "ConditionBundle":
        if self.batched:
            return self
        return ConditionBundle(
            self.video[None], self.phoneme[None],
            None if self.speaker is None else self.speaker[None],
            np.array([self.video_null]), np.array([self.phoneme_null]),
        )


def stack_bundles(bundles: list[ConditionBundle]) -> ConditionBundle:
    if not bundles:
        raise EmptyInputError("no bundles to stack")
    speaker = None
    if any(b.speaker is not None for b in bundles):
        D_v = next(b.speaker for b in bundles if b.speaker is not None).shape[-1]
        speaker = np.stack([
            b.speaker if b.speaker is not None else np.zeros((1, D_v), dtype=b.video.dtype) for b in bundles
        ])
    return ConditionBundle(
        np.stack([b.video for b in bundles]),
        np.stack([b.phoneme for b in bundles]),
        speaker,
        np.array([b.video_null for b in bundles]),
        np.array([b.phoneme_null for b in bundles]),
    )


def drop_conditions(bundle: ConditionBundle, p_v: float, p_p: float, rng: np.random.Generator) -> ConditionBundle:
    """Independently null video with prob. ``p_v`` and phonemes with prob. ``p_p``."""
    for name, p in (("p_v", p_v), ("p_p", p_p)):
        if not 0.0 <= p <= 1.0:
            raise ContractError(f"{name} must be in [0, 1], got {p}")
    u = rng.random((bundle.batch_size, 2))
    drop_v, drop_p = u[:, 0] < p_v, u[:, 1] < p_p
    if not bundle.batched:
        drop_v, drop_p = bool(drop_v[0]), bool(drop_p[0])
    if not np.any(drop_v) and not np.any(drop_p):
        return bundle
    return bundle.nulled(video=drop_v, phoneme=drop_p)


def _codebook(n: int, dim: int, rng: np.random.Generator) -> np.ndarray:
    if n <= dim:
        q, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
        return q[:n].astype(np.float32)
    rows = rng.standard_normal((n, dim))
    return (rows / np.linalg.norm(rows, axis=1, keepdims=True)).astype(np.float32)


class ConditionEncoder(BaseEstimator, TransformerMixin):
    """Turn synthetic samples into frame-aligned condition bundles.

    Phoneme embeddings and speaker embeddings come from fixed seeded
    codebooks (stand-ins for pretrained encoders).  Task masks are applied
    here: V2S samples get a null phoneme condition, TTS samples a null video
    condition.
    """

    def __init__(self, T_a: int = 64, D_v: int = 16, D_p: int = 8, vocab: int = 8,
                 n_speakers: int = 4, seed: int = 0):
        self.T_a = T_a
        self.D_v = D_v
        self.D_p = D_p
        self.vocab = vocab
        self.n_speakers = n_speakers
        self.seed = seed

    def fit(self, X=None, y=None):
        rng = np.random.default_rng([self.seed, 7])
        self.phoneme_table_ = _codebook(self.vocab, self.D_p, rng)
        self.speaker_table_ = (rng.standard_normal((max(self.n_speakers, 1), self.D_v)) / np.sqrt(self.D_v)).astype(
            np.float32
        )
        return self

    def _tables(self):
        if not hasattr(self, "phoneme_table_"):
            self.fit()
        return self.phoneme_table_, self.speaker_table_

    def encode(self, sample) -> ConditionBundle:
        phon_table, spk_table = self._tables()
        video = interpolate_video(np.asarray(sample.video_raw, dtype=np.float32), self.T_a)
        if video.shape[1] != self.D_v:
            raise DimensionError(f"video feature dim {video.shape[1]} != D_v={self.D_v}")
        phoneme = expand_phonemes(sample.track, phon_table, self.T_a)
        speaker = None
        if getattr(sample, "speaker_id", None) is not None:
            speaker = spk_table[int(sample.speaker_id) % len(spk_table)][None, :]
        task = sample.task
        if task not in TASKS:
            raise ConfigError(f"unknown task {task!r}")
        return ConditionBundle(
            video, phoneme, speaker,
            video_null=(task == "TTS"),
            phoneme_null=(task == "V2S"),
        )

    def transform(self, X) -> ConditionBundle:
        return stack_bundles([self.encode(s) for s in X])


@dataclass
class AssembledConditions:
    cross_ctx: Tensor | None = None
    cross_positions: list | None = None
    in_context: Tensor | None = None
    in_context_positions: list = field(default_factory=list)
    prefixes: list = field(default_factory=list)


class ConditionRouter(Module):
    """Learned projections that route each condition per aggregation variant.

    CrossV   : video -> cross-attention, phonemes -> in-context
    CrossVS  : video and phonemes -> cross-attention
    ConcatV  : phonemes -> cross-attention, video -> in-context
    ConcatVS : video and phonemes -> in-context

    In-context features are concatenated with the latent channels before the
    input projection (``concat_axis="channel"``) or projected into extra
    frame-indexed tokens (``"sequence"``).  The speaker embedding follows the
    video route: first row of the cross context, or a sequence prefix token.
    """

    def __init__(self, config: ModelConfig, rng: np.random.Generator):
        self._config = config
        d = config.d_model
        if config.video_route == "cross":
            self.video_proj = Linear(config.D_v, d, rng)
        if config.phoneme_route == "cross":
            self.phoneme_proj = Linear(config.D_p, d, rng)
        if config.concat_axis == "sequence":
            if config.video_route == "context":
                self.video_seq_proj = Linear(config.D_v, d, rng)
            if config.phoneme_route == "context":
                self.phoneme_seq_proj = Linear(config.D_p, d, rng)
        if config.use_speaker:
            self.speaker_proj = Linear(config.D_v, d, rng)

    def forward(self, bundle: ConditionBundle, dtype=np.float32) -> AssembledConditions:
        cfg = self._config
        bundle = bundle.as_batch()
        if bundle.video.shape[-1] != cfg.D_v or bundle.phoneme.shape[-1] != cfg.D_p:
            raise ConfigError(
                f"bundle dims (D_v={bundle.video.shape[-1]}, D_p={bundle.phoneme.shape[-1]}) "
                f"do not match config (D_v={cfg.D_v}, D_p={cfg.D_p})"
            )
        if bundle.T_a != cfg.T_a:
            raise AlignmentError(f"bundle has {bundle.T_a} frames, config expects T_a={cfg.T_a}")
        B, T = bundle.batch_size, cfg.T_a
        frames = list(range(T))
        video = as_tensor(bundle.video.astype(dtype, copy=False))
        phoneme = as_tensor(bundle.phoneme.astype(dtype, copy=False))
        out = AssembledConditions()

        speaker_tok = None
        if cfg.use_speaker:
            spk = bundle.speaker if bundle.speaker is not None else np.zeros((B, 1, cfg.D_v))
            speaker_tok = self.speaker_proj(as_tensor(spk.astype(dtype, copy=False)))

        cross, cross_pos = [], []
        if cfg.video_route == "cross":
            if speaker_tok is not None:
                cross.append(speaker_tok)
                cross_pos.append(0)
            cross.append(self.video_proj(video))
            cross_pos.extend(frames)
        elif speaker_tok is not None:
            out.prefixes.append(speaker_tok)
        if cfg.phoneme_route == "cross":
            cross.append(self.phoneme_proj(phoneme))
            cross_pos.extend(frames)
        if cross:
            out.cross_ctx = cross[0] if len(cross) == 1 else concat(cross, axis=1)
            out.cross_positions = cross_pos

        ctx_feats = []
        if cfg.video_route == "context":
            ctx_feats.append(("video", video))
        if cfg.phoneme_route == "context":
            ctx_feats.append(("phoneme", phoneme))
        if ctx_feats:
            if cfg.concat_axis == "channel":
                feats = [f for _, f in ctx_feats]
                out.in_context = feats[0] if len(feats) == 1 else concat(feats, axis=-1)
            else:
                toks = [getattr(self, f"{name}_seq_proj")(f) for name, f in ctx_feats]
                out.in_context = toks[0] if len(toks) == 1 else concat(toks, axis=1)
                out.in_context_positions = frames * len(toks)
        return out


def assemble_conditions(bundle: ConditionBundle, config: ModelConfig, router: ConditionRouter) -> AssembledConditions:
    if router._config != config:
        raise ConfigError("router was built for a different config")
    return router(bundle)
