"""Synthetic (video, transcript, latent) triples with planted ground truth.

Latent channels are split into a "sound" subspace and a "speech" subspace
(think of two disjoint frequency bands), so sound events and speech tokens
can be overlaid and still be decoded exactly by the matched-filter oracles.

* Sound events: a class-specific unit channel vector, placed at the event
  frame and decaying over ``window`` frames.
* Speech tokens: a token-specific unit channel vector held for the token's
  duration, scaled by a per-speaker amplitude.
* Video: low frame-rate features (``T_v`` < ``T_a``).  Sound clips mark each
  event with a class-coded bump at the nearest video frame, so the exact
  onset is ambiguous within a video frame; talking clips mark token onsets
  on a lip channel.  Every clip also carries a per-clip scene vector that
  has no bearing on the audio.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from .conditioning import PhonemeTrack, interpolate_video
from .errors import ConfigError, ContractError, DensityError

TASKS = ("V2S", "VisualTTS", "TTS", "MIX")


@dataclass(frozen=True)
class DataConfig:
    T_a: int = 64
    D_a: int = 8
    T_v: int = 16
    D_v: int = 16
    n_classes: int = 4
    vocab: int = 8
    n_speakers: int = 4
    window: int = 4
    decay: float = 1.5
    noise: float = 0.05
    video_noise: float = 0.05
    scene_scale: float = 0.5
    events: tuple = (1, 3)
    tokens: tuple = (6, 12)
    min_duration: int = 2
    max_duration: int = 6
    pattern_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "events", tuple(self.events))
        object.__setattr__(self, "tokens", tuple(self.tokens))
        if self.D_a < 2:
            raise ConfigError("D_a must be >= 2 (sound and speech subspaces)")
        if self.vocab < 2 or self.n_classes < 1:
            raise ConfigError("vocab must be >= 2 and n_classes >= 1")
        if not 1 <= self.min_duration <= self.max_duration:
            raise ConfigError("invalid duration range")
        if self.T_v < 1 or self.T_a < self.window or self.window < 1:
            raise ConfigError("invalid frame counts")

    @property
    def speech_dims(self) -> int:
        return self.D_a - self.D_a // 2

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "DataConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown data fields: {sorted(unknown)}")
        return cls(**d)


def _signed_basis(n: int, dims: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` unit vectors in R^dims: orthonormal, then a rotated +/- basis, then random."""
    q, _ = np.linalg.qr(rng.standard_normal((dims, dims)))
    if n <= dims:
        return q[:n]
    if n <= 2 * dims:
        return np.array([q[i // 2] * (1.0 if i % 2 == 0 else -1.0) for i in range(n)])
    rows = rng.standard_normal((n, dims))
    return rows / np.linalg.norm(rows, axis=1, keepdims=True)


@dataclass
class PatternDictionary:
    """Seeded class/token patterns shared by generators and oracles."""

    sound: np.ndarray  # [n_classes, D_a]
    tokens: np.ndarray  # [vocab, D_a]
    envelope: np.ndarray  # [window]
    video_codes: np.ndarray  # [n_classes, D_v]
    lip_code: np.ndarray  # [D_v]
    speaker_amp: np.ndarray  # [n_speakers]
    seed: int = 0

    @classmethod
    def build(cls, cfg: DataConfig) -> "PatternDictionary":
        rng = np.random.default_rng([cfg.pattern_seed, 1])
        n_sound = cfg.D_a // 2
        sound = np.zeros((cfg.n_classes, cfg.D_a))
        sound[:, cfg.speech_dims:] = _signed_basis(cfg.n_classes, n_sound, rng)
        tokens = np.zeros((cfg.vocab, cfg.D_a))
        tokens[:, : cfg.speech_dims] = _signed_basis(cfg.vocab, cfg.speech_dims, rng)
        envelope = np.exp(-np.arange(cfg.window) / cfg.decay)
        codes = _signed_basis(cfg.n_classes + 1, cfg.D_v, rng)
        amp = np.linspace(0.6, 1.4, cfg.n_speakers) if cfg.n_speakers > 1 else np.ones(1)
        amp = amp[rng.permutation(len(amp))]
        return cls(sound, tokens, envelope, codes[:-1], codes[-1], amp, cfg.pattern_seed)


@dataclass
class SyntheticSample:
    task: str
    video_raw: np.ndarray
    latent: np.ndarray
    track: PhonemeTrack | None = None
    speaker_id: int | None = None
    event_times: tuple = ()
    event_classes: tuple = ()
    rng_seed: int | None = None

    def __post_init__(self):
        if self.task not in TASKS:
            raise ConfigError(f"unknown task {self.task!r}")
        times = tuple(int(e) for e in self.event_times)
        self.event_times = times
        self.event_classes = tuple(int(c) for c in self.event_classes)
        if len(times) != len(self.event_classes):
            raise ContractError("event_times and event_classes differ in length")
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ContractError("event_times must be strictly increasing")
        T_a = self.latent.shape[0]
        if times and (times[0] < 0 or times[-1] >= T_a):
            raise ContractError("event_times outside [0, T_a)")
        if self.task == "V2S" and self.track is not None:
            raise ContractError("V2S samples carry no transcript")
        if self.task == "TTS" and np.any(self.video_raw):
            raise ContractError("TTS samples carry no video")
        if not np.isfinite(self.latent).all():
            raise ContractError("latent must be finite")


def _video_frame(frame: float, cfg: DataConfig, T_v: int) -> float:
    return frame * (T_v - 1) / max(cfg.T_a - 1, 1)


def _bumps(centers, codes, T_v: int, width: float = 0.7) -> np.ndarray:
    f = np.arange(T_v)[:, None]
    out = np.zeros((T_v, codes.shape[-1]))
    for c, code in zip(centers, codes):
        out += np.exp(-((f - c) ** 2) / (2 * width**2)) * code[None, :]
    return out


def _clip_video(rng, cfg: DataConfig, signal: np.ndarray) -> np.ndarray:
    scene = rng.standard_normal(cfg.D_v) * cfg.scene_scale / np.sqrt(cfg.D_v)
    noise = rng.standard_normal(signal.shape) * cfg.video_noise
    return signal + scene[None, :] + noise


def render_sound_latent(times, classes, patterns: PatternDictionary, T_a: int) -> np.ndarray:
    D_a = patterns.sound.shape[1]
    w = len(patterns.envelope)
    out = np.zeros((T_a, D_a))
    for e, c in zip(times, classes):
        hi = min(e + w, T_a)
        out[e:hi] += patterns.envelope[: hi - e, None] * patterns.sound[c][None, :]
    return out


def render_speech_latent(track: PhonemeTrack, speaker_id: int, patterns: PatternDictionary, T_a: int) -> np.ndarray:
    D_a = patterns.tokens.shape[1]
    out = np.zeros((T_a, D_a))
    amp = patterns.speaker_amp[speaker_id % len(patterns.speaker_amp)]
    for tok, (lo, hi) in zip(track.tokens, track.windows()):
        out[lo:hi] = amp * patterns.tokens[tok]
    return out


def gen_sound_sample(rng: np.random.Generator, n_events: int, n_classes: int, cfg: DataConfig,
                     patterns: PatternDictionary, noise: float | None = None) -> SyntheticSample:
    """A V2S clip with ``n_events`` non-overlapping events."""
    if n_events < 0 or n_classes < 1:
        raise ContractError("n_events must be >= 0 and n_classes >= 1")
    if n_classes > len(patterns.sound):
        raise ContractError(f"dictionary has only {len(patterns.sound)} sound classes")
    w = cfg.window
    free = cfg.T_a - n_events * w
    if free < 0:
        raise DensityError(f"{n_events} events of {w} frames do not fit in T_a={cfg.T_a}")
    offsets = np.sort(rng.integers(0, free + 1, size=n_events))
    times = [int(o) + i * w for i, o in enumerate(offsets)]
    classes = [int(c) for c in rng.integers(0, n_classes, size=n_events)]
    sigma = cfg.noise if noise is None else noise
    latent = render_sound_latent(times, classes, patterns, cfg.T_a)
    latent = latent + sigma * rng.standard_normal(latent.shape)
    centers = [_video_frame(e, cfg, cfg.T_v) for e in times]
    signal = _bumps([round(c) for c in centers], patterns.video_codes[classes], cfg.T_v)
    video = _clip_video(rng, cfg, signal)
    return SyntheticSample("V2S", video, latent, None, None, tuple(times), tuple(classes))


def _draw_durations(rng, n_tokens: int, cfg: DataConfig) -> list[int]:
    for _ in range(10):
        durs = rng.integers(cfg.min_duration, cfg.max_duration + 1, size=n_tokens)
        if durs.sum() <= cfg.T_a:
            return [int(d) for d in durs]
    out, total = [], 0
    for d in durs:
        d = int(min(d, cfg.T_a - total))
        if d < 1:
            break
        out.append(d)
        total += d
    return out


def gen_speech_sample(rng: np.random.Generator, n_tokens: int, vocab: int, speaker_count: int,
                      with_video: bool, cfg: DataConfig, patterns: PatternDictionary,
                      noise: float | None = None) -> SyntheticSample:
    """A VisualTTS (``with_video``) or TTS clip."""
    if vocab < 2:
        raise ContractError("vocab must be >= 2")
    vocab = min(vocab, len(patterns.tokens))
    durs = _draw_durations(rng, n_tokens, cfg)
    tokens = [int(t) for t in rng.integers(0, vocab, size=len(durs))]
    speaker = int(rng.integers(0, max(speaker_count, 1)))
    track = PhonemeTrack(tokens, durs)
    sigma = cfg.noise if noise is None else noise
    latent = render_speech_latent(track, speaker, patterns, cfg.T_a)
    latent = latent + sigma * rng.standard_normal(latent.shape)
    if with_video:
        onsets = [round(_video_frame(lo, cfg, cfg.T_v)) for lo, _ in track.windows()]
        signal = _bumps(onsets, np.repeat(patterns.lip_code[None], len(onsets), 0), cfg.T_v)
        video = _clip_video(rng, cfg, signal)
    else:
        video = np.zeros((cfg.T_v, cfg.D_v))
    return SyntheticSample("VisualTTS" if with_video else "TTS", video, latent, track, speaker)


def _shift_track(track: PhonemeTrack | None, shift: int, T_a: int) -> PhonemeTrack | None:
    if track is None:
        return None
    tokens, durs = [], []
    for tok, (lo, hi) in zip(track.tokens, track.windows()):
        lo, hi = lo + shift, min(hi + shift, T_a)
        if hi > lo:
            tokens.append(tok)
            durs.append(hi - lo)
    return PhonemeTrack(tokens, durs, track.offset + shift) if tokens else None


def mix_samples(a: SyntheticSample, b: SyntheticSample, mode: str, rng: np.random.Generator,
                window: int = 4, split: int | None = None) -> SyntheticSample:
    """Combine a sound clip ``a`` with a speech clip ``b`` into a MIX sample.

    ``concat`` keeps ``a`` before a random split frame and the start of ``b``
    after it (split frames never cut through a sound event); ``overlay``
    sums both latents and both video tracks.
    """
    if a.task != "V2S" or b.task not in ("VisualTTS", "TTS"):
        raise ContractError("mix_samples expects a V2S clip and a speech clip")
    T_a = a.latent.shape[0]
    if b.latent.shape != a.latent.shape:
        raise ContractError("both clips must share the latent shape")
    va = interpolate_video(a.video_raw, T_a)
    vb = interpolate_video(b.video_raw, T_a)
    if mode == "overlay":
        return SyntheticSample("MIX", va + vb, a.latent + b.latent, b.track, b.speaker_id,
                               a.event_times, a.event_classes)
    if mode != "concat":
        raise ContractError(f"unknown mix mode {mode!r}")
    if split is None:
        allowed = [s for s in range(T_a + 1) if not any(e < s < e + window for e in a.event_times)]
        split = int(rng.choice(allowed))
    if any(e < split < e + window for e in a.event_times):
        raise ContractError(f"split {split} cuts through a sound event")
    latent = np.concatenate([a.latent[:split], b.latent[: T_a - split]])
    video = np.concatenate([va[:split], vb[: T_a - split]])
    keep = [i for i, e in enumerate(a.event_times) if e < split]
    return SyntheticSample(
        "MIX", video, latent, _shift_track(b.track, split, T_a), b.speaker_id,
        tuple(a.event_times[i] for i in keep), tuple(a.event_classes[i] for i in keep),
    )


def oracle_decode_tokens(latent, track: PhonemeTrack | None, patterns: PatternDictionary) -> list[int]:
    """Per token window, the vocabulary entry best correlated with the window mean."""
    if track is None:
        return []
    latent = np.asarray(latent)
    out = []
    for lo, hi in track.windows():
        if hi <= lo:
            continue
        m = latent[lo:hi].mean(axis=0)
        norm = np.linalg.norm(m)
        corr = patterns.tokens @ m / (norm if norm > 0 else 1.0)
        out.append(int(np.argmax(corr)))
    return out


def matched_filter_scores(latent, patterns: PatternDictionary) -> np.ndarray:
    """[T_a - window + 1, n_classes] event scores; a clean event scores 1."""
    latent = np.asarray(latent, dtype=np.float64)
    env = patterns.envelope
    w = len(env)
    proj = latent @ patterns.sound.T  # [T_a, n_classes]
    n = latent.shape[0] - w + 1
    if n <= 0:
        return np.zeros((0, len(patterns.sound)))
    scores = sum(env[k] * proj[k : k + n] for k in range(w))
    return scores / float(env @ env)


def oracle_detect_onsets(latent, patterns: PatternDictionary, threshold: float = 0.5) -> list[tuple[int, int]]:
    """Local maxima of the matched-filter score above ``threshold`` as (frame, class)."""
    if threshold <= 0:
        raise ContractError("threshold must be positive")
    scores = matched_filter_scores(latent, patterns)
    if scores.size == 0:
        return []
    best = scores.max(axis=1)
    cls = scores.argmax(axis=1)
    w = len(patterns.envelope)
    out = []
    for f in np.flatnonzero(best >= threshold):
        lo, hi = max(0, f - w + 1), min(len(best), f + w)
        neighbourhood = best[lo:hi]
        if best[f] < neighbourhood.max():
            continue
        # ties resolve to the earliest frame
        if np.any(neighbourhood[: f - lo] == best[f]):
            continue
        out.append((int(f), int(cls[f])))
    return out


@dataclass
class SampleStream:
    """Seeded generator of task-specific samples."""

    cfg: DataConfig = field(default_factory=DataConfig)
    patterns: PatternDictionary | None = None

    def __post_init__(self):
        if self.patterns is None:
            self.patterns = PatternDictionary.build(self.cfg)

    def draw(self, task: str, rng: np.random.Generator) -> SyntheticSample:
        cfg, pat = self.cfg, self.patterns
        if task == "V2S":
            n = int(rng.integers(cfg.events[0], cfg.events[1] + 1))
            return gen_sound_sample(rng, n, cfg.n_classes, cfg, pat)
        if task in ("VisualTTS", "TTS"):
            n = int(rng.integers(cfg.tokens[0], cfg.tokens[1] + 1))
            return gen_speech_sample(rng, n, cfg.vocab, cfg.n_speakers, task == "VisualTTS", cfg, pat)
        if task == "MIX":
            a = self.draw("V2S", rng)
            b = self.draw("VisualTTS" if rng.random() < 0.5 else "TTS", rng)
            mode = "concat" if rng.random() < 0.5 else "overlay"
            return mix_samples(a, b, mode, rng, cfg.window)
        raise ConfigError(f"unknown task {task!r}")

    def draw_set(self, task: str, n: int, seed: int) -> list[SyntheticSample]:
        out = []
        for i in range(n):
            rng = np.random.default_rng([int(seed), i])
            out.append(replace(self.draw(task, rng), rng_seed=int(seed) * 1_000_003 + i))
        return out
