"""Desk-scale quality metrics and the evaluation loop."""
from __future__ import annotations

import logging
from collections import Counter
from dataclasses import asdict, dataclass

import numpy as np

from .errors import ContractError, NumericError, StatsError
from .sampler import SamplerConfig, draw_noise, sample
from .synth import PatternDictionary, SyntheticSample, oracle_decode_tokens, oracle_detect_onsets

log = logging.getLogger(__name__)

ONSET_TOLERANCE = 2
SOUND_TASKS = ("V2S", "MIX")
SPEECH_TASKS = ("VisualTTS", "TTS", "MIX")


def pooled_features(latents) -> np.ndarray:
    """Per-sample [per-channel mean | per-channel std] over frames."""
    latents = np.asarray(latents, dtype=np.float64)
    if latents.ndim == 2:
        latents = latents[None]
    return np.concatenate([latents.mean(axis=1), latents.std(axis=1)], axis=-1)


def frechet_gaussian(feats_a, feats_b) -> float:
    """Fréchet distance between diagonal-covariance Gaussian fits of two sets.

    ``|mu_a - mu_b|^2 + sum_i (s_a,i + s_b,i - 2 sqrt(s_a,i s_b,i))`` with
    ``s`` the per-coordinate variances.
    """
    a = np.asarray(feats_a, dtype=np.float64)
    b = np.asarray(feats_b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise StatsError(f"feature sets must be [n, d] with equal d, got {a.shape} and {b.shape}")
    if len(a) < 2 or len(b) < 2:
        raise StatsError("each feature set needs at least 2 vectors")
    mu_a, mu_b = a.mean(axis=0), b.mean(axis=0)
    var_a, var_b = a.var(axis=0, ddof=1), b.var(axis=0, ddof=1)
    d2 = float(np.sum((mu_a - mu_b) ** 2) + np.sum(var_a + var_b - 2.0 * np.sqrt(var_a * var_b)))
    return max(d2, 0.0)


def edit_distance(a, b) -> int:
    """Levenshtein distance."""
    prev = list(range(len(b) + 1))
    for i, x in enumerate(a, 1):
        cur = [i] + [0] * len(b)
        for j, y in enumerate(b, 1):
            cur[j] = min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (x != y))
        prev = cur
    return prev[-1]


def token_error_rate(decoded, planted, aligned: bool = True) -> float:
    """Normalised token errors of a decoded sequence against the planted one.

    Decoding runs window-by-window on the known durations, so hypothesis and
    reference are position-aligned and the default counts substitutions at
    matching positions (plus any length difference).  ``aligned=False``
    uses the free-alignment Levenshtein distance instead.
    """
    decoded, planted = list(decoded), list(planted)
    if not planted:
        return 0.0 if not decoded else 1.0
    if aligned:
        n = min(len(decoded), len(planted))
        errors = sum(d != p for d, p in zip(decoded[:n], planted[:n])) + abs(len(decoded) - len(planted))
    else:
        errors = edit_distance(decoded, planted)
    return min(1.0, errors / len(planted))


def onset_accuracy(detected_frames, planted_frames, tolerance: int = ONSET_TOLERANCE) -> float:
    """Greedy one-to-one matching within ``tolerance`` frames.

    Returns matched / max(#planted, #detected); 1 when both are empty.
    """
    planted = sorted(planted_frames)
    detected = sorted(detected_frames)
    if not planted and not detected:
        return 1.0
    used = [False] * len(detected)
    matched = 0
    for p in planted:
        best, best_d = None, None
        for j, d in enumerate(detected):
            if used[j] or abs(d - p) > tolerance:
                continue
            if best_d is None or abs(d - p) < best_d:
                best, best_d = j, abs(d - p)
        if best is not None:
            used[best] = True
            matched += 1
    return matched / max(len(planted), len(detected))


def dominant_class(latent, patterns: PatternDictionary, threshold: float = 0.5) -> int | None:
    """Most frequently detected class (ties go to the lowest id), or None when nothing fires."""
    dets = oracle_detect_onsets(latent, patterns, threshold)
    if not dets:
        return None
    counts = Counter(c for _, c in dets)
    return max(sorted(counts), key=lambda c: counts[c])


def planted_dominant_class(s: SyntheticSample) -> int | None:
    if not s.event_classes:
        return None
    counts = Counter(s.event_classes)
    return max(sorted(counts), key=lambda c: counts[c])


@dataclass
class MetricsReport:
    """Metrics of one evaluation; fields not applicable to the task are None."""

    toy_fad: float | None = None
    onset_acc: float | None = None
    token_error_rate: float | None = None
    cond_adherence: float | None = None
    step: int = 0
    variant: str = ""
    task: str = ""
    task_mix: str = ""
    cfg_scale: float = 1.0
    n_items: int = 0
    failures: int = 0
    nfe: int = 0

    def metrics(self) -> dict[str, float]:
        names = ("toy_fad", "onset_acc", "token_error_rate", "cond_adherence")
        return {n: getattr(self, n) for n in names if getattr(self, n) is not None}

    def to_dict(self) -> dict:
        return asdict(self)


def score_latents(generated, eval_set: list[SyntheticSample], patterns: PatternDictionary, task: str) -> MetricsReport:
    """Metrics of generated latents against the eval set's ground truth."""
    generated = np.asarray(generated)
    if len(generated) != len(eval_set):
        raise ContractError("one generated latent per eval item is required")
    rep = MetricsReport(task=task, n_items=len(eval_set))
    if len(eval_set) >= 2:
        rep.toy_fad = frechet_gaussian(pooled_features(generated), pooled_features(np.stack([s.latent for s in eval_set])))
    if task in SOUND_TASKS:
        accs, hits = [], []
        for g, s in zip(generated, eval_set):
            dets = oracle_detect_onsets(g, patterns)
            accs.append(onset_accuracy([f for f, _ in dets], s.event_times))
            want = planted_dominant_class(s)
            if want is not None:
                hits.append(dominant_class(g, patterns) == want)
        rep.onset_acc = float(np.mean(accs))
        if hits:
            rep.cond_adherence = float(np.mean(hits))
    if task in SPEECH_TASKS:
        ters = []
        for g, s in zip(generated, eval_set):
            if s.track is None:
                continue
            ters.append(token_error_rate(oracle_decode_tokens(g, s.track, patterns), s.track.tokens))
        if ters:
            rep.token_error_rate = float(np.mean(ters))
            if task != "MIX":
                rep.cond_adherence = float(np.mean([t < 0.5 for t in ters]))
    return rep


def generate(model, sampler_cfg: SamplerConfig, eval_set: list[SyntheticSample], encoder,
             chunk: int = 64) -> tuple[np.ndarray, np.ndarray, int]:
    """One generation per item; x0 for item i is keyed by (sampler seed, i).

    Returns (latents, ok-mask, velocity evaluations).  Items whose
    integration fails are retried alone; persistent failures are masked.
    """
    shape = eval_set[0].latent.shape
    out = np.zeros((len(eval_set),) + shape)
    ok = np.ones(len(eval_set), dtype=bool)
    nfe = 0
    for lo in range(0, len(eval_set), chunk):
        items = list(range(lo, min(lo + chunk, len(eval_set))))
        x0 = np.stack([draw_noise(shape, sampler_cfg.seed, i) for i in items])
        bundle = encoder.transform([eval_set[i] for i in items])
        try:
            x1, stats = sample(model, bundle, sampler_cfg, x0=x0)
            out[items] = x1
            nfe += stats["nfe"]
            continue
        except NumericError as exc:
            log.warning("batch %d-%d failed (%s); retrying items one by one", items[0], items[-1], exc)
        for i in items:
            try:
                x1, stats = sample(model, encoder.transform([eval_set[i]]), sampler_cfg, x0=x0[i - lo][None])
                out[i] = x1[0]
                nfe += stats["nfe"]
            except NumericError as exc:
                log.warning("item %d failed: %s", i, exc)
                ok[i] = False
    return out, ok, nfe


def evaluate(model, sampler_cfg: SamplerConfig, eval_set: list[SyntheticSample], task: str, encoder,
             patterns: PatternDictionary) -> MetricsReport:
    """Sample one latent per item and score it (failed items are excluded)."""
    if not eval_set:
        raise ContractError("empty eval set")
    if any(s.task != task for s in eval_set):
        raise ContractError(f"eval set is not homogeneous in task {task!r}")
    generated, ok, nfe = generate(model, sampler_cfg, eval_set, encoder)
    kept = [s for s, good in zip(eval_set, ok) if good]
    rep = score_latents(generated[ok], kept, patterns, task) if kept else MetricsReport(task=task)
    rep.failures = int((~ok).sum())
    rep.n_items = len(eval_set)
    rep.cfg_scale = sampler_cfg.cfg_scale
    rep.nfe = nfe
    return rep
