"""Eval sets on disk: one tensor file per sample plus a JSON manifest.

Layout::

    <dir>/manifest.json
    <dir>/item_00000.vsfk   # tensors "latent" [T_a, D_a] and "video_raw" [T_v, D_v]
    ...

The manifest records the task, the generation seed, the data config (which
includes the pattern-dictionary seed) and each item's ground truth.
"""
from __future__ import annotations

import json
import os
from pathlib import Path

import numpy as np

from .conditioning import PhonemeTrack
from .errors import FormatError
from .synth import DataConfig, SampleStream, SyntheticSample
from .tensor import load_checkpoint, save_checkpoint

MANIFEST = "manifest.json"
FORMAT_VERSION = 1


def _item_meta(s: SyntheticSample, filename: str) -> dict:
    meta = {
        "file": filename,
        "task": s.task,
        "speaker_id": s.speaker_id,
        "event_times": list(s.event_times),
        "event_classes": list(s.event_classes),
        "rng_seed": s.rng_seed,
        "track": None,
    }
    if s.track is not None:
        meta["track"] = {"tokens": list(s.track.tokens), "durations": list(s.track.durations),
                         "offset": s.track.offset}
    return meta


def save_eval_set(directory, samples: list[SyntheticSample], task: str, seed: int, data_cfg: DataConfig) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    items = []
    for i, s in enumerate(samples):
        name = f"item_{i:05d}.vsfk"
        save_checkpoint(directory / name, {"latent": np.asarray(s.latent, dtype=np.float64),
                                           "video_raw": np.asarray(s.video_raw, dtype=np.float64)})
        items.append(_item_meta(s, name))
    manifest = {
        "format_version": FORMAT_VERSION,
        "task": task,
        "seed": int(seed),
        "n": len(samples),
        "pattern_seed": data_cfg.pattern_seed,
        "data": data_cfg.to_dict(),
        "items": items,
    }
    tmp = directory / (MANIFEST + ".tmp")
    tmp.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    os.replace(tmp, directory / MANIFEST)
    return directory


def load_eval_set(directory) -> tuple[list[SyntheticSample], dict]:
    """Returns (samples, manifest)."""
    directory = Path(directory)
    try:
        manifest = json.loads((directory / MANIFEST).read_text())
    except FileNotFoundError as exc:
        raise FormatError(f"no {MANIFEST} in {directory}") from exc
    except json.JSONDecodeError as exc:
        raise FormatError(f"malformed {MANIFEST}: {exc}") from exc
    if manifest.get("format_version") != FORMAT_VERSION:
        raise FormatError(f"unsupported eval-set version {manifest.get('format_version')!r}")
    samples = []
    for meta in manifest["items"]:
        tensors = load_checkpoint(directory / meta["file"])
        if set(tensors) != {"latent", "video_raw"}:
            raise FormatError(f"{meta['file']}: unexpected tensors {sorted(tensors)}")
        tr = meta.get("track")
        track = PhonemeTrack(tuple(tr["tokens"]), tuple(tr["durations"]), tr["offset"]) if tr else None
        samples.append(SyntheticSample(
            meta["task"], tensors["video_raw"], tensors["latent"], track, meta["speaker_id"],
            tuple(meta["event_times"]), tuple(meta["event_classes"]), meta["rng_seed"],
        ))
    return samples, manifest


def generate_eval_set(directory, data_cfg: DataConfig, task: str, n: int, seed: int) -> Path:
    stream = SampleStream(data_cfg)
    return save_eval_set(directory, stream.draw_set(task, n, seed), task, seed, data_cfg)
