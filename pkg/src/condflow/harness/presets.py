"""Shipped experiment templates at desk scale.

All presets share one small backbone so a full preset over three seeds runs
on a single CPU core in well under an hour.
"""
from __future__ import annotations

from dataclasses import replace

from ..errors import ConfigError
from ..flowmatch import TrainConfig
from ..nn.config import VARIANTS, ModelConfig
from ..sampler import SamplerConfig
from ..synth import DataConfig
from .config import ExperimentConfig

CFG_SWEEP_SCALES = (1.0, 1.5, 2.0, 3.0, 4.0)

ABLATION_MODEL = dict(depth=2, d_model=64, heads=4, T_a=64, D_a=8, D_v=16, D_p=8)
ABLATION_TRAIN = dict(lr=1e-3, warmup_steps=50, batch_size=16)
ABLATION_SAMPLER = dict(method="midpoint", steps=8)


def base_config(experiment_id: str, *, variant: str = "CrossV", task_mix: dict, seed: int = 0,
                total_steps: int = 1200, eval_every: int = 50, eval_set_size: int = 64,
                eval_tasks=None, cfg_scale: float = 1.0, eval_scales=(), **train_kw) -> ExperimentConfig:
    data = DataConfig()
    model = ModelConfig(variant=variant, **ABLATION_MODEL)
    train = TrainConfig(**{**ABLATION_TRAIN, **train_kw}, total_steps=total_steps, task_mix=dict(task_mix), seed=seed)
    sampler = SamplerConfig(**ABLATION_SAMPLER, cfg_scale=cfg_scale)
    return ExperimentConfig(
        experiment_id=experiment_id, model=model, train=train, sampler=sampler, data=data,
        eval_every=eval_every, eval_set_size=eval_set_size,
        eval_tasks=list(eval_tasks) if eval_tasks is not None else None,
        eval_scales=list(eval_scales), output_dir=experiment_id,
    )


def variants4(seeds=(0, 1, 2), total_steps: int = 1200) -> list[ExperimentConfig]:
    """The four condition-routing variants, jointly trained on sound and talking-video speech."""
    mix = {"V2S": 1.0, "VisualTTS": 1.0}
    return [base_config(f"variants4-{v}-s{s}", variant=v, task_mix=mix, seed=s, total_steps=total_steps)
            for v in VARIANTS for s in seeds]


def mix3(seeds=(0, 1, 2), total_steps: int = 1200) -> list[ExperimentConfig]:
    """V2S-only against V2S plus one or two speech tasks; sound evaluated at guidance 1 and 3."""
    mixes = {
        "v2s": {"V2S": 1.0},
        "v2s+vtts": {"V2S": 1.0, "VisualTTS": 1.0},
        "v2s+vtts+tts": {"V2S": 1.0, "VisualTTS": 1.0, "TTS": 1.0},
    }
    return [base_config(f"mix3-{name}-s{s}", task_mix=mix, seed=s, total_steps=total_steps,
                        eval_every=total_steps, eval_set_size=128, eval_tasks=["V2S"], eval_scales=[3.0])
            for name, mix in mixes.items() for s in seeds]


def speech2(seeds=(0, 1, 2), total_steps: int = 1200) -> list[ExperimentConfig]:
    """VisualTTS-only against VisualTTS plus V2S."""
    mixes = {"vtts": {"VisualTTS": 1.0}, "vtts+v2s": {"VisualTTS": 1.0, "V2S": 1.0}}
    return [base_config(f"speech2-{name}-s{s}", task_mix=mix, seed=s, total_steps=total_steps,
                        eval_tasks=["VisualTTS"], eval_scales=[1.5])
            for name, mix in mixes.items() for s in seeds]


def cfg_sweep(seeds=(0,), total_steps: int = 1200) -> list[ExperimentConfig]:
    """A jointly trained model evaluated at every scale of the guidance sweep."""
    mix = {"V2S": 1.0, "VisualTTS": 1.0}
    return [base_config(f"cfg_sweep-s{s}", task_mix=mix, seed=s, total_steps=total_steps,
                        eval_every=total_steps, eval_scales=CFG_SWEEP_SCALES[1:])
            for s in seeds]


def mixgen(seeds=(0,), total_steps: int = 600, init_from: str | None = None) -> list[ExperimentConfig]:
    """Continued training on sound/speech mixtures, keeping the single-task data in the mix."""
    mix = {"V2S": 0.5, "VisualTTS": 0.5, "MIX": 1.0}
    out = []
    for s in seeds:
        cfg = base_config(f"mixgen-s{s}", task_mix=mix, seed=s, total_steps=total_steps,
                          eval_every=max(total_steps // 4, 1), eval_tasks=["MIX", "V2S", "VisualTTS"])
        out.append(replace(cfg, init_from=init_from))
    return out


PRESETS = {"variants4": variants4, "mix3": mix3, "speech2": speech2, "cfg_sweep": cfg_sweep, "mixgen": mixgen}


def get_preset(name: str, seeds=None, total_steps: int | None = None) -> list[ExperimentConfig]:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    kw = {}
    if seeds is not None:
        kw["seeds"] = tuple(seeds)
    if total_steps is not None:
        kw["total_steps"] = total_steps
    return PRESETS[name](**kw)
