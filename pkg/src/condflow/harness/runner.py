"""Training runs, guidance sweeps and checkpoint management."""
from __future__ import annotations

import json
import logging
import math
import os
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..conditioning import ConditionEncoder
from ..errors import ConfigError, NumericError
from ..flowmatch import OptimizerState, train_step
from ..metrics import MetricsReport, evaluate
from ..model import VelocityModel
from ..sampler import SamplerConfig
from ..synth import SampleStream
from ..tensor import load_checkpoint, save_checkpoint
from .config import ExperimentConfig
from .report import MetricsWriter, emit_reports

log = logging.getLogger(__name__)

FINAL_CKPT = "final.vsfk"
BEST_CKPT = "best.vsfk"
METRICS_CSV = "metrics.csv"
CURVES_SVG = "curves.svg"
RUN_MANIFEST = "manifest.json"


@dataclass
class RunResult:
    run_dir: Path
    reports: list = field(default_factory=list)  # (step, scale, MetricsReport)
    losses: list = field(default_factory=list)
    best_step: int = 0
    steps_done: int = 0

    @property
    def metrics_csv(self) -> Path:
        return self.run_dir / METRICS_CSV


def build_encoder(cfg: ExperimentConfig) -> ConditionEncoder:
    d = cfg.data
    return ConditionEncoder(T_a=d.T_a, D_v=d.D_v, D_p=cfg.model.D_p, vocab=d.vocab,
                            n_speakers=d.n_speakers, seed=d.pattern_seed).fit()


def build_eval_sets(cfg: ExperimentConfig, stream: SampleStream) -> dict:
    return {task: stream.draw_set(task, cfg.eval_set_size, cfg.eval_seed) for task in cfg.tasks}


def seeds_of(cfg: ExperimentConfig) -> dict:
    s = cfg.train.seed
    return {
        "model_init": s,
        "train_data": [s, 0],
        "train_noise": [s, 1],
        "eval_set": cfg.eval_seed,
        "sampler_noise": cfg.sampler.seed,
        "pattern_dictionary": cfg.data.pattern_seed,
        "condition_codebooks": cfg.data.pattern_seed,
    }


def _write_json(path: Path, obj) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
    os.replace(tmp, path)


def write_manifest(cfg: ExperimentConfig, run_dir: Path, steps_done: int, status: str) -> None:
    _write_json(run_dir / RUN_MANIFEST, {
        "config": cfg.to_dict(),
        "seeds": seeds_of(cfg),
        "task_mix_id": cfg.task_mix_id,
        "samples_per_epoch": cfg.samples_per_epoch,
        "steps_per_epoch": cfg.samples_per_epoch / cfg.train.batch_size,
        "steps_done": steps_done,
        "status": status,
    })


def read_manifest(run_dir) -> dict:
    path = Path(run_dir) / RUN_MANIFEST
    try:
        return json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read run manifest {path}: {exc}") from exc


def load_run(checkpoint) -> tuple[VelocityModel, ExperimentConfig, dict]:
    """Model, config and manifest of the run that wrote ``checkpoint``."""
    checkpoint = Path(checkpoint)
    manifest = read_manifest(checkpoint.parent)
    cfg = ExperimentConfig.from_dict(manifest["config"])
    model = VelocityModel(cfg.model, seed=cfg.train.seed)
    model.load_state_dict(load_checkpoint(checkpoint))
    return model, cfg, manifest


def metric_columns(rep: MetricsReport, scale: float, primary: float) -> dict:
    """CSV metric names: bare at the run's guidance scale, ``name@g<scale>`` otherwise."""
    values = rep.metrics()
    if rep.failures:
        values["eval_failures"] = float(rep.failures)
    if scale == primary:
        return values
    return {f"{k}@g{scale:g}": v for k, v in values.items()}


def evaluate_tasks(model, cfg: ExperimentConfig, eval_sets: dict, encoder, patterns, scales) -> dict:
    out = {}
    for task, items in eval_sets.items():
        for g in scales:
            sc = SamplerConfig(**{**cfg.sampler.to_dict(), "cfg_scale": float(g)})
            out[(task, float(g))] = evaluate(model, sc, items, task, encoder, patterns)
    return out


def _selection_score(reports: dict, primary: float) -> float:
    fads = [r.toy_fad for (task, g), r in reports.items() if g == primary and r.toy_fad is not None]
    return float(np.mean(fads)) if fads else math.inf


def run_experiment(cfg: ExperimentConfig, output_root) -> RunResult:
    """Train, evaluate every ``eval_every`` steps, and write all run artifacts.

    Artifacts in the run directory: ``metrics.csv`` (flushed per row),
    ``final.vsfk``, ``best.vsfk`` (lowest mean toy_fad at the run's guidance
    scale), ``curves.svg`` and ``manifest.json``.
    """
    run_dir = cfg.run_dir(output_root)
    run_dir.mkdir(parents=True, exist_ok=True)
    write_manifest(cfg, run_dir, 0, "running")
    stream = SampleStream(cfg.data)
    encoder = build_encoder(cfg)
    model = VelocityModel(cfg.model, seed=cfg.train.seed)
    if cfg.init_from:
        model.load_state_dict(load_checkpoint(Path(output_root) / cfg.init_from))
    opt = OptimizerState.for_params(model.parameters(), cfg.train.weight_decay, cfg.train.beta1,
                                    cfg.train.beta2, cfg.train.eps)
    tasks, probs = cfg.train.task_probs()
    data_rng = np.random.default_rng([cfg.train.seed, 0])
    noise_rng = np.random.default_rng([cfg.train.seed, 1])
    eval_sets = build_eval_sets(cfg, stream) if cfg.train.total_steps > 0 else {}
    primary = float(cfg.sampler.cfg_scale)
    scales = [primary] + [float(g) for g in cfg.eval_scales if float(g) != primary]
    result = RunResult(run_dir)
    best = math.inf
    status = "failed"
    writer = MetricsWriter(run_dir / METRICS_CSV)
    step = 0
    t_start = time.perf_counter()
    try:
        for step in range(1, cfg.train.total_steps + 1):
            batch = [stream.draw(tasks[int(data_rng.choice(len(tasks), p=probs))], data_rng)
                     for _ in range(cfg.train.batch_size)]
            try:
                loss = train_step(model, batch, opt, cfg.train, noise_rng, encoder)
            except NumericError as exc:
                raise NumericError(f"training step {step}: {exc}") from exc
            result.losses.append(loss)
            writer.write(step, cfg.experiment_id, cfg.task_mix_id, {"loss": loss})
            result.steps_done = step
            if step % cfg.eval_every == 0 or step == cfg.train.total_steps:
                reports = evaluate_tasks(model, cfg, eval_sets, encoder, stream.patterns, scales)
                for (task, g), rep in reports.items():
                    rep.step, rep.variant, rep.task_mix = step, cfg.model.variant, cfg.task_mix_id
                    writer.write(step, cfg.experiment_id, task, metric_columns(rep, g, primary))
                    result.reports.append((step, g, rep))
                score = _selection_score(reports, primary)
                if score < best:
                    best, result.best_step = score, step
                    save_checkpoint(run_dir / BEST_CKPT, model.state_dict())
                log.info("%s step %d (%.1fs) %s", cfg.experiment_id, step, time.perf_counter() - t_start,
                         {k: r.metrics() for k, r in reports.items()})
        save_checkpoint(run_dir / FINAL_CKPT, model.state_dict())
        if not (run_dir / BEST_CKPT).exists() or result.best_step == 0:
            save_checkpoint(run_dir / BEST_CKPT, model.state_dict())
        status = "complete"
    finally:
        writer.close()
        write_manifest(cfg, run_dir, result.steps_done, status)
        emit_reports([run_dir / METRICS_CSV], run_dir / CURVES_SVG)
    return result


def run_cfg_sweep(checkpoint, scales, eval_set: list, task: str, out_csv=None,
                  experiment_id: str | None = None) -> list[MetricsReport]:
    """One report per guidance scale on a fixed eval set with per-item paired noise."""
    if not scales:
        raise ConfigError("scales: need at least one guidance scale")
    model, cfg, manifest = load_run(checkpoint)
    stream = SampleStream(cfg.data)
    encoder = build_encoder(cfg)
    exp_id = experiment_id or cfg.experiment_id
    reports = []
    writer = MetricsWriter(out_csv) if out_csv is not None else None
    try:
        for g in scales:
            sc = SamplerConfig(**{**cfg.sampler.to_dict(), "cfg_scale": float(g)})
            rep = evaluate(model, sc, eval_set, task, encoder, stream.patterns)
            rep.step, rep.variant, rep.task_mix = manifest.get("steps_done", 0), cfg.model.variant, cfg.task_mix_id
            reports.append(rep)
            if writer is not None:
                writer.write(rep.step, exp_id, task, metric_columns(rep, float(g), math.nan))
    finally:
        if writer is not None:
            writer.close()
    return reports
