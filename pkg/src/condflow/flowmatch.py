"""Flow-matching objective, probability path, AdamW and the training step."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .conditioning import TASKS, ConditionBundle, drop_conditions
from .errors import ConfigError, ContractError, DimensionError, NumericError
from .tensor import Tensor, as_tensor, backward, mean, square, sub


@dataclass
class TrainConfig:
    p_uncond_v: float = 0.1
    p_uncond_p: float = 0.1
    lr: float = 1e-4
    warmup_steps: int = 100
    total_steps: int = 1000
    batch_size: int = 16
    task_mix: dict = field(default_factory=lambda: {"V2S": 1.0, "VisualTTS": 1.0, "TTS": 1.0, "MIX": 0.0})
    seed: int = 0
    weight_decay: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        for name in ("p_uncond_v", "p_uncond_p"):
            p = getattr(self, name)
            if not isinstance(p, (int, float)) or not 0.0 <= p <= 1.0:
                raise ConfigError(f"{name} must be a probability, got {p!r}")
        if not isinstance(self.lr, (int, float)) or self.lr < 0:
            raise ConfigError("lr must be >= 0")
        for name in ("warmup_steps", "total_steps", "seed"):
            v = getattr(self, name)
            if not isinstance(v, int) or isinstance(v, bool) or v < 0:
                raise ConfigError(f"{name} must be a non-negative integer, got {v!r}")
        if not isinstance(self.batch_size, int) or self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if not isinstance(self.task_mix, dict) or not self.task_mix:
            raise ConfigError("task_mix must be a non-empty mapping")
        unknown = set(self.task_mix) - set(TASKS)
        if unknown:
            raise ConfigError(f"task_mix has unknown tasks {sorted(unknown)}")
        weights = list(self.task_mix.values())
        if any((not isinstance(w, (int, float))) or w < 0 for w in weights) or not any(w > 0 for w in weights):
            raise ConfigError("task_mix weights must be non-negative with at least one positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1 and self.eps > 0 and self.weight_decay >= 0):
            raise ConfigError("invalid optimizer hyperparameters")

    @property
    def active_tasks(self) -> list[str]:
        return [t for t in TASKS if self.task_mix.get(t, 0) > 0]

    def task_probs(self) -> tuple[list[str], np.ndarray]:
        tasks = self.active_tasks
        w = np.array([self.task_mix[t] for t in tasks], dtype=np.float64)
        return tasks, w / w.sum()

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown train fields: {sorted(unknown)}")
        return cls(**d)


def _arr(x) -> np.ndarray:
    return x.data if isinstance(x, Tensor) else np.asarray(x)


def _time_column(t, ndim: int) -> np.ndarray:
    t = np.asarray(t, dtype=np.float64)
    if np.any(t < 0) or np.any(t > 1):
        raise ContractError("t must lie in [0, 1]")
    return t.reshape(t.shape + (1,) * (ndim - t.ndim)) if t.ndim else t


def interpolate_path(x0, x1, t) -> np.ndarray:
    """Straight path from noise (t=0) to data (t=1): ``(1 - t) x0 + t x1``.

    ``t`` may be a scalar or one value per leading batch entry.
    """
    x0, x1 = _arr(x0), _arr(x1)
    if x0.shape != x1.shape:
        raise DimensionError(f"path endpoints differ in shape: {x0.shape} vs {x1.shape}")
    tc = _time_column(t, x0.ndim)
    return (1.0 - tc) * x0 + tc * x1


def target_velocity(x0, x1) -> np.ndarray:
    x0, x1 = _arr(x0), _arr(x1)
    if x0.shape != x1.shape:
        raise DimensionError(f"path endpoints differ in shape: {x0.shape} vs {x1.shape}")
    return x1 - x0


def fm_loss(pred, target) -> Tensor:
    """Mean squared error over all elements."""
    pred = as_tensor(pred)
    target = as_tensor(target)
    if pred.shape != target.shape:
        raise DimensionError(f"prediction {pred.shape} vs target {target.shape}")
    return mean(square(sub(pred, target)))


def lr_schedule(step: int, warmup_steps: int, base_lr: float) -> float:
    """Linear warm-up from 0 to ``base_lr``, then constant."""
    if step < 0:
        raise ContractError("step must be >= 0")
    if warmup_steps <= 0 or step >= warmup_steps:
        return base_lr
    return base_lr * step / warmup_steps


@dataclass
class OptimizerState:
    """AdamW moment buffers, one per parameter."""

    m: list
    v: list
    step: int = 0
    weight_decay: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params, weight_decay=0.01, beta1=0.9, beta2=0.999, eps=1e-8) -> "OptimizerState":
        return cls([np.zeros_like(p.data) for p in params], [np.zeros_like(p.data) for p in params],
                   0, weight_decay, beta1, beta2, eps)


def adamw_update(params, grads, state: OptimizerState, lr: float) -> None:
    """Decoupled-weight-decay Adam step with bias-corrected moments, in place."""
    if len(params) != len(state.m) or len(grads) != len(params):
        raise DimensionError("params, grads and optimizer buffers differ in count")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.step
    c2 = 1.0 - b2**state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if g is None:
            g = np.zeros_like(p.data)
        if g.shape != p.shape:
            raise DimensionError(f"gradient {g.shape} vs parameter {p.shape}")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        if lr == 0.0:
            continue
        update = (m / c1) / (np.sqrt(v / c2) + state.eps)
        if state.weight_decay:
            update = update + state.weight_decay * p.data
        p.data = (p.data - lr * update).astype(p.dtype, copy=False)


def task_bundle(bundle: ConditionBundle, task: str) -> ConditionBundle:
    """Apply the task's condition mask (V2S: no phonemes, TTS: no video)."""
    return bundle.nulled(video=(task == "TTS"), phoneme=(task == "V2S"))


def train_step(model, batch, opt: OptimizerState, cfg: TrainConfig, rng: np.random.Generator, encoder) -> float:
    """One optimisation step on a batch of synthetic samples; returns the loss.

    ``encoder`` turns the samples into a stacked, task-masked
    :class:`ConditionBundle` (see ``ConditionEncoder``).
    """
    if not batch:
        raise ContractError("empty batch")
    B = len(batch)
    bundle = encoder.transform(batch)
    bundle = drop_conditions(bundle, cfg.p_uncond_v, cfg.p_uncond_p, rng)
    x1 = np.stack([s.latent for s in batch]).astype(np.float64)
    t = rng.random(B)
    x0 = rng.standard_normal(x1.shape)
    xt = interpolate_path(x0, x1, t)
    target = target_velocity(x0, x1)

    dtype = model.dtype
    model.zero_grad()
    try:
        pred = model(xt.astype(dtype), t, bundle)
        loss = fm_loss(pred, target.astype(dtype))
    except NumericError as exc:
        raise NumericError(f"optimizer step {opt.step}: {exc}") from exc
    value = loss.item()
    if not math.isfinite(value):
        raise NumericError(f"non-finite loss at optimizer step {opt.step}")
    backward(loss)
    params = model.parameters()
    lr = lr_schedule(opt.step, cfg.warmup_steps, cfg.lr)
    adamw_update(params, [p.grad for p in params], opt, lr)
    return value
