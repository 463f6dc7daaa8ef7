"""Estimator-style facade over the model, trainer and sampler."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .conditioning import ConditionEncoder
from .errors import ContractError, DimensionError, EmptyInputError
from .flowmatch import OptimizerState, TrainConfig, train_step
from .metrics import frechet_gaussian, pooled_features, score_latents
from .model import VelocityModel
from .nn.config import ModelConfig
from .sampler import SamplerConfig, draw_noise, sample
from .synth import DataConfig, SampleStream, SyntheticSample


def check_samples(X, T_a: int | None = None, D_a: int | None = None) -> list[SyntheticSample]:
    """Validate a nonempty sequence of synthetic samples with a common latent shape."""
    if X is None:
        raise EmptyInputError("expected samples, got None")
    X = list(X)
    if not X:
        raise EmptyInputError("expected at least one sample")
    if not all(isinstance(s, SyntheticSample) for s in X):
        raise ContractError("all inputs must be SyntheticSample instances")
    shapes = {s.latent.shape for s in X}
    if len(shapes) != 1:
        raise DimensionError(f"samples disagree in latent shape: {sorted(shapes)}")
    shape = shapes.pop()
    if (T_a is not None and shape[0] != T_a) or (D_a is not None and shape[1] != D_a):
        raise DimensionError(f"latent shape {shape} does not match ({T_a}, {D_a})")
    return X


class FlowGenerator(BaseEstimator):
    """Conditional latent generator trained by flow matching.

    ``fit(X)`` trains on the given samples (drawn with replacement), or on a
    fresh synthetic stream when ``X`` is None.  ``predict(X)`` generates one
    latent per sample from that sample's conditions.
    """

    def __init__(self, variant="CrossV", depth=2, d_model=64, heads=4, concat_axis="channel",
                 n_steps=500, lr=1e-3, warmup_steps=50, batch_size=16, p_uncond=0.1,
                 task_mix=None, sampler="midpoint", sampler_steps=8, cfg_scale=1.0,
                 data_config=None, seed=0):
        self.variant = variant
        self.depth = depth
        self.d_model = d_model
        self.heads = heads
        self.concat_axis = concat_axis
        self.n_steps = n_steps
        self.lr = lr
        self.warmup_steps = warmup_steps
        self.batch_size = batch_size
        self.p_uncond = p_uncond
        self.task_mix = task_mix
        self.sampler = sampler
        self.sampler_steps = sampler_steps
        self.cfg_scale = cfg_scale
        self.data_config = data_config
        self.seed = seed

    def _data_cfg(self) -> DataConfig:
        return self.data_config if self.data_config is not None else DataConfig()

    def _train_cfg(self) -> TrainConfig:
        mix = self.task_mix or {"V2S": 1.0, "VisualTTS": 1.0}
        return TrainConfig(p_uncond_v=self.p_uncond, p_uncond_p=self.p_uncond, lr=self.lr,
                           warmup_steps=self.warmup_steps, total_steps=self.n_steps,
                           batch_size=self.batch_size, task_mix=dict(mix), seed=self.seed)

    def _sampler_cfg(self) -> SamplerConfig:
        return SamplerConfig(method=self.sampler, steps=self.sampler_steps, cfg_scale=self.cfg_scale, seed=self.seed)

    def _init(self) -> None:
        d = self._data_cfg()
        self.model_config_ = ModelConfig(variant=self.variant, depth=self.depth, d_model=self.d_model,
                                         heads=self.heads, T_a=d.T_a, D_a=d.D_a, D_v=d.D_v, D_p=8,
                                         concat_axis=self.concat_axis)
        self.train_config_ = self._train_cfg()
        self._sampler_cfg()  # validate early
        self.stream_ = SampleStream(d)
        self.encoder_ = ConditionEncoder(d.T_a, d.D_v, 8, d.vocab, d.n_speakers, d.pattern_seed).fit()
        self.model_ = VelocityModel(self.model_config_, seed=self.seed)
        self.opt_ = OptimizerState.for_params(self.model_.parameters())
        self._data_rng = np.random.default_rng([self.seed, 0])
        self._noise_rng = np.random.default_rng([self.seed, 1])
        self.loss_curve_ = []
        self.n_iter_ = 0

    def _batch(self, X):
        rng = self._data_rng
        if X is not None:
            return [X[int(i)] for i in rng.integers(0, len(X), self.batch_size)]
        tasks, probs = self.train_config_.task_probs()
        return [self.stream_.draw(tasks[int(rng.choice(len(tasks), p=probs))], rng) for _ in range(self.batch_size)]

    def partial_fit(self, X=None, y=None, n_steps: int = 1):
        if not hasattr(self, "model_"):
            self._init()
        if X is not None:
            d = self._data_cfg()
            X = check_samples(X, d.T_a, d.D_a)
        for _ in range(n_steps):
            loss = train_step(self.model_, self._batch(X), self.opt_, self.train_config_, self._noise_rng,
                              self.encoder_)
            self.loss_curve_.append(loss)
            self.n_iter_ += 1
        return self

    def fit(self, X=None, y=None):
        self._init()
        return self.partial_fit(X, n_steps=self.n_steps)

    def predict(self, X) -> np.ndarray:
        """[n, T_a, D_a] latents; item i starts from noise keyed by (seed, i)."""
        check_is_fitted(self, "model_")
        X = check_samples(X, self.model_config_.T_a, self.model_config_.D_a)
        shape = X[0].latent.shape
        x0 = np.stack([draw_noise(shape, self.seed, i) for i in range(len(X))])
        out, _ = sample(self.model_, self.encoder_.transform(X), self._sampler_cfg(), x0=x0)
        return out

    def score(self, X, y=None) -> float:
        """Negative toy Fréchet distance between generations and the references (higher is better)."""
        X = check_samples(X)
        if len(X) < 2:
            raise EmptyInputError("scoring needs at least two samples")
        gen = self.predict(X)
        return -frechet_gaussian(pooled_features(gen), pooled_features(np.stack([s.latent for s in X])))

    def report(self, X, task: str):
        """Full metrics of generations for a task-homogeneous sample list."""
        X = check_samples(X)
        return score_latents(self.predict(X), X, self.stream_.patterns, task)
