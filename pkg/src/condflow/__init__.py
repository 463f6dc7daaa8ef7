"""Conditional flow-matching generator of audio latents from video and transcripts.

A numpy implementation at desk scale: autodiff tensors, a rotary DiT
backbone with four condition-routing variants, flow-matching training,
guided ODE sampling, synthetic data with exact decoding oracles, and an
experiment harness (``condflow`` on the command line).
"""
from .conditioning import ConditionBundle, ConditionEncoder, ConditionRouter, PhonemeTrack
from .errors import (
    AlignmentError, CondFlowError, ConfigError, ContractError, DensityError, DimensionError, EmptyInputError,
    FormatError, NumericError, StatsError, StiffnessError,
)
from .estimator import FlowGenerator
from .flowmatch import TrainConfig, fm_loss, interpolate_path, target_velocity, train_step
from .metrics import MetricsReport, evaluate, frechet_gaussian, onset_accuracy, token_error_rate
from .model import VelocityModel
from .nn.config import VARIANTS, ModelConfig
from .sampler import SamplerConfig, cfg_velocity, draw_noise, sample
from .synth import TASKS, DataConfig, PatternDictionary, SampleStream, SyntheticSample

__version__ = "0.1.0"

__all__ = [
    "AlignmentError", "CondFlowError", "ConditionBundle", "ConditionEncoder", "ConditionRouter", "ConfigError",
    "ContractError", "DataConfig", "DensityError", "DimensionError", "EmptyInputError", "FlowGenerator",
    "FormatError", "MetricsReport", "ModelConfig", "NumericError", "PatternDictionary", "PhonemeTrack",
    "SampleStream", "SamplerConfig", "StatsError", "StiffnessError", "SyntheticSample", "TASKS", "TrainConfig",
    "VARIANTS", "VelocityModel", "cfg_velocity", "draw_noise", "evaluate", "fm_loss", "frechet_gaussian",
    "interpolate_path", "onset_accuracy", "sample", "target_velocity", "token_error_rate", "train_step",
]
