import numpy as np
import pytest
from threadpoolctl import threadpool_limits

from condflow.nn.config import ModelConfig
from condflow.synth import DataConfig, SampleStream

# Pass/fail lines from tests/test_acceptance.py, echoed in the terminal summary.
ACCEPTANCE_LINES = []

# One BLAS thread keeps matmul reduction order fixed, so repeated runs are bitwise equal.
_limits = threadpool_limits(1)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def stream():
    return SampleStream(DataConfig())


@pytest.fixture
def tiny_config():
    return ModelConfig(variant="CrossV", depth=1, d_model=16, heads=2, T_a=64, D_a=8, D_v=16, D_p=8)


def tiny_experiment(experiment_id="tiny", total_steps=4, eval_every=2, variant="CrossV", **kw):
    """A run small enough for unit tests: 1-block width-16 model, 4-item eval sets, 2 Euler steps."""
    from dataclasses import replace

    from condflow.harness.presets import base_config
    from condflow.sampler import SamplerConfig

    kw.setdefault("task_mix", {"V2S": 1.0, "VisualTTS": 1.0})
    kw.setdefault("eval_set_size", 4)
    cfg = base_config(experiment_id, variant=variant, total_steps=total_steps, eval_every=eval_every,
                      batch_size=4, warmup_steps=1, **kw)
    return replace(cfg, model=replace(cfg.model, depth=1, d_model=16, heads=2),
                   sampler=SamplerConfig(method="euler", steps=2, cfg_scale=cfg.sampler.cfg_scale))


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
