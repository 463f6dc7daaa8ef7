import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from condflow.conditioning import ConditionBundle
from condflow.errors import ConfigError, ContractError, NumericError, StiffnessError
from condflow.sampler import SamplerConfig, cfg_velocity, draw_noise, integrate_dopri5, integrate_fixed, sample


class LinearField:
    """v(x, t) = a x + b t; counts evaluations."""

    def __init__(self, a=1.0, b=0.0):
        self.a, self.b, self.calls = a, b, 0

    def __call__(self, x, t, bundle):
        self.calls += 1
        return self.a * x + self.b * t


class TwoBranch:
    """Returns `cond` for conditioned bundles and `null` when every condition is dropped."""

    def __init__(self, cond, null):
        self.cond, self.null, self.calls = np.asarray(cond), np.asarray(null), 0

    def __call__(self, x, t, bundle):
        self.calls += 1
        return self.null if bundle.video_null and bundle.phoneme_null else self.cond


def _bundle():
    return ConditionBundle(np.ones((4, 2)), np.ones((4, 2)))


@settings(max_examples=50, deadline=None)
@given(st.floats(0, 8), st.integers(0, 1000))
def test_cfg_combination_identity(gamma, seed):
    r = np.random.default_rng(seed)
    c, n = r.standard_normal(3), r.standard_normal(3)
    out = cfg_velocity(TwoBranch(c, n), np.zeros(3), 0.5, _bundle(), gamma)
    np.testing.assert_allclose(out, n + gamma * (c - n), atol=1e-12)


def test_cfg_special_scales_pass_counts():
    m = TwoBranch([1.0], [5.0])
    assert cfg_velocity(m, np.zeros(1), 0.0, _bundle(), 1.0)[0] == 1.0 and m.calls == 1
    m.calls = 0
    assert cfg_velocity(m, np.zeros(1), 0.0, _bundle(), 0.0)[0] == 5.0 and m.calls == 1
    m.calls = 0
    cfg_velocity(m, np.zeros(1), 0.0, _bundle(), 2.0)
    assert m.calls == 2


def test_cfg_scale_needs_bundle():
    with pytest.raises(ContractError):
        cfg_velocity(LinearField(), np.zeros(1), 0.0, None, 3.0)


@pytest.mark.parametrize("method,order", [("euler", 1), ("midpoint", 2), ("rk4", 4)])
def test_fixed_step_convergence_order(method, order):
    # dx/dt = x  =>  x(1) = e * x0
    errs = []
    for n in (8, 16):
        out = integrate_fixed(LinearField(), np.ones(1), None, SamplerConfig(method=method, steps=n))
        errs.append(abs(out[0] - np.e))
    assert np.log2(errs[0] / errs[1]) == pytest.approx(order, abs=0.2)


def test_fixed_step_exact_on_constant_field():
    out = integrate_fixed(LinearField(a=0.0, b=0.0), np.array([2.0]), None, SamplerConfig(method="euler", steps=3))
    assert out[0] == 2.0


def test_midpoint_exact_for_time_linear_field():
    # dx/dt = 2t  =>  x(1) = x0 + 1; midpoint integrates linear-in-t fields exactly
    out = integrate_fixed(LinearField(a=0.0, b=2.0), np.zeros(1), None, SamplerConfig(method="midpoint", steps=1))
    assert out[0] == pytest.approx(1.0, abs=1e-15)


def test_dopri5_accuracy_and_stats():
    cfg = SamplerConfig(method="dopri5", rtol=1e-8, atol=1e-10)
    x, stats = integrate_dopri5(LinearField(a=-2.0, b=1.0), np.array([1.0, -3.0]), None, cfg)
    # x' = -2x + t  =>  x(t) = t/2 - 1/4 + (x0 + 1/4) e^{-2t}
    exact = 0.25 + (np.array([1.0, -3.0]) + 0.25) * np.exp(-2.0)
    np.testing.assert_allclose(x, exact, rtol=1e-7)
    assert stats["accepted"] >= 1 and stats["nfe"] == 1 + 6 * (stats["accepted"] + stats["rejected"])


def test_dopri5_tighter_tolerance_more_steps():
    f = LinearField(a=3.0)
    loose = integrate_dopri5(f, np.ones(1), None, SamplerConfig(rtol=1e-3, atol=1e-3))[1]
    tight = integrate_dopri5(f, np.ones(1), None, SamplerConfig(rtol=1e-9, atol=1e-9))[1]
    assert tight["accepted"] > loose["accepted"]


def test_dopri5_stiff_field_raises():
    with pytest.raises(StiffnessError):
        integrate_dopri5(LinearField(a=-1e7), np.ones(1), None, SamplerConfig(rtol=1e-6, atol=1e-9, max_steps=50))


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_nonfinite_state_raises():
    class Blowup:
        def __call__(self, x, t, bundle):
            return np.full_like(x, np.inf)
    with pytest.raises(NumericError):
        integrate_fixed(Blowup(), np.ones(2), None, SamplerConfig(method="euler", steps=2))
    with pytest.raises(NumericError):
        integrate_dopri5(Blowup(), np.ones(2), None, SamplerConfig())


def test_draw_noise_keyed_by_seed_and_item():
    a = draw_noise((3, 4), seed=7, item=2)
    np.testing.assert_array_equal(a, draw_noise((3, 4), seed=7, item=2))
    assert not np.array_equal(a, draw_noise((3, 4), seed=7, item=3))
    assert not np.array_equal(a, draw_noise((3, 4), seed=8, item=2))


def test_sample_uses_paired_noise_across_scales():
    m = TwoBranch(np.zeros((2,)), np.zeros((2,)))
    outs = [sample(m, _bundle(), SamplerConfig(method="euler", steps=2, cfg_scale=g, seed=3), shape=(2,))[0]
            for g in (1.0, 3.0)]
    np.testing.assert_array_equal(outs[0], outs[1])
    np.testing.assert_array_equal(outs[0], draw_noise((2,), 3))


def test_sample_reports_nfe():
    f = LinearField()
    _, stats = sample(f, _bundle(), SamplerConfig(method="rk4", steps=5), shape=(1,))
    assert stats["nfe"] == 20 == f.calls
    with pytest.raises(ContractError):
        sample(f, None, SamplerConfig())


@pytest.mark.parametrize("bad", [dict(method="heun"), dict(steps=0), dict(rtol=0.0), dict(cfg_scale=-1.0)])
def test_sampler_config_validation(bad):
    with pytest.raises(ConfigError):
        SamplerConfig(**bad)


def test_sampler_config_roundtrip():
    cfg = SamplerConfig(method="rk4", steps=3, cfg_scale=2.5)
    assert SamplerConfig.from_dict(cfg.to_dict()) == cfg
    with pytest.raises(ConfigError):
        SamplerConfig.from_dict({"nope": 1})
