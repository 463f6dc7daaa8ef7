import numpy as np
import pytest

from condflow.conditioning import ConditionEncoder
from condflow.errors import DimensionError
from condflow.flowmatch import fm_loss, interpolate_path, target_velocity
from condflow.model import VelocityModel
from condflow.nn.config import VARIANTS, ModelConfig
from condflow.tensor import grad_check, no_grad, precision


def randomize(model, rng, scale=0.3):
    """Give every parameter (including zero-initialised projections) a random value."""
    for p in model.parameters():
        p.data = (rng.standard_normal(p.shape) * scale).astype(p.dtype)


def fm_objective(model, samples, seed=0):
    rng = np.random.default_rng(seed)
    bundle = ConditionEncoder(T_a=model.config.T_a, D_v=model.config.D_v, D_p=model.config.D_p).fit().transform(samples)
    x1 = np.stack([s.latent for s in samples])
    x0 = rng.standard_normal(x1.shape)
    t = rng.random(len(samples))
    xt, target = interpolate_path(x0, x1, t), target_velocity(x0, x1)
    return lambda _: fm_loss(model(xt, t, bundle), target)


@pytest.mark.parametrize("variant", VARIANTS)
@pytest.mark.parametrize("axis", ["channel", "sequence"])
def test_forward_shapes(variant, axis, stream):
    cfg = ModelConfig(variant=variant, concat_axis=axis, depth=1, d_model=16, heads=2)
    model = VelocityModel(cfg)
    samples = [stream.draw(t, np.random.default_rng(i)) for i, t in enumerate(["V2S", "VisualTTS", "TTS"])]
    bundle = ConditionEncoder().fit().transform(samples)
    out = model(np.zeros((3, 64, 8)), np.array([0.1, 0.5, 0.9]), bundle)
    assert out.shape == (3, 64, 8) and out.dtype == np.float32


def test_unbatched_matches_batched(stream, tiny_config):
    model = VelocityModel(tiny_config)
    randomize(model, np.random.default_rng(0))
    s = stream.draw("VisualTTS", np.random.default_rng(1))
    enc = ConditionEncoder().fit()
    x = np.random.default_rng(2).standard_normal((64, 8))
    single = model(x, 0.3, enc.encode(s)).data
    batched = model(x[None], [0.3], enc.transform([s])).data[0]
    np.testing.assert_allclose(single, batched, atol=1e-6)


def test_batch_items_are_independent(stream, tiny_config):
    model = VelocityModel(tiny_config)
    randomize(model, np.random.default_rng(0))
    enc = ConditionEncoder().fit()
    a, b = (stream.draw("V2S", np.random.default_rng(i)) for i in (5, 6))
    x = np.random.default_rng(2).standard_normal((2, 64, 8))
    pair = model(x, [0.2, 0.7], enc.transform([a, b])).data
    alone = model(x[1:], [0.7], enc.transform([b])).data
    np.testing.assert_allclose(pair[1:], alone, atol=1e-5)


def test_input_shape_checked(tiny_config, stream):
    model = VelocityModel(tiny_config)
    bundle = ConditionEncoder().fit().transform([stream.draw("V2S", np.random.default_rng(0))])
    with pytest.raises(DimensionError):
        model(np.zeros((1, 32, 8)), 0.5, bundle)


def test_same_seed_same_parameters(tiny_config):
    a, b = VelocityModel(tiny_config, seed=4), VelocityModel(tiny_config, seed=4)
    for (na, pa), (nb, pb) in zip(a.named_parameters(), b.named_parameters()):
        assert na == nb
        np.testing.assert_array_equal(pa.data, pb.data)


def test_state_dict_names_are_hierarchical(tiny_config):
    names = set(VelocityModel(tiny_config).state_dict())
    assert "block0.self.Wq" in names and "block0.cross.Wk" in names and "out_proj.W" in names


@pytest.mark.parametrize("variant", VARIANTS)
def test_small_model_gradients(variant, stream):
    with precision(np.float64):
        cfg = ModelConfig(variant=variant, depth=1, d_model=8, heads=2, T_a=64, D_a=8, D_v=16, D_p=8)
        model = VelocityModel(cfg, seed=1)
        randomize(model, np.random.default_rng(1))
        samples = [stream.draw("VisualTTS", np.random.default_rng(0))]
        err = grad_check(fm_objective(model, samples), model.parameters(), eps=1e-6, max_coords=4,
                         rng=np.random.default_rng(0))
    assert err < 1e-3


def test_zero_init_output_path(stream, tiny_config):
    """With zero-initialised residual branches the blocks pass tokens through unchanged."""
    model = VelocityModel(tiny_config)
    enc = ConditionEncoder().fit()
    bundle = enc.transform([stream.draw("V2S", np.random.default_rng(0))])
    x = np.random.default_rng(1).standard_normal((1, 64, 8)).astype(np.float32)
    with no_grad():
        h, positions, asm = model.embed_inputs(x, [0.5], bundle)
        out = h
        for blk in model.blocks:
            out = blk(out, asm.cross_ctx, positions, asm.cross_positions)
    np.testing.assert_array_equal(out.data, h.data)
