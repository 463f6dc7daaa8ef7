import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from condflow.errors import ConfigError, DimensionError
from condflow.nn import DiTBlock, Linear, ModelConfig, MultiHeadAttention, dit_block_forward, rope_apply
from condflow.nn.attention import attention
from condflow.nn.dit import sinusoidal_features
from condflow.tensor import Tensor, precision


def rope_complex(x, positions, base=10000.0):
    """Oracle: treat channel pairs as complex numbers and multiply by e^{i pos theta_j}."""
    hd = x.shape[-1]
    theta = base ** (-np.arange(0, hd, 2) / hd)
    z = x[..., 0::2] + 1j * x[..., 1::2]
    rot = np.exp(1j * np.asarray(positions, float)[:, None, None] * theta)
    z = z * rot
    out = np.empty_like(x)
    out[..., 0::2], out[..., 1::2] = z.real, z.imag
    return out


def naive_attention(q, k, v, pq, pk):
    """Per-head loops with the complex rotary oracle."""
    q, k = rope_complex(q, pq), rope_complex(k, pk)
    L, H, hd = q.shape
    out = np.zeros_like(q)
    for h in range(H):
        logits = q[:, h] @ k[:, h].T / np.sqrt(hd)
        w = np.exp(logits - logits.max(-1, keepdims=True))
        w /= w.sum(-1, keepdims=True)
        out[:, h] = w @ v[:, h]
    return out


def test_rope_matches_complex_oracle(rng):
    x = rng.standard_normal((7, 3, 8))
    pos = [0, 1, 2, 5, 5, 9, 30]
    got = rope_apply(Tensor(x, dtype=np.float64), pos).data
    np.testing.assert_allclose(got, rope_complex(x, pos), atol=1e-12)


def test_rope_position_zero_is_identity(rng):
    x = rng.standard_normal((4, 2, 6))
    np.testing.assert_array_equal(rope_apply(Tensor(x, dtype=np.float64), [0] * 4).data, x)


def test_rope_rejects_odd_dim_and_bad_positions(rng):
    with pytest.raises(ConfigError):
        rope_apply(Tensor(rng.standard_normal((3, 1, 5))), [0, 1, 2])
    with pytest.raises(DimensionError):
        rope_apply(Tensor(rng.standard_normal((3, 1, 4))), [0, 1])


def test_attention_matches_naive_oracle(rng):
    q, k, v = (rng.standard_normal((5, 2, 4)) for _ in range(3))
    k, v = k[:4], v[:4]
    pq, pk = [0, 1, 2, 3, 4], [0, 2, 2, 7]
    got = attention(*(Tensor(a, dtype=np.float64) for a in (q, k, v)), pq, pk).data
    np.testing.assert_allclose(got, naive_attention(q, k, v, pq, pk), atol=1e-12)


def test_attention_weights_are_distributions(rng):
    q = Tensor(rng.standard_normal((2, 5, 2, 4)))
    _, w = attention(q, q, q, return_weights=True)
    np.testing.assert_allclose(w.data.sum(-1), 1.0, atol=1e-5)


def test_attention_kv_length_mismatch(rng):
    with pytest.raises(DimensionError):
        attention(Tensor(rng.standard_normal((3, 1, 4))), Tensor(rng.standard_normal((3, 1, 4))),
                  Tensor(rng.standard_normal((2, 1, 4))))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.integers(-50, 50))
def test_rope_logits_depend_only_on_offsets(seed, shift):
    r = np.random.default_rng(seed)
    q, k = r.standard_normal((6, 2, 8)), r.standard_normal((6, 2, 8))
    pos = r.integers(0, 100, size=6)
    def logits(p):
        a, b = rope_complex(q, p), rope_complex(k, p)
        return np.einsum("ihd,jhd->hij", a, b)
    np.testing.assert_allclose(logits(pos), logits(pos + shift), atol=1e-9)


def test_linear_shapes_and_zero_init(rng):
    lin = Linear(3, 5, rng)
    assert lin.W.shape == (3, 5) and lin.b.shape == (5,)
    z = Linear(3, 5, rng, zero=True)
    assert not z.W.data.any()


def test_dit_block_is_identity_at_init(rng):
    block = DiTBlock(16, 2, rng, cross=True)
    x = rng.standard_normal((6, 16)).astype(np.float32)
    ctx = rng.standard_normal((3, 16)).astype(np.float32)
    out = dit_block_forward(block, x, ctx, list(range(6)), [0, 1, 2])
    np.testing.assert_array_equal(out.data, x)


def test_dit_block_cross_presence_checked(rng):
    block = DiTBlock(16, 2, rng, cross=False)
    x = Tensor(rng.standard_normal((1, 4, 16)))
    with pytest.raises(ConfigError):
        block(x, Tensor(rng.standard_normal((1, 2, 16))), list(range(4)))
    with pytest.raises(ConfigError):
        DiTBlock(16, 2, rng, cross=True)(x, None, list(range(4)))


def test_parameter_names_are_hierarchical(rng):
    block = DiTBlock(16, 2, rng, cross=True)
    names = dict(block.named_parameters())
    assert {"self.Wq", "cross.Wk", "mlp.fc2.W", "norm1.gain"} <= set(names)


def test_sinusoidal_features_layout():
    f = sinusoidal_features([0.0, 0.5], 8)
    assert f.shape == (2, 8)
    np.testing.assert_array_equal(f[0], [1, 1, 1, 1, 0, 0, 0, 0])


@pytest.mark.parametrize("bad", [
    dict(d_model=30, heads=4),
    dict(d_model=12, heads=4),  # odd head dim
    dict(variant="Bogus"),
    dict(concat_axis="time"),
    dict(depth=0),
    dict(depth=2.0),
])
def test_model_config_validation(bad):
    with pytest.raises(ConfigError):
        ModelConfig(**bad)


def test_model_config_roundtrip():
    cfg = ModelConfig(variant="ConcatVS", concat_axis="sequence")
    assert ModelConfig.from_dict(cfg.to_dict()) == cfg


@pytest.mark.parametrize("variant,in_ch", [("CrossV", 16), ("CrossVS", 8), ("ConcatV", 24), ("ConcatVS", 32)])
def test_channel_concat_widths(variant, in_ch):
    assert ModelConfig(variant=variant).in_channels == in_ch


def test_attention_module_gradients():
    from condflow.tensor import grad_check, sum_, square
    with precision(np.float64):
        r = np.random.default_rng(2)
        mha = MultiHeadAttention(8, 2, r)
        mha.Wo.data = r.standard_normal(mha.Wo.shape)
        x = Tensor(r.standard_normal((1, 4, 8)), dtype=np.float64)
        f = lambda ps: sum_(square(mha(x, None, [0, 1, 2, 3], [0, 1, 2, 3])))
        assert grad_check(f, mha.parameters(), eps=1e-6) < 1e-5
