import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from condflow.errors import ContractError, DimensionError, NumericError
from condflow.tensor import (
    ComputationTape, Tensor, add, backward, concat, finite_checks, gelu, get_default_dtype, getitem,
    grad_check, layer_norm, matmul, mean, mul, no_grad, precision, reshape, softmax, square, sub, sum_,
    tanh, transpose,
)


def leaf(arr):
    return Tensor(np.asarray(arr, dtype=np.float64), requires_grad=True, dtype=np.float64)


def test_default_dtype_is_float32():
    assert get_default_dtype() == np.float32
    assert Tensor([1.0, 2.0]).dtype == np.float32


def test_precision_context_restores():
    with precision(np.float64):
        assert Tensor([1.0]).dtype == np.float64
    assert Tensor([1.0]).dtype == np.float32


def test_add_broadcast_values_and_grads():
    a = leaf(np.ones((2, 3)))
    b = leaf(np.array([1.0, 2.0, 3.0]))
    out = add(a, b)
    np.testing.assert_array_equal(out.data, [[2, 3, 4], [2, 3, 4]])
    backward(sum_(out))
    np.testing.assert_array_equal(a.grad, np.ones((2, 3)))
    np.testing.assert_array_equal(b.grad, [2.0, 2.0, 2.0])


def test_incompatible_broadcast_raises():
    with pytest.raises(DimensionError):
        add(Tensor(np.ones((2, 3))), Tensor(np.ones((4,))))


def test_matmul_inner_dim_mismatch():
    with pytest.raises(DimensionError):
        matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((4, 2))))


def test_gelu_reference_values():
    # tanh approximation: 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3)))
    x = np.array([-1.0, 0.0, 1.0, 2.0])
    ref = 0.5 * x * (1 + np.tanh(math.sqrt(2 / math.pi) * (x + 0.044715 * x**3)))
    out = gelu(leaf(x)).data
    np.testing.assert_allclose(out, ref, rtol=1e-12)
    assert abs(out[2] - 0.8411920) < 1e-6


def test_softmax_reference_and_stability():
    out = softmax(leaf([1.0, 2.0, 3.0])).data
    np.testing.assert_allclose(out, [0.09003057, 0.24472847, 0.66524096], atol=1e-8)
    big = softmax(leaf([1000.0, 1001.0, 1002.0])).data
    np.testing.assert_allclose(big, out, atol=1e-12)


def test_layer_norm_statistics():
    rng = np.random.default_rng(0)
    x = leaf(rng.standard_normal((4, 16)) * 3 + 5)
    y = layer_norm(x, leaf(np.ones(16)), leaf(np.zeros(16))).data
    np.testing.assert_allclose(y.mean(-1), 0, atol=1e-10)
    np.testing.assert_allclose(y.var(-1), 1, atol=1e-4)


def test_mean_square_of_difference():
    loss = mean(square(sub(leaf([0.0, 2.0]), leaf([0.0, 0.0]))))
    assert loss.item() == 2.0


@pytest.mark.parametrize("fn", [
    lambda x: sum_(gelu(x)),
    lambda x: sum_(tanh(x) * x),
    lambda x: sum_(mul(softmax(x, axis=-1), x)),
    lambda x: sum_(square(layer_norm(x, Tensor(np.linspace(0.5, 1.5, 5), dtype=np.float64),
                                     Tensor(np.zeros(5), dtype=np.float64)) * 1.7)),
    lambda x: sum_(square(matmul(x, transpose(x, (1, 0))))),
    lambda x: sum_(square(concat([x, getitem(x, (slice(None), slice(1, 3)))], axis=1))),
    lambda x: sum_(reshape(x, (5, 3)) * Tensor(np.arange(15.0).reshape(5, 3), dtype=np.float64)),
])
def test_op_gradients_match_central_differences(fn):
    with precision(np.float64):
        x = leaf(np.random.default_rng(3).standard_normal((3, 5)))
        assert grad_check(fn, x, eps=1e-6) < 1e-6


def test_batched_matmul_gradient():
    with precision(np.float64):
        rng = np.random.default_rng(5)
        a = leaf(rng.standard_normal((2, 3, 4)))
        b = leaf(rng.standard_normal((4, 6)))
        c = leaf(rng.standard_normal((2, 6, 3)))
        f = lambda xs: sum_(square(matmul(matmul(xs[0], xs[1]), xs[2])))
        assert grad_check(f, [a, b, c], eps=1e-6) < 1e-6


def test_gradients_accumulate_until_reset():
    x = leaf([1.0, 2.0])
    backward(sum_(x * 3.0))
    backward(sum_(x * 3.0))
    np.testing.assert_array_equal(x.grad, [6.0, 6.0])
    x.zero_grad()
    assert x.grad is None


def test_backward_requires_scalar():
    with pytest.raises(ContractError):
        backward(leaf([1.0, 2.0]) * 2.0)


def test_backward_requires_graph():
    with pytest.raises(ContractError):
        backward(Tensor(3.0))


def test_no_grad_builds_no_graph():
    x = leaf([1.0, 2.0])
    with no_grad():
        y = sum_(x * x)
    assert not y.requires_grad


def test_tape_is_topological_and_shared_nodes_once():
    x = leaf([1.0, 2.0])
    h = x * x
    loss = sum_(add(h, h))
    tape = ComputationTape.record(loss)
    ops = [e.op for e in tape.entries]
    assert ops.count("mul") == 1
    pos = {id(e.output): i for i, e in enumerate(tape.entries)}
    for i, e in enumerate(tape.entries):
        for inp in e.inputs:
            if id(inp) in pos:
                assert pos[id(inp)] < i
    backward(loss)
    np.testing.assert_array_equal(x.grad, [4.0, 8.0])


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_finite_checks_raise_on_overflow():
    with finite_checks(True), pytest.raises(NumericError):
        Tensor([1e30]) * Tensor([1e30])


def test_grad_check_eps_bounds():
    with pytest.raises(ContractError):
        grad_check(lambda x: sum_(x), leaf([1.0]), eps=1e-1)


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 4), st.integers(1, 4)),
              elements=st.floats(-10, 10, allow_nan=False)))
def test_softmax_rows_are_distributions(x):
    p = softmax(Tensor(x, dtype=np.float64)).data
    assert np.all(p >= 0)
    np.testing.assert_allclose(p.sum(-1), 1.0, atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 3), st.integers(1, 4)),
              elements=st.floats(-5, 5, allow_nan=False)),
       arrays(np.float64, st.integers(1, 4), elements=st.floats(-5, 5, allow_nan=False)))
def test_broadcast_gradient_has_operand_shape(a, b):
    if a.shape[-1] != b.shape[0]:
        b = np.resize(b, a.shape[-1])
    ta, tb = leaf(a), leaf(b)
    backward(sum_(mul(ta, tb)))
    assert ta.grad.shape == a.shape and tb.grad.shape == b.shape
    np.testing.assert_allclose(tb.grad, a.sum(axis=0))


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, st.integers(2, 6), elements=st.floats(-3, 3, allow_nan=False)))
def test_add_commutes(x):
    y = x[::-1].copy()
    np.testing.assert_array_equal(add(leaf(x), leaf(y)).data, add(leaf(y), leaf(x)).data)
