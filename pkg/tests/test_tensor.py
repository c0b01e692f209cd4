import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

import oracles
from hift import tensor as T
from hift.errors import ContractError, ShapeError
from hift.tensor import Parameter

finite = st.floats(-50, 50, allow_nan=False, allow_infinity=False)


def test_softmax_uniform_row():
    out = T.softmax_rows(np.zeros((1, 4))).data
    assert np.array_equal(out, np.full((1, 4), 0.25))


def test_softmax_large_logit_is_stable():
    out = T.softmax_rows(np.array([[1000.0, 0.0]])).data
    assert np.all(np.isfinite(out))
    assert out[0, 0] == pytest.approx(1.0)
    assert out[0, 1] == pytest.approx(0.0, abs=1e-300)


def test_softmax_matches_scalar_oracle():
    expected = [math.exp(k) / (math.e + math.e ** 2 + math.e ** 3) for k in (1, 2, 3)]
    out = T.softmax_rows(np.array([[1.0, 2.0, 3.0]])).data[0]
    assert np.allclose(out, expected, atol=1e-15)
    assert np.allclose(out, oracles.softmax_row([1, 2, 3]), atol=1e-15)


def test_softmax_rows_rejects_other_ranks():
    with pytest.raises(ShapeError):
        T.softmax_rows(np.zeros(3))
    with pytest.raises(ShapeError):
        T.softmax_rows(np.zeros((2, 2, 2)))


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(1, 7)), elements=finite))
def test_softmax_rows_are_distributions(x):
    out = T.softmax_rows(x).data
    assert np.all(out >= 0)
    assert np.allclose(out.sum(axis=1), 1.0, atol=1e-9)


def test_layer_norm_constant_row_is_zero():
    out = T.layer_norm(np.full((1, 5), 3.7), np.ones(5), np.zeros(5)).data
    assert np.array_equal(out, np.zeros((1, 5)))


def test_layer_norm_hand_oracle():
    # mean 2.5, population variance 1.25
    row = np.array([[1.0, 2.0, 3.0, 4.0]])
    expected = (row - 2.5) / math.sqrt(1.25 + 1e-5)
    out = T.layer_norm(row, np.ones(4), np.zeros(4)).data
    assert np.allclose(out, expected, atol=1e-14)
    gain, bias = np.array([1.0, 2.0, -1.0, 0.5]), np.array([0.1, 0.0, 0.2, -0.3])
    assert np.allclose(T.layer_norm(row, gain, bias).data,
                       oracles.layer_norm_rows(row, gain, bias), atol=1e-14)


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 5), st.integers(2, 8)), elements=finite))
def test_layer_norm_rows_standardised(x):
    out = T.layer_norm(x, np.ones(x.shape[1]), np.zeros(x.shape[1])).data
    var = x.var(axis=1)
    assert np.allclose(out.mean(axis=1), 0.0, atol=1e-9)
    # the epsilon inside the square root shrinks the variance to var / (var + eps)
    assert np.allclose(out.var(axis=1), var / (var + T.LN_EPS), atol=1e-9)


def test_layer_norm_unit_variance_for_well_scaled_rows(rng):
    x = rng.standard_normal((20, 64)) * 10
    out = T.layer_norm(x, np.ones(64), np.zeros(64)).data
    assert np.allclose(out.var(axis=1), 1.0, atol=1e-6)


def test_layer_norm_length_mismatch():
    with pytest.raises(ShapeError):
        T.layer_norm(np.zeros((2, 3)), np.ones(4), np.zeros(3))


def test_conv_identity_kernel(rng):
    x = rng.standard_normal((2, 3, 5, 4))
    w = np.eye(3).reshape(3, 3, 1, 1)
    assert np.array_equal(T.conv2d(x, w).data, x)


def test_conv_zero_weight(rng):
    x = rng.standard_normal((1, 2, 5, 5))
    out = T.conv2d(x, np.zeros((3, 2, 3, 3)), np.zeros(3)).data
    assert out.shape == (1, 3, 3, 3)
    assert not out.any()


@pytest.mark.parametrize("seed", range(10))
def test_conv_matches_naive_loops(seed):
    r = np.random.default_rng(seed)
    stride, padding = [(1, 0), (2, 0), (1, 1), (2, 2), (3, 1)][seed % 5]
    x = r.standard_normal((1 + seed % 2, 2, 5 + seed % 3, 5))
    w = r.standard_normal((3, 2, 3, 3))
    b = r.standard_normal(3)
    got = T.conv2d(x, w, b, stride=stride, padding=padding).data
    want = oracles.conv2d(x, w, b, stride, padding)
    assert got.shape == want.shape
    assert np.abs(got - want).max() <= 1e-10


def test_conv_output_size_formula():
    for size, k, s, p in [(5, 3, 1, 0), (7, 3, 2, 1), (127, 3, 2, 0), (10, 4, 3, 2)]:
        out = T.conv2d(np.zeros((1, 1, size, size)), np.zeros((1, 1, k, k)), stride=s, padding=p)
        assert out.shape[-1] == (size + 2 * p - k) // s + 1 == T.conv_output_size(size, k, s, p)


def test_conv_channel_mismatch():
    with pytest.raises(ShapeError):
        T.conv2d(np.zeros((1, 2, 5, 5)), np.zeros((1, 3, 3, 3)))


def test_backward_sum_gives_ones(rng):
    p = Parameter(rng.standard_normal((3, 4)))
    T.backward(p.sum())
    assert np.array_equal(p.grad, np.ones((3, 4)))


def test_backward_quadratic_gives_value(rng):
    p = Parameter(rng.standard_normal(5))
    T.backward((p * p).sum() * 0.5)
    assert np.allclose(p.grad, p.data, atol=1e-15)


def test_backward_rejects_non_scalar():
    p = Parameter(np.ones(3))
    with pytest.raises(ContractError):
        T.backward(p * 2.0)


def test_backward_leaves_unreachable_parameters_alone():
    used, unused = Parameter(np.ones(2)), Parameter(np.ones(2))
    unused.grad[:] = 7.0
    T.backward((used * 3.0).sum())
    assert np.array_equal(unused.grad, [7.0, 7.0])


def test_zero_grad_clears():
    p = Parameter(np.ones(4))
    T.backward((p * p).sum())
    p.zero_grad()
    assert p.grad.shape == p.shape and not p.grad.any()


def _grad_check(build, shapes, seed, positive=False, tol=1e-6):
    """Analytic vs numeric gradient for every input of ``build``."""
    r = np.random.default_rng(seed)
    params = [Parameter(np.abs(r.standard_normal(s)) + 0.5 if positive else r.standard_normal(s))
              for s in shapes]
    weights = r.standard_normal(build(*params).shape)

    def value():
        return float((build(*params).data * weights).sum())

    T.backward((build(*params) * weights).sum())
    for p in params:
        num = oracles.numeric_grad(value, p.data)
        scale = max(1.0, np.abs(num).max())
        assert np.abs(p.grad - num).max() / scale <= tol


OPS = {
    "add_broadcast": (lambda a, b: a + b, [(3, 4), (4,)], False),
    "sub": (lambda a, b: a - b, [(2, 3), (2, 3)], False),
    "mul_broadcast": (lambda a, b: a * b, [(2, 3, 4), (3, 1)], False),
    "div": (lambda a, b: a / b, [(3, 3), (3, 3)], True),
    "exp": (T.exp, [(4, 3)], False),
    "log": (T.log, [(4, 3)], True),
    "sigmoid": (T.sigmoid, [(5,)], False),
    "matmul_batched": (T.matmul, [(2, 3, 4), (4, 5)], False),
    "softmax": (lambda x: T.softmax(x, axis=-1), [(3, 5)], False),
    "layer_norm": (T.layer_norm, [(4, 6), (6,), (6,)], False),
    "mean_axis": (lambda x: T.mean(x, axis=1, keepdims=True), [(3, 4)], False),
    "concat": (lambda a, b: T.concat([a, b], axis=-1), [(2, 3), (2, 2)], False),
    "transpose": (lambda x: x.transpose(2, 0, 1), [(2, 3, 4)], False),
    "reshape": (lambda x: x.reshape(6, 2), [(3, 4)], False),
    "getitem_mask": (lambda x: x[np.array([True, False, True])], [(3, 2)], False),
    "conv_stride_pad": (lambda x, w, b: T.conv2d(x, w, b, stride=2, padding=1),
                        [(2, 2, 6, 5), (3, 2, 3, 3), (3,)], False),
    "xcorr": (T.xcorr_depthwise, [(2, 3, 2, 3), (2, 3, 5, 6)], False),
    "cross_entropy": (lambda x: T.cross_entropy(x, np.array([0, 1, 1, 0])), [(4, 2)], False),
    "bce": (lambda x: T.bce_with_logits(x, np.array([1.0, 0.0, 1.0])), [(3,)], False),
}


@pytest.mark.parametrize("seed", range(5))
@pytest.mark.parametrize("name", sorted(OPS))
def test_op_gradients_match_finite_differences(name, seed):
    build, shapes, positive = OPS[name]
    _grad_check(build, shapes, seed, positive)


@pytest.mark.parametrize("seed", range(5))
def test_relu_and_minimum_gradients_away_from_kinks(seed):
    r = np.random.default_rng(seed)
    # keep every entry at least 0.1 from the kink so a small step never crosses it
    x = r.uniform(0.1, 1.0, (4, 3)) * r.choice([-1, 1], (4, 3))
    y = x + r.uniform(0.1, 1.0, (4, 3)) * r.choice([-1, 1], (4, 3))
    _grad_check_fixed(lambda a, b: T.relu(a) * T.minimum(a, b), [x, y])


def _grad_check_fixed(build, values):
    params = [Parameter(v.copy()) for v in values]
    T.backward(build(*params).sum())
    for p in params:
        num = oracles.numeric_grad(lambda: float(build(*params).data.sum()), p.data)
        assert np.allclose(p.grad, num, atol=1e-7)


def test_default_dtype_switch():
    with T.default_dtype(np.float32):
        assert T.Tensor([1.0]).data.dtype == np.float32
    assert T.Tensor([1.0]).data.dtype == np.float64


def test_ops_are_deterministic(rng):
    x = rng.standard_normal((1, 2, 7, 7))
    w = rng.standard_normal((2, 2, 3, 3))
    assert np.array_equal(T.conv2d(x, w).data, T.conv2d(x, w).data)
