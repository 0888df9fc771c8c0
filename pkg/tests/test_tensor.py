import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from miniformer import tensor as T
from miniformer.gradcheck import check_gradients, numerical_grad, relative_error

from conftest import rand_param


def test_matmul_identity_and_hand_case():
    a = T.Tensor([[1.0, 2.0], [3.0, 4.0]])
    assert np.array_equal(T.matmul(T.Tensor(np.eye(2)), a).data, a.data)
    assert T.matmul(T.Tensor([[1.0, 2.0]]), T.Tensor([[3.0], [4.0]])).data.tolist() == [[11.0]]


def test_matmul_shape_error_names_both_shapes():
    with pytest.raises(T.DimensionError, match=r"\(2, 3\).*\(2, 3\)"):
        T.matmul(T.Tensor(np.zeros((2, 3))), T.Tensor(np.zeros((2, 3))))


def test_matmul_grad_matches_finite_differences(rng):
    a, b = rand_param(rng, 3, 4), rand_param(rng, 4, 2)
    errs = check_gradients(lambda: T.matmul(a, b).sum(), [a, b])
    assert max(errs.values()) < 1e-6


def test_batched_matmul_grad(rng):
    a, b, w = rand_param(rng, 2, 3, 4), rand_param(rng, 2, 4, 2), rand_param(rng, 4, 3)
    errs = check_gradients(lambda: ((a @ b) * (a @ b)).sum() + (a @ w).sum(), [a, b, w])
    assert max(errs.values()) < 1e-6


def test_pointwise_values():
    assert T.sigmoid(T.Tensor([0.0])).data[0] == 0.5
    assert T.tanh(T.Tensor([0.0])).data[0] == 0.0
    assert T.elementwise("relu", T.Tensor([-1.0, 2.0])).data.tolist() == [0.0, 2.0]
    big = T.sigmoid(T.Tensor([-800.0, 800.0])).data
    assert np.all(np.isfinite(big)) and big[0] == 0.0 and big[1] == 1.0


def test_sigmoid_grad_at_zero():
    x = T.parameter([0.0])
    T.sigmoid(x).sum().backward()
    assert x.grad.tolist() == [0.25]


@pytest.mark.parametrize("op", ["sigmoid", "tanh", "exp", "relu", "neg"])
def test_unary_grads(rng, op):
    x = rand_param(rng, 3, 4)
    # keep relu away from its kink
    x.data[np.abs(x.data) < 1e-3] = 0.5
    errs = check_gradients(lambda: (T.elementwise(op, x) * T.Tensor(np.arange(12.0).reshape(3, 4))).sum(), [x])
    assert errs[0] < 1e-6


@pytest.mark.parametrize("op", ["add", "sub", "mul", "div"])
def test_binary_grads_with_bias_broadcast(rng, op):
    x = rand_param(rng, 3, 4)
    b = T.parameter(rng.uniform(0.5, 1.5, 4))
    errs = check_gradients(lambda: (T.elementwise(op, x, b) ** 2).sum(), [x, b])
    assert max(errs.values()) < 1e-6


def test_two_sided_broadcast_rejected():
    with pytest.raises(T.DimensionError):
        T.add(T.Tensor(np.zeros((3, 1))), T.Tensor(np.zeros((1, 4))))
    with pytest.raises(T.DimensionError):
        T.mul(T.Tensor(np.zeros((3, 2))), T.Tensor(np.zeros(3)))


def test_elementwise_unknown_op():
    with pytest.raises(ValueError):
        T.elementwise("cosh", T.Tensor([1.0]))


def test_softmax_basic_and_stable():
    assert T.softmax(T.Tensor([0.0, 0.0])).data.tolist() == [0.5, 0.5]
    out = T.softmax(T.Tensor([1000.0, 0.0])).data
    assert np.all(np.isfinite(out)) and out[0] == pytest.approx(1.0) and out[1] == pytest.approx(0.0)


def test_softmax_jvp_matches_finite_differences(rng):
    x = rand_param(rng, 5)
    v = rng.uniform(-1, 1, 5)
    errs = check_gradients(lambda: (T.softmax(x) * v).sum(), [x])
    assert errs[0] < 1e-6


@settings(max_examples=60, deadline=None)
@given(
    arrays(np.float64, st.tuples(st.integers(1, 4), st.integers(1, 6)),
           elements=st.floats(-50, 50)),
    st.floats(-100, 100),
)
def test_softmax_sums_to_one_and_shift_invariant(x, c):
    out = T.softmax(T.Tensor(x)).data
    assert np.all(out >= 0)
    assert np.all(np.abs(out.sum(axis=-1) - 1.0) < 1e-12)
    shifted = T.softmax(T.Tensor(x + c)).data
    assert np.max(np.abs(shifted - out)) < 1e-12


def test_log_softmax_grad(rng):
    x = rand_param(rng, 2, 5)
    w = rng.uniform(-1, 1, (2, 5))
    assert check_gradients(lambda: (T.log_softmax(x) * w).sum(), [x])[0] < 1e-6


def test_concat_reshape_semantics():
    assert T.concat([T.Tensor([[1.0]]), T.Tensor([[2.0]])], axis=1).data.tolist() == [[1.0, 2.0]]
    x = T.Tensor(np.arange(6.0).reshape(2, 3))
    assert x.reshape(3, 2).data.reshape(-1).tolist() == list(range(6))


def test_concat_backward_splits_ones(rng):
    a, b = rand_param(rng, 2, 3), rand_param(rng, 2, 1)
    T.concat([a, b], axis=1).sum().backward()
    assert np.array_equal(a.grad, np.ones((2, 3))) and np.array_equal(b.grad, np.ones((2, 1)))


def test_concat_mismatch():
    with pytest.raises(T.DimensionError):
        T.concat([T.Tensor(np.zeros((2, 3))), T.Tensor(np.zeros((3, 3)))], axis=1)


def test_shape_ops_grads(rng):
    x = rand_param(rng, 2, 3, 4)
    w = rng.uniform(-1, 1, (4, 3, 2))
    fns = [
        lambda: (T.transpose(x, (2, 1, 0)) * w).sum(),
        lambda: (x.reshape(4, 3, 2) * w).sum(),
        lambda: (x[:, 1:, ::2] ** 2).sum(),
        lambda: (T.stack([x, x * 2.0], axis=1) ** 2).mean(),
        lambda: (x.sum(axis=1) ** 2).sum() + (x.mean(axis=-1, keepdims=True) ** 2).sum(),
        lambda: (T.pick_last(x, np.array([[0, 1, 2], [3, 3, 0]])) ** 2).sum(),
        lambda: (T.take_rows(x.reshape(6, 4), np.array([[0, 5], [0, 2]])) ** 2).sum(),
        lambda: (T.where(np.array([True, False]).reshape(2, 1, 1), x, x * 3.0) ** 2).sum(),
        lambda: (T.masked_fill(x, np.array([True, False, False, True]), 0.0) ** 2).sum(),
    ]
    for fn in fns:
        assert check_gradients(fn, [x])[0] < 1e-6


def test_backward_sum_gives_ones(rng):
    x = rand_param(rng, 3, 2)
    x.sum().backward()
    assert np.array_equal(x.grad, np.ones((3, 2)))


def test_backward_square():
    x = T.parameter([3.0])
    (x * x).sum().backward()
    assert x.grad.tolist() == [6.0]


def test_backward_requires_scalar(rng):
    with pytest.raises(T.GraphError):
        rand_param(rng, 2).backward()


def test_backward_accumulates(rng):
    x = rand_param(rng, 4)
    y = (T.tanh(x) * x).sum()
    y.backward()
    first = x.grad.copy()
    y.backward()
    np.testing.assert_allclose(x.grad, 2 * first, rtol=0, atol=1e-15)


def test_shared_node_visited_once(rng):
    x = rand_param(rng, 3)
    h = T.tanh(x)
    y = (h * h + h).sum()
    y.backward()
    expected = (2 * np.tanh(x.data) + 1) * (1 - np.tanh(x.data) ** 2)
    np.testing.assert_allclose(x.grad, expected, rtol=1e-12)


def test_no_grad_records_nothing(rng):
    x = rand_param(rng, 3)
    with T.no_grad():
        y = T.tanh(x).sum()
    assert not y.requires_grad and y._parents == ()


def test_take_rows_index_error():
    with pytest.raises(IndexError, match="7"):
        T.take_rows(T.Tensor(np.zeros((3, 2))), np.array([0, 7]))


def test_numerical_grad_oracle_on_closed_form():
    x = T.Tensor(np.array([0.3, -1.2]))
    g = numerical_grad(lambda: T.Tensor(np.sum(np.sin(x.data))), x)
    assert relative_error(np.cos(x.data), g) < 1e-9
