"""Tests for the reverse-mode autodiff core."""

import numpy as np
import pytest

from src.smallvae.autodiff import Graph, Parameter, backward, grad_check, ops
from src.smallvae.errors import DomainError, GradientError, NonFiniteError, ShapeError


@pytest.fixture
def rng():
    return np.random.default_rng(7)


def test_elementwise_forward_values():
    graph = Graph()
    a = graph.constant(np.array([1.0, 2.0, 4.0]))
    b = graph.constant(np.array([2.0, 2.0, 2.0]))

    assert np.array_equal(ops.add(a, b).value, [3.0, 4.0, 6.0])
    assert np.array_equal(ops.sub(a, b).value, [-1.0, 0.0, 2.0])
    assert np.array_equal(ops.mul(a, b).value, [2.0, 4.0, 8.0])
    assert np.array_equal(ops.div(a, b).value, [0.5, 1.0, 2.0])
    assert np.array_equal((a * 2.0 + 1.0).value, [3.0, 5.0, 9.0])


def test_scalar_broadcast_only():
    graph = Graph()
    a = graph.constant(np.ones((2, 3)))
    with pytest.raises(ShapeError):
        ops.add(a, graph.constant(np.ones(3)))
    assert ops.add(a, graph.constant(np.asarray(2.0))).shape == (2, 3)


def test_softplus_and_sigmoid_are_stable():
    graph = Graph()
    x = graph.constant(np.array([-1000.0, 0.0, 1000.0]))

    assert np.allclose(ops.softplus(x).value, [0.0, np.log(2.0), 1000.0])
    assert np.allclose(ops.sigmoid(x).value, [0.0, 0.5, 1.0])


def test_log_softmax_rows_normalize(rng):
    graph = Graph()
    x = graph.constant(rng.normal(size=(4, 5)) * 50)
    out = ops.log_softmax(x).value
    assert np.allclose(np.exp(out).sum(axis=1), 1.0)


def test_log_of_nonpositive_raises_domain_error():
    graph = Graph()
    x = graph.constant(np.array([[1.0, 0.0]]))
    with pytest.raises(DomainError) as excinfo:
        ops.log(x)
    assert excinfo.value.op == "log"
    assert excinfo.value.index == (0, 1)


def test_division_by_zero_raises_domain_error():
    graph = Graph()
    with pytest.raises(DomainError):
        ops.div(graph.constant(np.ones(2)), graph.constant(np.array([1.0, 0.0])))


def test_overflow_raises_non_finite_error():
    graph = Graph()
    with pytest.raises(NonFiniteError) as excinfo:
        ops.exp(graph.constant(np.array([0.0, 1000.0])))
    assert excinfo.value.op == "exp"
    assert excinfo.value.index == (1,)


def test_fan_out_accumulates_gradients():
    graph = Graph()
    x = graph.variable(np.array([1.0, -2.0, 3.0]))
    y = ops.reduce_sum(ops.add(ops.mul(x, x), x))

    grads = backward(graph, y)

    assert np.allclose(grads[x.id], 2 * x.value + 1)


def test_each_node_visited_once():
    graph = Graph()
    x = graph.variable(np.array([0.5, 1.5]))
    h = ops.square(x)
    y = ops.reduce_sum(ops.add(ops.mul(h, h), ops.mul(h, x)))

    backward(graph, y)

    assert graph.visit_counts
    assert set(graph.visit_counts.values()) == {1}


def test_unused_leaf_gets_zero_gradient():
    graph = Graph()
    x = graph.variable(np.array([1.0, 2.0]))
    unused = graph.variable(np.array([3.0]))
    grads = backward(graph, ops.reduce_sum(x))

    assert np.array_equal(grads[unused.id], [0.0])


def test_parameter_gradients_accumulate_into_buffer():
    p = Parameter("w", np.array([2.0, 3.0]))
    for _ in range(2):
        graph = Graph()
        backward(graph, ops.reduce_sum(ops.square(graph.param(p))))
    assert np.allclose(p.grad, 2 * 2 * p.data)

    p.zero_grad()
    assert not p.grad.any()


def test_frozen_parameter_enters_as_constant():
    p = Parameter("w", np.array([1.0]))
    p.frozen = True
    graph = Graph()
    node = graph.param(p)

    assert not node.requires_grad
    assert graph.param(p) is node


def test_backward_requires_scalar_loss():
    graph = Graph()
    x = graph.variable(np.ones(3))
    with pytest.raises(GradientError):
        backward(graph, ops.square(x))


def test_backward_rejects_foreign_loss():
    graph, other = Graph(), Graph()
    loss = ops.reduce_sum(other.variable(np.ones(2)))
    with pytest.raises(GradientError):
        backward(graph, loss)


def test_inference_graph_records_nothing():
    graph = Graph(recording=False)
    x = graph.constant(np.ones(3))
    ops.reduce_sum(ops.square(x))
    assert len(graph) == 0

    recording = Graph()
    with recording.inference():
        ops.square(recording.constant(np.ones(2)))
    assert len(recording) == 0


def test_relu_subgradient_at_zero_is_zero():
    graph = Graph()
    x = graph.variable(np.array([-1.0, 0.0, 2.0]))
    grads = backward(graph, ops.reduce_sum(ops.relu(x)))
    assert np.array_equal(grads[x.id], [0.0, 0.0, 1.0])


def test_clamp_blocks_gradient_outside_range():
    graph = Graph()
    x = graph.variable(np.array([-30.0, 0.0, 30.0]))
    grads = backward(graph, ops.reduce_sum(ops.clamp(x, -20.0, 20.0)))
    assert np.array_equal(grads[x.id], [0.0, 1.0, 0.0])


def test_reduce_axes_validation():
    graph = Graph()
    x = graph.constant(np.ones((2, 3)))
    assert ops.reduce_sum(x, axes=1).shape == (2,)
    assert ops.reduce_mean(x, axes=(0, 1)).shape == ()
    with pytest.raises(ShapeError):
        ops.reduce_sum(x, axes=2)
    with pytest.raises(ShapeError):
        ops.reduce_sum(x, axes=(0, 0))


def test_matmul_shape_errors():
    graph = Graph()
    with pytest.raises(ShapeError):
        ops.matmul(graph.constant(np.ones((2, 3))), graph.constant(np.ones((2, 3))))


def test_grad_check_elementwise_chain(rng):
    x = rng.uniform(0.5, 2.0, size=(3, 4))

    def f(graph, x_node):
        h = ops.mul(ops.sigmoid(x_node), ops.log(x_node))
        return ops.reduce_mean(ops.add(ops.softplus(h), ops.exp(ops.neg(ops.square(x_node)))))

    assert grad_check(f, x, eps=1e-6) < 1e-6


def test_grad_check_matmul_and_log_softmax(rng):
    x = rng.normal(size=(3, 4))
    w = rng.normal(size=(4, 5))

    def f(graph, x_node):
        logits = ops.matmul(x_node, graph.constant(w))
        return ops.reduce_sum(ops.mul(ops.log_softmax(logits), graph.constant(np.eye(3, 5))))

    assert grad_check(f, x, eps=1e-6) < 1e-6


@pytest.mark.parametrize("stride,padding", [(1, 1), (2, 1), (1, 0)])
def test_grad_check_conv2d_input(rng, stride, padding):
    x = rng.normal(size=(2, 3, 5, 5))
    w = rng.normal(size=(4, 3, 3, 3))
    b = rng.normal(size=4)

    def f(graph, x_node):
        out = ops.conv2d(x_node, graph.constant(w), graph.constant(b), stride=stride, padding=padding)
        return ops.reduce_sum(ops.square(out))

    assert grad_check(f, x, eps=1e-6) < 1e-6


def test_grad_check_conv2d_weight(rng):
    x = rng.normal(size=(2, 2, 4, 4))
    b = np.zeros(3)

    def f(graph, w_node):
        out = ops.conv2d(graph.constant(x), w_node, graph.constant(b), stride=2, padding=1)
        return ops.reduce_sum(ops.square(out))

    assert grad_check(f, rng.normal(size=(3, 2, 3, 3)), eps=1e-6) < 1e-6


def test_conv2d_matches_direct_sum(rng):
    x = rng.normal(size=(1, 2, 4, 4))
    w = rng.normal(size=(1, 2, 3, 3))
    graph = Graph()
    out = ops.conv2d(graph.constant(x), graph.constant(w), graph.constant(np.array([0.5]))).value

    expected = np.sum(x[0, :, 1:4, 0:3] * w[0]) + 0.5
    assert out.shape == (1, 1, 2, 2)
    assert np.isclose(out[0, 0, 1, 0], expected)


def test_conv2d_channel_mismatch_names_layer():
    graph = Graph()
    with pytest.raises(ShapeError, match="encoder.stem"):
        ops.conv2d(
            graph.constant(np.ones((1, 2, 4, 4))),
            graph.constant(np.ones((1, 3, 3, 3))),
            graph.constant(np.zeros(1)),
            name="encoder.stem",
        )


def test_resize_nearest_values_and_gradient(rng):
    graph = Graph()
    x = graph.constant(np.arange(16.0).reshape(1, 1, 4, 4))
    down = ops.resize_nearest(x, (2, 2)).value
    assert np.array_equal(down[0, 0], [[0.0, 2.0], [8.0, 10.0]])

    def f(graph, x_node):
        return ops.reduce_sum(ops.square(ops.resize_nearest(x_node, (5, 3))))

    assert grad_check(f, rng.normal(size=(2, 2, 4, 4)), eps=1e-6) < 1e-6


def test_concat_and_tile_rows_gradients(rng):
    def f(graph, x_node):
        joined = ops.concat([x_node, ops.square(x_node)], axis=1)
        row = ops.reduce_sum(joined, axes=0)
        return ops.reduce_sum(ops.mul(ops.tile_rows(row, 2), graph.constant(np.ones((2, 6)))))

    assert grad_check(f, rng.normal(size=(4, 3)), eps=1e-6) < 1e-6


def test_grad_check_rejects_bad_eps():
    with pytest.raises(ValueError):
        grad_check(lambda g, x: ops.reduce_sum(x), np.ones(2), eps=0.0)
