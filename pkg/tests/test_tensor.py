"""
自动微分张量测试
前向结果与手算值比较，反向梯度与中心差分比较
"""

import numpy as np
import pytest

from conftest import numerical_gradient, relative_error
from errors import ContractError, ShapeError
from tensor import (
    Tensor, attention, attention_weights, backward, concat, conv2d, exp, layernorm,
    matmul, maximum, minimum, no_grad, relu, sigmoid, tensor_abs, tensor_mean, tensor_sum,
)


def check_gradient(build, arrays, tol=1e-5):
    """build(*tensors) 返回标量张量；逐个输入比较解析梯度与数值梯度"""
    tensors = [Tensor(a, requires_grad=True) for a in arrays]
    backward(build(*tensors))
    for tensor, array in zip(tensors, arrays):
        def f():
            with no_grad():
                return build(*[Tensor(a) for a in arrays]).item()
        numeric = numerical_gradient(f, array)
        assert relative_error(tensor.grad, numeric) < tol


class TestMatmul:
    """矩阵乘法"""

    def test_identity(self):
        a = Tensor(np.eye(2))
        b = Tensor([[1.0, 2.0], [3.0, 4.0]])
        assert np.array_equal(matmul(a, b).data, b.data)

    def test_hand_arithmetic(self):
        out = matmul(Tensor([[1.0, 2.0]]), Tensor([[3.0], [4.0]]))
        assert out.shape == (1, 1)
        assert out.item() == 11.0

    def test_shape_error_names_both_shapes(self):
        with pytest.raises(ShapeError, match=r"\(2, 3\).*\(2, 3\)"):
            matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))

    def test_gradient(self, rng):
        check_gradient(lambda a, b: tensor_sum(matmul(a, b)),
                       [rng.normal(size=(3, 4)), rng.normal(size=(4, 2))], tol=1e-6)


class TestConv2d:
    """im2col 卷积"""

    def test_scaling_kernel(self):
        out = conv2d(Tensor(np.ones((1, 3, 3))), Tensor(np.full((1, 1, 1, 1), 2.0)))
        assert out.shape == (1, 3, 3)
        assert np.all(out.data == 2.0)

    def test_block_means(self):
        ramp = np.arange(16, dtype=np.float64).reshape(1, 4, 4)
        out = conv2d(Tensor(ramp), Tensor(np.full((1, 1, 2, 2), 0.25)), stride=2)
        expected = ramp[0].reshape(2, 2, 2, 2).mean(axis=(1, 3))
        assert out.shape == (1, 2, 2)
        assert np.allclose(out.data[0], expected, atol=1e-12)

    def test_matches_sliding_window(self, rng):
        x = rng.normal(size=(2, 5, 5))
        k = rng.normal(size=(3, 2, 3, 3))
        out = conv2d(Tensor(x), Tensor(k), stride=2, padding=1).data
        padded = np.pad(x, ((0, 0), (1, 1), (1, 1)))
        for o in range(3):
            for i in range(3):
                for j in range(3):
                    window = padded[:, 2 * i:2 * i + 3, 2 * j:2 * j + 3]
                    assert np.isclose(out[o, i, j], np.sum(window * k[o]), atol=1e-12)

    def test_non_positive_output(self):
        with pytest.raises(ShapeError):
            conv2d(Tensor(np.ones((1, 2, 2))), Tensor(np.ones((1, 1, 3, 3))))

    def test_gradient(self, rng):
        check_gradient(lambda x, k: tensor_sum(conv2d(x, k, stride=2, padding=1) * conv2d(x, k, stride=2, padding=1)),
                       [rng.normal(size=(2, 6, 6)), rng.normal(size=(3, 2, 3, 3))])


class TestAttention:
    """缩放点积注意力"""

    def test_single_token(self):
        v = Tensor([[1.5, -2.0, 0.25]])
        out = attention(Tensor([[0.3, 0.1, 0.2]]), Tensor([[1.0, 2.0, 3.0]]), v)
        assert np.array_equal(out.data, v.data)

    def test_identical_keys_average_values(self, rng):
        keys = Tensor(np.tile(rng.normal(size=(1, 4)), (3, 1)))
        values = rng.normal(size=(3, 4))
        out = attention(Tensor(rng.normal(size=(2, 4))), keys, Tensor(values))
        assert np.allclose(out.data, np.tile(values.mean(axis=0), (2, 1)), atol=1e-12)

    def test_brute_force(self, rng):
        q, k, v = rng.normal(size=(3, 4)), rng.normal(size=(3, 4)), rng.normal(size=(3, 4))
        scores = q @ k.T / 2.0
        weights = np.exp(scores) / np.exp(scores).sum(axis=1, keepdims=True)
        out = attention(Tensor(q), Tensor(k), Tensor(v))
        assert np.allclose(out.data, weights @ v, atol=1e-12)

    def test_rows_sum_to_one(self, rng):
        w = attention_weights(Tensor(rng.normal(size=(5, 8)) * 30), Tensor(rng.normal(size=(7, 8)) * 30))
        assert np.all(np.abs(w.sum(axis=1) - 1.0) < 1e-12)

    def test_mismatched_dims(self):
        with pytest.raises(ShapeError):
            attention(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 4))), Tensor(np.ones((2, 4))))
        with pytest.raises(ShapeError):
            attention(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))), Tensor(np.ones((3, 3))))

    def test_gradient(self, rng):
        check_gradient(lambda q, k, v: tensor_sum(attention(q, k, v) * attention(q, k, v)),
                       [rng.normal(size=(3, 4)), rng.normal(size=(5, 4)), rng.normal(size=(5, 2))])


class TestLayernorm:
    """层归一化"""

    def test_constant_row(self):
        out = layernorm(Tensor(np.full((1, 4), 3.0)), Tensor(np.ones(4)), Tensor(np.zeros(4)))
        assert np.all(out.data == 0.0)

    def test_two_values(self):
        out = layernorm(Tensor([[1.0, 3.0]]), Tensor(np.ones(2)), Tensor(np.zeros(2)), eps=1e-12)
        assert np.allclose(out.data, [[-1.0, 1.0]], atol=1e-9)

    def test_zero_mean(self, rng):
        out = layernorm(Tensor(rng.normal(size=(6, 8)) * 5 + 2), Tensor(np.ones(8)), Tensor(np.zeros(8)))
        assert np.all(np.abs(out.data.mean(axis=1)) < 1e-10)

    def test_empty_last_dim(self):
        with pytest.raises(ShapeError):
            layernorm(Tensor(np.ones((2, 0))), Tensor(np.ones(0)), Tensor(np.zeros(0)))

    def test_gradient(self, rng):
        weights = rng.normal(size=(3, 5))
        check_gradient(lambda x, g, b: tensor_sum(layernorm(x, g, b) * Tensor(weights)),
                       [rng.normal(size=(3, 5)), rng.normal(size=5), rng.normal(size=5)])


class TestElementwise:
    """逐元素运算与形状运算的梯度"""

    def test_sigmoid_range(self):
        out = sigmoid(Tensor([-1e6, 0.0, 1e6]))
        assert np.all((out.data >= 0.0) & (out.data <= 1.0))
        assert out.data[1] == 0.5

    def test_bias_broadcast_gradient(self, rng):
        check_gradient(lambda x, b: tensor_sum(relu(x + b) * (x + b)),
                       [rng.normal(size=(4, 3)) + 0.05, rng.normal(size=3)])

    def test_smooth_ops_gradient(self, rng):
        check_gradient(lambda a, b: tensor_mean(exp(a) / (sigmoid(b) + 1.0) - tensor_abs(a) * b),
                       [rng.uniform(0.5, 1.5, size=(2, 3)), rng.normal(size=(2, 3))])

    def test_min_max_gradient(self):
        a = Tensor([1.0, 5.0], requires_grad=True)
        b = Tensor([3.0, 2.0], requires_grad=True)
        backward(tensor_sum(minimum(a, b) + 2.0 * maximum(a, b)))
        assert np.array_equal(a.grad, [1.0, 2.0])
        assert np.array_equal(b.grad, [2.0, 1.0])

    def test_concat_and_slice_gradient(self, rng):
        check_gradient(lambda a, b: tensor_sum(concat([a, b], axis=1)[:, 1:4] * concat([a, b], axis=1)[:, 1:4]),
                       [rng.normal(size=(2, 2)), rng.normal(size=(2, 3))])

    def test_reshape_transpose_gradient(self, rng):
        w = rng.normal(size=(3, 2))
        check_gradient(lambda a: tensor_sum(a.reshape(2, 3).T * Tensor(w)), [rng.normal(size=6)])


class TestBackward:
    """反向传播契约"""

    def test_sum_gives_ones(self):
        x = Tensor(np.zeros((2, 3)), requires_grad=True)
        backward(tensor_sum(x))
        assert np.array_equal(x.grad, np.ones((2, 3)))

    def test_square(self):
        x = Tensor([1.0, 2.0, 3.0], requires_grad=True)
        backward(tensor_sum(x * x))
        assert np.array_equal(x.grad, [2.0, 4.0, 6.0])

    def test_accumulates(self):
        x = Tensor([1.0, 2.0], requires_grad=True)
        backward(tensor_sum(x * x))
        backward(tensor_sum(x * x))
        assert np.array_equal(x.grad, [4.0, 8.0])

    def test_linearity(self, rng):
        data = rng.normal(size=4)
        x = Tensor(data, requires_grad=True)
        backward(tensor_sum(x * x) + tensor_sum(exp(x)))
        combined = x.grad.copy()
        x.zero_grad()
        backward(tensor_sum(x * x))
        backward(tensor_sum(exp(x)))
        assert np.allclose(combined, x.grad, atol=1e-12)

    def test_graph_freed_after_backward(self):
        x = Tensor([1.0, 2.0], requires_grad=True)
        y = x * x
        loss = tensor_sum(y)
        backward(loss)
        assert loss._parents == () and y._parents == ()
        assert loss._grad_fn is None and y._grad_fn is None
        assert np.array_equal(x.grad, [2.0, 4.0])
        with pytest.raises(ContractError):
            backward(loss)
        assert np.array_equal(x.grad, [2.0, 4.0])

    def test_non_scalar(self):
        x = Tensor(np.ones(3), requires_grad=True)
        with pytest.raises(ContractError):
            backward(x * x)

    def test_no_grad_records_nothing(self):
        x = Tensor([1.0], requires_grad=True)
        with no_grad():
            y = x * x
        assert not y.requires_grad
        with pytest.raises(ContractError):
            backward(tensor_sum(y))

    def test_deterministic(self, rng):
        q, k, v = rng.normal(size=(4, 6)), rng.normal(size=(4, 6)), rng.normal(size=(4, 6))
        first = attention(Tensor(q), Tensor(k), Tensor(v)).data
        second = attention(Tensor(q), Tensor(k), Tensor(v)).data
        assert first.tobytes() == second.tobytes()
