import struct

import numpy as np
import pytest

from dctnet import nn
from dctnet.errors import FormatError, InvalidArgumentError
from dctnet.nn import ConvParams, LinearParams, Tensor


def linear(weight, bias) -> LinearParams:
    return LinearParams(Tensor(np.asarray(weight, dtype=np.float64)), Tensor(np.asarray(bias, dtype=np.float64)))


def conv(kernels, bias) -> ConvParams:
    return ConvParams(Tensor(np.asarray(kernels, dtype=np.float64)), Tensor(np.asarray(bias, dtype=np.float64)))


def check_layer_gradients(forward, backward, x, params, tol, seed=0):
    """用随机上游梯度 R 构造标量 sum(R·y)，逐项对比解析梯度与中心差分。"""
    rng = np.random.default_rng(seed)
    y, cache = forward(x, params) if params is not None else forward(x)
    upstream = rng.standard_normal(y.shape)
    tensors = params.tensors() if params is not None else []
    nn.zero_grad(tensors)
    dx = backward(upstream, cache, params) if params is not None else backward(upstream, cache)

    def f():
        out = forward(x, params)[0] if params is not None else forward(x)[0]
        return float(np.sum(out * upstream))

    assert nn.max_relative_error(dx, nn.numeric_gradient(f, x), floor=1e-6) < tol
    for t in tensors:
        assert nn.max_relative_error(t.grad, nn.numeric_gradient(f, t.values), floor=1e-6) < tol


def test_linear_examples():
    y, _ = nn.linear_forward(np.array([[1.0, 2.0]]), linear([[3.0, 4.0]], [5.0]))
    assert y.tolist() == [[16.0]]
    x = np.random.default_rng(0).random((3, 4))
    y, _ = nn.linear_forward(x, linear(np.eye(4), np.zeros(4)))
    np.testing.assert_array_equal(y, x)
    with pytest.raises(InvalidArgumentError):
        nn.linear_forward(np.zeros((2, 3)), linear(np.eye(4), np.zeros(4)))


def test_linear_gradients():
    rng = np.random.default_rng(1)
    params = linear(rng.standard_normal((3, 8)), rng.standard_normal(3))
    check_layer_gradients(nn.linear_forward, nn.linear_backward, rng.standard_normal((4, 8)), params, 1e-5)


def test_conv_examples():
    x = np.arange(16, dtype=np.float64).reshape(1, 1, 4, 4)
    y, _ = nn.conv2d_forward(x, conv(np.ones((1, 1, 4, 4)), [0.0]))
    assert y.shape == (1, 1, 1, 1) and y[0, 0, 0, 0] == x.sum()

    delta = np.zeros((1, 1, 3, 3))
    delta[0, 0, 1, 1] = 1.0
    x = np.random.default_rng(0).random((2, 1, 6, 6))
    y, _ = nn.conv2d_forward(x, conv(delta, [0.5]))
    np.testing.assert_allclose(y, x[:, :, 1:5, 1:5] + 0.5)

    with pytest.raises(InvalidArgumentError):
        nn.conv2d_forward(np.zeros((1, 2, 6, 6)), conv(delta, [0.0]))
    with pytest.raises(InvalidArgumentError):
        nn.conv2d_forward(np.zeros((1, 1, 2, 2)), conv(delta, [0.0]))


def test_conv_gradients():
    rng = np.random.default_rng(2)
    params = conv(rng.standard_normal((4, 3, 5, 5)) * 0.2, rng.standard_normal(4))
    check_layer_gradients(nn.conv2d_forward, nn.conv2d_backward, rng.standard_normal((2, 3, 8, 8)), params, 1e-4)


def test_maxpool_examples():
    y, cache = nn.maxpool2x2_forward(np.array([[[[1.0, 2.0], [3.0, 4.0]]]]))
    assert y.tolist() == [[[[4.0]]]]
    dx = nn.maxpool2x2_backward(np.ones((1, 1, 1, 1)), cache)
    assert dx.tolist() == [[[[0.0, 0.0], [0.0, 1.0]]]]

    y, cache = nn.maxpool2x2_forward(np.full((1, 1, 2, 2), 7.0))
    dx = nn.maxpool2x2_backward(np.full((1, 1, 1, 1), 3.0), cache)
    assert dx.tolist() == [[[[3.0, 0.0], [0.0, 0.0]]]]

    with pytest.raises(InvalidArgumentError):
        nn.maxpool2x2_forward(np.zeros((1, 1, 3, 4)))


def test_maxpool_gradients():
    x = np.random.default_rng(3).standard_normal((2, 3, 6, 6))
    check_layer_gradients(nn.maxpool2x2_forward, nn.maxpool2x2_backward, x, None, 1e-5)


def test_relu():
    y, mask = nn.relu_forward(np.array([-1.0, 0.0, 2.0]))
    assert y.tolist() == [0.0, 0.0, 2.0]
    assert nn.relu_backward(np.array([5.0, 5.0, 5.0]), mask).tolist() == [0.0, 0.0, 5.0]


def test_mse_loss():
    loss, grad = nn.mse_loss(np.eye(2), np.eye(2))
    assert loss == 0.0 and np.count_nonzero(grad) == 0
    loss, grad = nn.mse_loss(np.array([[1.0, 0.0]]), np.array([[0.0, 0.0]]))
    assert loss == pytest.approx(0.5)
    assert grad.tolist() == [[1.0, 0.0]]
    with pytest.raises(InvalidArgumentError):
        nn.mse_loss(np.zeros((2, 10)), np.zeros((2, 9)))

    rng = np.random.default_rng(4)
    pred, target = rng.standard_normal((3, 10)), rng.standard_normal((3, 10))
    _, grad = nn.mse_loss(pred, target)
    numeric = nn.numeric_gradient(lambda: nn.mse_loss(pred, target)[0], pred)
    assert nn.max_relative_error(grad, numeric, floor=1e-6) < 1e-7


def test_sgd_plain_and_momentum():
    t = Tensor(np.array([1.0]))
    t.grad[...] = 1.0
    nn.sgd_step([t], lr=0.01)
    assert t.values[0] == pytest.approx(0.99)

    # v1 = g1, v2 = μ·v1 + g2, w2 = w0 − lr·v1 − lr·v2
    t = Tensor(np.array([0.0]))
    t.grad[...] = 2.0
    nn.sgd_step([t], lr=0.1, momentum=0.9)
    t.grad[...] = 1.0
    nn.sgd_step([t], lr=0.1, momentum=0.9)
    assert t.velocity[0] == pytest.approx(0.9 * 2.0 + 1.0)
    assert t.values[0] == pytest.approx(-0.1 * 2.0 - 0.1 * 2.8)
    nn.reset_momentum([t])
    assert t.velocity[0] == 0.0


def test_sgd_decreases_quadratic():
    t = Tensor(np.array([3.0, -2.0]))
    previous = float(np.sum(t.values ** 2))
    for _ in range(50):
        nn.zero_grad([t])
        t.grad += 2 * t.values
        nn.sgd_step([t], lr=0.05, momentum=0.1)
        assert float(np.sum(t.values ** 2)) < previous
        previous = float(np.sum(t.values ** 2))


def test_small_step_does_not_increase_loss():
    rng = np.random.default_rng(5)
    for trial in range(20):
        params = nn.init_params([(10, 16)], seed=trial, dtype=np.float64)[0]
        x, target = rng.random((8, 16)), np.eye(10)[rng.integers(0, 10, 8)]
        y, cache = nn.linear_forward(x, params)
        before, dy = nn.mse_loss(y, target)
        nn.zero_grad(params.tensors())
        nn.linear_backward(dy, cache, params)
        nn.sgd_step(params.tensors(), lr=1e-4)
        after, _ = nn.mse_loss(nn.linear_forward(x, params)[0], target)
        assert after <= before


def test_init_params():
    a = nn.init_params([(6, 1, 5, 5), (10, 84)], seed=42)
    b = nn.init_params([(6, 1, 5, 5), (10, 84)], seed=42)
    for pa, pb in zip(a, b):
        for ta, tb in zip(pa.tensors(), pb.tensors()):
            assert ta.values.tobytes() == tb.values.tobytes()
    assert isinstance(a[0], ConvParams) and isinstance(a[1], LinearParams)
    assert np.max(np.abs(a[0].kernels.values)) <= 1 / 5
    assert np.max(np.abs(a[1].weight.values)) <= 1 / np.sqrt(84)
    assert a[0].kernels.values.dtype == np.float32

    wide = nn.init_params([(100_000, 1)], seed=0, dtype=np.float64)[0].weight.values
    assert abs(float(wide.mean())) < 3 / np.sqrt(3 * 100_000)
    assert np.max(np.abs(wide)) <= 1.0
    with pytest.raises(InvalidArgumentError):
        nn.init_params([(3, 3, 3)], seed=0)


def test_weights_round_trip(tmp_path):
    arrays = [p.values for layer in nn.init_params([(6, 1, 5, 5), (10, 84)], seed=3) for p in layer.tensors()]
    path = nn.save_weights(arrays, str(tmp_path / "w.nnwt"))
    back = nn.load_weights(path)
    assert [a.shape for a in back] == [a.shape for a in arrays]
    for a, b in zip(arrays, back):
        assert a.tobytes() == b.tobytes()
    assert nn.serialize_weights(back) == nn.serialize_weights(arrays)


def test_weights_format_errors():
    data = nn.serialize_weights([np.ones((2, 3), dtype=np.float32)])
    assert data[:4] == b"NNWT"
    assert struct.unpack_from("<IIII", data, 4) == (1, 1, 2, 2)
    with pytest.raises(FormatError, match="期望"):
        nn.deserialize_weights(data[:-1])
    with pytest.raises(FormatError):
        nn.deserialize_weights(b"XXXX" + data[4:])
    with pytest.raises(FormatError):
        nn.deserialize_weights(data[:4] + struct.pack("<I", 9) + data[8:])
    with pytest.raises(FormatError):
        nn.deserialize_weights(data[:6])
