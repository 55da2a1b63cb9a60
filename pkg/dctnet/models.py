"""两个固定网络：LeNet 风格 CNN 与 DCT 系数 MLP，由 nn 中的层手工串联。

两者都直接输出 10 个原始分数（无 softmax），用 one-hot 目标的 MSE 训练，argmax 预测。
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Tuple, Union

import numpy as np

from . import nn
from .errors import FormatError, InvalidArgumentError
from .nn import ConvParams, LinearParams, Tensor

SIDE = 32
LENET_SHAPES = [(6, 1, 5, 5), (16, 6, 5, 5), (120, 16 * 5 * 5), (84, 120), (10, 84)]
DCT_MLP_SHAPES = [(350, SIDE * SIDE), (104, 350), (10, 104)]
MODEL_KINDS = ("lenet", "dct_mlp")


@dataclass
class LeNetModel:
    conv1: ConvParams
    conv2: ConvParams
    fc1: LinearParams
    fc2: LinearParams
    fc3: LinearParams

    kind = "lenet"

    def layers(self) -> list:
        return [self.conv1, self.conv2, self.fc1, self.fc2, self.fc3]

    def tensors(self) -> List[Tensor]:
        return [t for layer in self.layers() for t in layer.tensors()]


@dataclass
class DctMlpModel:
    fc1: LinearParams
    fc2: LinearParams
    fc3: LinearParams

    kind = "dct_mlp"

    def layers(self) -> list:
        return [self.fc1, self.fc2, self.fc3]

    def tensors(self) -> List[Tensor]:
        return [t for layer in self.layers() for t in layer.tensors()]


Model = Union[LeNetModel, DctMlpModel]


def normalize_kind(kind: str) -> str:
    kind = kind.replace("-", "_").lower()
    if kind not in MODEL_KINDS:
        raise InvalidArgumentError(f"未知的模型类型: {kind}, 可选 {MODEL_KINDS}")
    return kind


def build_model(kind: str, seed: Union[int, np.random.Generator] = 1, dtype=np.float32) -> Model:
    kind = normalize_kind(kind)
    if kind == "lenet":
        return LeNetModel(*nn.init_params(LENET_SHAPES, seed, dtype))
    return DctMlpModel(*nn.init_params(DCT_MLP_SHAPES, seed, dtype))


def parameter_count(model: Model) -> int:
    return sum(t.values.size for t in model.tensors())


def _check_input(model: Model, batch: np.ndarray) -> np.ndarray:
    if batch.ndim != 4 or batch.shape[1:] != (1, SIDE, SIDE):
        raise InvalidArgumentError(f"{model.kind} 期望输入形状 (b, 1, {SIDE}, {SIDE}), 收到 {batch.shape}")
    return batch.astype(model.fc1.weight.values.dtype, copy=False)


# ---------------------------------------------------------------- LeNet

def lenet_forward(model: LeNetModel, batch: np.ndarray) -> Tuple[np.ndarray, tuple]:
    """conv1→relu→pool→conv2→relu→pool→flatten→fc1→relu→fc2→relu→fc3"""
    x = _check_input(model, batch)
    b = x.shape[0]
    c1, c1_cache = nn.conv2d_forward(x, model.conv1)
    assert c1.shape == (b, 6, 28, 28)
    r1, r1_cache = nn.relu_forward(c1)
    p1, p1_cache = nn.maxpool2x2_forward(r1)
    assert p1.shape == (b, 6, 14, 14)
    c2, c2_cache = nn.conv2d_forward(p1, model.conv2)
    assert c2.shape == (b, 16, 10, 10)
    r2, r2_cache = nn.relu_forward(c2)
    p2, p2_cache = nn.maxpool2x2_forward(r2)
    assert p2.shape == (b, 16, 5, 5)
    flat = p2.reshape(b, -1)
    assert flat.shape[1] == 400
    h1, h1_cache = nn.linear_forward(flat, model.fc1)
    a1, a1_cache = nn.relu_forward(h1)
    h2, h2_cache = nn.linear_forward(a1, model.fc2)
    a2, a2_cache = nn.relu_forward(h2)
    out, out_cache = nn.linear_forward(a2, model.fc3)
    cache = (c1_cache, r1_cache, p1_cache, c2_cache, r2_cache, p2_cache, p2.shape,
             h1_cache, a1_cache, h2_cache, a2_cache, out_cache)
    return out, cache


def lenet_backward(model: LeNetModel, dout: np.ndarray, cache: tuple) -> np.ndarray:
    (c1_cache, r1_cache, p1_cache, c2_cache, r2_cache, p2_cache, p2_shape,
     h1_cache, a1_cache, h2_cache, a2_cache, out_cache) = cache
    d = nn.linear_backward(dout, out_cache, model.fc3)
    d = nn.relu_backward(d, a2_cache)
    d = nn.linear_backward(d, h2_cache, model.fc2)
    d = nn.relu_backward(d, a1_cache)
    d = nn.linear_backward(d, h1_cache, model.fc1)
    d = d.reshape(p2_shape)
    d = nn.maxpool2x2_backward(d, p2_cache)
    d = nn.relu_backward(d, r2_cache)
    d = nn.conv2d_backward(d, c2_cache, model.conv2)
    d = nn.maxpool2x2_backward(d, p1_cache)
    d = nn.relu_backward(d, r1_cache)
    return nn.conv2d_backward(d, c1_cache, model.conv1)


# ---------------------------------------------------------------- DCT-MLP

def dct_mlp_forward(model: DctMlpModel, batch: np.ndarray) -> Tuple[np.ndarray, tuple]:
    """flatten→fc1→relu→fc2→relu→fc3"""
    x = _check_input(model, batch)
    flat = x.reshape(x.shape[0], -1)
    h1, h1_cache = nn.linear_forward(flat, model.fc1)
    a1, a1_cache = nn.relu_forward(h1)
    h2, h2_cache = nn.linear_forward(a1, model.fc2)
    a2, a2_cache = nn.relu_forward(h2)
    out, out_cache = nn.linear_forward(a2, model.fc3)
    return out, (x.shape, h1_cache, a1_cache, h2_cache, a2_cache, out_cache)


def dct_mlp_backward(model: DctMlpModel, dout: np.ndarray, cache: tuple) -> np.ndarray:
    shape, h1_cache, a1_cache, h2_cache, a2_cache, out_cache = cache
    d = nn.linear_backward(dout, out_cache, model.fc3)
    d = nn.relu_backward(d, a2_cache)
    d = nn.linear_backward(d, h2_cache, model.fc2)
    d = nn.relu_backward(d, a1_cache)
    d = nn.linear_backward(d, h1_cache, model.fc1)
    return d.reshape(shape)


def forward(model: Model, batch: np.ndarray) -> Tuple[np.ndarray, tuple]:
    if isinstance(model, LeNetModel):
        return lenet_forward(model, batch)
    return dct_mlp_forward(model, batch)


def backward(model: Model, dout: np.ndarray, cache: tuple) -> np.ndarray:
    if isinstance(model, LeNetModel):
        return lenet_backward(model, dout, cache)
    return dct_mlp_backward(model, dout, cache)


def as_batch(inputs: np.ndarray) -> np.ndarray:
    """(n, n) / (b, n, n) / (b, 1, n, n) 统一成 (b, 1, n, n)。"""
    inputs = np.asarray(inputs)
    if inputs.ndim == 2:
        return inputs[None, None]
    if inputs.ndim == 3:
        return inputs[:, None]
    return inputs


def predict(model: Model, inputs: np.ndarray) -> Union[int, np.ndarray]:
    """10 个原始输出的 argmax，并列时取最小下标；单个 patch 返回 int。"""
    single = np.ndim(inputs) == 2
    out, _ = forward(model, as_batch(inputs))
    classes = np.argmax(out, axis=1)
    return int(classes[0]) if single else classes


# ---------------------------------------------------------------- 检查点与可视化

def model_arrays(model: Model) -> List[np.ndarray]:
    return [t.values for t in model.tensors()]


def save_model(model: Model, path: str) -> str:
    return nn.save_weights(model_arrays(model), path)


def infer_kind(arrays: List[np.ndarray]) -> str:
    """按张量个数判断检查点属于哪个模型。"""
    by_count = {2 * len(LENET_SHAPES): "lenet", 2 * len(DCT_MLP_SHAPES): "dct_mlp"}
    if len(arrays) not in by_count:
        raise FormatError(f"检查点有 {len(arrays)} 个张量, 不属于任何已知模型")
    return by_count[len(arrays)]


def load_model(kind: str, path: str) -> Model:
    return model_from_arrays(kind, nn.load_weights(path))


def model_from_arrays(kind: str, arrays: List[np.ndarray]) -> Model:
    """张量个数与形状必须与模型定义一致。"""
    model = build_model(kind, seed=0, dtype=np.float32)
    tensors = model.tensors()
    if len(arrays) != len(tensors):
        raise FormatError(f"检查点有 {len(arrays)} 个张量, {model.kind} 需要 {len(tensors)} 个")
    for i, (t, a) in enumerate(zip(tensors, arrays)):
        if a.shape != t.shape:
            raise InvalidArgumentError(f"第 {i} 个张量形状 {a.shape} 与 {model.kind} 的 {t.shape} 不匹配")
        t.values[...] = a
    return model


def normalize_image(values: np.ndarray) -> np.ndarray:
    """min-max 归一化到 [0, 1]；常数图像映射为 0.5 灰。"""
    values = np.asarray(values, dtype=np.float64)
    lo, hi = float(values.min()), float(values.max())
    if hi == lo:
        return np.full(values.shape, 0.5)
    return (values - lo) / (hi - lo)


def dump_first_layer_kernels(model: LeNetModel) -> List[np.ndarray]:
    """第一层的 6 个 5×5 卷积核，各自 min-max 归一化成灰度图。"""
    if not isinstance(model, LeNetModel):
        raise InvalidArgumentError("只有 LeNet 有卷积核可导出")
    return [normalize_image(k[0]) for k in model.conv1.kernels.values]


def first_layer_responses(model: LeNetModel, patch: np.ndarray) -> List[np.ndarray]:
    """第一层卷积（含 ReLU）作用在一个像素 patch 上的 6 张响应图。"""
    if not isinstance(model, LeNetModel):
        raise InvalidArgumentError("只有 LeNet 有卷积响应可导出")
    x = as_batch(patch).astype(model.conv1.kernels.values.dtype)
    y, _ = nn.conv2d_forward(x, model.conv1)
    y, _ = nn.relu_forward(y)
    return [normalize_image(ch) for ch in y[0]]
