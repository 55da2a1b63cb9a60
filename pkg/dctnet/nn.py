"""极简的手写反向传播引擎。

每层都是一对函数：``*_forward`` 返回 (输出, cache)，``*_backward`` 接收上游梯度与 cache，
返回对输入的梯度，并把参数梯度累加到 ``Tensor.grad``。两种固定网络在 models.py 中手工串联。
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from typing import Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import FormatError, InvalidArgumentError, check_length

WEIGHTS_MAGIC = b"NNWT"
WEIGHTS_VERSION = 1


@dataclass
class Tensor:
    """数值 + 同形状的梯度缓冲 + 动量缓冲"""

    values: np.ndarray
    grad: np.ndarray = field(default=None, repr=False)
    velocity: np.ndarray = field(default=None, repr=False)

    def __post_init__(self) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.values)
        if self.velocity is None:
            self.velocity = np.zeros_like(self.values)

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.values.shape

    def zero_grad(self) -> None:
        self.grad.fill(0)


@dataclass
class LinearParams:
    weight: Tensor  # (out, in)
    bias: Tensor  # (out,)

    def tensors(self) -> List[Tensor]:
        return [self.weight, self.bias]


@dataclass
class ConvParams:
    kernels: Tensor  # (out_ch, in_ch, k, k)
    bias: Tensor  # (out_ch,)

    @property
    def k(self) -> int:
        return self.kernels.shape[-1]

    def tensors(self) -> List[Tensor]:
        return [self.kernels, self.bias]


Params = Union[LinearParams, ConvParams]


def init_params(shapes: Sequence[Tuple[int, ...]], seed: Union[int, np.random.Generator],
                dtype=np.float32) -> List[Params]:
    """按形状列表初始化参数：(out, in) → 全连接，(out, in, k, k) → 卷积。

    权重与偏置都取自 U[-1/√fan_in, +1/√fan_in]；同一种子得到逐位相同的参数。
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    params: List[Params] = []
    for shape in shapes:
        if len(shape) not in (2, 4):
            raise InvalidArgumentError(f"不支持的参数形状: {shape}")
        fan_in = int(np.prod(shape[1:]))
        bound = 1.0 / math.sqrt(fan_in)
        weight = Tensor(rng.uniform(-bound, bound, size=shape).astype(dtype))
        bias = Tensor(rng.uniform(-bound, bound, size=shape[0]).astype(dtype))
        params.append(LinearParams(weight, bias) if len(shape) == 2 else ConvParams(weight, bias))
    return params


# ---------------------------------------------------------------- 全连接

def linear_forward(x: np.ndarray, p: LinearParams) -> Tuple[np.ndarray, np.ndarray]:
    """y = x·Wᵀ + b"""
    w = p.weight.values
    if x.ndim != 2 or x.shape[1] != w.shape[1]:
        raise InvalidArgumentError(f"全连接层输入形状 {x.shape} 与权重 {w.shape} 不匹配")
    return x @ w.T + p.bias.values, x


def linear_backward(dy: np.ndarray, cache: np.ndarray, p: LinearParams) -> np.ndarray:
    x = cache
    p.weight.grad += dy.T @ x
    p.bias.grad += dy.sum(axis=0)
    return dy @ p.weight.values


# ---------------------------------------------------------------- 卷积

def conv2d_forward(x: np.ndarray, p: ConvParams) -> Tuple[np.ndarray, np.ndarray]:
    """valid 互相关：无填充，步长 1；输出 (b, out_ch, h-k+1, w-k+1)。"""
    w = p.kernels.values
    k = p.k
    if x.ndim != 4 or x.shape[1] != w.shape[1]:
        raise InvalidArgumentError(f"卷积输入形状 {x.shape} 与卷积核 {w.shape} 不匹配")
    if x.shape[2] < k or x.shape[3] < k:
        raise InvalidArgumentError(f"卷积输入 {x.shape[2]}×{x.shape[3]} 小于卷积核 {k}×{k}")
    windows = sliding_window_view(x, (k, k), axis=(2, 3))  # (b, c, oh, ow, k, k)
    y = np.tensordot(windows, w, axes=([1, 4, 5], [1, 2, 3]))  # (b, oh, ow, o)
    y = np.ascontiguousarray(y.transpose(0, 3, 1, 2)) + p.bias.values[None, :, None, None]
    return y, x


def conv2d_backward(dy: np.ndarray, cache: np.ndarray, p: ConvParams) -> np.ndarray:
    x = cache
    k = p.k
    windows = sliding_window_view(x, (k, k), axis=(2, 3))
    p.kernels.grad += np.tensordot(dy, windows, axes=([0, 2, 3], [0, 2, 3]))
    p.bias.grad += dy.sum(axis=(0, 2, 3))
    # dx 是 dy 与翻转卷积核的 full 卷积
    padded = np.pad(dy, ((0, 0), (0, 0), (k - 1, k - 1), (k - 1, k - 1)))
    dwin = sliding_window_view(padded, (k, k), axis=(2, 3))  # (b, o, h, w, k, k)
    flipped = p.kernels.values[:, :, ::-1, ::-1]
    dx = np.tensordot(dwin, flipped, axes=([1, 4, 5], [0, 2, 3]))  # (b, h, w, c)
    return np.ascontiguousarray(dx.transpose(0, 3, 1, 2))


# ---------------------------------------------------------------- 池化 / 激活

def maxpool2x2_forward(x: np.ndarray) -> Tuple[np.ndarray, Tuple[Tuple[int, ...], np.ndarray]]:
    """不重叠 2×2 最大池化；并列时取行优先的第一个位置。"""
    if x.ndim != 4 or x.shape[2] % 2 or x.shape[3] % 2:
        raise InvalidArgumentError(f"2×2 池化需要偶数空间尺寸, 收到 {x.shape}")
    b, c, h, w = x.shape
    blocks = x.reshape(b, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(b, c, h // 2, w // 2, 4)
    idx = blocks.argmax(axis=-1)
    y = np.take_along_axis(blocks, idx[..., None], axis=-1)[..., 0]
    return y, (x.shape, idx)


def maxpool2x2_backward(dy: np.ndarray, cache: Tuple[Tuple[int, ...], np.ndarray]) -> np.ndarray:
    shape, idx = cache
    b, c, h, w = shape
    dblocks = np.zeros((b, c, h // 2, w // 2, 4), dtype=dy.dtype)
    np.put_along_axis(dblocks, idx[..., None], dy[..., None], axis=-1)
    return dblocks.reshape(b, c, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(shape)


def relu_forward(x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    mask = x > 0
    return np.where(mask, x, 0).astype(x.dtype, copy=False), mask


def relu_backward(dy: np.ndarray, cache: np.ndarray) -> np.ndarray:
    # x == 0 处导数取 0
    return dy * cache


# ---------------------------------------------------------------- 损失与优化

def mse_loss(pred: np.ndarray, target: np.ndarray) -> Tuple[float, np.ndarray]:
    """对全部元素取平均（batch·10 为分母），返回 (loss, dloss/dpred)。"""
    if pred.shape != target.shape:
        raise InvalidArgumentError(f"预测形状 {pred.shape} 与目标形状 {target.shape} 不一致")
    diff = pred - target.astype(pred.dtype, copy=False)
    loss = float(np.mean(diff.astype(np.float64) ** 2))
    return loss, (2.0 / diff.size) * diff


def zero_grad(params: Iterable[Tensor]) -> None:
    for t in params:
        t.zero_grad()


def reset_momentum(params: Iterable[Tensor]) -> None:
    for t in params:
        t.velocity.fill(0)


def sgd_step(params: Iterable[Tensor], lr: float, momentum: float = 0.0) -> None:
    """重球动量：v ← μ·v + g；w ← w − lr·v。μ=0 时退化为 w ← w − lr·g。"""
    for t in params:
        if momentum:
            t.velocity *= momentum
            t.velocity += t.grad
            t.values -= lr * t.velocity
        else:
            t.values -= lr * t.grad


# ---------------------------------------------------------------- NNWT 权重文件

def serialize_weights(arrays: Sequence[np.ndarray]) -> bytes:
    """小端：'NNWT' | u32 版本 | u32 张量数 | 每个张量 u32 rank, u32 dims…, f32 数据。"""
    chunks = [WEIGHTS_MAGIC, struct.pack("<II", WEIGHTS_VERSION, len(arrays))]
    for a in arrays:
        a = np.asarray(a)
        chunks.append(struct.pack(f"<I{a.ndim}I", a.ndim, *a.shape))
        chunks.append(np.ascontiguousarray(a, dtype="<f4").tobytes())
    return b"".join(chunks)


def deserialize_weights(data: bytes) -> List[np.ndarray]:
    check_length("NNWT 头", 12, len(data))
    if data[:4] != WEIGHTS_MAGIC:
        raise FormatError(f"NNWT 魔数错误: {data[:4]!r}")
    version, count = struct.unpack_from("<II", data, 4)
    if version != WEIGHTS_VERSION:
        raise FormatError(f"不支持的 NNWT 版本: {version}")
    offset = 12
    arrays: List[np.ndarray] = []
    for _ in range(count):
        check_length("NNWT 张量头", offset + 4, len(data))
        (rank,) = struct.unpack_from("<I", data, offset)
        offset += 4
        check_length("NNWT 张量形状", offset + 4 * rank, len(data))
        dims = struct.unpack_from(f"<{rank}I", data, offset)
        offset += 4 * rank
        size = int(np.prod(dims)) if rank else 1
        check_length("NNWT 张量数据", offset + 4 * size, len(data))
        arrays.append(np.frombuffer(data, dtype="<f4", count=size, offset=offset).astype(np.float32).reshape(dims))
        offset += 4 * size
    return arrays


def save_weights(arrays: Sequence[np.ndarray], path: str) -> str:
    with open(path, "wb") as f:
        f.write(serialize_weights(arrays))
    return path


def load_weights(path: str) -> List[np.ndarray]:
    with open(path, "rb") as f:
        return deserialize_weights(f.read())


def max_relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-8) -> float:
    """梯度检查用的最大相对误差 |a−n| / max(|a|+|n|, floor)。"""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(np.abs(analytic) + np.abs(numeric), floor)
    return float(np.max(np.abs(analytic - numeric) / denom)) if analytic.size else 0.0


def numeric_gradient(f, x: np.ndarray, eps: float = 1e-5, out: Optional[np.ndarray] = None) -> np.ndarray:
    """对标量函数 f() 关于数组 x（就地扰动）的中心差分梯度。"""
    grad = np.zeros_like(x, dtype=np.float64) if out is None else out
    it = np.nditer(x, flags=["multi_index"], op_flags=["readwrite"])
    for _ in it:
        i = it.multi_index
        old = x[i]
        x[i] = old + eps
        plus = f()
        x[i] = old - eps
        minus = f()
        x[i] = old
        grad[i] = (plus - minus) / (2 * eps)
    return grad
