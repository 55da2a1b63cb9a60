"""MNIST 数据管线：IDX 解析、28→32 Lanczos 缩放、像素域/DCT 域数据集、平移增强、DCTC 缓存。"""

from __future__ import annotations

import gzip
import os
import struct
from dataclasses import dataclass
from typing import Iterator, Optional, Tuple

import numpy as np
from PIL import Image
from tqdm import tqdm

from .dct_core import build_dct_matrix, forward_dct_batch
from .errors import FormatError, InvalidArgumentError, check_length

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801
NUM_CLASSES = 10
SIDE = 32

CACHE_MAGIC = b"DCTC"
CACHE_VERSION = 1
_CACHE_HEADER = struct.Struct("<4sIBfII")
DOMAIN_TAGS = {"pixel": 0, "dct": 1}

# 解压后的文件名；同时兼容官网的 "-idx3-ubyte" 写法与 .gz 压缩包
MNIST_FILES = {
    "train": ("train-images.idx3-ubyte", "train-labels.idx1-ubyte"),
    "test": ("t10k-images.idx3-ubyte", "t10k-labels.idx1-ubyte"),
}

# 平移增强的 8 个偏移，下标即方向 w=0..7；(1,1) 是原位置，不在其中
SHIFT_OFFSETS = ((0, 0), (0, 1), (0, 2), (1, 0), (1, 2), (2, 0), (2, 1), (2, 2))


@dataclass
class RawMnist:
    images: np.ndarray  # (count, rows, cols) uint8
    labels: np.ndarray  # (count,) uint8

    def __post_init__(self) -> None:
        if len(self.images) != len(self.labels):
            raise FormatError(f"图像数 {len(self.images)} 与标签数 {len(self.labels)} 不一致")

    def __len__(self) -> int:
        return len(self.labels)


@dataclass
class Sample:
    input: np.ndarray
    label: int
    target: np.ndarray


@dataclass
class Dataset:
    """预处理后的样本集合；inputs 形状为 (count, n, n)，targets 由标签即时重建。"""

    inputs: np.ndarray
    labels: np.ndarray
    domain_tag: str = "pixel"
    threshold: float = 0.0

    def __post_init__(self) -> None:
        if self.domain_tag not in DOMAIN_TAGS:
            raise InvalidArgumentError(f"未知的数据域: {self.domain_tag}")
        if self.domain_tag == "pixel" and self.threshold != 0:
            raise InvalidArgumentError("像素域数据集的阈值必须为 0")
        if self.inputs.ndim != 3 or self.inputs.shape[1] != self.inputs.shape[2]:
            raise InvalidArgumentError(f"inputs 形状应为 (count, n, n), 收到 {self.inputs.shape}")
        if len(self.inputs) != len(self.labels):
            raise InvalidArgumentError("inputs 与 labels 数量不一致")
        self.labels = np.asarray(self.labels, dtype=np.uint8)
        if self.labels.size and int(self.labels.max()) >= NUM_CLASSES:
            raise InvalidArgumentError("标签必须在 0..9 之间")

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def n(self) -> int:
        return int(self.inputs.shape[1])

    @property
    def targets(self) -> np.ndarray:
        return one_hot(self.labels)

    def sample(self, index: int) -> Sample:
        label = int(self.labels[index])
        return Sample(input=self.inputs[index], label=label, target=one_hot(np.array([label]))[0])


def one_hot(labels: np.ndarray, num_classes: int = NUM_CLASSES) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    out = np.zeros((labels.size, num_classes), dtype=np.float64)
    out[np.arange(labels.size), labels] = 1.0
    return out


# ---------------------------------------------------------------- IDX

def parse_idx_images(data: bytes) -> np.ndarray:
    """解析 IDX 图像文件（大端 magic 0x00000803 + count/rows/cols），返回 (count, rows, cols) uint8。"""
    check_length("IDX 图像头", 16, len(data))
    magic, count, rows, cols = struct.unpack(">IIII", data[:16])
    if magic != IMAGES_MAGIC:
        raise FormatError(f"IDX 图像魔数错误: 0x{magic:08x}, 期望 0x{IMAGES_MAGIC:08x}")
    expected = 16 + count * rows * cols
    check_length("IDX 图像数据", expected, len(data))
    pixels = np.frombuffer(data, dtype=np.uint8, count=count * rows * cols, offset=16)
    return pixels.reshape(count, rows, cols).copy()


def parse_idx_labels(data: bytes) -> np.ndarray:
    """解析 IDX 标签文件（大端 magic 0x00000801 + count），每个标签必须 <= 9。"""
    check_length("IDX 标签头", 8, len(data))
    magic, count = struct.unpack(">II", data[:8])
    if magic != LABELS_MAGIC:
        raise FormatError(f"IDX 标签魔数错误: 0x{magic:08x}, 期望 0x{LABELS_MAGIC:08x}")
    check_length("IDX 标签数据", 8 + count, len(data))
    labels = np.frombuffer(data, dtype=np.uint8, count=count, offset=8).copy()
    if labels.size and int(labels.max()) > 9:
        bad = int(np.argmax(labels > 9))
        raise FormatError(f"第 {bad} 个标签为 {int(labels[bad])}, 超出 0..9")
    return labels


def read_idx_file(path: str) -> bytes:
    opener = gzip.open if path.endswith(".gz") else open
    with opener(path, "rb") as f:
        return f.read()


def find_mnist_files(mnist_dir: str, split: str) -> Tuple[str, str]:
    """在目录中定位某个划分的 (图像文件, 标签文件)。"""
    if split not in MNIST_FILES:
        raise InvalidArgumentError(f"未知的数据划分: {split}")
    found = []
    for name in MNIST_FILES[split]:
        candidates = [name, name.replace(".idx", "-idx")]
        candidates += [c + ".gz" for c in candidates]
        path = next((os.path.join(mnist_dir, c) for c in candidates
                     if os.path.exists(os.path.join(mnist_dir, c))), None)
        if path is None:
            raise FileNotFoundError(f"在 {mnist_dir} 中找不到 {name}")
        found.append(path)
    return found[0], found[1]


def load_raw_mnist(mnist_dir: str, split: str) -> RawMnist:
    images_path, labels_path = find_mnist_files(mnist_dir, split)
    images = parse_idx_images(read_idx_file(images_path))
    labels = parse_idx_labels(read_idx_file(labels_path))
    return RawMnist(images=images, labels=labels)


# ---------------------------------------------------------------- 缩放与数据集

def resize_patch(image: np.ndarray, size: int = SIDE) -> np.ndarray:
    """Lanczos(a=3) 重采样到 size×size，乘以 1/255 后裁剪到 [0, 1]。"""
    img = Image.fromarray(np.ascontiguousarray(image, dtype=np.float32))
    img = img.resize((size, size), Image.Resampling.LANCZOS)
    patch = np.asarray(img, dtype=np.float64) * (1.0 / 255)
    return np.clip(patch, 0.0, 1.0)


def resize_28_to_32(image: np.ndarray) -> np.ndarray:
    image = np.asarray(image)
    if image.shape != (28, 28):
        raise InvalidArgumentError(f"期望 28×28 的 MNIST 图像, 收到 {image.shape}")
    return resize_patch(image, SIDE)


def _resized_chunks(raw: RawMnist, chunk: int, verbose: bool, desc: str) -> Iterator[Tuple[int, np.ndarray]]:
    """按样本顺序分块产出 float64 的 32×32 patch。"""
    count = len(raw)
    with tqdm(total=count, desc=desc, unit="img", disable=not verbose) as bar:
        for start in range(0, count, chunk):
            stop = min(start + chunk, count)
            block = np.stack([resize_28_to_32(raw.images[i]) for i in range(start, stop)]) \
                if stop > start else np.zeros((0, SIDE, SIDE))
            bar.update(stop - start)
            yield start, block


def make_datasets(raw: RawMnist, tau: float, dtype=np.float32, verbose: bool = False,
                  chunk: int = 2000) -> Tuple[Dataset, Dataset]:
    """一次缩放，同时得到像素域数据集与 DCT 域（阈值 tau）数据集。"""
    if tau < 0:
        raise InvalidArgumentError(f"阈值必须非负, 收到 {tau}")
    t = build_dct_matrix(SIDE)
    pixels = np.zeros((len(raw), SIDE, SIDE), dtype=dtype)
    coeffs = np.zeros((len(raw), SIDE, SIDE), dtype=dtype)
    for start, block in _resized_chunks(raw, chunk, verbose, "resize+DCT"):
        dct = forward_dct_batch(block, t)
        dct[np.abs(dct) < tau] = 0.0
        pixels[start:start + len(block)] = block
        coeffs[start:start + len(block)] = dct
    pixel_ds = Dataset(inputs=pixels, labels=raw.labels.copy(), domain_tag="pixel", threshold=0.0)
    dct_ds = Dataset(inputs=coeffs, labels=raw.labels.copy(), domain_tag="dct", threshold=float(tau))
    return pixel_ds, dct_ds


def make_pixel_dataset(raw: RawMnist, dtype=np.float32, verbose: bool = False) -> Dataset:
    pixels = np.zeros((len(raw), SIDE, SIDE), dtype=dtype)
    for start, block in _resized_chunks(raw, 2000, verbose, "resize"):
        pixels[start:start + len(block)] = block
    return Dataset(inputs=pixels, labels=raw.labels.copy(), domain_tag="pixel", threshold=0.0)


def make_dct_dataset(raw: RawMnist, tau: float, dtype=np.float32, verbose: bool = False) -> Dataset:
    """每张图：缩放 → forward_dct → threshold_coeffs(tau)，配上 one-hot 目标。"""
    return make_datasets(raw, tau, dtype=dtype, verbose=verbose)[1]


def to_dct_domain(patches: np.ndarray, tau: float) -> np.ndarray:
    """把一批像素 patch 转成阈值化后的 DCT 系数（增强时使用）。"""
    t = build_dct_matrix(patches.shape[-1])
    coeffs = forward_dct_batch(patches, t)
    coeffs[np.abs(coeffs) < tau] = 0.0
    return coeffs


def zeroed_fraction(ds: Dataset) -> float:
    """被置零的系数平均比例。"""
    if len(ds) == 0:
        return 0.0
    return float(np.mean(ds.inputs == 0))


# ---------------------------------------------------------------- 平移增强

def shift_augment(patch: np.ndarray, direction: int) -> np.ndarray:
    """取出内部 (n-2)×(n-2) 区域，放到 8 个非中心偏移之一，其余补 0。"""
    if not 0 <= direction < len(SHIFT_OFFSETS):
        raise InvalidArgumentError(f"平移方向必须在 0..7 之间, 收到 {direction}")
    patch = np.asarray(patch)
    n = patch.shape[0]
    if patch.shape != (n, n) or n < 3:
        raise InvalidArgumentError(f"平移增强需要 n×n (n>=3) 的 patch, 收到 {patch.shape}")
    r, c = SHIFT_OFFSETS[direction]
    out = np.zeros_like(patch)
    out[r:r + n - 2, c:c + n - 2] = patch[1:n - 1, 1:n - 1]
    return out


# ---------------------------------------------------------------- DCTC 缓存

def serialize_cache(ds: Dataset) -> bytes:
    header = _CACHE_HEADER.pack(CACHE_MAGIC, CACHE_VERSION, DOMAIN_TAGS[ds.domain_tag],
                                ds.threshold, len(ds), ds.n)
    inputs = np.ascontiguousarray(ds.inputs, dtype="<f4").tobytes()
    return header + inputs + np.ascontiguousarray(ds.labels, dtype=np.uint8).tobytes()


def deserialize_cache(data: bytes) -> Dataset:
    check_length("DCTC 头", _CACHE_HEADER.size, len(data))
    magic, version, tag, threshold, count, n = _CACHE_HEADER.unpack_from(data)
    if magic != CACHE_MAGIC:
        raise FormatError(f"DCTC 魔数错误: {magic!r}")
    if version != CACHE_VERSION:
        raise FormatError(f"不支持的 DCTC 版本: {version}")
    domains = {v: k for k, v in DOMAIN_TAGS.items()}
    if tag not in domains:
        raise FormatError(f"未知的数据域标记: {tag}")
    offset = _CACHE_HEADER.size
    expected = offset + count * n * n * 4 + count
    check_length("DCTC 数据", expected, len(data))
    inputs = np.frombuffer(data, dtype="<f4", count=count * n * n, offset=offset)
    labels = np.frombuffer(data, dtype=np.uint8, count=count, offset=offset + count * n * n * 4)
    try:
        return Dataset(inputs=inputs.astype(np.float32).reshape(count, n, n), labels=labels.copy(),
                       domain_tag=domains[tag], threshold=float(threshold))
    except InvalidArgumentError as e:
        raise FormatError(f"DCTC 内容非法: {e}") from e


def save_cache(ds: Dataset, path: str) -> str:
    folder = os.path.dirname(path)
    if folder:
        os.makedirs(folder, exist_ok=True)
    with open(path, "wb") as f:
        f.write(serialize_cache(ds))
    return path


def load_cache(path: str) -> Dataset:
    with open(path, "rb") as f:
        return deserialize_cache(f.read())


def cache_path(cache_dir: str, domain: str, split: str) -> str:
    return os.path.join(cache_dir, f"mnist32_{domain}_{split}.dctc")


def pixel_source(ds: Dataset, pixels: Optional[Dataset]) -> Optional[np.ndarray]:
    """返回可用于像素域平移的 patch 数组：像素域数据集本身，或与之对应的像素缓存。"""
    if ds.domain_tag == "pixel":
        return ds.inputs
    if pixels is None:
        return None
    if len(pixels) != len(ds) or pixels.domain_tag != "pixel" or not np.array_equal(pixels.labels, ds.labels):
        raise InvalidArgumentError("像素域数据与 DCT 数据集的样本不对应")
    return pixels.inputs
