import json
import os
import struct
import warnings

import numpy as np
import pytest

import dctnet.commands
from config_manager import config_manager


def idx_images_bytes(images: np.ndarray) -> bytes:
    count, rows, cols = images.shape
    return struct.pack(">IIII", 0x00000803, count, rows, cols) + images.astype(np.uint8).tobytes()


def idx_labels_bytes(labels: np.ndarray) -> bytes:
    return struct.pack(">II", 0x00000801, len(labels)) + np.asarray(labels, dtype=np.uint8).tobytes()


def synthetic_digits(count: int, seed: int):
    """每个类别一个固定位置的亮块，加一点噪声，模拟 28×28 的 MNIST 数字。"""
    rng = np.random.default_rng(seed)
    labels = np.arange(count) % 10
    rng.shuffle(labels)
    images = rng.integers(0, 30, size=(count, 28, 28))
    for i, label in enumerate(labels):
        r, c = 3 + 2 * (label // 5) * 5, 3 + (label % 5) * 4
        images[i, r:r + 8, c:c + 6] = 230
    return images.astype(np.uint8), labels.astype(np.uint8)


@pytest.fixture(autouse=True)
def isolated_config(tmp_path, monkeypatch):
    """所有输出目录都指向临时目录"""
    monkeypatch.setitem(config_manager.config, "CACHE_DIR", str(tmp_path / "cache"))
    monkeypatch.setitem(config_manager.config, "RESULTS_DIR", str(tmp_path / "runs"))
    monkeypatch.setitem(config_manager.config, "NOTES_DIR", str(tmp_path / "notes"))
    monkeypatch.setattr(dctnet.commands, "run_folder", "")
    yield


@pytest.fixture
def write_idx():
    return {"images": idx_images_bytes, "labels": idx_labels_bytes}


@pytest.fixture
def synthetic_mnist_dir(tmp_path):
    folder = tmp_path / "mnist"
    folder.mkdir()
    for split, count, seed, prefix in (("train", 60, 0, "train"), ("test", 30, 1, "t10k")):
        images, labels = synthetic_digits(count, seed)
        (folder / f"{prefix}-images.idx3-ubyte").write_bytes(idx_images_bytes(images))
        (folder / f"{prefix}-labels.idx1-ubyte").write_bytes(idx_labels_bytes(labels))
    return str(folder)


@pytest.fixture(scope="session")
def mnist_dir():
    folder = os.getenv("MNIST_DIR") or config_manager.get("MNIST_DIR")
    if not folder or not os.path.isdir(folder):
        pytest.skip("需要真实 MNIST（设置 MNIST_DIR）")
    return folder


@pytest.fixture
def make_raw():
    from dctnet.dataset import RawMnist

    def build(count: int = 20, seed: int = 0) -> RawMnist:
        images, labels = synthetic_digits(count, seed)
        return RawMnist(images=images, labels=labels)

    return build


GOLDEN_DIR = os.path.join(os.path.dirname(__file__), "golden")


class GoldenValues:
    """冻结的回归值：第一次在真实 MNIST 上运行时写入 tests/golden/，之后逐项精确比较。"""

    def __init__(self, path: str):
        self.path = path
        self.values = {}
        if os.path.exists(path):
            with open(path, encoding="utf-8") as f:
                self.values = json.load(f)

    def check(self, name: str, value) -> None:
        if name not in self.values:
            self.values[name] = value
            os.makedirs(os.path.dirname(self.path), exist_ok=True)
            with open(self.path, "w", encoding="utf-8") as f:
                json.dump(self.values, f, indent=2, ensure_ascii=False)
            warnings.warn(f"已记录基准值 {name}，请把 {self.path} 提交到仓库")
            return
        assert value == self.values[name], f"{name} 与冻结值不一致"


@pytest.fixture
def golden():
    return GoldenValues(os.path.join(GOLDEN_DIR, "mnist.json"))


@pytest.fixture(scope="session")
def mnist_caches(mnist_dir, tmp_path_factory):
    """真实 MNIST 在 tau=0.02 下的四个缓存，整个测试会话只生成一次。"""
    cache_dir = str(tmp_path_factory.mktemp("mnist_cache"))
    result = dctnet.commands.cmd_prepare(mnist_dir=mnist_dir, cache_dir=cache_dir, tau=0.02, verbose=False)
    assert result["ok"], result.get("message")
    return {"dir": cache_dir, **result}
