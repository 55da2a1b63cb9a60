"""三阶段训练流程与评估。

阶段 1：随机抽样 batch，普通 SGD；
阶段 2：难例回灌，顺序扫描训练集，把分错的样本攒满一个 batch 就更新一次；
阶段 3：动量 SGD + 1 像素平移增强（每 12 个样本槽里 8 个平移、4 个原样）。
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import asdict, dataclass, field
from typing import Callable, List, NamedTuple, Optional, Tuple

import numpy as np
from tqdm import tqdm

from . import models, nn
from .dataset import Dataset, SHIFT_OFFSETS, one_hot, pixel_source, shift_augment, to_dct_domain
from .errors import DctNetError, InvalidArgumentError

# 每个增强周期的样本槽数：前 8 个依次做 8 个方向的平移，后 4 个保持原样
AUGMENT_CYCLE = 12

PRESETS = {
    # 约 10 个 epoch（batch 16），CI 可跑
    "desk": {"phase1_batches": 37_500, "hard_pass_sweeps": 4, "phase3_batches": 37_500},
    # 完整预算：80×3200 与 1260×3200 个 batch
    "paper": {"phase1_batches": 80 * 3200, "hard_pass_sweeps": 4, "phase3_batches": 1260 * 3200},
}
# 别名
PRESETS["full"] = PRESETS["paper"]


@dataclass
class TrainConfig:
    seed: int = 1
    batch_size: int = 16
    phase1_batches: int = 37_500
    phase1_lr: float = 0.01
    hard_pass_sweeps: int = 4
    phase3_batches: int = 37_500
    phase3_lr: float = 0.001
    phase3_momentum: float = 0.9
    augment: bool = True
    augment_domain: str = "pixel"
    model_kind: str = "dct_mlp"
    tau: float = 0.02
    log_every: int = 20

    @classmethod
    def from_preset(cls, name: str = "desk", **overrides) -> "TrainConfig":
        if name not in PRESETS:
            raise InvalidArgumentError(f"未知的预设: {name}, 可选 {sorted(PRESETS)}")
        values = dict(PRESETS[name])
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values).validate()

    def validate(self) -> "TrainConfig":
        self.model_kind = models.normalize_kind(self.model_kind)
        if self.batch_size < 1:
            raise InvalidArgumentError(f"batch_size 必须 >= 1, 收到 {self.batch_size}")
        if self.phase1_lr <= 0 or self.phase3_lr <= 0:
            raise InvalidArgumentError("学习率必须 > 0")
        if not 0 <= self.phase3_momentum < 1:
            raise InvalidArgumentError(f"动量必须在 [0, 1) 内, 收到 {self.phase3_momentum}")
        if min(self.phase1_batches, self.phase3_batches, self.hard_pass_sweeps) < 0:
            raise InvalidArgumentError("batch 数与扫描次数不能为负")
        if self.augment_domain not in ("pixel", "coefficient"):
            raise InvalidArgumentError(f"未知的增强域: {self.augment_domain}")
        if self.tau < 0:
            raise InvalidArgumentError(f"阈值必须非负, 收到 {self.tau}")
        if self.log_every < 1:
            raise InvalidArgumentError("log_every 必须 >= 1")
        return self

    def to_dict(self) -> dict:
        return asdict(self)


class LossPoint(NamedTuple):
    phase: str
    batch_index: int
    running_loss: float


@dataclass
class EvalResult:
    accuracy: float
    correct: int
    total: int
    misclassified: List[Tuple[int, int, int]] = field(default_factory=list)  # (index, true, predicted)


@dataclass
class RegimenResult:
    trace: List[LossPoint]
    hard_updates: int


def seed_streams(seed: int) -> Tuple[np.random.Generator, np.random.Generator]:
    """同一个种子派生两个独立的随机流：(参数初始化, batch 采样)。"""
    init_seq, sample_seq = np.random.SeedSequence(seed).spawn(2)
    return np.random.default_rng(init_seq), np.random.default_rng(sample_seq)


def sgd_on_batch(model: models.Model, inputs: np.ndarray, labels: np.ndarray,
                 lr: float, momentum: float = 0.0) -> float:
    """一次 forward + MSE + backward + SGD，返回该 batch 的 loss。"""
    params = model.tensors()
    nn.zero_grad(params)
    out, cache = models.forward(model, models.as_batch(inputs))
    loss, dout = nn.mse_loss(out, one_hot(labels).astype(out.dtype))
    if not math.isfinite(loss):
        raise DctNetError(f"loss 不是有限值: {loss}")
    models.backward(model, dout, cache)
    nn.sgd_step(params, lr, momentum)
    return loss


def _run_batches(model: models.Model, draw: Callable[[], Tuple[np.ndarray, np.ndarray]], batches: int,
                 lr: float, momentum: float, phase: str, cfg: TrainConfig, verbose: bool) -> List[LossPoint]:
    trace: List[LossPoint] = []
    running = 0.0
    with tqdm(range(batches), desc=phase, unit="batch", disable=not verbose) as bar:
        for i in bar:
            inputs, labels = draw()
            running += sgd_on_batch(model, inputs, labels, lr, momentum)
            if (i + 1) % cfg.log_every == 0:
                point = LossPoint(phase, i + 1, running / cfg.log_every)
                trace.append(point)
                bar.set_postfix(loss=f"{point.running_loss:.5f}")
                running = 0.0
    return trace


def train_phase_random(model: models.Model, train: Dataset, cfg: TrainConfig,
                       rng: Optional[np.random.Generator] = None, verbose: bool = False) -> List[LossPoint]:
    """阶段 1：每步有放回地均匀抽 batch_size 个样本，lr=phase1_lr，无动量。"""
    if len(train) == 0:
        raise InvalidArgumentError("训练集为空")
    rng = rng if rng is not None else seed_streams(cfg.seed)[1]

    def draw() -> Tuple[np.ndarray, np.ndarray]:
        idx = rng.integers(0, len(train), size=cfg.batch_size)
        return train.inputs[idx], train.labels[idx]

    return _run_batches(model, draw, cfg.phase1_batches, cfg.phase1_lr, 0.0, "phase1", cfg, verbose)


def hard_example_pass(model: models.Model, train: Dataset, cfg: TrainConfig,
                      verbose: bool = False, chunk: int = 512) -> int:
    """阶段 2：顺序扫描 hard_pass_sweeps 遍，分错的样本攒满 batch_size 个就更新一次。

    待更新的样本跨扫描累计，最后不满一个 batch 的部分丢弃。返回更新次数。
    每个样本都用当前模型判断：一旦更新，就从下一个样本起重新批量预测。
    """
    pending: List[int] = []
    updates = 0
    for sweep in range(cfg.hard_pass_sweeps):
        k = 0
        with tqdm(total=len(train), desc=f"hard sweep {sweep + 1}", unit="img", disable=not verbose) as bar:
            while k < len(train):
                stop = min(k + chunk, len(train))
                preds = models.predict(model, train.inputs[k:stop])
                next_k = stop
                for j, pred in enumerate(preds):
                    idx = k + j
                    if pred == train.labels[idx]:
                        continue
                    pending.append(idx)
                    if len(pending) == cfg.batch_size:
                        sgd_on_batch(model, train.inputs[pending], train.labels[pending], cfg.phase1_lr)
                        pending.clear()
                        updates += 1
                        next_k = idx + 1
                        break
                bar.update(next_k - k)
                k = next_k
    if verbose:
        tqdm.write(f"难例回灌完成: {updates} 次更新, 丢弃 {len(pending)} 个未成批的样本")
    return updates


def assemble_augmented_batch(train: Dataset, idx: np.ndarray, w: int, cfg: TrainConfig,
                             source: Optional[np.ndarray]) -> Tuple[np.ndarray, int, int]:
    """按 w 计数器组装一个增强 batch，返回 (batch, 下一个 w, 本 batch 的平移样本数)。

    w ∈ 0..7 的槽取 source 中对应样本做方向 w 的平移，w ∈ 8..11 的槽取原样本。
    像素域平移 + DCT 模型时，平移后的 patch 重新做 DCT 与阈值化。
    """
    batch = np.array(train.inputs[idx], dtype=np.float64)
    shifted_rows: List[int] = []
    for j, s in enumerate(idx):
        if cfg.augment and w < len(SHIFT_OFFSETS):
            batch[j] = shift_augment(source[s], w)
            shifted_rows.append(j)
        w = (w + 1) % AUGMENT_CYCLE
    if shifted_rows and cfg.augment_domain == "pixel" and train.domain_tag == "dct":
        batch[shifted_rows] = to_dct_domain(batch[shifted_rows], train.threshold)
    return batch, w, len(shifted_rows)


def train_phase_augmented(model: models.Model, train: Dataset, cfg: TrainConfig,
                          pixels: Optional[Dataset] = None, rng: Optional[np.random.Generator] = None,
                          verbose: bool = False) -> List[LossPoint]:
    """阶段 3：lr=phase3_lr、动量 phase3_momentum 的 SGD，w 计数器贯穿整个阶段。"""
    if len(train) == 0:
        raise InvalidArgumentError("训练集为空")
    rng = rng if rng is not None else seed_streams(cfg.seed)[1]
    source = None
    if cfg.augment:
        source = pixel_source(train, pixels) if cfg.augment_domain == "pixel" else train.inputs
        if source is None:
            raise InvalidArgumentError("像素域增强需要像素域训练数据（DCT 数据集请同时提供像素缓存）")
    nn.reset_momentum(model.tensors())
    state = {"w": 0}

    def draw() -> Tuple[np.ndarray, np.ndarray]:
        idx = rng.integers(0, len(train), size=cfg.batch_size)
        if not cfg.augment:
            return train.inputs[idx], train.labels[idx]
        batch, state["w"], _ = assemble_augmented_batch(train, idx, state["w"], cfg, source)
        return batch, train.labels[idx]

    return _run_batches(model, draw, cfg.phase3_batches, cfg.phase3_lr, cfg.phase3_momentum,
                        "phase3", cfg, verbose)


def run_regimen(model: models.Model, train: Dataset, cfg: TrainConfig, pixels: Optional[Dataset] = None,
                rng: Optional[np.random.Generator] = None,
                on_phase_end: Optional[Callable[[str, models.Model], None]] = None,
                verbose: bool = False) -> RegimenResult:
    """依次执行三个阶段；每个阶段结束时调用 on_phase_end(阶段名, model)。"""
    cfg.validate()
    rng = rng if rng is not None else seed_streams(cfg.seed)[1]
    trace = train_phase_random(model, train, cfg, rng=rng, verbose=verbose)
    if on_phase_end:
        on_phase_end("phase1", model)
    updates = hard_example_pass(model, train, cfg, verbose=verbose)
    if on_phase_end:
        on_phase_end("phase2", model)
    trace += train_phase_augmented(model, train, cfg, pixels=pixels, rng=rng, verbose=verbose)
    if on_phase_end:
        on_phase_end("phase3", model)
    return RegimenResult(trace=trace, hard_updates=updates)


def evaluate(model: models.Model, test: Dataset, chunk: int = 1000) -> EvalResult:
    """accuracy = 100·正确数/总数，同时列出所有分错的 (下标, 真实, 预测)。"""
    correct = 0
    misclassified: List[Tuple[int, int, int]] = []
    for start in range(0, len(test), chunk):
        preds = models.predict(model, test.inputs[start:start + chunk])
        truth = test.labels[start:start + chunk]
        correct += int(np.sum(preds == truth))
        for j in np.flatnonzero(preds != truth):
            misclassified.append((start + int(j), int(truth[j]), int(preds[j])))
    total = len(test)
    accuracy = 100.0 * correct / total if total else 0.0
    return EvalResult(accuracy=accuracy, correct=correct, total=total, misclassified=misclassified)


def write_loss_trace(trace: List[LossPoint], path: str) -> str:
    folder = os.path.dirname(path)
    if folder:
        os.makedirs(folder, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["phase", "batch_index", "running_loss"])
        for point in trace:
            writer.writerow([point.phase, point.batch_index, repr(point.running_loss)])
    return path


def write_misclassified(result: EvalResult, path: str) -> str:
    folder = os.path.dirname(path)
    if folder:
        os.makedirs(folder, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["index", "true", "predicted"])
        writer.writerows(result.misclassified)
    return path
