"""稠密 n²×n² 投影 vs 可分离 T·I·Tᵀ 的计时基准。

两条路径都是 numba 编译的单线程三重循环（内层循环走连续维），
比较的是算法本身的乘法次数，而不是 BLAS 的调优。
"""

from __future__ import annotations

import csv
import os
import time
from dataclasses import asdict, dataclass
from typing import Callable, List, Sequence

import numpy as np
from numba import njit

from .dct_core import build_dct_matrix, forward_dct, mult_count
from .errors import InvalidArgumentError

WARMUP_RUNS = 10


@njit(cache=True)
def dense_project(matrix, vec, out):
    """out = M·v，逐行点积"""
    rows, cols = matrix.shape
    for i in range(rows):
        acc = 0.0
        for j in range(cols):
            acc += matrix[i, j] * vec[j]
        out[i] = acc


@njit(cache=True)
def matmul_into(a, b, out):
    """i-k-j 顺序的朴素矩阵乘法"""
    rows, inner = a.shape
    cols = b.shape[1]
    for i in range(rows):
        for j in range(cols):
            out[i, j] = 0.0
        for k in range(inner):
            aik = a[i, k]
            for j in range(cols):
                out[i, j] += aik * b[k, j]


@njit(cache=True)
def separable_transform(t, t_transposed, patch, tmp, out):
    matmul_into(t, patch, tmp)
    matmul_into(tmp, t_transposed, out)


@dataclass
class BenchReport:
    n: int
    dense_mults: int
    separable_mults: int
    dense_ns: float
    separable_ns: float
    speedup: float
    max_abs_error: float

    def to_dict(self) -> dict:
        return asdict(self)


def _median_ns(fn: Callable[[], None], iters: int, warmup: int) -> float:
    for _ in range(warmup):
        fn()
    samples = np.empty(iters, dtype=np.int64)
    for i in range(iters):
        start = time.perf_counter_ns()
        fn()
        samples[i] = time.perf_counter_ns() - start
    return float(np.median(samples))


def correctness_check(n: int, seed: int = 1) -> float:
    """稠密矩阵取 T⊗T（行优先展平下与 T·I·Tᵀ 等价），返回两条路径结果的最大绝对误差。"""
    rng = np.random.default_rng(seed)
    t = build_dct_matrix(n)
    patch = rng.random((n, n))
    dense = np.ascontiguousarray(np.kron(t.entries, t.entries))
    dense_out = np.empty(n * n)
    dense_project(dense, np.ascontiguousarray(patch.ravel()), dense_out)
    sep_out = np.empty((n, n))
    separable_transform(np.ascontiguousarray(t.entries), np.ascontiguousarray(t.T), patch, np.empty((n, n)), sep_out)
    reference = forward_dct(patch, t)
    return float(max(np.max(np.abs(dense_out.reshape(n, n) - sep_out)),
                     np.max(np.abs(sep_out - reference))))


def run_bench(n: int = 32, iters: int = 100, seed: int = 1, warmup: int = WARMUP_RUNS) -> BenchReport:
    """计时模式使用随机矩阵，两条路径处理同一个 patch，取 iters 次的中位数。"""
    if iters < 1:
        raise InvalidArgumentError(f"iters 必须 >= 1, 收到 {iters}")
    if n < 1:
        raise InvalidArgumentError(f"n 必须 >= 1, 收到 {n}")
    rng = np.random.default_rng(seed)
    patch = rng.standard_normal((n, n))
    vec = np.ascontiguousarray(patch.ravel())
    dense = rng.standard_normal((n * n, n * n))
    t = rng.standard_normal((n, n))
    t_transposed = np.ascontiguousarray(t.T)
    dense_out = np.empty(n * n)
    tmp, sep_out = np.empty((n, n)), np.empty((n, n))

    dense_ns = _median_ns(lambda: dense_project(dense, vec, dense_out), iters, warmup)
    separable_ns = _median_ns(lambda: separable_transform(t, t_transposed, patch, tmp, sep_out), iters, warmup)
    return BenchReport(
        n=n,
        dense_mults=mult_count(n, "dense"),
        separable_mults=mult_count(n, "separable"),
        dense_ns=dense_ns,
        separable_ns=separable_ns,
        speedup=dense_ns / separable_ns if separable_ns > 0 else float("inf"),
        max_abs_error=correctness_check(n, seed),
    )


def write_bench_csv(reports: Sequence[BenchReport], path: str) -> str:
    folder = os.path.dirname(path)
    if folder:
        os.makedirs(folder, exist_ok=True)
    fields = list(BenchReport.__dataclass_fields__)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.DictWriter(f, fieldnames=fields)
        writer.writeheader()
        for r in reports:
            writer.writerow(r.to_dict())
    return path


def format_table(reports: Sequence[BenchReport]) -> str:
    lines: List[str] = [f"{'n':>4} {'dense乘法':>12} {'可分离乘法':>10} {'dense ns':>12} {'可分离 ns':>10} {'加速比':>8} {'误差':>10}"]
    for r in reports:
        lines.append(f"{r.n:>4} {r.dense_mults:>12,} {r.separable_mults:>10,} {r.dense_ns:>12.0f} "
                     f"{r.separable_ns:>10.0f} {r.speedup:>8.2f} {r.max_abs_error:>10.2e}")
    return "\n".join(lines)
