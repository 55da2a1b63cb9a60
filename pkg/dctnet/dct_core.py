"""二维 DCT-II：变换矩阵、正/逆变换以及系数分析。

所有计算使用 float64。Patch / CoeffGrid 就是 n×n 的 numpy 数组，
DctMatrix 构造后只读，可在线程间共享。
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from .errors import InvalidArgumentError

# 像素域与系数域都用 n×n 的 float64 数组表示
Patch = np.ndarray
CoeffGrid = np.ndarray


@dataclass(frozen=True)
class DctMatrix:
    """n×n 正交 DCT-II 矩阵 T，第 p 行是第 p 个一维余弦基（已含 α 归一化）"""

    n: int
    entries: np.ndarray

    @property
    def T(self) -> np.ndarray:
        return self.entries.T


def build_dct_matrix(n: int) -> DctMatrix:
    """构造 T[p][q] = α_p·cos(π(2q+1)p / 2n)，α_0 = 1/√n，其余 α_p = √(2/n)。"""
    if n < 1:
        raise InvalidArgumentError(f"DCT 矩阵边长必须 >= 1, 收到 {n}")
    p = np.arange(n, dtype=np.float64)[:, None]
    q = np.arange(n, dtype=np.float64)[None, :]
    entries = math.sqrt(2.0 / n) * np.cos(np.pi * (2.0 * q + 1.0) * p / (2.0 * n))
    entries[0, :] = 1.0 / math.sqrt(n)
    entries.setflags(write=False)
    return DctMatrix(n=n, entries=entries)


def _check_square(grid: np.ndarray, n: int, what: str) -> np.ndarray:
    grid = np.asarray(grid, dtype=np.float64)
    if grid.shape != (n, n):
        raise InvalidArgumentError(f"{what} 形状 {grid.shape} 与 DCT 矩阵边长 {n} 不匹配")
    return grid


def forward_dct(patch: Patch, t: DctMatrix) -> CoeffGrid:
    """D = T·I·Tᵀ（两次 n×n 矩阵乘法）。"""
    patch = _check_square(patch, t.n, "patch")
    return t.entries @ patch @ t.T


def inverse_dct(coeffs: CoeffGrid, t: DctMatrix) -> Patch:
    """I = Tᵀ·D·T，T 正交所以就是 forward_dct 的逆。"""
    coeffs = _check_square(coeffs, t.n, "coeffs")
    return t.T @ coeffs @ t.entries


def forward_dct_batch(patches: np.ndarray, t: DctMatrix) -> np.ndarray:
    """对 (count, n, n) 的一批 patch 逐个做 T·I·Tᵀ。"""
    patches = np.asarray(patches, dtype=np.float64)
    if patches.ndim != 3 or patches.shape[1:] != (t.n, t.n):
        raise InvalidArgumentError(f"批量 patch 形状 {patches.shape} 应为 (count, {t.n}, {t.n})")
    return np.matmul(np.matmul(t.entries, patches), t.T)


def inverse_dct_batch(coeffs: np.ndarray, t: DctMatrix) -> np.ndarray:
    coeffs = np.asarray(coeffs, dtype=np.float64)
    if coeffs.ndim != 3 or coeffs.shape[1:] != (t.n, t.n):
        raise InvalidArgumentError(f"批量系数形状 {coeffs.shape} 应为 (count, {t.n}, {t.n})")
    return np.matmul(np.matmul(t.T, coeffs), t.entries)


def forward_dct_direct(patch: Patch) -> CoeffGrid:
    """按定义直接求和的 O(n⁴) 实现，作为矩阵形式的对照。

    D[p][q] = α_p·α_q·Σ_m Σ_n I[m][n]·cos(π(2m+1)p/2M)·cos(π(2n+1)q/2N)
    """
    patch = np.asarray(patch, dtype=np.float64)
    rows, cols = patch.shape

    def alphas(size: int) -> np.ndarray:
        a = np.full(size, math.sqrt(2.0 / size))
        a[0] = math.sqrt(1.0 / size)
        return a

    def cosines(size: int) -> np.ndarray:
        k = np.arange(size, dtype=np.float64)[:, None]
        m = np.arange(size, dtype=np.float64)[None, :]
        return np.cos(np.pi * (2.0 * m + 1.0) * k / (2.0 * size))

    cm = cosines(rows)  # cm[p, m]
    cn = cosines(cols)  # cn[q, n]
    # 不开 optimize，逐项四重求和
    total = np.einsum("mn,pm,qn->pq", patch, cm, cn, optimize=False)
    return alphas(rows)[:, None] * alphas(cols)[None, :] * total


def threshold_coeffs(coeffs: CoeffGrid, tau: float) -> CoeffGrid:
    """|c| < tau 的系数置 0（严格小于），其余不变。"""
    if tau < 0:
        raise InvalidArgumentError(f"阈值必须非负, 收到 {tau}")
    coeffs = np.asarray(coeffs)
    out = coeffs.copy()
    out[np.abs(out) < tau] = 0
    return out


def zigzag_order(n: int) -> List[Tuple[int, int]]:
    """JPEG 式 zigzag 扫描的 (p, q) 序列：按 p+q 递增，方向交替，从 (0,0) 向右出发。"""
    order: List[Tuple[int, int]] = []
    for d in range(2 * n - 1):
        lo, hi = max(0, d - n + 1), min(d, n - 1)
        ps = range(lo, hi + 1) if d % 2 == 1 else range(hi, lo - 1, -1)
        order.extend((p, d - p) for p in ps)
    return order


def zigzag(coeffs: CoeffGrid) -> np.ndarray:
    coeffs = np.asarray(coeffs)
    n = coeffs.shape[0]
    if coeffs.shape != (n, n):
        raise InvalidArgumentError(f"zigzag 只支持方阵, 收到 {coeffs.shape}")
    rows, cols = zip(*zigzag_order(n))
    return coeffs[list(rows), list(cols)]


def nonzero_count(coeffs: CoeffGrid) -> int:
    return int(np.count_nonzero(coeffs))


def basis_image(p: int, q: int, n: int) -> Patch:
    """系数 D[p][q] 在像素域对应的基图像：T 的第 p 行与第 q 行的外积。"""
    if not (0 <= p < n and 0 <= q < n):
        raise InvalidArgumentError(f"基图像下标 ({p}, {q}) 超出 [0, {n})")
    t = build_dct_matrix(n).entries
    return np.outer(t[p], t[q])


def mult_count(n: int, mode: str) -> int:
    """乘法次数模型：dense 为 (n·n)²，separable 为 2·n³。"""
    if n < 1:
        raise InvalidArgumentError(f"边长必须 >= 1, 收到 {n}")
    if mode == "dense":
        return (n * n) ** 2
    if mode == "separable":
        return 2 * n ** 3
    raise InvalidArgumentError(f"未知的乘法计数模式: {mode}")


def energy(grid: np.ndarray) -> float:
    grid = np.asarray(grid, dtype=np.float64)
    return float(np.sum(grid * grid))


def relative_l2_error(original: np.ndarray, approx: np.ndarray) -> float:
    """‖original − approx‖ / ‖original‖；original 全零时返回误差本身的范数。"""
    base = energy(original)
    diff = energy(np.asarray(original, dtype=np.float64) - np.asarray(approx, dtype=np.float64))
    return math.sqrt(diff / base) if base > 0 else math.sqrt(diff)


def tau_for_fraction(coeffs: CoeffGrid, fraction: float) -> float:
    """返回阈值 τ，使 |c| < τ 的系数恰好是幅值最小的 floor(fraction·n²) 个（幅值互异时）。"""
    if not 0.0 <= fraction <= 1.0:
        raise InvalidArgumentError(f"比例必须在 [0, 1] 内, 收到 {fraction}")
    mags = np.sort(np.abs(np.asarray(coeffs, dtype=np.float64)).ravel())
    k = int(math.floor(fraction * mags.size))
    if k == 0:
        return 0.0
    if k >= mags.size:
        return float(np.nextafter(mags[-1], np.inf))
    return float(mags[k])
