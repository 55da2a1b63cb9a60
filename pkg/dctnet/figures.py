"""各图背后的数据：PGM 图像（P5，8 位）与 CSV。

像素域图像直接把 [0,1] 映射到 [0,255]；系数图、基图像、卷积核逐张 min-max 归一化。
"""

from __future__ import annotations

import csv
import os
from typing import Dict, List, Optional, Sequence

import numpy as np
from PIL import Image

from . import dct_core
from .dataset import Dataset
from .models import LeNetModel, dump_first_layer_kernels, first_layer_responses, normalize_image

FIGURE_NAMES = ("dctgrid", "zigzag", "recon", "counts", "basis", "kernels")


def save_pgm(values: np.ndarray, path: str) -> str:
    """[0,1] 灰度数组写成二进制 PGM。"""
    pixels = np.round(np.clip(np.asarray(values, dtype=np.float64), 0.0, 1.0) * 255).astype(np.uint8)
    Image.fromarray(pixels).save(path, format="PPM")
    return path


def _write_csv(path: str, header: Sequence[str], rows) -> str:
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        writer.writerows(rows)
    return path


def _coefficients(pixels: Dataset, index: int) -> np.ndarray:
    patch = np.asarray(pixels.inputs[index], dtype=np.float64)
    return dct_core.forward_dct(patch, dct_core.build_dct_matrix(pixels.n))


def figure_dctgrid(pixels: Dataset, out_dir: str, count: int = 12) -> List[str]:
    """前 count 个数字及其 DCT 系数图。"""
    paths = []
    for i in range(min(count, len(pixels))):
        paths.append(save_pgm(pixels.inputs[i], os.path.join(out_dir, f"digit_{i:02d}.pgm")))
        paths.append(save_pgm(normalize_image(_coefficients(pixels, i)), os.path.join(out_dir, f"dct_{i:02d}.pgm")))
    return paths


def figure_zigzag(pixels: Dataset, out_dir: str, index: int = 0) -> List[str]:
    """一个样本的全部系数按 zigzag 顺序展开。"""
    coeffs = _coefficients(pixels, index)
    order = dct_core.zigzag_order(pixels.n)
    values = dct_core.zigzag(coeffs)
    rows = [(rank, p, q, repr(float(v))) for rank, ((p, q), v) in enumerate(zip(order, values))]
    return [_write_csv(os.path.join(out_dir, "zigzag.csv"), ["rank", "p", "q", "value"], rows)]


def figure_recon(pixels: Dataset, out_dir: str, taus: Sequence[float], index: int = 0,
                 drop_fraction: float = 0.3) -> List[str]:
    """阈值扫描下的重建图像，附带丢弃比例与相对 L2 误差；另加一张恰好丢弃约 30% 系数的重建。"""
    t = dct_core.build_dct_matrix(pixels.n)
    patch = np.asarray(pixels.inputs[index], dtype=np.float64)
    coeffs = dct_core.forward_dct(patch, t)
    total = dct_core.energy(coeffs)
    sweep = [(f"tau_{tau:g}", float(tau)) for tau in taus]
    sweep.append((f"drop_{int(round(drop_fraction * 100))}pct", dct_core.tau_for_fraction(coeffs, drop_fraction)))

    paths = [save_pgm(patch, os.path.join(out_dir, "recon_original.pgm"))]
    rows = []
    for name, tau in sweep:
        kept = dct_core.threshold_coeffs(coeffs, tau)
        recon = dct_core.inverse_dct(kept, t)
        zeroed = coeffs.size - dct_core.nonzero_count(kept)
        dropped = total - dct_core.energy(kept)
        paths.append(save_pgm(recon, os.path.join(out_dir, f"recon_{name}.pgm")))
        rows.append((name, repr(tau), zeroed, repr(zeroed / coeffs.size),
                     repr(dct_core.relative_l2_error(patch, recon)), repr(dropped / total if total else 0.0)))
    paths.append(_write_csv(os.path.join(out_dir, "recon.csv"),
                            ["name", "tau", "zeroed", "zeroed_fraction", "relative_l2_error", "dropped_energy_fraction"],
                            rows))
    return paths


def figure_counts(pixels: Dataset, out_dir: str, taus: Sequence[float], index: int = 0) -> List[str]:
    """非零系数个数随阈值的变化。"""
    coeffs = _coefficients(pixels, index)
    rows = [(repr(float(tau)), dct_core.nonzero_count(dct_core.threshold_coeffs(coeffs, tau))) for tau in taus]
    return [_write_csv(os.path.join(out_dir, "counts.csv"), ["tau", "nonzero_count"], rows)]


def figure_basis(out_dir: str, count: int = 16, n: int = 32) -> List[str]:
    """zigzag 顺序下的前 count 个基图像。"""
    paths = []
    for rank, (p, q) in enumerate(dct_core.zigzag_order(n)[:count]):
        image = normalize_image(dct_core.basis_image(p, q, n))
        paths.append(save_pgm(image, os.path.join(out_dir, f"basis_{rank:02d}_p{p}_q{q}.pgm")))
    return paths


def figure_kernels(model: LeNetModel, out_dir: str, pixels: Optional[Dataset] = None, digit: int = 3) -> List[str]:
    """第一层 6 个卷积核；给了像素数据时再输出它们作用在第一个 digit 上的响应。"""
    paths = [save_pgm(k, os.path.join(out_dir, f"kernel_{i}.pgm")) for i, k in enumerate(dump_first_layer_kernels(model))]
    if pixels is not None and len(pixels):
        hits = np.flatnonzero(pixels.labels == digit)
        index = int(hits[0]) if hits.size else 0
        paths.append(save_pgm(pixels.inputs[index], os.path.join(out_dir, f"response_input_{index}.pgm")))
        for i, response in enumerate(first_layer_responses(model, pixels.inputs[index])):
            paths.append(save_pgm(response, os.path.join(out_dir, f"response_{i}.pgm")))
    return paths


def make_figures(which: Sequence[str], out_dir: str, pixels: Optional[Dataset] = None,
                 model: Optional[LeNetModel] = None, recon_taus: Sequence[float] = (),
                 counts_taus: Sequence[float] = (), dctgrid_count: int = 12, basis_count: int = 16,
                 kernel_digit: int = 3) -> Dict[str, List[str]]:
    os.makedirs(out_dir, exist_ok=True)
    outputs: Dict[str, List[str]] = {}
    for name in which:
        if name == "dctgrid":
            outputs[name] = figure_dctgrid(pixels, out_dir, dctgrid_count)
        elif name == "zigzag":
            outputs[name] = figure_zigzag(pixels, out_dir)
        elif name == "recon":
            outputs[name] = figure_recon(pixels, out_dir, recon_taus)
        elif name == "counts":
            outputs[name] = figure_counts(pixels, out_dir, counts_taus)
        elif name == "basis":
            outputs[name] = figure_basis(out_dir, basis_count)
        elif name == "kernels":
            outputs[name] = figure_kernels(model, out_dir, pixels, kernel_digit)
    return outputs
