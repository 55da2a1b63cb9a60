"""命令实现与命令路由表。

每个命令返回 {"ok": ...} 字典；出错时返回 {"ok": False, "error": "usage" | "format", "message": ...}，
由 cli.py 映射成退出码。未指定输出目录时使用 cli.py 设置的 run_folder。
"""

from __future__ import annotations

import functools
import os
from typing import Dict, Optional, Sequence

from config_manager import config_manager
from user import setting

from . import bench, figures, models, nn, notes, training
from .dataset import (cache_path, load_cache, load_raw_mnist, make_datasets, make_pixel_dataset,
                      save_cache, zeroed_fraction)
from .errors import DctNetError, FormatError, InvalidArgumentError

run_folder = ""


def _guarded(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs) -> Dict:
        try:
            return fn(*args, **kwargs)
        except FormatError as e:
            return {"ok": False, "error": "format", "message": str(e)}
        except (DctNetError, FileNotFoundError, IsADirectoryError) as e:
            return {"ok": False, "error": "usage", "message": str(e)}
    return wrapper


def _out_dir(out_dir: Optional[str], tag: str) -> str:
    folder = out_dir or run_folder or os.path.join(config_manager.get_results_dir(), tag)
    os.makedirs(folder, exist_ok=True)
    return folder


@_guarded
def cmd_prepare(mnist_dir: Optional[str] = None, cache_dir: Optional[str] = None, tau: Optional[float] = None,
                domain: str = "dct", verbose: bool = True) -> Dict:
    """读 IDX → 缩放到 32×32 → (DCT + 阈值) → 写 DCTC 缓存。

    domain=dct 时同时写像素域缓存（LeNet 训练与像素域平移增强要用）。
    """
    mnist_dir = mnist_dir or config_manager.get_mnist_dir()
    if not os.path.isdir(mnist_dir):
        raise FileNotFoundError(f"MNIST 目录不存在: {mnist_dir}")
    if domain not in ("pixel", "dct"):
        raise InvalidArgumentError(f"未知的数据域: {domain}")
    cache_dir = cache_dir or config_manager.get_cache_dir()
    tau = config_manager.get_default_tau() if tau is None else float(tau)

    files, counts, fractions = {}, {}, {}
    for split in ("train", "test"):
        raw = load_raw_mnist(mnist_dir, split)
        print(f"{split}: 读取 {len(raw)} 个样本")
        if domain == "dct":
            pixel_ds, dct_ds = make_datasets(raw, tau, verbose=verbose)
            files[f"dct_{split}"] = save_cache(dct_ds, cache_path(cache_dir, "dct", split))
            fractions[split] = zeroed_fraction(dct_ds)
            print(f"{split}: 阈值 {tau} 下置零系数比例 {fractions[split]:.4f}")
        else:
            pixel_ds = make_pixel_dataset(raw, verbose=verbose)
        files[f"pixel_{split}"] = save_cache(pixel_ds, cache_path(cache_dir, "pixel", split))
        counts[split] = len(raw)

    for name, path in files.items():
        print(f"已写出 {name}: {path}")
    return {"ok": True, "files": files, "counts": counts, "zeroed_fraction": fractions,
            "tau": tau if domain == "dct" else 0.0}


@_guarded
def cmd_train(model_kind: str = "dct_mlp", train_cache: Optional[str] = None, test_cache: Optional[str] = None,
              pixel_cache: Optional[str] = None, out_dir: Optional[str] = None, preset: Optional[str] = None,
              seed: Optional[int] = None, tau: Optional[float] = None, allow_domain_mismatch: bool = False,
              verbose: bool = True, **overrides) -> Dict:
    """三阶段训练，阶段边界写检查点，结束后写最终检查点与 loss 曲线，并在测试集上评估。"""
    kind = models.normalize_kind(model_kind)
    domain = "pixel" if kind == "lenet" else "dct"
    cache_dir = config_manager.get_cache_dir()
    train_cache = train_cache or cache_path(cache_dir, domain, "train")
    test_cache = test_cache or cache_path(cache_dir, domain, "test")

    train = load_cache(train_cache)
    if train.domain_tag != domain and not allow_domain_mismatch:
        raise InvalidArgumentError(f"{kind} 默认使用 {domain} 域数据, 但 {train_cache} 是 {train.domain_tag} 域"
                                   f"（如确需混用请加 --allow-domain-mismatch）")
    pixels = None
    if train.domain_tag == "dct":
        pixel_cache = pixel_cache or cache_path(cache_dir, "pixel", "train")
        if os.path.exists(pixel_cache):
            pixels = load_cache(pixel_cache)
    if tau is not None and abs(tau - train.threshold) > 1e-6:
        print(f"⚠️ --tau {tau} 与缓存记录的阈值 {train.threshold:g} 不一致, 以缓存为准")

    seed = config_manager.get_default_seed() if seed is None else seed
    cfg = training.TrainConfig.from_preset(preset or config_manager.get_default_preset(), seed=seed,
                                           model_kind=kind, tau=train.threshold, **overrides)
    init_rng, sample_rng = training.seed_streams(cfg.seed)
    model = models.build_model(kind, init_rng)
    folder = _out_dir(out_dir, f"train_{kind}")
    print(f"模型 {kind}: {models.parameter_count(model):,} 个参数, 训练样本 {len(train)}, 输出到 {folder}")

    checkpoints = {}

    def on_phase_end(phase: str, m: models.Model) -> None:
        checkpoints[phase] = models.save_model(m, os.path.join(folder, f"{kind}_{phase}.nnwt"))

    result = training.run_regimen(model, train, cfg, pixels=pixels, rng=sample_rng,
                                  on_phase_end=on_phase_end, verbose=verbose)
    checkpoint = models.save_model(model, os.path.join(folder, f"{kind}.nnwt"))
    trace_path = training.write_loss_trace(result.trace, os.path.join(folder, "loss_trace.csv"))

    summary = {"model": kind, "seed": cfg.seed, "tau": cfg.tau, "phase1_batches": cfg.phase1_batches,
               "hard_pass_sweeps": cfg.hard_pass_sweeps, "phase3_batches": cfg.phase3_batches,
               "augment": cfg.augment, "augment_domain": cfg.augment_domain,
               "hard_updates": result.hard_updates, "checkpoint": checkpoint}
    accuracy = None
    if os.path.exists(test_cache):
        evaluation = training.evaluate(model, load_cache(test_cache))
        accuracy = evaluation.accuracy
        training.write_misclassified(evaluation, os.path.join(folder, "misclassified.csv"))
        summary["accuracy"] = accuracy
        print(f"accuracy: {accuracy:.2f}")
    else:
        print(f"⚠️ 测试缓存不存在: {test_cache}, 未评估准确率（可先运行 prepare 或用 --test-cache 指定）")
    notes.write_run_note("train", summary)
    return {"ok": True, "checkpoint": checkpoint, "checkpoints": checkpoints, "trace": trace_path,
            "accuracy": accuracy, "hard_updates": result.hard_updates, "config": cfg.to_dict()}


@_guarded
def cmd_eval(weights: str, cache: Optional[str] = None, model_kind: Optional[str] = None,
             out_dir: Optional[str] = None) -> Dict:
    """在测试缓存上评估检查点，打印准确率并写出分错样本列表。"""
    arrays = nn.load_weights(weights)
    kind = models.normalize_kind(model_kind) if model_kind else models.infer_kind(arrays)
    model = models.model_from_arrays(kind, arrays)
    domain = "pixel" if kind == "lenet" else "dct"
    cache = cache or cache_path(config_manager.get_cache_dir(), domain, "test")
    test = load_cache(cache)
    if test.domain_tag != domain:
        print(f"⚠️ {kind} 通常在 {domain} 域数据上评估, 当前缓存是 {test.domain_tag} 域")

    evaluation = training.evaluate(model, test)
    folder = _out_dir(out_dir, f"eval_{kind}")
    listing = training.write_misclassified(evaluation, os.path.join(folder, "misclassified.csv"))
    print(f"accuracy: {evaluation.accuracy:.2f}")
    print(f"分错 {len(evaluation.misclassified)} / {evaluation.total}, 列表见 {listing}")
    notes.write_run_note("eval", {"model": kind, "weights": weights, "cache": cache,
                                  "accuracy": evaluation.accuracy, "misclassified": len(evaluation.misclassified)})
    return {"ok": True, "accuracy": evaluation.accuracy, "correct": evaluation.correct, "total": evaluation.total,
            "misclassified": listing}


@_guarded
def cmd_bench(sizes: Sequence[int] = (32,), iters: int = 100, seed: Optional[int] = None,
              out_dir: Optional[str] = None) -> Dict:
    """稠密投影 vs 可分离变换的单线程计时，结果写成 bench.csv。"""
    seed = config_manager.get_default_seed() if seed is None else seed
    reports = [bench.run_bench(n, iters, seed) for n in sizes]
    print(bench.format_table(reports))
    for r in reports:
        print(f"n={r.n}: 理论乘法比 {r.dense_mults / r.separable_mults:g}, 实测加速 {r.speedup:.2f}x")
    path = bench.write_bench_csv(reports, os.path.join(_out_dir(out_dir, "bench"), "bench.csv"))
    for r in reports:
        notes.write_run_note("bench", r.to_dict())
    return {"ok": True, "reports": [r.to_dict() for r in reports], "csv": path}


@_guarded
def cmd_figures(which: Sequence[str] = (), cache: Optional[str] = None, weights: Optional[str] = None,
                out_dir: Optional[str] = None) -> Dict:
    """生成各图的数据文件；像素域测试缓存是大多数图的输入，kernels 需要 LeNet 检查点。"""
    which = list(which) or list(figures.FIGURE_NAMES)
    unknown = [w for w in which if w not in figures.FIGURE_NAMES]
    if unknown:
        raise InvalidArgumentError(f"未知的图: {unknown}, 可选 {figures.FIGURE_NAMES}")

    cache = cache or cache_path(config_manager.get_cache_dir(), "pixel", "test")
    needs_pixels = any(w in ("dctgrid", "zigzag", "recon", "counts") for w in which)
    pixels = None
    if os.path.exists(cache):
        pixels = load_cache(cache)
        if pixels.domain_tag != "pixel":
            raise InvalidArgumentError(f"作图需要像素域缓存, {cache} 是 {pixels.domain_tag} 域")
    elif needs_pixels:
        raise FileNotFoundError(f"找不到像素域缓存: {cache}（先运行 prepare）")

    model = None
    if "kernels" in which:
        if not weights:
            raise InvalidArgumentError("kernels 图需要 --weights 指定 LeNet 检查点")
        model = models.load_model("lenet", weights)

    folder = _out_dir(out_dir, "figures")
    outputs = figures.make_figures(which, folder, pixels=pixels, model=model,
                                   recon_taus=setting.recon_taus, counts_taus=setting.counts_taus,
                                   dctgrid_count=setting.dctgrid_count, basis_count=setting.basis_count,
                                   kernel_digit=setting.kernel_digit)
    for name, paths in outputs.items():
        print(f"{name}: {len(paths)} 个文件")
    return {"ok": True, "outputs": outputs, "folder": folder}


@_guarded
def cmd_config() -> Dict:
    config_manager.print_config_status()
    return {"ok": True, "status": config_manager.validate_config()}


commands_api = {
    "prepare": cmd_prepare,
    "train": cmd_train,
    "eval": cmd_eval,
    "bench": cmd_bench,
    "figures": cmd_figures,
    "config": cmd_config,
}
