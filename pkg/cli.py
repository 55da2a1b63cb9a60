"""
DCT 系数 MLP vs LeNet 的命令行入口：

- prepare：MNIST IDX → 32×32 像素 / DCT 系数缓存
- train：三阶段训练（随机 batch → 难例回灌 → 动量 + 平移增强）
- eval：在测试缓存上评估检查点
- bench：稠密投影 vs 可分离 DCT 的计时
- figures：各图背后的 PGM / CSV 数据
- config：打印 .config 配置状态

运行：
  python cli.py prepare --tau 0.02
  python cli.py train --model dct-mlp --preset desk --seed 1
"""

from __future__ import annotations

import argparse
import os
import sys
from datetime import datetime
from typing import List, Optional

from config_manager import config_manager, load_config
from user import setting

import dctnet.commands
from dctnet.commands import commands_api
from dctnet.figures import FIGURE_NAMES
from dctnet.training import PRESETS

EXIT_CODES = {"usage": 2, "format": 3}


def make_run_folder(tag: str) -> str:
    """创建本次运行的输出文件夹并返回路径"""
    base = config_manager.get_results_dir()
    os.makedirs(base, exist_ok=True)

    # 生成文件夹名
    timestamp = datetime.now().strftime("%Y%m%d_%H%M%S")
    safe_tag = "".join(c for c in tag[:50] if c.isalnum() or c in (' ', '-', '_')).rstrip()
    safe_tag = safe_tag.replace(' ', '_')

    folder_path = os.path.join(base, f"{timestamp}_{safe_tag}")
    os.makedirs(folder_path, exist_ok=True)

    return folder_path


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cli.py", description="DCT 系数特征 vs LeNet（MNIST）")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="生成 DCTC 缓存")
    p.add_argument("--mnist-dir", default=None, help="IDX 文件目录（默认 .config / 环境变量 MNIST_DIR）")
    p.add_argument("--out", dest="cache_dir", default=None, help="缓存目录（默认 CACHE_DIR）")
    p.add_argument("--tau", type=float, default=None)
    p.add_argument("--domain", choices=["pixel", "dct"], default="dct")
    p.add_argument("--quiet", action="store_true")

    p = sub.add_parser("train", help="三阶段训练")
    p.add_argument("--model", dest="model_kind", choices=["lenet", "dct-mlp", "dct_mlp"], default="dct-mlp")
    p.add_argument("--train-cache", default=None)
    p.add_argument("--test-cache", default=None)
    p.add_argument("--pixel-cache", default=None, help="DCT 模型做像素域平移增强时使用的像素训练缓存")
    p.add_argument("--out", dest="out_dir", default=None)
    p.add_argument("--preset", choices=sorted(PRESETS), default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--tau", type=float, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--phase1-batches", type=int, default=None)
    p.add_argument("--phase1-lr", type=float, default=None)
    p.add_argument("--hard-sweeps", dest="hard_pass_sweeps", type=int, default=None)
    p.add_argument("--phase3-batches", type=int, default=None)
    p.add_argument("--phase3-lr", type=float, default=None)
    p.add_argument("--momentum", dest="phase3_momentum", type=float, default=None)
    p.add_argument("--no-augment", dest="augment", action="store_const", const=False, default=None)
    p.add_argument("--augment-domain", choices=["pixel", "coefficient"], default=None)
    p.add_argument("--allow-domain-mismatch", action="store_true")
    p.add_argument("--quiet", action="store_true")

    p = sub.add_parser("eval", help="评估检查点")
    p.add_argument("--weights", required=True)
    p.add_argument("--cache", default=None)
    p.add_argument("--model", dest="model_kind", choices=["lenet", "dct-mlp", "dct_mlp"], default=None)
    p.add_argument("--out", dest="out_dir", default=None)

    p = sub.add_parser("bench", help="稠密 vs 可分离 DCT 计时")
    p.add_argument("--n", dest="sizes", type=int, nargs="+", default=[32])
    p.add_argument("--iters", type=int, default=100)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", dest="out_dir", default=None)

    p = sub.add_parser("figures", help="生成图数据")
    p.add_argument("--which", nargs="+", choices=FIGURE_NAMES, default=list(FIGURE_NAMES))
    p.add_argument("--cache", default=None, help="像素域测试缓存")
    p.add_argument("--weights", default=None, help="LeNet 检查点（kernels 图）")
    p.add_argument("--out", dest="out_dir", default=None)

    sub.add_parser("config", help="打印配置状态")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    load_config()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 0 if e.code == 0 else EXIT_CODES["usage"]

    kwargs = vars(args)
    command = kwargs.pop("command")
    if "quiet" in kwargs:
        kwargs["verbose"] = not kwargs.pop("quiet")

    # 未指定 --out 时，输出到本次运行的时间戳文件夹
    if command in ("train", "eval", "bench", "figures") and not kwargs.get("out_dir"):
        dctnet.commands.run_folder = make_run_folder(command)

    result = commands_api[command](**kwargs)
    if not result.get("ok"):
        print(f"❌ {result.get('message', result.get('error'))}", file=sys.stderr)
        return EXIT_CODES.get(result.get("error"), 1)
    return 0


if __name__ == "__main__":
    argv = sys.argv[1:] or list(setting.argv)
    sys.exit(main(argv))
