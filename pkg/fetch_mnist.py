"""下载 MNIST 的四个 IDX 文件（辅助脚本，库本身从不访问网络）。

运行：
  python fetch_mnist.py [目标目录]
"""

import gzip
import os
import shutil
import sys
from typing import Dict, List, Optional

import requests
from tqdm import tqdm

from config_manager import config_manager, load_config

MNIST_ARCHIVES = [
    "train-images-idx3-ubyte.gz",
    "train-labels-idx1-ubyte.gz",
    "t10k-images-idx3-ubyte.gz",
    "t10k-labels-idx1-ubyte.gz",
]


def _target_name(archive: str) -> str:
    # 解压后改成 dataset.MNIST_FILES 的文件名，例如 train-images.idx3-ubyte
    return archive[:-3].replace("-idx", ".idx")


def download_mnist(download_dir: str, mirror: Optional[str] = None,
                   archives: List[str] = MNIST_ARCHIVES) -> Dict[str, object]:
    """批量下载并解压 MNIST 压缩包到指定目录。

    返回: {"all_success": 是否全部成功, "failed": {文件名: 失败原因}, "files": [解压后的路径]}
    """
    os.makedirs(download_dir, exist_ok=True)
    mirror = (mirror or config_manager.get_mnist_mirror_url()).rstrip("/") + "/"
    proxy = config_manager.get_proxy_url() or os.getenv("HTTPS_PROXY") or os.getenv("HTTP_PROXY")
    proxies = {"http": proxy, "https": proxy} if proxy else {}

    failed = {}
    files = []
    for archive in archives:
        target = os.path.join(download_dir, _target_name(archive))
        if os.path.exists(target):
            files.append(target)
            continue

        archive_path = os.path.join(download_dir, archive)
        try:
            with requests.get(mirror + archive, stream=True, timeout=30, proxies=proxies) as r:
                r.raise_for_status()
                with open(archive_path, "wb") as f:
                    for chunk in tqdm(r.iter_content(chunk_size=8192), desc=archive, unit='KB'):
                        if chunk:
                            f.write(chunk)
            with gzip.open(archive_path, "rb") as src, open(target, "wb") as dst:
                shutil.copyfileobj(src, dst)
            os.remove(archive_path)
            files.append(target)
        except Exception as e:
            failed[archive] = f"download failed: {e}"

    return {"all_success": not failed, "failed": failed, "files": files}


if __name__ == "__main__":
    load_config()
    folder = sys.argv[1] if len(sys.argv) > 1 else config_manager.get_mnist_dir()
    result = download_mnist(folder)
    for name, reason in result["failed"].items():
        print(f"❌ {name}: {reason}")
    print(f"{'✅ 全部下载完成' if result['all_success'] else '部分文件下载失败'}: {folder}")
    sys.exit(0 if result["all_success"] else 1)
