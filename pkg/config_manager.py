import os
from typing import Dict

from dctnet.errors import InvalidArgumentError

# .config 中识别的键及默认值
DEFAULTS = {
    "MNIST_DIR": "./MNIST",
    "CACHE_DIR": "./result/cache",
    "RESULTS_DIR": "./result/runs",
    "NOTES_DIR": "./result/notes",
    "DEFAULT_TAU": "0.02",
    "DEFAULT_SEED": "1",
    "DEFAULT_PRESET": "desk",
    "MNIST_MIRROR_URL": "https://ossci-datasets.s3.amazonaws.com/mnist/",
    "PROXY_URL": "",
}


class ConfigManager:
    """配置管理器：读取 KEY=VALUE 格式的 .config，缺失的键使用 DEFAULTS"""

    def __init__(self, config_file: str = ".config"):
        self.config_file = config_file
        self.config: Dict[str, str] = {}
        self.load_config()

    def load_config(self) -> bool:
        """加载配置文件；文件不存在时返回 False 并全部使用默认值"""
        if not os.path.exists(self.config_file):
            return False
        try:
            with open(self.config_file, "r", encoding="utf-8") as f:
                lines = [line.strip() for line in f]
        except OSError as e:
            print(f"加载配置文件失败: {e}")
            return False
        for line in lines:
            # 跳过注释、空行和没有等号的行
            if not line or line.startswith("#") or "=" not in line:
                continue
            key, value = line.split("=", 1)
            self.config[key.strip()] = value.strip()
        return True

    def get(self, key: str, default: str = "") -> str:
        return self.config.get(key, default)

    def set(self, key: str, value: str) -> None:
        self.config[key] = value

    def _setting(self, key: str) -> str:
        return self.get(key) or DEFAULTS[key]

    def _number(self, key: str, kind):
        raw = self._setting(key)
        try:
            return kind(raw)
        except ValueError:
            raise InvalidArgumentError(f".config 中 {key}={raw!r} 不是合法的{'整数' if kind is int else '数字'}") from None

    def get_mnist_dir(self) -> str:
        """MNIST IDX 文件目录：.config 优先，其次环境变量 MNIST_DIR"""
        return self.get("MNIST_DIR") or os.getenv("MNIST_DIR") or DEFAULTS["MNIST_DIR"]

    def get_cache_dir(self) -> str:
        return self._setting("CACHE_DIR")

    def get_results_dir(self) -> str:
        """训练/评估/图像输出的根目录"""
        return self._setting("RESULTS_DIR")

    def get_notes_dir(self) -> str:
        return self._setting("NOTES_DIR")

    def get_default_tau(self) -> float:
        return self._number("DEFAULT_TAU", float)

    def get_default_seed(self) -> int:
        return self._number("DEFAULT_SEED", int)

    def get_default_preset(self) -> str:
        return self._setting("DEFAULT_PRESET")

    def get_mnist_mirror_url(self) -> str:
        return self._setting("MNIST_MIRROR_URL")

    def get_proxy_url(self) -> str:
        """获取网络代理地址"""
        return self.get("PROXY_URL")

    def setup_environment(self) -> None:
        """把 .config 中非空的已知键写入环境变量"""
        for key in DEFAULTS:
            if self.get(key):
                os.environ[key] = self.get(key)

    def validate_config(self) -> Dict[str, bool]:
        return {
            "config_file": os.path.exists(self.config_file),
            "mnist_dir": os.path.isdir(self.get_mnist_dir()),
            "cache_dir": os.path.isdir(self.get_cache_dir()),
            "proxy_url": bool(self.get_proxy_url()),
            "known_keys_only": not [k for k in self.config if k not in DEFAULTS],
        }

    def print_config_status(self) -> None:
        print("=== 配置状态 ===")
        validation = self.validate_config()
        print(f"配置文件 {self.config_file}: {'✅ 已找到' if validation['config_file'] else '❌ 未找到（使用默认值）'}")
        print(f"MNIST 目录 {self.get_mnist_dir()}: {'✅ 存在' if validation['mnist_dir'] else '❌ 不存在'}")
        print(f"缓存目录 {self.get_cache_dir()}: {'✅ 存在' if validation['cache_dir'] else '❌ 尚未生成'}")
        print(f"下载代理: {'✅ 已配置' if validation['proxy_url'] else '❌ 未配置'}")
        if not validation["known_keys_only"]:
            print(f"⚠️ 未识别的键: {', '.join(k for k in self.config if k not in DEFAULTS)}")

        print(f"\n默认阈值: {self.get_default_tau()}")
        print(f"默认种子: {self.get_default_seed()}")
        print(f"默认预设: {self.get_default_preset()}")
        print(f"输出目录: {self.get_results_dir()}")
        print(f"报告目录: {self.get_notes_dir()}")


# 全局配置管理器实例
config_manager = ConfigManager()


def load_config():
    """加载配置到环境变量"""
    config_manager.setup_environment()
