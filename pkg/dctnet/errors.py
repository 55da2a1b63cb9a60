from __future__ import annotations


class DctNetError(Exception):
    """本库所有异常的基类"""


class InvalidArgumentError(DctNetError, ValueError):
    """参数非法：尺寸不匹配、下标越界、配置不满足约束等"""


class FormatError(DctNetError):
    """数据格式错误：IDX / DCTC 缓存 / NNWT 权重文件的魔数、版本或长度不对"""


def check_length(what: str, expected: int, actual: int) -> None:
    """字节流长度不足时抛出带期望/实际长度的 FormatError。"""
    if actual < expected:
        raise FormatError(f"{what} 被截断: 期望至少 {expected} 字节, 实际 {actual} 字节")
