"""运行指纹：由配置与输入文件内容生成确定性的运行目录名."""

import json
from hashlib import sha256
from pathlib import Path
from typing import Any, Iterable

# 运行目录名中保留的十六进制位数
FINGERPRINT_LENGTH = 12

# 文件分块读取大小
_CHUNK_SIZE = 1 << 16


def canonical_json(payload: Any) -> str:
    """生成规范化 JSON 字符串（键排序、无多余空白）.

    Args:
        payload: 可 JSON 序列化的对象

    Returns:
        规范化后的 JSON 字符串
    """
    return json.dumps(payload, sort_keys=True, separators=(",", ":"), default=str)


def file_digest(path: Path) -> str:
    """计算文件内容的 SHA-256 摘要.

    Args:
        path: 文件路径

    Returns:
        十六进制摘要
    """
    hasher = sha256()
    with open(path, "rb") as f:
        while chunk := f.read(_CHUNK_SIZE):
            hasher.update(chunk)
    return hasher.hexdigest()


def compute_fingerprint(payload: Any, files: Iterable[Path | None] = ()) -> str:
    """由配置载荷与输入文件计算运行指纹.

    文件按给定顺序参与计算；``None`` 表示未提供的可选输入.

    Args:
        payload: 配置载荷（通常是去掉输出目录后的配置字典）
        files: 输入文件路径

    Returns:
        完整的十六进制指纹
    """
    hasher = sha256()
    hasher.update(canonical_json(payload).encode("utf-8"))
    for path in files:
        marker = "-" if path is None else file_digest(Path(path))
        hasher.update(b"\x00")
        hasher.update(marker.encode("ascii"))
    return hasher.hexdigest()


def run_directory_name(command: str, fingerprint: str) -> str:
    """生成运行目录名，如 ``detect-3fa2b19c0d4e``."""
    return f"{command}-{fingerprint[:FINGERPRINT_LENGTH]}"
