"""日志配置模块."""

import logging
import sys
from typing import Any

# 原始用户计数字段：低于隐私阈值的计数不应出现在日志中
COUNT_KEYS = {
    "users_querying",
    "total_users",
    "users",
}


class CountRedactionFilter(logging.Filter):
    """过滤日志参数中原始用户计数的过滤器."""

    def filter(self, record: logging.LogRecord) -> bool:
        """清理日志记录中的原始计数."""
        if isinstance(record.msg, dict):
            record.msg = self._sanitize_dict(record.msg.copy())
        elif isinstance(record.args, tuple):
            record.args = tuple(
                self._sanitize_dict(arg.copy()) if isinstance(arg, dict) else arg
                for arg in record.args
            )
        elif isinstance(record.args, dict):
            record.args = self._sanitize_dict(dict(record.args))

        for key in COUNT_KEYS:
            if key in record.__dict__:
                record.__dict__[key] = "***REDACTED***"
        return True

    def _sanitize_dict(self, data: dict[str, Any]) -> dict[str, Any]:
        """递归替换字典中的计数字段."""
        sanitized: dict[str, Any] = {}
        for key, value in data.items():
            if str(key).lower() in COUNT_KEYS:
                sanitized[key] = "***REDACTED***"
            elif isinstance(value, dict):
                sanitized[key] = self._sanitize_dict(value)
            else:
                sanitized[key] = value
        return sanitized


class _StderrHandler(logging.StreamHandler):
    """始终写入当前 sys.stderr 的处理器（CliRunner 会替换 stderr）."""

    @property  # type: ignore[override]
    def stream(self) -> Any:
        return sys.stderr

    @stream.setter
    def stream(self, value: Any) -> None:
        pass


def setup_logging(level: str = "INFO") -> None:
    """配置日志系统.

    stdout 留给结果路径，日志统一写到 stderr.

    Args:
        level: 日志级别名称
    """
    root_logger = logging.getLogger()
    root_logger.setLevel(getattr(logging, level))

    # 移除本模块之前安装的处理器，避免重复输出
    for handler in list(root_logger.handlers):
        if isinstance(handler, _StderrHandler):
            root_logger.removeHandler(handler)

    console_handler = _StderrHandler()
    console_handler.setLevel(getattr(logging, level))

    formatter = logging.Formatter(
        fmt="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        datefmt="%Y-%m-%d %H:%M:%S",
    )
    console_handler.setFormatter(formatter)
    console_handler.addFilter(CountRedactionFilter())

    root_logger.addHandler(console_handler)

    # pandas 导入 numexpr 时会打印线程信息
    logging.getLogger("numexpr").setLevel(logging.WARNING)
