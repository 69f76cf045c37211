"""基于搜索查询的区域疫情异常检测."""

__version__ = "0.1.0"
