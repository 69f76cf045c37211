"""通用字段类型：只读 numpy 数组与周起始日期."""

from datetime import date
from typing import Annotated, Any

import numpy as np
from pydantic import AfterValidator, PlainSerializer, PlainValidator, WithJsonSchema


def _to_float_array(value: Any) -> np.ndarray:
    """转换为只读 float64 数组（总是复制）."""
    array = np.array(value, dtype=float, copy=True)
    array.setflags(write=False)
    return array


def _array_to_list(array: np.ndarray) -> list[Any]:
    return array.tolist()


FloatArray = Annotated[
    np.ndarray,
    PlainValidator(_to_float_array),
    PlainSerializer(_array_to_list, return_type=list, when_used="json"),
    WithJsonSchema({"type": "array", "items": {}}),
]


def frozen_array(value: Any, dtype: Any = float) -> np.ndarray:
    """复制为指定 dtype 的只读数组."""
    array = np.array(value, dtype=dtype, copy=True)
    array.setflags(write=False)
    return array


def ensure_monday(value: date) -> date:
    """校验日期为周一（分析周以周一开始）."""
    if value.weekday() != 0:
        raise ValueError(f"week start {value.isoformat()} is not a Monday")
    return value


WeekStart = Annotated[date, AfterValidator(ensure_monday)]
