"""面板数据模型：关键词、区域、查询面板与流行病序列."""

import re
from datetime import date, timedelta
from typing import Any, Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, PrivateAttr, field_validator, model_validator

from symwatch.core.errors import (
    AreaAbsentError,
    InputError,
    UnknownKeywordError,
    WeekNotFoundError,
)
from symwatch.schemas.common import frozen_array


def normalize_keyword(name: str) -> str:
    """规范化关键词写法：小写、下划线视同空格、合并空白."""
    return re.sub(r"\s+", " ", name.replace("_", " ")).strip().lower()


class Keyword(BaseModel):
    """症状关键词及其同义表达."""

    canonical_name: str = Field(..., min_length=1, description="规范名称")
    synonyms: tuple[str, ...] = Field(default=(), description="同义或相关表达")

    model_config = ConfigDict(frozen=True)


# 25 个症状关键词及其同义表达
_DEFAULT_KEYWORDS: tuple[tuple[str, tuple[str, ...]], ...] = (
    ("altered_consciousness", ("altered consciousness",)),
    ("anorexia", ("appetite loss", "loss of appetite", "lost appetite")),
    ("anosmia", ("loss of smell", "can't smell")),
    ("arthralgia", ("joint ache", "joint aching", "joints ache", "joints aching")),
    ("chest_pain", ("chest pain",)),
    ("chills", ("chills",)),
    ("cough", ("cough",)),
    ("diarrhea", ("diarrhea", "diarrhoea")),
    ("dry_cough", ("dry cough",)),
    ("dyspnea", ("breathing difficult", "short breath", "shortness of breath")),
    ("epistaxis", ("nose bleed", "nose bleeding")),
    ("fatigue", ("fatigue",)),
    ("head_ache", ("head ache", "headache")),
    ("myalgia", ("muscle ache", "muscular pain")),
    ("nasal_congestion", ("blocked nose", "nasal congestion")),
    ("nausea", ("nausea", "nauseous")),
    ("pyrexia", ("fever", "high temperature")),
    ("pneumonia", ("pneumonia", "respiratory infection", "respiratory symptoms")),
    ("rash", ("rash",)),
    ("rhinorrhea", ("runny nose",)),
    ("seizure", ("seizure",)),
    ("sore_throat", ("sore throat", "throat pain")),
    ("sternutation", ("sneeze", "sneezing")),
    ("tiredness", ("tiredness",)),
    ("vomiting", ("vomit", "vomiting")),
)


class KeywordRegistry(BaseModel):
    """有序关键词注册表；顺序决定所有关键词向量的维度顺序."""

    keywords: tuple[Keyword, ...] = Field(..., min_length=1, description="关键词列表")

    model_config = ConfigDict(frozen=True)

    _lookup: dict[str, str] = PrivateAttr(default_factory=dict)

    @field_validator("keywords")
    @classmethod
    def validate_unique(cls, v: tuple[Keyword, ...]) -> tuple[Keyword, ...]:
        """校验规范名称唯一."""
        names = [k.canonical_name for k in v]
        if len(set(names)) != len(names):
            raise ValueError("canonical keyword names must be unique")
        return v

    def model_post_init(self, __context: Any) -> None:
        lookup: dict[str, str] = {}
        for keyword in self.keywords:
            for alias in (keyword.canonical_name, *keyword.synonyms):
                lookup.setdefault(normalize_keyword(alias), keyword.canonical_name)
        # 规范名称优先于其他关键词的同义词
        for keyword in self.keywords:
            lookup[normalize_keyword(keyword.canonical_name)] = keyword.canonical_name
        self._lookup = lookup

    @property
    def names(self) -> tuple[str, ...]:
        """规范名称（按注册顺序）."""
        return tuple(k.canonical_name for k in self.keywords)

    def __len__(self) -> int:
        return len(self.keywords)

    def resolve(self, name: str) -> str:
        """将规范名称或同义词解析为规范名称.

        Raises:
            UnknownKeywordError: 如果名称不在注册表中
        """
        try:
            return self._lookup[normalize_keyword(name)]
        except KeyError:
            raise UnknownKeywordError(f"unknown keyword: {name!r}") from None

    def index(self, name: str) -> int:
        """关键词在向量中的位置."""
        return self.names.index(self.resolve(name))

    @classmethod
    def default(cls) -> "KeywordRegistry":
        """默认注册表：25 个症状关键词."""
        return cls(
            keywords=tuple(
                Keyword(canonical_name=name, synonyms=synonyms)
                for name, synonyms in _DEFAULT_KEYWORDS
            )
        )


DEFAULT_REGISTRY = KeywordRegistry.default()


class Area(BaseModel):
    """地理区域（以质心坐标表示）."""

    area_id: str = Field(..., min_length=1, description="区域唯一标识")
    name: str = Field(default="", description="区域名称")
    latitude: float = Field(..., ge=-90.0, le=90.0, description="纬度（度）")
    longitude: float = Field(..., ge=-180.0, le=180.0, description="经度（度）")

    model_config = ConfigDict(frozen=True)


def _frozen_arrays_equal(a: BaseModel, b: BaseModel) -> bool:
    """逐字段比较，numpy 数组用 array_equal."""
    if type(a) is not type(b):
        return False
    for field_name in type(a).model_fields:
        left = getattr(a, field_name)
        right = getattr(b, field_name)
        if isinstance(left, np.ndarray) or isinstance(right, np.ndarray):
            if not np.array_equal(left, right):
                return False
        elif left != right:
            return False
    return True


class QueryPanel(BaseModel):
    """按 (周期, 区域, 关键词) 组织的查询用户计数面板.

    ``counts[p, a, k]`` 为查询关键词 k 的用户数，``totals[p, a]`` 为查询任意主题的
    用户数。``present[p, a]`` 为 False 表示该区域在该周期没有数据（被抑制或缺失），
    此时计数与总数均为 0。构造后不可修改.
    """

    resolution: Literal["weekly", "daily"] = Field(default="weekly", description="时间分辨率")
    periods: tuple[date, ...] = Field(..., description="周期起始日期（升序）")
    area_ids: tuple[str, ...] = Field(..., description="区域标识（升序）")
    keywords: tuple[str, ...] = Field(..., min_length=1, description="关键词规范名称")
    counts: np.ndarray = Field(..., description="查询用户数 [P, A, K]")
    totals: np.ndarray = Field(..., description="总用户数 [P, A]")
    present: np.ndarray = Field(..., description="是否有数据 [P, A]")

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    @field_validator("counts", "totals", mode="before")
    @classmethod
    def freeze_numeric(cls, v: Any) -> np.ndarray:
        return frozen_array(v, dtype=float)

    @field_validator("present", mode="before")
    @classmethod
    def freeze_mask(cls, v: Any) -> np.ndarray:
        return frozen_array(v, dtype=bool)

    @model_validator(mode="after")
    def validate_panel(self) -> "QueryPanel":
        """校验形状与计数约束."""
        n_p, n_a, n_k = len(self.periods), len(self.area_ids), len(self.keywords)
        if self.counts.shape != (n_p, n_a, n_k):
            raise ValueError(f"counts shape {self.counts.shape} != {(n_p, n_a, n_k)}")
        if self.totals.shape != (n_p, n_a) or self.present.shape != (n_p, n_a):
            raise ValueError("totals/present shape does not match periods × areas")
        if list(self.periods) != sorted(set(self.periods)):
            raise ValueError("periods must be strictly increasing")
        if list(self.area_ids) != sorted(set(self.area_ids)):
            raise ValueError("area_ids must be sorted and unique")
        if self.resolution == "weekly":
            bad = [p for p in self.periods if p.weekday() != 0]
            if bad:
                raise ValueError(f"week start {bad[0].isoformat()} is not a Monday")
        if (self.counts < 0).any() or (self.totals < 0).any():
            raise ValueError("counts must be non-negative")
        if (self.counts > self.totals[:, :, None]).any():
            raise ValueError("users_querying exceeds total_users")
        if (self.counts[~self.present] != 0).any() or (self.totals[~self.present] != 0).any():
            raise ValueError("absent (period, area) entries must carry zero counts")
        return self

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, QueryPanel):
            return NotImplemented
        return _frozen_arrays_equal(self, other)

    __hash__ = None  # type: ignore[assignment]

    # ---- 索引 ----

    @property
    def weeks(self) -> tuple[date, ...]:
        """周期起始日期（周面板中即各周的周一）."""
        return self.periods

    @property
    def is_empty(self) -> bool:
        return not bool(self.present.any())

    def has_period(self, period: date) -> bool:
        return period in self._period_lookup()

    def period_index(self, period: date) -> int:
        """周期在面板中的位置.

        Raises:
            WeekNotFoundError: 如果面板中没有该周期
        """
        try:
            return self._period_lookup()[period]
        except KeyError:
            raise WeekNotFoundError(f"period {period.isoformat()} not in panel") from None

    def area_index(self, area_id: str) -> int:
        try:
            return self._area_lookup()[area_id]
        except KeyError:
            raise AreaAbsentError(f"area {area_id} not in panel") from None

    def keyword_index(self, keyword: str) -> int:
        try:
            return self.keywords.index(keyword)
        except ValueError:
            raise UnknownKeywordError(f"keyword {keyword!r} not in panel") from None

    def is_present(self, period: date, area_id: str) -> bool:
        if not self.has_period(period) or area_id not in self._area_lookup():
            return False
        return bool(self.present[self.period_index(period), self.area_index(area_id)])

    def areas_present(self, period: date) -> list[str]:
        """该周期有数据的区域（升序）."""
        mask = self.present[self.period_index(period)]
        return [a for a, keep in zip(self.area_ids, mask) if keep]

    # ---- 取值 ----

    def count(self, period: date, area_id: str, keyword: str) -> float:
        p, a = self.period_index(period), self.area_index(area_id)
        return float(self.counts[p, a, self.keyword_index(keyword)])

    def fraction_vector(self, period: date, area_id: str) -> np.ndarray:
        """某区域某周期的关键词比例向量.

        Raises:
            AreaAbsentError: 如果该区域在该周期没有数据
        """
        p, a = self.period_index(period), self.area_index(area_id)
        if not self.present[p, a]:
            raise AreaAbsentError(
                f"area {area_id} has no data for period {period.isoformat()}"
            )
        return self.counts[p, a] / self.totals[p, a]

    def fraction_matrix(self, period: date) -> np.ndarray:
        """某周期所有区域的比例矩阵 [A, K]；无数据的区域为 NaN 行."""
        p = self.period_index(period)
        out = np.full((len(self.area_ids), len(self.keywords)), np.nan)
        mask = self.present[p]
        out[mask] = self.counts[p, mask] / self.totals[p, mask][:, None]
        return out

    # ---- 变换 ----

    def replace_counts(
        self, counts: np.ndarray, totals: np.ndarray, present: np.ndarray
    ) -> "QueryPanel":
        """以新的计数数组构造面板（其余字段不变）."""
        return QueryPanel(
            resolution=self.resolution,
            periods=self.periods,
            area_ids=self.area_ids,
            keywords=self.keywords,
            counts=counts,
            totals=totals,
            present=present,
        )

    def rescaled(self, factor: float) -> "QueryPanel":
        """所有比例乘以常数 factor 的面板（计数按比例缩放，总数不变）.

        Raises:
            InputError: factor 非正，或缩放后计数超过总数
        """
        if factor <= 0:
            raise InputError(f"scale factor must be positive, got {factor}")
        scaled = self.counts * factor
        if (scaled > self.totals[:, :, None]).any():
            raise InputError(f"scaling by {factor} pushes a fraction above 1")
        return self.replace_counts(scaled, self.totals, self.present)

    def expanded_to_daily(self) -> "QueryPanel":
        """周面板展开为日面板：每天取所在周的计数."""
        if self.resolution == "daily":
            return self
        days = [week + timedelta(days=offset) for week in self.periods for offset in range(7)]
        return QueryPanel(
            resolution="daily",
            periods=tuple(days),
            area_ids=self.area_ids,
            keywords=self.keywords,
            counts=np.repeat(self.counts, 7, axis=0),
            totals=np.repeat(self.totals, 7, axis=0),
            present=np.repeat(self.present, 7, axis=0),
        )

    def _period_lookup(self) -> dict[date, int]:
        return {p: i for i, p in enumerate(self.periods)}

    def _area_lookup(self) -> dict[str, int]:
        return {a: i for i, a in enumerate(self.area_ids)}


class EpiSeries(BaseModel):
    """区域流行病计数序列.

    ``values[t, a]`` 为从 ``dates[t]`` 开始的一天（``daily_cases``）或七天内的计数。
    ``weekly_cases`` 既可以是按周一对齐的周汇总，也可以是逐日滑动的 7 天窗口.
    """

    kind: Literal["daily_cases", "weekly_cases", "weekly_deaths"] = Field(
        ..., description="序列类型"
    )
    dates: tuple[date, ...] = Field(..., description="起始日期（严格递增）")
    area_ids: tuple[str, ...] = Field(..., description="区域标识（升序）")
    values: np.ndarray = Field(..., description="计数 [T, A]")

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    @field_validator("values", mode="before")
    @classmethod
    def freeze_values(cls, v: Any) -> np.ndarray:
        return frozen_array(v, dtype=float)

    @model_validator(mode="after")
    def validate_series(self) -> "EpiSeries":
        if self.values.shape != (len(self.dates), len(self.area_ids)):
            raise ValueError("values shape does not match dates × areas")
        if any(b <= a for a, b in zip(self.dates, self.dates[1:])):
            raise ValueError("dates must be strictly increasing")
        if list(self.area_ids) != sorted(set(self.area_ids)):
            raise ValueError("area_ids must be sorted and unique")
        if (self.values < 0).any():
            raise ValueError("counts must be non-negative")
        return self

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, EpiSeries):
            return NotImplemented
        return _frozen_arrays_equal(self, other)

    __hash__ = None  # type: ignore[assignment]

    def date_index(self) -> dict[date, int]:
        return {d: i for i, d in enumerate(self.dates)}

    def series(self, area_id: str) -> np.ndarray:
        """某区域的计数序列.

        Raises:
            AreaAbsentError: 如果序列中没有该区域
        """
        try:
            column = self.area_ids.index(area_id)
        except ValueError:
            raise AreaAbsentError(f"area {area_id} not in {self.kind} series") from None
        return self.values[:, column]

    def to_weekly(self) -> "EpiSeries":
        """按周一对齐、只保留完整 7 天的周汇总."""
        if self.kind != "daily_cases":
            return self
        index = self.date_index()
        weeks: list[date] = []
        sums: list[np.ndarray] = []
        for i, day in enumerate(self.dates):
            if day.weekday() != 0:
                continue
            window = [day + timedelta(days=k) for k in range(7)]
            if all(d in index for d in window):
                weeks.append(day)
                sums.append(self.values[i : i + 7].sum(axis=0))
        values = np.vstack(sums) if sums else np.zeros((0, len(self.area_ids)))
        return EpiSeries(
            kind="weekly_cases", dates=tuple(weeks), area_ids=self.area_ids, values=values
        )

    def rolling_weekly(self) -> "EpiSeries":
        """逐日滑动的 7 天汇总，便于以天为单位设置滞后."""
        if self.kind != "daily_cases":
            return self
        n = len(self.dates)
        if n and (self.dates[-1] - self.dates[0]).days != n - 1:
            raise InputError("daily series must cover consecutive days")
        if n < 7:
            values = np.zeros((0, len(self.area_ids)))
            return EpiSeries(kind="weekly_cases", dates=(), area_ids=self.area_ids, values=values)
        cumulative = np.vstack([np.zeros(len(self.area_ids)), np.cumsum(self.values, axis=0)])
        sums = cumulative[7:] - cumulative[:-7]
        return EpiSeries(
            kind="weekly_cases",
            dates=self.dates[: n - 6],
            area_ids=self.area_ids,
            values=np.clip(np.round(sums, 9), 0.0, None),
        )
