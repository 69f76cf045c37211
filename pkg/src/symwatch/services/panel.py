"""面板服务：CSV 读取、隐私抑制、比例计算与区域距离."""

import logging
import math
from datetime import date, timedelta
from pathlib import Path
from typing import Literal

import numpy as np
import pandas as pd

from symwatch.core.errors import (
    DuplicateCellError,
    InputError,
    RowFormatError,
    UnknownKeywordError,
)
from symwatch.schemas.panel import (
    DEFAULT_REGISTRY,
    Area,
    EpiSeries,
    KeywordRegistry,
    QueryPanel,
)

logger = logging.getLogger(__name__)

# CSV 表头
PANEL_COLUMNS = ["week_start", "area_id", "keyword", "users_querying", "total_users"]
DAILY_SEARCH_COLUMNS = ["date", "area_id", "keyword", "users_querying", "total_users"]
AREAS_COLUMNS = ["area_id", "name", "latitude", "longitude"]
CASES_COLUMNS = ["date", "area_id", "cases"]
MORTALITY_COLUMNS = ["week_start", "area_id", "deaths"]

# 地球平均半径（千米）
EARTH_RADIUS_KM = 6371.0

# 隐私阈值默认值
DEFAULT_MIN_AREA_USERS = 10_000
DEFAULT_MIN_CELL_USERS = 10


# ---- CSV 解析辅助函数 ----


def _read_csv(path: Path | str, columns: list[str]) -> pd.DataFrame:
    """以字符串读取 CSV 并校验表头.

    Raises:
        InputError: 文件不可读或表头不符
    """
    path = Path(path)
    try:
        frame = pd.read_csv(
            path, dtype=str, keep_default_na=False, skip_blank_lines=False, encoding="utf-8"
        )
    except FileNotFoundError:
        raise InputError(f"file not found: {path}") from None
    except pd.errors.EmptyDataError:
        raise RowFormatError(str(path), 1, "file is empty (missing header)") from None
    except (pd.errors.ParserError, UnicodeDecodeError, OSError) as e:
        raise InputError(f"cannot read {path}: {e}") from e

    header = [str(c).strip() for c in frame.columns]
    if header != columns:
        raise RowFormatError(
            str(path), 1, f"expected header {','.join(columns)}, got {','.join(header)}"
        )
    frame.columns = columns
    # 字段不足的行会被 pandas 填成 NaN
    frame = frame.fillna("")
    # 索引为文件行号，空行跳过
    frame.index = pd.RangeIndex(2, len(frame) + 2)
    blank = np.array(
        [all(not v.strip() for v in row) for row in frame.itertuples(index=False, name=None)],
        dtype=bool,
    )
    return frame.loc[~blank]


def _parse_date(text: str, path: Path | str, line: int) -> date:
    try:
        return date.fromisoformat(text.strip())
    except ValueError:
        raise RowFormatError(str(path), line, f"invalid ISO-8601 date {text!r}") from None


def _parse_monday(text: str, path: Path | str, line: int) -> date:
    value = _parse_date(text, path, line)
    if value.weekday() != 0:
        raise RowFormatError(str(path), line, f"week start {value.isoformat()} is not a Monday")
    return value


def _parse_count(text: str, field: str, path: Path | str, line: int) -> int:
    try:
        value = int(text.strip())
    except ValueError:
        raise RowFormatError(str(path), line, f"{field} is not an integer: {text!r}") from None
    if value < 0:
        raise RowFormatError(str(path), line, f"{field} is negative: {value}")
    return value


def _parse_float(text: str, field: str, path: Path | str, line: int) -> float:
    try:
        value = float(text.strip())
    except ValueError:
        raise RowFormatError(str(path), line, f"{field} is not a number: {text!r}") from None
    if not math.isfinite(value):
        raise RowFormatError(str(path), line, f"{field} is not finite: {text!r}")
    return value


def _day_range(first: date, last: date, step: int) -> list[date]:
    return [first + timedelta(days=i) for i in range(0, (last - first).days + 1, step)]


# ---- 面板读取 ----


def _load_search_rows(
    path: Path | str,
    registry: KeywordRegistry,
    resolution: Literal["weekly", "daily"],
) -> QueryPanel:
    columns = PANEL_COLUMNS if resolution == "weekly" else DAILY_SEARCH_COLUMNS
    frame = _read_csv(path, columns)
    parse_period = _parse_monday if resolution == "weekly" else _parse_date

    cells: dict[tuple[date, str, str], int] = {}
    totals: dict[tuple[date, str], int] = {}
    for line, *row in frame.itertuples(name=None):
        period_text, area_id, keyword_text, users_text, total_text = row
        period = parse_period(period_text, path, line)
        area_id = area_id.strip()
        if not area_id:
            raise RowFormatError(str(path), line, "empty area_id")
        try:
            keyword = registry.resolve(keyword_text)
        except UnknownKeywordError:
            raise UnknownKeywordError(
                f"{path}:{line}: unknown keyword {keyword_text!r}"
            ) from None
        users = _parse_count(users_text, "users_querying", path, line)
        total = _parse_count(total_text, "total_users", path, line)
        if users > total:
            raise RowFormatError(
                str(path), line, f"users_querying {users} exceeds total_users {total}"
            )

        key = (period, area_id, keyword)
        if key in cells:
            raise DuplicateCellError(
                f"{path}:{line}: duplicate cell "
                f"({period.isoformat()}, {area_id}, {keyword})"
            )
        previous_total = totals.setdefault((period, area_id), total)
        if previous_total != total:
            raise RowFormatError(
                str(path),
                line,
                f"total_users {total} conflicts with {previous_total} "
                f"for ({period.isoformat()}, {area_id})",
            )
        cells[key] = users

    observed = sorted({p for p, _ in totals})
    if resolution == "daily" and observed:
        periods = _day_range(observed[0], observed[-1], 1)
    else:
        periods = observed
    area_ids = sorted({a for _, a in totals})
    keywords = registry.names

    p_pos = {p: i for i, p in enumerate(periods)}
    a_pos = {a: i for i, a in enumerate(area_ids)}
    k_pos = {k: i for i, k in enumerate(keywords)}
    counts = np.zeros((len(periods), len(area_ids), len(keywords)))
    total_array = np.zeros((len(periods), len(area_ids)))
    present = np.zeros((len(periods), len(area_ids)), dtype=bool)
    for (period, area_id), total in totals.items():
        total_array[p_pos[period], a_pos[area_id]] = total
        present[p_pos[period], a_pos[area_id]] = True
    for (period, area_id, keyword), users in cells.items():
        counts[p_pos[period], a_pos[area_id], k_pos[keyword]] = users

    logger.info(
        "面板读取完成",
        extra={
            "path": str(path),
            "resolution": resolution,
            "periods": len(periods),
            "areas": len(area_ids),
            "cells": len(cells),
        },
    )
    return QueryPanel(
        resolution=resolution,
        periods=tuple(periods),
        area_ids=tuple(area_ids),
        keywords=keywords,
        counts=counts,
        totals=total_array,
        present=present,
    )


def load_query_panel(
    path: Path | str, registry: KeywordRegistry = DEFAULT_REGISTRY
) -> QueryPanel:
    """读取周查询面板 CSV.

    表头为 ``week_start,area_id,keyword,users_querying,total_users``；关键词可以写
    规范名称或同义词。未出现的单元格视为 0.

    Args:
        path: CSV 路径
        registry: 关键词注册表

    Returns:
        周分辨率的 QueryPanel

    Raises:
        RowFormatError: 行格式错误、周起始日不是周一、计数超过总数（带行号）
        DuplicateCellError: 重复的 (week, area, keyword)
        UnknownKeywordError: 关键词不在注册表中
    """
    return _load_search_rows(path, registry, "weekly")


def load_daily_search(
    path: Path | str, registry: KeywordRegistry = DEFAULT_REGISTRY
) -> QueryPanel:
    """读取日查询面板 CSV（表头首列为 ``date``），日期范围内缺失的天视为无数据."""
    return _load_search_rows(path, registry, "daily")


def load_areas(path: Path | str) -> list[Area]:
    """读取区域 CSV，按 area_id 升序返回.

    Raises:
        RowFormatError: 坐标无效或 area_id 重复
    """
    frame = _read_csv(path, AREAS_COLUMNS)
    areas: dict[str, Area] = {}
    for line, area_id, name, lat_text, lon_text in frame.itertuples(name=None):
        area_id = area_id.strip()
        if area_id in areas:
            raise RowFormatError(str(path), line, f"duplicate area_id {area_id}")
        latitude = _parse_float(lat_text, "latitude", path, line)
        longitude = _parse_float(lon_text, "longitude", path, line)
        if not -90.0 <= latitude <= 90.0 or not -180.0 <= longitude <= 180.0:
            raise RowFormatError(str(path), line, "coordinates out of range")
        if not area_id:
            raise RowFormatError(str(path), line, "empty area_id")
        areas[area_id] = Area(
            area_id=area_id, name=name.strip(), latitude=latitude, longitude=longitude
        )
    return [areas[a] for a in sorted(areas)]


def _load_epi(
    path: Path | str,
    columns: list[str],
    kind: Literal["daily_cases", "weekly_deaths"],
) -> EpiSeries:
    frame = _read_csv(path, columns)
    weekly = kind == "weekly_deaths"
    parse = _parse_monday if weekly else _parse_date
    values: dict[tuple[date, str], int] = {}
    for line, date_text, area_id, count_text in frame.itertuples(name=None):
        when = parse(date_text, path, line)
        area_id = area_id.strip()
        if not area_id:
            raise RowFormatError(str(path), line, "empty area_id")
        key = (when, area_id)
        if key in values:
            raise DuplicateCellError(
                f"{path}:{line}: duplicate entry ({when.isoformat()}, {area_id})"
            )
        values[key] = _parse_count(count_text, columns[2], path, line)

    observed = sorted({d for d, _ in values})
    dates = _day_range(observed[0], observed[-1], 7 if weekly else 1) if observed else []
    area_ids = sorted({a for _, a in values})
    d_pos = {d: i for i, d in enumerate(dates)}
    a_pos = {a: i for i, a in enumerate(area_ids)}
    array = np.zeros((len(dates), len(area_ids)))
    for (when, area_id), count in values.items():
        array[d_pos[when], a_pos[area_id]] = count
    return EpiSeries(kind=kind, dates=tuple(dates), area_ids=tuple(area_ids), values=array)


def load_cases(path: Path | str) -> EpiSeries:
    """读取日病例 CSV（``date,area_id,cases``）；范围内缺失的天记为 0."""
    return _load_epi(path, CASES_COLUMNS, "daily_cases")


def load_mortality(path: Path | str) -> EpiSeries:
    """读取周死亡 CSV（``week_start,area_id,deaths``）；范围内缺失的周记为 0."""
    return _load_epi(path, MORTALITY_COLUMNS, "weekly_deaths")


# ---- 隐私抑制与比例 ----


def apply_suppression(
    panel: QueryPanel,
    min_area_users: float = DEFAULT_MIN_AREA_USERS,
    min_cell_users: float = DEFAULT_MIN_CELL_USERS,
) -> QueryPanel:
    """按周应用隐私抑制.

    总用户数少于 ``min_area_users`` 的 (周, 区域) 整体移除；其余单元格中用户数少于
    ``min_cell_users`` 的计数置零（单元格保留）。操作幂等，且不会增加任何计数.

    Args:
        panel: 原始面板
        min_area_users: 区域周用户数下限
        min_cell_users: 单元格用户数下限

    Returns:
        抑制后的面板
    """
    keep = panel.present & (panel.totals >= min_area_users)
    counts = np.where(keep[:, :, None], panel.counts, 0.0)
    zeroed = (counts > 0) & (counts < min_cell_users)
    counts = np.where(zeroed, 0.0, counts)
    totals = np.where(keep, panel.totals, 0.0)

    logger.info(
        "隐私抑制完成",
        extra={
            "removed_area_weeks": int((panel.present & ~keep).sum()),
            "zeroed_cells": int(zeroed.sum()),
            "min_area_users": min_area_users,
            "min_cell_users": min_cell_users,
        },
    )
    return panel.replace_counts(counts, totals, keep)


def fractions(panel: QueryPanel, week: date, area: Area | str) -> np.ndarray:
    """某区域某周所有注册关键词的查询比例 F_wk^i.

    被抑制或缺失的单元格为 0.

    Raises:
        AreaAbsentError: 该区域在该周没有数据
        WeekNotFoundError: 面板中没有该周
    """
    area_id = area.area_id if isinstance(area, Area) else area
    return panel.fraction_vector(week, area_id)


# ---- 距离 ----


def distance_km(a: Area, b: Area) -> float:
    """两区域质心间的大圆（haversine）距离，地球半径 6371 km."""
    lat1, lon1, lat2, lon2 = map(
        math.radians, (a.latitude, a.longitude, b.latitude, b.longitude)
    )
    dlat = lat2 - lat1
    dlon = lon2 - lon1
    h = math.sin(dlat / 2) ** 2 + math.cos(lat1) * math.cos(lat2) * math.sin(dlon / 2) ** 2
    h = min(1.0, h)
    return EARTH_RADIUS_KM * 2 * math.atan2(math.sqrt(h), math.sqrt(1 - h))
