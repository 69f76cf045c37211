"""区域异常度量：实际比例减预测比例、按关键词标准化、组合信号与百分位告警."""

import logging
from datetime import date, timedelta
from typing import Mapping

import numpy as np

from symwatch.core.errors import (
    EmptyReferencePoolError,
    MissingControlError,
    NoEligibleCandidatesError,
    UnknownKeywordError,
    WeekMismatchError,
)
from symwatch.schemas.common import frozen_array
from symwatch.schemas.detection import (
    Alert,
    AlertReport,
    ControlModel,
    DetectionParams,
    DetectionRun,
    OutlierFrame,
    RunCounters,
)
from symwatch.schemas.panel import Area, EpiSeries, QueryPanel
from symwatch.services.matching import fit_all_models, predict

logger = logging.getLogger(__name__)

DEFAULT_COMPOSITE = ("pyrexia", "cough")
DEFAULT_PERCENTILE = 95.0

# 排除原因
REASON_TARGET_ABSENT = "target_absent"
REASON_CONTROL_ABSENT = "control_absent"

ONE_WEEK = timedelta(days=7)


def outlier_measure(
    panel: QueryPanel, models: Mapping[str, ControlModel], week_next: date
) -> OutlierFrame:
    """计算预测周的原始异常度量（实际比例减预测比例）.

    目标区域在预测周没有数据，或任一对照区域缺失时，该区域被排除并记录原因.

    Args:
        panel: 查询面板
        models: 在第 w 周拟合的各区域模型
        week_next: 预测周 w+1

    Returns:
        只含原始值的异常度量帧

    Raises:
        WeekMismatchError: 模型拟合周不是 week_next 的前一周
        WeekNotFoundError: 面板中没有 week_next
    """
    panel.period_index(week_next)
    area_ids: list[str] = []
    rows: list[np.ndarray] = []
    excluded: dict[str, str] = {}

    for target in sorted(models):
        model = models[target]
        if model.week_fitted + ONE_WEEK != week_next:
            raise WeekMismatchError(
                f"model for {target} was fitted on {model.week_fitted.isoformat()}, "
                f"not the week before {week_next.isoformat()}"
            )
        if not panel.is_present(week_next, target):
            excluded[target] = REASON_TARGET_ABSENT
            continue
        try:
            predicted = predict(model, panel, week_next)
        except MissingControlError as e:
            excluded[target] = f"{REASON_CONTROL_ABSENT}:{e.control}"
            continue
        area_ids.append(target)
        rows.append(panel.fraction_vector(week_next, target) - predicted)

    if excluded:
        logger.warning(
            "部分已建模区域在预测周无法预测",
            extra={"week": week_next.isoformat(), "coverage_lost": len(excluded)},
        )

    raw = np.vstack(rows) if rows else np.zeros((0, len(panel.keywords)))
    return OutlierFrame(
        week=week_next,
        keywords=list(panel.keywords),
        area_ids=area_ids,
        raw=raw,
        excluded=excluded,
    )


def standardize(frame: OutlierFrame) -> OutlierFrame:
    """按关键词跨区域标准化为零均值、单位方差（总体标准差）.

    方差为零的关键词（包括只有一个区域时）标准化为全零并记录.
    """
    raw = frame.raw
    if raw.shape[0] == 0:
        return frame.model_copy(
            update={"standardized": frozen_array(raw), "zero_variance_keywords": []}
        )

    mean = raw.mean(axis=0)
    std = raw.std(axis=0)
    constant = (np.ptp(raw, axis=0) == 0) | (std == 0)
    safe_std = np.where(constant, 1.0, std)
    standardized = np.where(constant, 0.0, (raw - mean) / safe_std)
    zero_variance = [k for k, flag in zip(frame.keywords, constant) if flag]
    if zero_variance:
        logger.debug(
            "零方差关键词标准化为 0",
            extra={"week": frame.week.isoformat(), "keywords": zero_variance},
        )
    return frame.model_copy(
        update={
            "standardized": frozen_array(standardized),
            "zero_variance_keywords": zero_variance,
        }
    )


def composite_signal(
    frame: OutlierFrame, keywords: tuple[str, str] = DEFAULT_COMPOSITE
) -> OutlierFrame:
    """两个关键词标准化值之积.

    两个因子均为负时乘积为正，此类区域在 ``both_negative`` 中标记。因子非有限的区域
    不计算组合信号并记录在 ``composite_omitted``.

    Raises:
        ValueError: 帧尚未标准化
        UnknownKeywordError: 关键词不在帧中
    """
    if frame.standardized is None:
        raise ValueError("frame has not been standardized")
    positions = []
    for keyword in keywords:
        if keyword not in frame.keywords:
            raise UnknownKeywordError(f"composite keyword {keyword!r} not in frame")
        positions.append(frame.keywords.index(keyword))
    first, second = positions

    composite: dict[str, float] = {}
    both_negative: dict[str, bool] = {}
    omitted: list[str] = []
    for i, area_id in enumerate(frame.area_ids):
        a = float(frame.standardized[i, first])
        b = float(frame.standardized[i, second])
        if not (np.isfinite(a) and np.isfinite(b)):
            omitted.append(area_id)
            continue
        composite[area_id] = a * b
        both_negative[area_id] = a < 0 and b < 0

    return frame.model_copy(
        update={
            "composite_keywords": (keywords[0], keywords[1]),
            "composite": composite,
            "both_negative": both_negative,
            "composite_omitted": omitted,
        }
    )


def alert_threshold(frame: OutlierFrame, percentile: float = DEFAULT_PERCENTILE) -> AlertReport:
    """以其余关键词标准化值的百分位为阈值，生成组合信号告警.

    参照值池为当周所有纳入区域上、组合信号两个关键词以外的所有关键词的标准化值；
    百分位使用线性插值。告警要求组合信号严格大于阈值.

    Raises:
        ValueError: 帧尚未计算组合信号
        EmptyReferencePoolError: 参照值池为空
    """
    if frame.standardized is None or frame.composite_keywords is None:
        raise ValueError("frame needs standardized values and a composite signal")
    reference = [
        k for k, keyword in enumerate(frame.keywords) if keyword not in frame.composite_keywords
    ]
    pool = frame.standardized[:, reference].ravel()
    pool = pool[np.isfinite(pool)]
    if pool.size == 0:
        raise EmptyReferencePoolError(
            f"empty reference pool for week {frame.week.isoformat()}: "
            f"{len(frame.area_ids)} areas, {len(reference)} reference keywords"
        )
    threshold = float(np.percentile(pool, percentile, method="linear"))

    alerts = [
        Alert(
            area_id=area_id,
            composite=value,
            threshold=threshold,
            both_negative=frame.both_negative.get(area_id, False),
        )
        for area_id, value in frame.composite.items()
        if value > threshold
    ]
    alerts.sort(key=lambda a: (-a.composite, a.area_id))
    return AlertReport(
        week=frame.week,
        threshold=threshold,
        percentile=percentile,
        alerts=alerts,
        n_areas_covered=len(frame.area_ids),
    )


def _count_case_rises(
    cases: EpiSeries, week_fitted: date, week_next: date, ratio: float
) -> int | None:
    """预测周病例数达到上一周 ratio 倍的区域数；病例序列不含这两周时返回 None."""
    weekly = cases if cases.kind != "daily_cases" else cases.to_weekly()
    index = weekly.date_index()
    if week_fitted not in index or week_next not in index:
        logger.warning(
            "病例序列不包含该周对，跳过病例上升计数",
            extra={"week": week_next.isoformat()},
        )
        return None
    before = weekly.values[index[week_fitted]]
    after = weekly.values[index[week_next]]
    return int(np.sum((before > 0) & (after >= ratio * before)))


def _keyword_coverage(panel: QueryPanel, week: date, keywords: list[str]) -> dict[str, int]:
    p = panel.period_index(week)
    mask = panel.present[p]
    coverage = {}
    for keyword in keywords:
        if keyword in panel.keywords:
            column = panel.counts[p, mask, panel.keyword_index(keyword)]
            coverage[keyword] = int(np.count_nonzero(column))
    return coverage


def weekly_run(
    panel: QueryPanel,
    areas: list[Area] | Mapping[str, Area],
    week_pair: tuple[date, date],
    cases: EpiSeries | None = None,
    params: DetectionParams | None = None,
) -> DetectionRun:
    """对一个相邻周对执行完整检测：拟合、预测、标准化、组合信号与告警.

    Args:
        panel: 抑制后的查询面板
        areas: 区域坐标
        week_pair: (拟合周 w, 预测周 w+1)
        cases: 病例序列，用于病例上升计数；可为空
        params: 检测参数

    Returns:
        检测结果

    Raises:
        WeekMismatchError: 两周不相邻
        WeekNotFoundError: 面板缺少任一周
        NoEligibleCandidatesError: 没有任何区域能拟合模型
        EmptyReferencePoolError: 参照值池为空
    """
    params = params or DetectionParams()
    week_fitted, week_next = week_pair
    if week_fitted + ONE_WEEK != week_next:
        raise WeekMismatchError(
            f"weeks {week_fitted.isoformat()} and {week_next.isoformat()} are not consecutive"
        )
    panel.period_index(week_fitted)
    panel.period_index(week_next)

    models, failures = fit_all_models(
        panel,
        week_fitted,
        areas,
        max_controls=params.max_controls,
        min_distance_km=params.min_distance_km,
        max_workers=params.max_workers,
    )
    if not models and failures:
        raise NoEligibleCandidatesError(failures[sorted(failures)[0]])

    frame = outlier_measure(panel, models, week_next)
    frame = standardize(frame)
    frame = composite_signal(frame, params.composite_keywords)
    report = alert_threshold(frame, params.alert_percentile)

    assert frame.standardized is not None
    over_by_keyword: dict[str, int] = {}
    over_any = np.zeros(len(frame.area_ids), dtype=bool)
    for keyword in params.over_sd_keywords:
        if keyword not in frame.keywords:
            continue
        over = frame.standardized[:, frame.keywords.index(keyword)] > params.over_sd_threshold
        over_by_keyword[keyword] = int(over.sum())
        over_any |= over

    tracked = list(dict.fromkeys((*params.composite_keywords, *params.over_sd_keywords)))
    counters = RunCounters(
        n_areas_modeled=len(models),
        n_areas_with_data=len(frame.area_ids),
        n_coverage_lost=len(frame.excluded),
        n_over_2sd=int(over_any.sum()),
        n_case_rises_2_5x=(
            _count_case_rises(cases, week_fitted, week_next, params.ratio)
            if cases is not None
            else None
        ),
        keyword_coverage=_keyword_coverage(panel, week_next, tracked),
        over_sd_by_keyword=over_by_keyword,
    )
    logger.info(
        "周检测完成",
        extra={
            "week": week_next.isoformat(),
            "areas": counters.n_areas_with_data,
            "alerts": len(report.alerts),
            "threshold": report.threshold,
        },
    )
    return DetectionRun(
        week_fitted=week_fitted,
        week_next=week_next,
        models=models,
        fit_failures=failures,
        frame=frame,
        alerts=report,
        counters=counters,
    )
