"""评估：平滑、滞后互相关、病例跃升标注与 ROC/AUC-滞后曲线."""

import logging
from datetime import date, timedelta
from typing import Iterable, Literal, Mapping

import numpy as np
from scipy.stats import rankdata

from symwatch.core.errors import (
    DegenerateLabelsError,
    InputError,
    UndefinedCorrelationError,
)
from symwatch.schemas.detection import DetectionRun
from symwatch.schemas.evaluation import (
    AucPoint,
    JumpLabels,
    LagCorrelation,
    LagTableRow,
    R2CurvePoint,
    RocResult,
)
from symwatch.schemas.panel import EpiSeries, QueryPanel

logger = logging.getLogger(__name__)

DEFAULT_WINDOW = 7
DEFAULT_LAG_RANGE = (-35, 35)
DEFAULT_MIN_OVERLAP = 30
DEFAULT_RATIO = 2.5
DEFAULT_SD_MULTIPLIER = 2.0

Score = Mapping[tuple[str, date], float]


# ---- 平滑与互相关 ----


def moving_average(series: np.ndarray, window: int = DEFAULT_WINDOW) -> np.ndarray:
    """居中滑动平均；边缘使用截断窗口，忽略缺失值（NaN）.

    Raises:
        ValueError: 序列为空或窗口小于 1
    """
    x = np.asarray(series, dtype=float)
    if x.size == 0:
        raise ValueError("cannot smooth an empty series")
    if window < 1:
        raise ValueError(f"window must be >= 1, got {window}")

    n = x.size
    valid = np.isfinite(x)
    sums = np.concatenate([[0.0], np.cumsum(np.where(valid, x, 0.0))])
    counts = np.concatenate([[0], np.cumsum(valid)])
    idx = np.arange(n)
    lo = np.clip(idx - (window - 1) // 2, 0, n)
    hi = np.clip(idx + window // 2 + 1, 0, n)
    n_valid = counts[hi] - counts[lo]
    out = np.full(n, np.nan)
    np.divide(sums[hi] - sums[lo], n_valid, out=out, where=n_valid > 0)
    return out


def _pearson(a: np.ndarray, b: np.ndarray) -> float | None:
    a = a - a.mean()
    b = b - b.mean()
    denom = np.sqrt((a @ a) * (b @ b))
    if denom == 0:
        return None
    return float(np.clip((a @ b) / denom, -1.0, 1.0))


def best_lag_correlation(
    search: np.ndarray,
    cases: np.ndarray,
    lag_range: tuple[int, int] = DEFAULT_LAG_RANGE,
    min_overlap: int = DEFAULT_MIN_OVERLAP,
    keyword: str = "",
    area_id: str = "",
) -> LagCorrelation:
    """在滞后范围内寻找使 Pearson 相关最大的滞后.

    两个序列按日对齐、长度相同。滞后 L 为正表示搜索领先病例 L 天，即 ``search[t]`` 与
    ``cases[t + L]`` 配对。重叠不足 ``min_overlap`` 天或任一侧方差为零的滞后被跳过；
    并列时取最小滞后。本函数不做平滑.

    Raises:
        ValueError: 序列长度不一致
        UndefinedCorrelationError: 所有滞后均被跳过
    """
    s = np.asarray(search, dtype=float)
    c = np.asarray(cases, dtype=float)
    if s.shape != c.shape or s.ndim != 1:
        raise ValueError("search and cases must be aligned 1-d series")

    n = s.size
    lo, hi = lag_range
    correlogram: dict[int, float] = {}
    for lag in range(lo, hi + 1):
        if lag >= 0:
            a, b = s[: max(n - lag, 0)], c[lag:]
        else:
            a, b = s[-lag:], c[: max(n + lag, 0)]
        keep = np.isfinite(a) & np.isfinite(b)
        if keep.sum() < min_overlap:
            continue
        value = _pearson(a[keep], b[keep])
        if value is not None:
            correlogram[lag] = value

    if not correlogram:
        raise UndefinedCorrelationError(
            f"correlation undefined at every lag in [{lo}, {hi}] "
            f"for keyword {keyword or '?'} in area {area_id or '?'}"
        )
    best_lag = lo
    best = -np.inf
    for lag in sorted(correlogram):
        if correlogram[lag] > best:
            best_lag, best = lag, correlogram[lag]
    return LagCorrelation(
        keyword=keyword,
        area_id=area_id,
        best_lag_days=best_lag,
        best_correlation=best,
        correlogram=correlogram,
    )


def _lower_median(values: list[int]) -> int:
    ordered = sorted(values)
    return ordered[(len(ordered) - 1) // 2]


def median_lag_table(
    panel: QueryPanel,
    cases: EpiSeries,
    keywords: Iterable[str] | None = None,
    lag_range: tuple[int, int] = DEFAULT_LAG_RANGE,
    window: int = DEFAULT_WINDOW,
    min_overlap: int = DEFAULT_MIN_OVERLAP,
) -> list[LagTableRow]:
    """各关键词最佳相关与最佳滞后的跨区域中位数.

    搜索比例与日病例数均先做滑动平均。周面板按天展开（每天取所在周的比例）。
    相关系数取算术中位数，滞后在偶数个区域时取下中位数。没有任何有效区域的关键词
    被省略并记录日志.

    Args:
        panel: 日或周查询面板
        cases: 日病例序列
        keywords: 关键词；为空时使用面板全部关键词
        lag_range: 滞后范围（天）
        window: 平滑窗口
        min_overlap: 最少重叠天数

    Returns:
        按关键词顺序排列的汇总行

    Raises:
        InputError: 病例序列不是日序列
    """
    if cases.kind != "daily_cases":
        raise InputError("lag correlation needs a daily cases series")
    if panel.resolution == "weekly":
        logger.info("周面板按天展开用于滞后相关", extra={"weeks": len(panel.periods)})
        panel = panel.expanded_to_daily()

    case_index = cases.date_index()
    days = [d for d in panel.periods if d in case_index]
    if not days:
        raise InputError("search panel and cases series share no days")
    panel_rows = [panel.period_index(d) for d in days]
    case_rows = [case_index[d] for d in days]
    areas = [a for a in panel.area_ids if a in cases.area_ids]

    smoothed_cases = {a: moving_average(cases.series(a)[case_rows], window) for a in areas}
    rows: list[LagTableRow] = []
    for keyword in keywords if keywords is not None else panel.keywords:
        k = panel.keyword_index(keyword)
        results: list[LagCorrelation] = []
        for area_id in areas:
            a = panel.area_index(area_id)
            present = panel.present[panel_rows, a]
            with np.errstate(invalid="ignore", divide="ignore"):
                fraction = panel.counts[panel_rows, a, k] / panel.totals[panel_rows, a]
            fraction = np.where(present, fraction, np.nan)
            if not np.isfinite(fraction).any():
                continue
            try:
                results.append(
                    best_lag_correlation(
                        moving_average(fraction, window),
                        smoothed_cases[area_id],
                        lag_range=lag_range,
                        min_overlap=min_overlap,
                        keyword=keyword,
                        area_id=area_id,
                    )
                )
            except UndefinedCorrelationError as e:
                logger.debug(str(e))
        if not results:
            logger.warning("关键词没有有效区域，已省略", extra={"keyword": keyword})
            continue
        rows.append(
            LagTableRow(
                keyword=keyword,
                median_correlation=float(np.median([r.best_correlation for r in results])),
                median_lag_days=_lower_median([r.best_lag_days for r in results]),
                n_areas=len(results),
            )
        )
    return rows


# ---- 跃升标注 ----


def label_jumps(
    series: EpiSeries,
    rule: Literal["sd_rule", "ratio_rule"] = "ratio_rule",
    ratio: float = DEFAULT_RATIO,
    sd_multiplier: float = DEFAULT_SD_MULTIPLIER,
    sd_population: Literal["per_area", "cross_area"] = "per_area",
) -> JumpLabels:
    """为每个 (区域, 窗口起始日) 标注周环比跃升.

    前一个窗口为起始日前 7 天的窗口；没有前一窗口的日期不标注。

    - ``ratio_rule``：本窗口计数 ≥ ratio × 前一窗口计数，且前一窗口计数 > 0。
    - ``sd_rule``：环比差值 > sd_multiplier × 标准差（总体标准差）。``per_area`` 时
      标准差取该区域在起始日前至少 7 天的历史差值，少于两个历史差值不标注；
      ``cross_area`` 时取同一日所有区域的差值.

    日病例序列先按周一汇总；需要以天为单位的滞后时，传入 ``rolling_weekly()`` 的结果.
    """
    if series.kind == "daily_cases":
        series = series.to_weekly()
    index = series.date_index()
    step = timedelta(days=7)
    pairs = [(i, index[d - step]) for i, d in enumerate(series.dates) if d - step in index]

    labels: dict[tuple[str, date], bool] = {}
    if rule == "ratio_rule":
        parameters: dict[str, float | str] = {"ratio": ratio}
        for i, j in pairs:
            current, previous = series.values[i], series.values[j]
            jumped = (previous > 0) & (current >= ratio * previous)
            for a, area_id in enumerate(series.area_ids):
                labels[(area_id, series.dates[i])] = bool(jumped[a])
    else:
        parameters = {"sd_multiplier": sd_multiplier, "sd_population": sd_population}
        diffs = {i: series.values[i] - series.values[j] for i, j in pairs}
        for i in diffs:
            day = series.dates[i]
            if sd_population == "cross_area":
                if len(series.area_ids) < 2:
                    continue
                threshold = sd_multiplier * diffs[i].std()
                for a, area_id in enumerate(series.area_ids):
                    labels[(area_id, day)] = bool(diffs[i][a] > threshold)
                continue
            history = [h for h in diffs if series.dates[h] <= day - step]
            if len(history) < 2:
                continue
            spread = np.vstack([diffs[h] for h in history]).std(axis=0)
            for a, area_id in enumerate(series.area_ids):
                labels[(area_id, day)] = bool(diffs[i][a] > sd_multiplier * spread[a])

    return JumpLabels(rule=rule, parameters=parameters, labels=labels)


# ---- ROC / AUC ----


def _paired(scores: Score, labels: JumpLabels, lag_days: int) -> tuple[np.ndarray, np.ndarray]:
    """第 w 周的评分与 w + lag_days 的标签配对，丢弃无标签或非有限的评分."""
    shift = timedelta(days=lag_days)
    values: list[float] = []
    truth: list[bool] = []
    for (area_id, day), score in sorted(scores.items()):
        label = labels.labels.get((area_id, day + shift))
        if label is None or not np.isfinite(score):
            continue
        values.append(float(score))
        truth.append(label)
    return np.asarray(values, dtype=float), np.asarray(truth, dtype=bool)


def _roc_curve(values: np.ndarray, truth: np.ndarray) -> list[tuple[int, int]]:
    """阈值从高到低扫描得到的 (假阳性数, 真阳性数)，从 (0, 0) 开始."""
    order = np.argsort(-values, kind="stable")
    ordered, hits = values[order], truth[order]
    tp = np.cumsum(hits)
    fp = np.cumsum(~hits)
    # 同分的样本在同一阈值下一起越过
    ends = np.flatnonzero(np.diff(ordered) != 0).tolist() + [len(ordered) - 1]
    return [(0, 0)] + [(int(fp[i]), int(tp[i])) for i in ends]


def roc_auc(scores: Score, labels: JumpLabels, lag_days: int = 0) -> RocResult:
    """评分对滞后标签的 ROC 与 AUC.

    AUC 由 Mann-Whitney 配对计数（平均秩，同分计 0.5）得到，同时给出 ROC 梯形积分
    的结果，两者应一致.

    Args:
        scores: (区域, 周) → 评分
        labels: 跃升标签
        lag_days: 标签相对评分的滞后（天）

    Raises:
        DegenerateLabelsError: 配对后缺少正例或负例
    """
    values, truth = _paired(scores, labels, lag_days)
    n_pos = int(truth.sum())
    n_neg = int(truth.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise DegenerateLabelsError(
            f"lag {lag_days} days: {n_pos} positives and {n_neg} negatives after pairing"
        )

    ranks = rankdata(values)
    u = float(ranks[truth].sum()) - n_pos * (n_pos + 1) / 2.0
    auc = u / (n_pos * n_neg)

    counts = _roc_curve(values, truth)
    area2 = sum((x1 - x0) * (y1 + y0) for (x0, y0), (x1, y1) in zip(counts, counts[1:]))
    auc_trapezoid = area2 / (2.0 * n_pos * n_neg)

    return RocResult(
        auc=min(1.0, max(0.0, auc)),
        auc_trapezoid=min(1.0, max(0.0, auc_trapezoid)),
        roc_points=[(fp / n_neg, tp / n_pos) for fp, tp in counts],
        n_pos=n_pos,
        n_neg=n_neg,
        lag_days=lag_days,
    )


def auc_vs_lag(
    scores: Score,
    labels: JumpLabels,
    lag_range: tuple[int, int],
    unit_days: int = 1,
) -> list[AucPoint]:
    """在滞后范围内逐个计算 AUC；无定义的滞后 auc 为空，不影响其他滞后.

    Args:
        scores: (区域, 周) → 评分
        labels: 跃升标签
        lag_range: 闭区间滞后范围，单位为 ``unit_days`` 天
        unit_days: 滞后单位（病例为 1 天，死亡为 7 天）
    """
    points: list[AucPoint] = []
    for lag in range(lag_range[0], lag_range[1] + 1):
        try:
            result = roc_auc(scores, labels, lag * unit_days)
        except DegenerateLabelsError as e:
            _, truth = _paired(scores, labels, lag * unit_days)
            logger.warning(str(e))
            points.append(
                AucPoint(lag=lag, n_pos=int(truth.sum()), n_neg=int((~truth).sum()))
            )
            continue
        points.append(AucPoint(lag=lag, auc=result.auc, n_pos=result.n_pos, n_neg=result.n_neg))
    return points


# ---- 检测结果汇总 ----


def collect_scores(
    runs: Iterable[DetectionRun], signal: str = "composite"
) -> dict[tuple[str, date], float]:
    """从检测结果中提取评分：``composite`` 或某个关键词的标准化值，按预测周索引."""
    scores: dict[tuple[str, date], float] = {}
    for run in runs:
        for area_id, value in run.signal(signal).items():
            scores[(area_id, run.week_next)] = value
    return scores


def mean_r2_curve(runs: Iterable[DetectionRun]) -> list[R2CurvePoint]:
    """平均 R² 随对照区域数的变化；第 i 点对有至少 i 个对照区域的模型取平均."""
    paths = [model.r2_path for run in runs for model in run.models.values()]
    depth = max((len(p) for p in paths), default=0)
    curve = []
    for i in range(depth):
        values = [p[i] for p in paths if len(p) > i]
        curve.append(
            R2CurvePoint(n_controls=i + 1, mean_r2=float(np.mean(values)), n_models=len(values))
        )
    return curve
