"""对照区域匹配：贪心选择对照区域并拟合带截距的线性预测函数."""

import logging
from concurrent.futures import ThreadPoolExecutor
from datetime import date
from typing import Iterable, Mapping

import numpy as np

from symwatch.core.errors import (
    AreaAbsentError,
    MissingControlError,
    NoEligibleCandidatesError,
)
from symwatch.schemas.detection import (
    FLAG_RANK_DEFICIENT,
    FLAG_SHORT_MODEL,
    ControlModel,
    LinearFit,
)
from symwatch.schemas.panel import Area, QueryPanel
from symwatch.services.panel import distance_km

logger = logging.getLogger(__name__)

DEFAULT_MAX_CONTROLS = 5
DEFAULT_MIN_DISTANCE_KM = 50.0


def fit_linear(X: np.ndarray, y: np.ndarray) -> LinearFit:
    """带截距的普通最小二乘拟合.

    关键词为样本（行），对照区域为回归变量（列）。设计矩阵秩亏时返回最小范数解并
    标记 ``rank_deficient``。目标为常数（SS_tot = 0）时 R² 记为 0.

    Args:
        X: 对照区域比例矩阵 [n_keywords, n_controls]
        y: 目标区域比例向量 [n_keywords]

    Returns:
        拟合结果

    Raises:
        ValueError: 形状不一致或样本数不超过回归变量数 + 1
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    if y.shape != (n,):
        raise ValueError(f"y has shape {y.shape}, expected ({n},)")
    if n <= p + 1:
        raise ValueError(f"need more than {p + 1} observations, got {n}")

    design = np.column_stack([np.ones(n), X])
    solution, _, rank, _ = np.linalg.lstsq(design, y, rcond=None)
    residuals = y - design @ solution
    ss_res = float(residuals @ residuals)
    if np.all(y == y[0]):
        r2 = 0.0
    else:
        centered = y - y.mean()
        r2 = 1.0 - ss_res / float(centered @ centered)

    return LinearFit(
        coefficients=[float(c) for c in solution[1:]],
        intercept=float(solution[0]),
        r2=r2,
        rank=int(rank),
        rank_deficient=int(rank) < p + 1,
    )


def _area_lookup(areas: Iterable[Area] | Mapping[str, Area]) -> dict[str, Area]:
    if isinstance(areas, Mapping):
        return dict(areas)
    return {area.area_id: area for area in areas}


def _select_controls(
    target: Area,
    week: date,
    rows: Mapping[str, np.ndarray],
    coords: Mapping[str, Area],
    max_controls: int,
    min_distance_km: float,
) -> ControlModel:
    """在给定的区域比例向量上执行贪心前向选择."""
    y = rows[target.area_id]
    candidates = [
        area_id
        for area_id in sorted(rows)
        if area_id != target.area_id
        and area_id in coords
        and distance_km(target, coords[area_id]) >= min_distance_km
    ]
    if not candidates:
        raise NoEligibleCandidatesError(
            f"no eligible candidates for target {target.area_id} in week "
            f"{week.isoformat()}: no area with data at least {min_distance_km:g} km away"
        )

    # 样本数必须大于回归变量数 + 1
    limit = min(max_controls, len(y) - 2, len(candidates))
    selected: list[str] = []
    r2_path: list[float] = []
    best_fit: LinearFit | None = None
    remaining = list(candidates)
    for _ in range(limit):
        step_best: tuple[str, LinearFit] | None = None
        for area_id in remaining:
            X = np.column_stack([rows[a] for a in (*selected, area_id)])
            fit = fit_linear(X, y)
            # 严格大于：并列时保留 area_id 较小者
            if step_best is None or fit.r2 > step_best[1].r2:
                step_best = (area_id, fit)
        assert step_best is not None
        chosen, best_fit = step_best
        selected.append(chosen)
        remaining.remove(chosen)
        # 浮点误差不允许路径下降
        r2_path.append(max(best_fit.r2, r2_path[-1]) if r2_path else best_fit.r2)

    assert best_fit is not None
    flags: list[str] = []
    if len(selected) < max_controls:
        flags.append(FLAG_SHORT_MODEL)
    if best_fit.rank_deficient:
        flags.append(FLAG_RANK_DEFICIENT)

    return ControlModel(
        target=target.area_id,
        week_fitted=week,
        controls=selected,
        coefficients=best_fit.coefficients,
        intercept=best_fit.intercept,
        r2=r2_path[-1],
        r2_path=r2_path,
        flags=flags,
    )


def _present_rows(panel: QueryPanel, week: date) -> dict[str, np.ndarray]:
    matrix = panel.fraction_matrix(week)
    mask = panel.present[panel.period_index(week)]
    return {a: matrix[i] for i, a in enumerate(panel.area_ids) if mask[i]}


def greedy_select(
    panel: QueryPanel,
    week: date,
    target: Area | str,
    areas: Iterable[Area] | Mapping[str, Area],
    max_controls: int = DEFAULT_MAX_CONTROLS,
    min_distance_km: float = DEFAULT_MIN_DISTANCE_KM,
) -> ControlModel:
    """为目标区域贪心选择对照区域.

    每一步加入使样本内 R² 最大的候选区域（并列时取 area_id 最小者），直到达到
    ``max_controls`` 或没有候选。候选区域必须在该周有数据且距目标至少
    ``min_distance_km``。候选不足时返回较短的模型并标记 ``short_model``.

    Args:
        panel: 查询面板
        week: 拟合周
        target: 目标区域或其标识
        areas: 区域坐标
        max_controls: 最多对照区域数
        min_distance_km: 最小距离

    Returns:
        对照模型

    Raises:
        AreaAbsentError: 目标区域在该周没有数据或没有坐标
        NoEligibleCandidatesError: 没有满足约束的候选
    """
    coords = _area_lookup(areas)
    target_id = target.area_id if isinstance(target, Area) else target
    panel.fraction_vector(week, target_id)
    if target_id not in coords:
        raise AreaAbsentError(f"area {target_id} has no coordinates")
    rows = _present_rows(panel, week)
    return _select_controls(
        coords[target_id], week, rows, coords, max_controls, min_distance_km
    )


def predict(model: ControlModel, panel: QueryPanel, week: date) -> np.ndarray:
    """在给定周应用对照模型，返回各关键词的预测比例（不截断负值）.

    Raises:
        MissingControlError: 任一对照区域在该周没有数据
    """
    columns = []
    for control in model.controls:
        if not panel.is_present(week, control):
            raise MissingControlError(model.target, control, week.isoformat())
        columns.append(panel.fraction_vector(week, control))
    X = np.column_stack(columns)
    return model.intercept + X @ np.asarray(model.coefficients)


def fit_all_models(
    panel: QueryPanel,
    week: date,
    areas: Iterable[Area] | Mapping[str, Area],
    max_controls: int = DEFAULT_MAX_CONTROLS,
    min_distance_km: float = DEFAULT_MIN_DISTANCE_KM,
    max_workers: int = 1,
) -> tuple[dict[str, ControlModel], dict[str, str]]:
    """为该周所有有数据的区域拟合对照模型.

    各目标区域相互独立，``max_workers > 1`` 时使用线程池；结果顺序与串行一致.

    Returns:
        (按区域的模型, 拟合失败的区域及原因)
    """
    coords = _area_lookup(areas)
    rows = _present_rows(panel, week)

    def fit_one(area_id: str) -> tuple[str, ControlModel | None, str | None]:
        if area_id not in coords:
            return area_id, None, "no coordinates for area"
        try:
            model = _select_controls(
                coords[area_id], week, rows, coords, max_controls, min_distance_km
            )
        except NoEligibleCandidatesError as e:
            return area_id, None, str(e)
        return area_id, model, None

    targets = sorted(rows)
    if max_workers > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            results = list(pool.map(fit_one, targets))
    else:
        results = [fit_one(t) for t in targets]

    models: dict[str, ControlModel] = {}
    failures: dict[str, str] = {}
    for area_id, model, reason in results:
        if model is not None:
            models[area_id] = model
        else:
            failures[area_id] = reason or "unknown"

    logger.info(
        "对照模型拟合完成",
        extra={
            "week": week.isoformat(),
            "models": len(models),
            "failures": len(failures),
        },
    )
    return models, failures
