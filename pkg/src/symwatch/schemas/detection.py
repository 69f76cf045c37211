"""检测相关数据模型：对照模型、异常度量帧、告警与每周运行结果."""

from datetime import date

import numpy as np
from pydantic import BaseModel, Field, model_validator

from symwatch.schemas.common import FloatArray

# 模型标记
FLAG_SHORT_MODEL = "short_model"
FLAG_RANK_DEFICIENT = "rank_deficient"


class LinearFit(BaseModel):
    """带截距最小二乘拟合的结果."""

    coefficients: list[float] = Field(..., description="与对照列对齐的系数")
    intercept: float = Field(..., description="截距")
    r2: float = Field(..., le=1.0 + 1e-12, description="样本内决定系数")
    rank: int = Field(..., ge=0, description="设计矩阵（含截距列）的秩")
    rank_deficient: bool = Field(default=False, description="设计矩阵是否秩亏")


class ControlModel(BaseModel):
    """目标区域的对照区域集合与线性预测函数."""

    target: str = Field(..., description="目标区域标识")
    week_fitted: date = Field(..., description="拟合所用的周")
    controls: list[str] = Field(..., min_length=1, description="按入选顺序排列的对照区域")
    coefficients: list[float] = Field(..., description="与 controls 对齐的系数")
    intercept: float = Field(..., description="截距")
    r2: float = Field(..., description="样本内决定系数")
    r2_path: list[float] = Field(..., description="每次加入对照区域后的 R²")
    flags: list[str] = Field(default_factory=list, description="模型标记")

    @model_validator(mode="after")
    def validate_model(self) -> "ControlModel":
        """校验对照列表、系数与 R² 路径的一致性."""
        if len(self.coefficients) != len(self.controls):
            raise ValueError("coefficients must align with controls")
        if len(set(self.controls)) != len(self.controls):
            raise ValueError("controls must not repeat")
        if self.target in self.controls:
            raise ValueError("target cannot be its own control")
        if len(self.r2_path) != len(self.controls):
            raise ValueError("r2_path must have one entry per control")
        if any(b < a for a, b in zip(self.r2_path, self.r2_path[1:])):
            raise ValueError("r2_path must be non-decreasing")
        if self.r2 != self.r2_path[-1]:
            raise ValueError("r2 must equal the last r2_path entry")
        return self


class OutlierFrame(BaseModel):
    """预测周的区域异常度量.

    ``raw[i, k]`` 为区域 ``area_ids[i]`` 在关键词 ``keywords[k]`` 上的实际比例减预测比例；
    ``standardized`` 为按关键词跨区域标准化后的值.
    """

    week: date = Field(..., description="预测周（w+1）")
    keywords: list[str] = Field(..., description="关键词顺序")
    area_ids: list[str] = Field(default_factory=list, description="纳入的区域")
    raw: FloatArray = Field(..., description="原始异常度量 [A, K]")
    standardized: FloatArray | None = Field(default=None, description="标准化异常度量 [A, K]")
    zero_variance_keywords: list[str] = Field(
        default_factory=list, description="方差为零、标准化为全零的关键词"
    )
    composite_keywords: tuple[str, str] | None = Field(
        default=None, description="组合信号使用的两个关键词"
    )
    composite: dict[str, float] = Field(default_factory=dict, description="组合信号")
    both_negative: dict[str, bool] = Field(
        default_factory=dict, description="组合信号的两个因子是否均为负"
    )
    composite_omitted: list[str] = Field(
        default_factory=list, description="缺少因子而未计算组合信号的区域"
    )
    excluded: dict[str, str] = Field(
        default_factory=dict, description="被排除的区域及原因"
    )

    @model_validator(mode="after")
    def validate_shapes(self) -> "OutlierFrame":
        """校验矩阵形状；空矩阵经 JSON 往返后恢复为 (0, K)."""
        shape = (len(self.area_ids), len(self.keywords))
        for name in ("raw", "standardized"):
            array = getattr(self, name)
            if array is None:
                continue
            if array.size == 0:
                array = np.zeros(shape)
                array.setflags(write=False)
                object.__setattr__(self, name, array)
            elif array.shape != shape:
                raise ValueError(f"{name} shape {array.shape} != {shape}")
        return self

    @property
    def included_areas(self) -> list[str]:
        return list(self.area_ids)

    def _position(self, area_id: str, keyword: str) -> tuple[int, int]:
        return self.area_ids.index(area_id), self.keywords.index(keyword)

    def raw_value(self, area_id: str, keyword: str) -> float:
        i, k = self._position(area_id, keyword)
        return float(self.raw[i, k])

    def standardized_value(self, area_id: str, keyword: str) -> float:
        if self.standardized is None:
            raise ValueError("frame has not been standardized")
        i, k = self._position(area_id, keyword)
        return float(self.standardized[i, k])

    def standardized_column(self, keyword: str) -> dict[str, float]:
        """某关键词的标准化值（按区域）."""
        if self.standardized is None:
            raise ValueError("frame has not been standardized")
        k = self.keywords.index(keyword)
        return {a: float(v) for a, v in zip(self.area_ids, self.standardized[:, k])}


class Alert(BaseModel):
    """单个区域告警."""

    area_id: str = Field(..., description="区域标识")
    composite: float = Field(..., description="组合信号值")
    threshold: float = Field(..., description="使用的阈值")
    both_negative: bool = Field(default=False, description="两个因子均为负")


class AlertReport(BaseModel):
    """某预测周的告警报告."""

    week: date = Field(..., description="预测周")
    threshold: float = Field(..., description="告警阈值")
    percentile: float = Field(..., description="阈值百分位")
    alerts: list[Alert] = Field(default_factory=list, description="告警列表（按组合信号降序）")
    n_areas_covered: int = Field(..., ge=0, description="纳入的区域数")

    @model_validator(mode="after")
    def validate_alerts(self) -> "AlertReport":
        if any(not a.composite > self.threshold for a in self.alerts):
            raise ValueError("every alert must strictly exceed the threshold")
        return self


class DetectionParams(BaseModel):
    """单周检测参数."""

    max_controls: int = Field(default=5, ge=1, description="最多对照区域数")
    min_distance_km: float = Field(default=50.0, gt=0, description="对照区域最小距离")
    alert_percentile: float = Field(default=95.0, gt=0, lt=100, description="告警百分位")
    composite_keywords: tuple[str, str] = Field(
        default=("pyrexia", "cough"), description="组合信号关键词"
    )
    over_sd_threshold: float = Field(default=2.0, gt=0, description="超阈计数使用的标准差倍数")
    over_sd_keywords: tuple[str, ...] = Field(
        default=("pyrexia", "cough"), description="超阈计数检查的关键词"
    )
    ratio: float = Field(default=2.5, gt=0, description="病例上升计数的倍数")
    max_workers: int = Field(default=1, ge=1, description="按区域拟合的并行线程数")


class RunCounters(BaseModel):
    """每周覆盖与超阈计数."""

    n_areas_modeled: int = Field(..., ge=0, description="第 w 周成功拟合模型的区域数")
    n_areas_with_data: int = Field(..., ge=0, description="第 w+1 周得到异常度量的区域数")
    n_coverage_lost: int = Field(..., ge=0, description="已建模但在 w+1 周无法预测的区域数")
    n_over_2sd: int = Field(..., ge=0, description="任一检查关键词标准化值超过阈值的区域数")
    n_case_rises_2_5x: int | None = Field(
        default=None, description="病例周环比上升达到倍数的区域数（未提供病例时为空）"
    )
    keyword_coverage: dict[str, int] = Field(
        default_factory=dict, description="各关键词在 w+1 周计数非零的区域数"
    )
    over_sd_by_keyword: dict[str, int] = Field(
        default_factory=dict, description="各关键词标准化值超过阈值的区域数"
    )


class DetectionRun(BaseModel):
    """一个相邻周对的完整检测输出."""

    week_fitted: date = Field(..., description="拟合周 w")
    week_next: date = Field(..., description="预测周 w+1")
    models: dict[str, ControlModel] = Field(default_factory=dict, description="各区域对照模型")
    fit_failures: dict[str, str] = Field(default_factory=dict, description="拟合失败的区域及原因")
    frame: OutlierFrame = Field(..., description="异常度量帧")
    alerts: AlertReport = Field(..., description="告警报告")
    counters: RunCounters = Field(..., description="覆盖计数")

    def signal(self, name: str) -> dict[str, float]:
        """按名称取得评分：``composite`` 或某个关键词的标准化值."""
        if name == "composite":
            return dict(self.frame.composite)
        return self.frame.standardized_column(name)
