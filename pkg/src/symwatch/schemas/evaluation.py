"""评估相关数据模型."""

from datetime import date
from typing import Literal

from pydantic import BaseModel, Field, model_validator


class LagCorrelation(BaseModel):
    """某关键词在某区域的最佳滞后相关."""

    keyword: str = Field(..., description="关键词")
    area_id: str = Field(..., description="区域标识")
    best_lag_days: int = Field(..., description="最佳滞后（正值表示搜索领先病例）")
    best_correlation: float = Field(..., ge=-1.0, le=1.0, description="最佳相关系数")
    correlogram: dict[int, float] = Field(..., description="各滞后的相关系数（无定义的滞后缺省）")

    @model_validator(mode="after")
    def validate_best(self) -> "LagCorrelation":
        if self.correlogram.get(self.best_lag_days) != self.best_correlation:
            raise ValueError("best lag must attain the best correlation")
        return self


class LagTableRow(BaseModel):
    """滞后相关汇总表的一行（跨区域中位数）."""

    keyword: str = Field(..., description="关键词")
    median_correlation: float = Field(..., description="最佳相关系数的中位数")
    median_lag_days: int = Field(..., description="最佳滞后的中位数（偶数个取下中位）")
    n_areas: int = Field(..., ge=1, description="参与汇总的区域数")


class JumpLabels(BaseModel):
    """病例或死亡数周环比跃升标签."""

    rule: Literal["sd_rule", "ratio_rule"] = Field(..., description="标注规则")
    parameters: dict[str, float | str] = Field(default_factory=dict, description="规则参数")
    labels: dict[tuple[str, date], bool] = Field(
        default_factory=dict, description="(区域, 窗口起始日) → 是否跃升"
    )

    @property
    def n_positive(self) -> int:
        return sum(self.labels.values())


class RocResult(BaseModel):
    """ROC 曲线与 AUC."""

    auc: float = Field(..., ge=0.0, le=1.0, description="Mann-Whitney 配对计数得到的 AUC")
    auc_trapezoid: float = Field(..., ge=0.0, le=1.0, description="ROC 梯形积分得到的 AUC")
    roc_points: list[tuple[float, float]] = Field(..., description="(假阳性率, 真阳性率)")
    n_pos: int = Field(..., ge=1, description="正例数")
    n_neg: int = Field(..., ge=1, description="负例数")
    lag_days: int = Field(..., description="标签相对评分的滞后（天）")


class AucPoint(BaseModel):
    """AUC-滞后曲线上的一个点；无定义时 auc 为空."""

    lag: int = Field(..., description="滞后（单位由调用方决定：天或周）")
    auc: float | None = Field(default=None, description="AUC")
    n_pos: int = Field(default=0, ge=0, description="正例数")
    n_neg: int = Field(default=0, ge=0, description="负例数")


class R2CurvePoint(BaseModel):
    """R² 随对照区域数变化曲线上的一个点."""

    n_controls: int = Field(..., ge=1, description="对照区域数")
    mean_r2: float = Field(..., description="平均 R²")
    n_models: int = Field(..., ge=1, description="参与平均的模型数")
