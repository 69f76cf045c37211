"""合成情景参数."""

from datetime import date

from pydantic import BaseModel, Field, model_validator

from symwatch.schemas.common import WeekStart


class EpidemicParams(BaseModel):
    """单个区域的逻辑斯蒂增长疫情参数."""

    onset_week: float = Field(..., description="发病率达到峰值约 1% 的周（相对起始周）")
    growth_rate: float = Field(..., gt=0, description="日增长率")
    peak_incidence: float = Field(..., ge=0, description="峰值日发病数（期望值）")
    baseline_incidence: float = Field(default=0.0, ge=0, description="背景日发病数（期望值）")


class SearchParams(BaseModel):
    """单个关键词的搜索比例生成参数."""

    baseline: float = Field(..., ge=0, le=1, description="基线查询比例")
    gain: float = Field(default=0.0, ge=0, description="每 incidence_scale 例日发病带来的比例增量")
    lag_days: int = Field(default=0, description="搜索领先病例的天数")
    noise_sd: float = Field(default=0.0, ge=0, description="比例噪声标准差")


class Injection(BaseModel):
    """在某区域某周某关键词的比例上叠加的额外量."""

    area_id: str = Field(..., description="区域标识")
    week: int = Field(..., ge=0, description="周序号（从起始周 0 开始）")
    keyword: str = Field(..., description="关键词规范名称")
    excess: float = Field(..., description="额外比例")


class CaseSurge(BaseModel):
    """某区域某周观测病例数的倍增."""

    area_id: str = Field(..., description="区域标识")
    week: int = Field(..., ge=0, description="周序号")
    factor: float = Field(..., gt=0, description="倍数")


class Geography(BaseModel):
    """区域质心的生成范围."""

    lat_min: float = Field(default=50.6, ge=-90, le=90)
    lat_max: float = Field(default=54.8, ge=-90, le=90)
    lon_min: float = Field(default=-3.6, ge=-180, le=180)
    lon_max: float = Field(default=1.6, ge=-180, le=180)
    min_spacing_km: float = Field(default=10.0, ge=0, description="区域间最小间距")

    @model_validator(mode="after")
    def validate_box(self) -> "Geography":
        if self.lat_min > self.lat_max or self.lon_min > self.lon_max:
            raise ValueError("bounding box minimum exceeds maximum")
        return self


class Scenario(BaseModel):
    """合成多区域疫情与搜索面板的完整情景；种子决定全部输出."""

    seed: int = Field(default=42, description="随机种子")
    n_areas: int = Field(default=20, ge=1, description="区域数")
    n_weeks: int = Field(default=12, ge=2, description="周数")
    start_date: WeekStart = Field(default=date(2020, 3, 2), description="起始周（周一）")
    epidemics: list[EpidemicParams] | None = Field(
        default=None, description="各区域疫情参数；为空时由种子生成"
    )
    search: dict[str, SearchParams] | None = Field(
        default=None, description="各关键词搜索参数；为空时使用默认值"
    )
    injections: list[Injection] = Field(default_factory=list, description="比例注入")
    case_surges: list[CaseSurge] = Field(default_factory=list, description="病例倍增")
    geography: Geography = Field(default_factory=Geography, description="地理范围")
    total_users_min: int = Field(default=50_000, ge=1, description="区域周用户数下限")
    total_users_max: int = Field(default=300_000, ge=1, description="区域周用户数上限")
    propensity_spread: float = Field(
        default=0.2, ge=0, lt=1, description="区域整体查询倾向的相对离散度"
    )
    incidence_scale: float = Field(default=100.0, gt=0, description="搜索耦合的发病数单位")
    observation_noise: bool = Field(default=True, description="病例与死亡是否加泊松观测噪声")
    n_outbreaks: int = Field(default=0, ge=0, description="随机生成的暴发事件数")
    outbreak_lead_weeks: int = Field(default=1, ge=0, description="搜索异常领先病例倍增的周数")
    outbreak_surge_factor: float = Field(default=4.0, gt=1, description="暴发周病例倍数")
    outbreak_excess_sd: float = Field(default=8.0, gt=0, description="注入量（以噪声标准差计）")
    outbreak_keywords: tuple[str, ...] = Field(
        default=("pyrexia", "cough"), description="暴发时注入的关键词"
    )
    death_delay_days: int = Field(default=14, ge=0, description="死亡相对发病的延迟")
    fatality_ratio: float = Field(default=0.1, ge=0, le=1, description="病死比例")

    @model_validator(mode="after")
    def validate_scenario(self) -> "Scenario":
        """校验参数之间的一致性."""
        if self.total_users_min > self.total_users_max:
            raise ValueError("total_users_min exceeds total_users_max")
        if self.epidemics is not None and len(self.epidemics) != self.n_areas:
            raise ValueError("epidemics must list one entry per area")
        for event in (*self.injections, *self.case_surges):
            if event.week >= self.n_weeks:
                raise ValueError(f"event week {event.week} beyond n_weeks {self.n_weeks}")
        if self.n_outbreaks and self.n_weeks <= self.outbreak_lead_weeks + 1:
            raise ValueError("too few weeks to place outbreaks with the requested lead")
        return self


class GroundTruth(BaseModel):
    """供测试与评估使用的生成真值."""

    seed: int = Field(..., description="随机种子")
    start_date: date = Field(..., description="起始周")
    keyword_lags: dict[str, int] = Field(..., description="各关键词搜索领先天数")
    injections: list[Injection] = Field(default_factory=list, description="实际注入")
    case_surges: list[CaseSurge] = Field(default_factory=list, description="实际病例倍增")
    death_delay_days: int = Field(..., description="死亡延迟")
