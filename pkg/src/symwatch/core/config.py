"""运行配置模块 - 使用 Pydantic Settings 管理配置.

优先级（高到低）：命令行参数 > 环境变量 SYMWATCH_OUTPUT_DIR（仅输出目录）> JSON 配置文件 > 默认值.
"""

import logging
import os
from contextvars import ContextVar
from datetime import date
from pathlib import Path
from typing import Any, Literal

from pydantic import BaseModel, Field, ValidationError, field_validator, model_validator
from pydantic.fields import FieldInfo
from pydantic_settings import (
    BaseSettings,
    JsonConfigSettingsSource,
    PydanticBaseSettingsSource,
    SettingsConfigDict,
)

from symwatch.core.errors import ConfigError, UnknownKeywordError
from symwatch.schemas.common import WeekStart
from symwatch.schemas.detection import DetectionParams
from symwatch.schemas.panel import DEFAULT_REGISTRY
from symwatch.schemas.scenario import Scenario

logger = logging.getLogger(__name__)

OUTPUT_DIR_ENV = "SYMWATCH_OUTPUT_DIR"

# 当前构造所用的配置文件（由 load_settings 设置）
_config_file: ContextVar[Path | None] = ContextVar("symwatch_config_file", default=None)


class OutputDirEnvSource(PydanticBaseSettingsSource):
    """只读取输出目录的环境变量来源."""

    def get_field_value(self, field: FieldInfo, field_name: str) -> tuple[Any, str, bool]:
        return None, field_name, False

    def __call__(self) -> dict[str, Any]:
        value = os.environ.get(OUTPUT_DIR_ENV, "").strip()
        return {"output_dir": value} if value else {}


class SynthSettings(BaseModel):
    """合成数据配置（``synth`` 配置块）."""

    seed: int = Field(default=42, description="随机种子")
    n_areas: int = Field(default=20, ge=1, description="区域数")
    n_weeks: int = Field(default=12, ge=2, description="周数")
    start_date: WeekStart = Field(default=date(2020, 3, 2), description="起始周（周一）")
    n_outbreaks: int = Field(default=0, ge=0, description="随机暴发事件数")
    outbreak_lead_weeks: int = Field(default=1, ge=0, description="搜索异常领先病例的周数")
    outbreak_surge_factor: float = Field(default=4.0, gt=1, description="暴发周病例倍数")
    outbreak_excess_sd: float = Field(default=8.0, gt=0, description="注入量（噪声标准差倍数）")
    death_delay_days: int = Field(default=14, ge=0, description="死亡延迟天数")
    fatality_ratio: float = Field(default=0.1, ge=0, le=1, description="病死比例")
    observation_noise: bool = Field(default=True, description="病例与死亡是否加泊松噪声")

    model_config = {"extra": "forbid"}

    def to_scenario(self) -> Scenario:
        """转换为生成器情景.

        Raises:
            ConfigError: 参数组合无效
        """
        try:
            return Scenario(**self.model_dump())
        except ValidationError as e:
            raise ConfigError(f"invalid scenario: {e}") from e


class Settings(BaseSettings):
    """运行配置."""

    # 输入与输出
    panel_path: Path | None = Field(default=None, description="周查询面板 CSV")
    areas_path: Path | None = Field(default=None, description="区域 CSV")
    cases_path: Path | None = Field(default=None, description="日病例 CSV")
    mortality_path: Path | None = Field(default=None, description="周死亡 CSV")
    search_daily_path: Path | None = Field(default=None, description="日查询面板 CSV（可选）")
    runs_dir: Path | None = Field(default=None, description="检测结果目录（评估输入）")
    evaluation_dir: Path | None = Field(default=None, description="评估结果目录（报告输入）")
    output_dir: Path = Field(default=Path("output"), description="输出根目录")

    # 隐私抑制
    min_area_users: int = Field(default=10_000, gt=0, description="区域周用户数下限")
    min_cell_users: int = Field(default=10, gt=0, description="单元格用户数下限")

    # 检测
    min_distance_km: float = Field(default=50.0, gt=0, description="对照区域最小距离")
    max_controls: int = Field(default=5, gt=0, description="最多对照区域数")
    alert_percentile: float = Field(default=95.0, gt=0, lt=100, description="告警百分位")
    composite_keywords: tuple[str, str] = Field(
        default=("pyrexia", "cough"), description="组合信号关键词"
    )
    over_sd_threshold: float = Field(default=2.0, gt=0, description="超阈计数的标准差倍数")
    over_sd_keywords: tuple[str, ...] | None = Field(
        default=None, description="超阈计数检查的关键词（默认为组合信号关键词）"
    )
    max_workers: int = Field(default=1, gt=0, description="按区域拟合的并行线程数")

    # 跃升标注
    jump_rule: Literal["ratio_rule", "sd_rule"] = Field(
        default="ratio_rule", description="跃升标注规则"
    )
    sd_multiplier: float = Field(default=2.0, gt=0, description="标准差规则倍数")
    sd_population: Literal["per_area", "cross_area"] = Field(
        default="per_area", description="标准差规则的总体"
    )
    ratio: float = Field(default=2.5, gt=0, description="倍数规则阈值")

    # 评估
    case_lag_days: tuple[int, int] = Field(default=(-7, 21), description="病例 AUC 滞后（天）")
    mortality_lag_weeks: tuple[int, int] = Field(
        default=(-1, 5), description="死亡 AUC 滞后（周）"
    )
    roc_lags_days: tuple[int, ...] = Field(
        default=(3, 8), description="输出病例 ROC 曲线的滞后（天）"
    )
    correlation_lag_days: tuple[int, int] = Field(
        default=(-35, 35), description="互相关滞后范围（天）"
    )
    smoothing_window: int = Field(default=7, gt=0, description="滑动平均窗口")
    min_overlap_days: int = Field(default=30, gt=0, description="互相关最少重叠天数")
    plots: bool = Field(default=True, description="是否输出 SVG 图")

    log_level: str = Field(default="INFO", description="日志级别")
    synth: SynthSettings = Field(default_factory=SynthSettings, description="合成数据配置")

    model_config = SettingsConfigDict(case_sensitive=False, extra="forbid")

    @classmethod
    def settings_customise_sources(
        cls,
        settings_cls: type[BaseSettings],
        init_settings: PydanticBaseSettingsSource,
        env_settings: PydanticBaseSettingsSource,
        dotenv_settings: PydanticBaseSettingsSource,
        file_secret_settings: PydanticBaseSettingsSource,
    ) -> tuple[PydanticBaseSettingsSource, ...]:
        sources: list[PydanticBaseSettingsSource] = [
            init_settings,
            OutputDirEnvSource(settings_cls),
        ]
        config_file = _config_file.get()
        if config_file is not None:
            sources.append(JsonConfigSettingsSource(settings_cls, json_file=config_file))
        return tuple(sources)

    @field_validator("log_level")
    @classmethod
    def validate_log_level(cls, v: str) -> str:
        """验证日志级别."""
        valid_levels = {"DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"}
        v_upper = v.upper()
        if v_upper not in valid_levels:
            raise ValueError(f"log_level must be one of {valid_levels}, got {v}")
        return v_upper

    @field_validator("composite_keywords")
    @classmethod
    def validate_composite(cls, v: tuple[str, str]) -> tuple[str, str]:
        """解析为规范名称并要求两者不同."""
        first, second = (_resolve_keyword(k) for k in v)
        if first == second:
            raise ValueError(f"composite keywords must differ, got {first} twice")
        return first, second

    @field_validator("over_sd_keywords")
    @classmethod
    def validate_over_sd(cls, v: tuple[str, ...] | None) -> tuple[str, ...] | None:
        if v is None:
            return None
        return tuple(dict.fromkeys(_resolve_keyword(k) for k in v))

    @field_validator("case_lag_days", "mortality_lag_weeks", "correlation_lag_days")
    @classmethod
    def validate_lag_range(cls, v: tuple[int, int]) -> tuple[int, int]:
        if v[0] > v[1]:
            raise ValueError(f"lag range lower bound {v[0]} exceeds upper bound {v[1]}")
        return v

    @model_validator(mode="after")
    def default_over_sd_keywords(self) -> "Settings":
        if self.over_sd_keywords is None:
            self.over_sd_keywords = self.composite_keywords
        return self

    def detection_params(self) -> DetectionParams:
        """单周检测参数."""
        return DetectionParams(
            max_controls=self.max_controls,
            min_distance_km=self.min_distance_km,
            alert_percentile=self.alert_percentile,
            composite_keywords=self.composite_keywords,
            over_sd_threshold=self.over_sd_threshold,
            over_sd_keywords=self.over_sd_keywords or self.composite_keywords,
            ratio=self.ratio,
            max_workers=self.max_workers,
        )


def _resolve_keyword(name: str) -> str:
    try:
        return DEFAULT_REGISTRY.resolve(name)
    except UnknownKeywordError as e:
        raise ValueError(str(e)) from None


def load_settings(config_path: Path | str | None = None, **overrides: Any) -> Settings:
    """构造并校验运行配置.

    Args:
        config_path: JSON 配置文件路径（可选）
        **overrides: 命令行参数覆盖；值为 None 的项被忽略

    Returns:
        配置实例

    Raises:
        ConfigError: 配置文件不存在、不是合法 JSON，或配置值无效
    """
    path = Path(config_path) if config_path is not None else None
    if path is not None and not path.is_file():
        raise ConfigError(f"config file not found: {path}")

    values = {k: v for k, v in overrides.items() if v is not None}
    token = _config_file.set(path)
    try:
        settings = Settings(**values)
    except ValidationError as e:
        raise ConfigError(f"invalid configuration: {e}") from e
    except (ValueError, OSError) as e:
        raise ConfigError(f"cannot read config file {path}: {e}") from e
    finally:
        _config_file.reset(token)

    logger.debug("配置加载完成", extra={"config_file": str(path) if path else None})
    return settings
