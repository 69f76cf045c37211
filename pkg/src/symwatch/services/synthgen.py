"""合成数据生成：多区域逻辑斯蒂疫情与耦合的搜索查询面板.

所有随机量都来自 ``SeedSequence(seed, spawn_key=(用途, 区域))`` 派生的独立随机流，
因此输出只由情景决定，与调用顺序和按区域的执行顺序无关.
"""

import logging
from dataclasses import dataclass
from datetime import date, timedelta

import numpy as np
from scipy.special import expit

from symwatch.core.errors import ConfigError, UnknownKeywordError
from symwatch.schemas.panel import DEFAULT_REGISTRY, Area, EpiSeries, QueryPanel
from symwatch.schemas.scenario import (
    CaseSurge,
    EpidemicParams,
    GroundTruth,
    Injection,
    Scenario,
    SearchParams,
)
from symwatch.services.panel import distance_km

logger = logging.getLogger(__name__)

# 搜索领先病例的天数与耦合强度（跨区域的中位数观测值）
KEYWORD_LAGS: dict[str, tuple[int, float]] = {
    "chest_pain": (13, 0.589),
    "cough": (17, 0.746),
    "diarrhea": (22, 0.606),
    "fatigue": (-13, 0.509),
    "pyrexia": (16, 0.695),
    "head_ache": (13, 0.624),
    "nausea": (-4, 0.590),
    "pneumonia": (34, 0.667),
    "rash": (-8, 0.612),
    "seizure": (6, 0.579),
    "sternutation": (4, 0.593),
    "sore_throat": (19, 0.775),
    "vomiting": (15, 0.575),
}

BASELINE_RANGE = (5e-4, 5e-3)
NOISE_FRACTION = 0.05
MAX_PLACEMENT_ATTEMPTS = 1000

# 随机流用途
_GEOGRAPHY = 0
_PARAMETERS = 1
_EVENTS = 2
_CASES = 10
_WEEKLY_SEARCH = 11
_DAILY_SEARCH = 12
_DEATHS = 13
_WEEKLY_TOTALS = 14
_DAILY_TOTALS = 15


def _rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))


@dataclass(frozen=True)
class ResolvedScenario:
    """补全了随机参数的情景."""

    scenario: Scenario
    areas: list[Area]
    epidemics: list[EpidemicParams]
    search: dict[str, SearchParams]
    propensity: np.ndarray
    injections: list[Injection]
    case_surges: list[CaseSurge]

    @property
    def n_days(self) -> int:
        return self.scenario.n_weeks * 7

    @property
    def days(self) -> list[date]:
        start = self.scenario.start_date
        return [start + timedelta(days=t) for t in range(self.n_days)]

    @property
    def weeks(self) -> list[date]:
        start = self.scenario.start_date
        return [start + timedelta(weeks=w) for w in range(self.scenario.n_weeks)]

    @property
    def area_ids(self) -> list[str]:
        return [a.area_id for a in self.areas]


@dataclass(frozen=True)
class SyntheticData:
    """一次生成的全部输出."""

    areas: list[Area]
    panel: QueryPanel
    daily_search: QueryPanel
    cases: EpiSeries
    mortality: EpiSeries
    ground_truth: GroundTruth


# ---- 参数补全 ----


def gen_areas(scenario: Scenario) -> list[Area]:
    """在地理范围内均匀拒绝采样区域质心，保证两两间距不小于 ``min_spacing_km``.

    Raises:
        ConfigError: 尝试次数用尽仍无法放下所有区域
    """
    geo = scenario.geography
    rng = _rng(scenario.seed, _GEOGRAPHY)
    areas: list[Area] = []
    attempts = 0
    while len(areas) < scenario.n_areas:
        attempts += 1
        if attempts > MAX_PLACEMENT_ATTEMPTS * scenario.n_areas:
            raise ConfigError(
                f"cannot place {scenario.n_areas} areas at least "
                f"{geo.min_spacing_km:g} km apart inside the bounding box"
            )
        i = len(areas)
        candidate = Area(
            area_id=f"A{i:03d}",
            name=f"Area {i:03d}",
            latitude=float(rng.uniform(geo.lat_min, geo.lat_max)),
            longitude=float(rng.uniform(geo.lon_min, geo.lon_max)),
        )
        if all(distance_km(candidate, other) >= geo.min_spacing_km for other in areas):
            areas.append(candidate)
    return areas


def _default_search(rng: np.random.Generator) -> dict[str, SearchParams]:
    lo, hi = BASELINE_RANGE
    baselines = np.exp(rng.uniform(np.log(lo), np.log(hi), size=len(DEFAULT_REGISTRY)))
    params = {}
    for name, baseline in zip(DEFAULT_REGISTRY.names, baselines):
        lag, coupling = KEYWORD_LAGS.get(name, (0, 0.0))
        params[name] = SearchParams(
            baseline=float(baseline),
            gain=float(coupling * baseline),
            lag_days=lag,
            noise_sd=float(NOISE_FRACTION * baseline),
        )
    return params


def _default_epidemics(rng: np.random.Generator, scenario: Scenario) -> list[EpidemicParams]:
    n = scenario.n_areas
    onset = rng.uniform(0.0, scenario.n_weeks / 2, size=n)
    growth = rng.uniform(0.04, 0.11, size=n)
    peak = np.exp(rng.uniform(np.log(20.0), np.log(200.0), size=n))
    baseline = rng.uniform(2.0, 8.0, size=n)
    return [
        EpidemicParams(
            onset_week=float(onset[i]),
            growth_rate=float(growth[i]),
            peak_incidence=float(peak[i]),
            baseline_incidence=float(baseline[i]),
        )
        for i in range(n)
    ]


def _outbreaks(
    scenario: Scenario, area_ids: list[str], search: dict[str, SearchParams]
) -> tuple[list[Injection], list[CaseSurge]]:
    """随机暴发：第 s 周病例倍增，s - lead 周在指定关键词上注入若干倍噪声标准差."""
    rng = _rng(scenario.seed, _EVENTS)
    lead = scenario.outbreak_lead_weeks
    first = max(lead, 1)
    injections: list[Injection] = []
    surges: list[CaseSurge] = []
    for _ in range(scenario.n_outbreaks):
        area_id = area_ids[int(rng.integers(len(area_ids)))]
        week = int(rng.integers(first, scenario.n_weeks))
        surges.append(CaseSurge(area_id=area_id, week=week, factor=scenario.outbreak_surge_factor))
        for keyword in scenario.outbreak_keywords:
            injections.append(
                Injection(
                    area_id=area_id,
                    week=week - lead,
                    keyword=keyword,
                    excess=scenario.outbreak_excess_sd * search[keyword].noise_sd,
                )
            )
    return injections, surges


def resolve_scenario(scenario: Scenario) -> ResolvedScenario:
    """补全情景中未给出的参数（区域、疫情、搜索参数、暴发事件）.

    Raises:
        ConfigError: 关键词未知或区域无法放置
    """
    areas = gen_areas(scenario)
    rng = _rng(scenario.seed, _PARAMETERS)
    # 无论是否被覆盖都先抽取，保持随机流稳定
    search = _default_search(rng)
    propensity = 1.0 + scenario.propensity_spread * rng.uniform(-1.0, 1.0, size=scenario.n_areas)
    epidemics = _default_epidemics(rng, scenario)

    for name, override in (scenario.search or {}).items():
        search[_canonical(name)] = override
    if scenario.epidemics is not None:
        epidemics = list(scenario.epidemics)

    outbreak_keywords = [_canonical(k) for k in scenario.outbreak_keywords]
    scenario = scenario.model_copy(update={"outbreak_keywords": tuple(outbreak_keywords)})
    area_ids = [a.area_id for a in areas]
    injected, surged = _outbreaks(scenario, area_ids, search)

    injections = [
        inj.model_copy(update={"keyword": _canonical(inj.keyword)})
        for inj in scenario.injections
    ] + injected
    case_surges = list(scenario.case_surges) + surged
    for event in (*injections, *case_surges):
        if event.area_id not in area_ids:
            raise ConfigError(f"event refers to unknown area {event.area_id}")

    return ResolvedScenario(
        scenario=scenario,
        areas=areas,
        epidemics=epidemics,
        search=search,
        propensity=propensity,
        injections=injections,
        case_surges=case_surges,
    )


def _canonical(name: str) -> str:
    try:
        return DEFAULT_REGISTRY.resolve(name)
    except UnknownKeywordError as e:
        raise ConfigError(str(e)) from e


def _resolved(scenario: Scenario | ResolvedScenario) -> ResolvedScenario:
    return scenario if isinstance(scenario, ResolvedScenario) else resolve_scenario(scenario)


# ---- 疫情 ----


def incidence(params: EpidemicParams, t: np.ndarray) -> np.ndarray:
    """逻辑斯蒂累计曲线的导数加背景发病数.

    峰值日为 ``onset_week * 7 + 6 / growth_rate``，此时日发病数为
    ``peak_incidence``；发病日之前约为峰值的 1%.
    """
    t = np.asarray(t, dtype=float)
    peak_day = params.onset_week * 7.0 + 6.0 / params.growth_rate
    s = expit(params.growth_rate * (t - peak_day))
    return params.baseline_incidence + 4.0 * params.peak_incidence * s * (1.0 - s)


def _surge_multiplier(resolved: ResolvedScenario, t: np.ndarray) -> np.ndarray:
    """[T, A] 的病例倍数；t 为相对起始日的天数."""
    out = np.ones((len(t), len(resolved.areas)))
    column = {a: i for i, a in enumerate(resolved.area_ids)}
    for surge in resolved.case_surges:
        in_week = (t >= surge.week * 7) & (t < surge.week * 7 + 7)
        out[in_week, column[surge.area_id]] *= surge.factor
    return out


def expected_cases(scenario: Scenario | ResolvedScenario, t: np.ndarray) -> np.ndarray:
    """第 t 天（可为任意实数数组）的期望病例数 [T, A]，含病例倍增."""
    resolved = _resolved(scenario)
    t = np.asarray(t, dtype=float)
    base = np.column_stack([incidence(p, t) for p in resolved.epidemics])
    return base * _surge_multiplier(resolved, t)


def gen_epidemic(scenario: Scenario | ResolvedScenario) -> EpiSeries:
    """生成每日病例序列.

    开启观测噪声时按区域独立做泊松抽样，否则取期望值四舍五入.
    """
    resolved = _resolved(scenario)
    t = np.arange(resolved.n_days)
    expected = expected_cases(resolved, t)
    if resolved.scenario.observation_noise:
        values = np.column_stack(
            [
                _rng(resolved.scenario.seed, _CASES, i).poisson(expected[:, i])
                for i in range(len(resolved.areas))
            ]
        )
    else:
        values = np.round(expected)
    return EpiSeries(
        kind="daily_cases",
        dates=tuple(resolved.days),
        area_ids=tuple(resolved.area_ids),
        values=values.astype(float),
    )


def gen_mortality(scenario: Scenario | ResolvedScenario) -> EpiSeries:
    """生成每周死亡序列：延迟 ``death_delay_days`` 的期望病例乘以病死比例，按周汇总."""
    resolved = _resolved(scenario)
    sc = resolved.scenario
    t = np.arange(resolved.n_days) - sc.death_delay_days
    daily = sc.fatality_ratio * expected_cases(resolved, t)
    weekly = daily.reshape(sc.n_weeks, 7, -1).sum(axis=1)
    if sc.observation_noise:
        values = np.column_stack(
            [_rng(sc.seed, _DEATHS, i).poisson(weekly[:, i]) for i in range(weekly.shape[1])]
        )
    else:
        values = np.round(weekly)
    return EpiSeries(
        kind="weekly_deaths",
        dates=tuple(resolved.weeks),
        area_ids=tuple(resolved.area_ids),
        values=values.astype(float),
    )


# ---- 搜索 ----


def _clean_daily_fractions(resolved: ResolvedScenario) -> np.ndarray:
    """无噪声的日查询比例 [D, A, K]：区域倾向 × 基线 + 增益 × 提前 lag 天的发病数."""
    sc = resolved.scenario
    t = np.arange(resolved.n_days, dtype=float)
    names = DEFAULT_REGISTRY.names
    out = np.empty((len(t), len(resolved.areas), len(names)))
    for k, name in enumerate(names):
        params = resolved.search[name]
        for i, epidemic in enumerate(resolved.epidemics):
            coupled = params.gain * incidence(epidemic, t + params.lag_days) / sc.incidence_scale
            out[:, i, k] = resolved.propensity[i] * params.baseline + coupled
    return out


def search_fractions(
    scenario: Scenario | ResolvedScenario, resolution: str = "weekly"
) -> np.ndarray:
    """查询比例 [P, A, K]（取整前，已截断到 [0, 1]）.

    周比例为当周无噪声日比例的均值加周噪声，再叠加注入；日比例为无噪声日比例加日噪声，
    不含注入.
    """
    resolved = _resolved(scenario)
    sc = resolved.scenario
    clean = _clean_daily_fractions(resolved)
    noise_sd = np.array([resolved.search[n].noise_sd for n in DEFAULT_REGISTRY.names])

    if resolution == "daily":
        purpose = _DAILY_SEARCH
        fractions = clean
    else:
        purpose = _WEEKLY_SEARCH
        fractions = clean.reshape(sc.n_weeks, 7, *clean.shape[1:]).mean(axis=1)

    noisy = np.empty_like(fractions)
    for i in range(len(resolved.areas)):
        rng = _rng(sc.seed, purpose, i)
        noisy[:, i, :] = fractions[:, i, :] + rng.normal(size=fractions[:, i, :].shape) * noise_sd

    if resolution != "daily":
        column = {a: i for i, a in enumerate(resolved.area_ids)}
        for inj in resolved.injections:
            noisy[inj.week, column[inj.area_id], DEFAULT_REGISTRY.index(inj.keyword)] += inj.excess
    return np.clip(noisy, 0.0, 1.0)


def _totals(resolved: ResolvedScenario, n_periods: int, daily: bool) -> np.ndarray:
    sc = resolved.scenario
    lo, hi = sc.total_users_min, sc.total_users_max
    if daily:
        lo, hi = max(lo // 7, 1), max(hi // 7, 1)
    purpose = _DAILY_TOTALS if daily else _WEEKLY_TOTALS
    return np.column_stack(
        [
            _rng(sc.seed, purpose, i).integers(lo, hi + 1, size=n_periods)
            for i in range(len(resolved.areas))
        ]
    ).astype(float)


def _to_panel(
    resolved: ResolvedScenario, fractions: np.ndarray, daily: bool
) -> QueryPanel:
    periods = resolved.days if daily else resolved.weeks
    totals = _totals(resolved, len(periods), daily)
    counts = np.minimum(np.round(fractions * totals[:, :, None]), totals[:, :, None])
    return QueryPanel(
        resolution="daily" if daily else "weekly",
        periods=tuple(periods),
        area_ids=tuple(resolved.area_ids),
        keywords=DEFAULT_REGISTRY.names,
        counts=counts,
        totals=totals,
        present=np.ones(totals.shape, dtype=bool),
    )


def gen_search_panel(
    scenario: Scenario | ResolvedScenario, epidemic: EpiSeries | None = None
) -> QueryPanel:
    """生成周查询面板；计数为比例乘总用户数后取整.

    搜索与无观测噪声的期望发病数耦合；传入的病例序列只用于校验区域一致.

    Raises:
        ConfigError: 病例序列的区域与情景不一致
    """
    resolved = _resolved(scenario)
    if epidemic is not None and list(epidemic.area_ids) != resolved.area_ids:
        raise ConfigError("epidemic series was generated from a different scenario")
    return _to_panel(resolved, search_fractions(resolved, "weekly"), daily=False)


def gen_daily_search(scenario: Scenario | ResolvedScenario) -> QueryPanel:
    """生成日查询面板（不含注入），供滞后相关分析."""
    resolved = _resolved(scenario)
    return _to_panel(resolved, search_fractions(resolved, "daily"), daily=True)


def generate(scenario: Scenario) -> SyntheticData:
    """按情景生成全部合成数据与真值."""
    resolved = resolve_scenario(scenario)
    cases = gen_epidemic(resolved)
    data = SyntheticData(
        areas=resolved.areas,
        panel=gen_search_panel(resolved, cases),
        daily_search=gen_daily_search(resolved),
        cases=cases,
        mortality=gen_mortality(resolved),
        ground_truth=GroundTruth(
            seed=scenario.seed,
            start_date=scenario.start_date,
            keyword_lags={n: p.lag_days for n, p in resolved.search.items()},
            injections=resolved.injections,
            case_surges=resolved.case_surges,
            death_delay_days=scenario.death_delay_days,
        ),
    )
    logger.info(
        "合成数据生成完成",
        extra={
            "seed": scenario.seed,
            "areas": scenario.n_areas,
            "weeks": scenario.n_weeks,
            "injections": len(resolved.injections),
            "surges": len(resolved.case_surges),
        },
    )
    return data
