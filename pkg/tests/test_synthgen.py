"""测试合成数据生成."""

from itertools import combinations

import numpy as np
import pytest
from pydantic import ValidationError

from symwatch.core.errors import ConfigError
from symwatch.schemas.panel import DEFAULT_REGISTRY
from symwatch.schemas.scenario import (
    CaseSurge,
    EpidemicParams,
    Geography,
    Injection,
    Scenario,
    SearchParams,
)
from symwatch.services.panel import distance_km
from symwatch.services.synthgen import (
    gen_areas,
    gen_epidemic,
    gen_mortality,
    generate,
    incidence,
    resolve_scenario,
    search_fractions,
)


def _flat(n: int, level: float = 10.0) -> list[EpidemicParams]:
    return [
        EpidemicParams(
            onset_week=0.0, growth_rate=0.1, peak_incidence=0.0, baseline_incidence=level
        )
    ] * n


class TestDeterminism:
    """测试种子决定全部输出."""

    def test_same_seed_same_output(self):
        """测试相同情景两次生成结果一致."""
        scenario = Scenario(seed=3, n_areas=5, n_weeks=6, n_outbreaks=2)
        first, second = generate(scenario), generate(scenario)
        assert first.areas == second.areas
        assert first.panel == second.panel
        assert first.daily_search == second.daily_search
        assert np.array_equal(first.cases.values, second.cases.values)
        assert np.array_equal(first.mortality.values, second.mortality.values)
        assert first.ground_truth == second.ground_truth

    def test_different_seed_differs(self):
        """测试不同种子得到不同面板."""
        first = generate(Scenario(seed=3, n_areas=5, n_weeks=6))
        second = generate(Scenario(seed=4, n_areas=5, n_weeks=6))
        assert not np.array_equal(first.panel.counts, second.panel.counts)


class TestGeography:
    """测试区域放置."""

    def test_spacing_and_bounds(self):
        """测试区域两两间距与地理范围."""
        scenario = Scenario(seed=1, n_areas=30, geography=Geography(min_spacing_km=25.0))
        areas = gen_areas(scenario)
        assert [a.area_id for a in areas] == [f"A{i:03d}" for i in range(30)]
        assert all(distance_km(a, b) >= 25.0 for a, b in combinations(areas, 2))
        geo = scenario.geography
        assert all(geo.lat_min <= a.latitude <= geo.lat_max for a in areas)
        assert all(geo.lon_min <= a.longitude <= geo.lon_max for a in areas)

    def test_cannot_place(self):
        """测试范围过小无法放下全部区域."""
        geography = Geography(
            lat_min=51.0, lat_max=51.1, lon_min=0.0, lon_max=0.1, min_spacing_km=100.0
        )
        with pytest.raises(ConfigError, match="cannot place"):
            gen_areas(Scenario(n_areas=3, geography=geography))


class TestEpidemic:
    """测试病例与死亡序列."""

    def test_incidence_peak(self):
        """测试峰值日发病数等于背景加峰值."""
        params = EpidemicParams(
            onset_week=2.0, growth_rate=0.1, peak_incidence=50.0, baseline_incidence=3.0
        )
        peak_day = 2.0 * 7 + 6.0 / 0.1
        assert incidence(params, np.array([peak_day]))[0] == pytest.approx(53.0)
        assert incidence(params, np.array([14.0]))[0] < 3.0 + 0.05 * 50.0

    def test_zero_incidence(self):
        """测试发病数为 0 时病例全为 0."""
        scenario = Scenario(seed=2, n_areas=3, n_weeks=4, epidemics=_flat(3, level=0.0))
        cases = gen_epidemic(scenario)
        assert cases.kind == "daily_cases"
        assert cases.values.shape == (28, 3)
        assert not cases.values.any()

    def test_noiseless_cases_are_rounded_expectation(self):
        """测试关闭观测噪声时病例等于期望值取整."""
        scenario = Scenario(
            seed=2, n_areas=2, n_weeks=4, epidemics=_flat(2, level=10.4), observation_noise=False
        )
        assert np.all(gen_epidemic(scenario).values == 10.0)

    def test_surge_and_mortality_delay(self):
        """测试病例倍增出现在指定周，死亡在两周后随之上升."""
        scenario = Scenario(
            seed=2,
            n_areas=2,
            n_weeks=8,
            epidemics=_flat(2),
            case_surges=[CaseSurge(area_id="A000", week=3, factor=4.0)],
            observation_noise=False,
        )
        weekly = gen_epidemic(scenario).to_weekly()
        assert list(weekly.series("A000")) == [70, 70, 70, 280, 70, 70, 70, 70]
        assert list(weekly.series("A001")) == [70] * 8

        deaths = gen_mortality(scenario)
        assert deaths.kind == "weekly_deaths"
        assert list(deaths.series("A000")) == [7, 7, 7, 7, 7, 28, 7, 7]
        assert list(deaths.series("A001")) == [7] * 8


class TestSearch:
    """测试搜索面板."""

    def test_counts_within_totals(self, small_synthetic):
        """测试计数为不超过总用户数的整数."""
        panel = small_synthetic.panel
        assert panel.resolution == "weekly"
        assert panel.counts.shape == (8, 10, len(DEFAULT_REGISTRY))
        assert np.all(panel.counts <= panel.totals[:, :, None])
        assert np.array_equal(panel.counts, np.round(panel.counts))
        assert small_synthetic.daily_search.resolution == "daily"
        assert len(small_synthetic.daily_search.periods) == 56

    def test_injection_is_local(self):
        """测试注入只改变对应的区域、周与关键词."""
        base = Scenario(seed=5, n_areas=4, n_weeks=5)
        injected = base.model_copy(
            update={
                "injections": [Injection(area_id="A002", week=3, keyword="fever", excess=0.01)]
            }
        )
        diff = search_fractions(injected) - search_fractions(base)
        k = DEFAULT_REGISTRY.index("pyrexia")
        assert diff[3, 2, k] == pytest.approx(0.01)
        diff[3, 2, k] = 0.0
        assert not diff.any()

        daily = search_fractions(injected, "daily") - search_fractions(base, "daily")
        assert not daily.any()

    def test_search_override(self):
        """测试关键词参数覆盖（支持同义词）."""
        scenario = Scenario(
            seed=5,
            n_areas=2,
            n_weeks=3,
            epidemics=_flat(2, level=0.0),
            propensity_spread=0.0,
            search={"fever": SearchParams(baseline=0.004)},
        )
        fractions = search_fractions(scenario)
        assert np.allclose(fractions[:, :, DEFAULT_REGISTRY.index("pyrexia")], 0.004)

    def test_unknown_keyword(self):
        """测试未知关键词."""
        scenario = Scenario(n_areas=2, search={"hiccups": SearchParams(baseline=0.001)})
        with pytest.raises(ConfigError):
            resolve_scenario(scenario)

    def test_unknown_event_area(self):
        """测试事件引用未知区域."""
        scenario = Scenario(n_areas=2, case_surges=[CaseSurge(area_id="Z9", week=1, factor=2.0)])
        with pytest.raises(ConfigError, match="unknown area"):
            resolve_scenario(scenario)


class TestGroundTruth:
    """测试生成真值."""

    def test_outbreaks_recorded(self):
        """测试暴发事件的注入周早于病例倍增周."""
        data = generate(Scenario(seed=9, n_areas=6, n_weeks=10, n_outbreaks=3))
        truth = data.ground_truth
        assert len(truth.case_surges) == 3
        assert len(truth.injections) == 6
        assert {i.keyword for i in truth.injections} == {"pyrexia", "cough"}
        for surge in truth.case_surges:
            assert 1 <= surge.week < 10
            matching = [
                i
                for i in truth.injections
                if i.area_id == surge.area_id and i.week == surge.week - 1
            ]
            assert len(matching) >= 2
        assert truth.keyword_lags["cough"] == 17
        assert truth.death_delay_days == 14

    def test_invalid_scenarios(self):
        """测试情景参数校验."""
        with pytest.raises(ValidationError):
            Scenario(n_weeks=4, case_surges=[CaseSurge(area_id="A000", week=4, factor=2.0)])
        with pytest.raises(ValidationError):
            Scenario(n_areas=3, epidemics=_flat(2))
        with pytest.raises(ValidationError):
            Scenario(n_weeks=2, n_outbreaks=1, outbreak_lead_weeks=1)
