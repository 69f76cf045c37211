"""测试区域异常度量：原始度量、标准化、组合信号、告警阈值与周检测."""

from datetime import date, timedelta

import numpy as np
import pytest

from symwatch.core.errors import (
    EmptyReferencePoolError,
    NoEligibleCandidatesError,
    UnknownKeywordError,
    WeekMismatchError,
    WeekNotFoundError,
)
from symwatch.schemas.detection import ControlModel, DetectionParams, OutlierFrame
from symwatch.schemas.panel import DEFAULT_REGISTRY, EpiSeries
from symwatch.schemas.scenario import EpidemicParams, Scenario
from symwatch.services.matching import fit_all_models, predict
from symwatch.services.outlier import (
    REASON_CONTROL_ABSENT,
    REASON_TARGET_ABSENT,
    alert_threshold,
    composite_signal,
    outlier_measure,
    standardize,
    weekly_run,
)
from symwatch.services.synthgen import generate

WEEK = date(2020, 3, 2)
NEXT_WEEK = WEEK + timedelta(weeks=1)
PAIR = ("pyrexia", "cough")


def _frame(
    standardized: list[list[float]],
    keywords: list[str] | None = None,
    area_ids: list[str] | None = None,
) -> OutlierFrame:
    values = np.asarray(standardized, dtype=float)
    return OutlierFrame(
        week=NEXT_WEEK,
        keywords=keywords or ["pyrexia", "cough", "rash"],
        area_ids=area_ids or [f"A{i:02d}" for i in range(values.shape[0])],
        raw=values,
        standardized=values,
    )


class TestOutlierMeasure:
    """测试原始异常度量."""

    def test_perfect_prediction(self, make_panel, random_fractions):
        """测试预测等于实际时原始度量为 0."""
        fractions = random_fractions(2, 2, seed=1)
        fractions[:, 1] = fractions[:, 0]
        panel = make_panel(fractions)
        model = ControlModel(
            target="A00",
            week_fitted=WEEK,
            controls=["A01"],
            coefficients=[1.0],
            intercept=0.0,
            r2=1.0,
            r2_path=[1.0],
        )
        frame = outlier_measure(panel, {"A00": model}, NEXT_WEEK)
        assert frame.area_ids == ["A00"]
        assert np.allclose(frame.raw, 0.0)
        assert frame.standardized is None

    def test_stationary_panel(self, make_panel, random_fractions, areas8):
        """测试两周相同时原始度量等于拟合周残差."""
        week = random_fractions(1, 8, seed=2)
        panel = make_panel(np.concatenate([week, week]))
        models, _ = fit_all_models(panel, WEEK, areas8)
        frame = outlier_measure(panel, models, NEXT_WEEK)

        for area_id, model in models.items():
            residual = panel.fraction_vector(WEEK, area_id) - predict(model, panel, WEEK)
            assert np.allclose(frame.raw[frame.area_ids.index(area_id)], residual)

    def test_injection_shifts_raw(self, make_panel, random_fractions, areas8):
        """测试在预测周注入 0.01 使该单元格原始度量增加 0.01."""
        fractions = random_fractions(2, 8, seed=3)
        injected = fractions.copy()
        cough = 6
        injected[1, 4, cough] += 0.01
        base_panel = make_panel(fractions)
        panel = make_panel(injected)
        models, _ = fit_all_models(base_panel, WEEK, areas8)

        before = outlier_measure(base_panel, models, NEXT_WEEK)
        after = outlier_measure(panel, models, NEXT_WEEK)
        i = before.area_ids.index("A04")
        assert after.raw[i, cough] - before.raw[i, cough] == pytest.approx(0.01, abs=1e-9)
        assert after.raw_value("A04", "pyrexia") == pytest.approx(
            before.raw_value("A04", "pyrexia"), abs=1e-12
        )

    def test_week_mismatch(self, make_panel, random_fractions, areas8):
        """测试模型拟合周不是预测周的前一周."""
        panel = make_panel(random_fractions(3, 8, seed=4))
        models, _ = fit_all_models(panel, WEEK, areas8)
        with pytest.raises(WeekMismatchError):
            outlier_measure(panel, models, WEEK + timedelta(weeks=2))

    def test_absent_target_and_control(self, make_panel, random_fractions, areas8):
        """测试目标或对照缺失的区域被排除并记录原因."""
        fractions = random_fractions(2, 8, seed=5)
        models, _ = fit_all_models(make_panel(fractions), WEEK, areas8)
        missing = "A07"
        present = np.ones((2, 8), dtype=bool)
        present[1, 7] = False
        panel = make_panel(fractions, present=present)

        frame = outlier_measure(panel, models, NEXT_WEEK)
        assert frame.excluded[missing] == REASON_TARGET_ABSENT
        dependents = [a for a, m in models.items() if missing in m.controls]
        assert dependents
        for area_id in dependents:
            assert frame.excluded[area_id] == f"{REASON_CONTROL_ABSENT}:{missing}"
        assert set(frame.area_ids).isdisjoint(frame.excluded)
        assert len(frame.area_ids) + len(frame.excluded) == len(models)


class TestStandardize:
    """测试按关键词标准化."""

    def test_hand_computed(self):
        """测试 [1, 2, 3] 标准化为 [-1.2247, 0, 1.2247]."""
        frame = OutlierFrame(
            week=NEXT_WEEK,
            keywords=["pyrexia", "cough"],
            area_ids=["A", "B", "C"],
            raw=np.array([[1.0, 5.0], [2.0, 5.0], [3.0, 5.0]]),
        )
        result = standardize(frame)
        assert result.standardized is not None
        assert np.allclose(result.standardized[:, 0], [-1.224744871, 0.0, 1.224744871])
        assert result.standardized[:, 1].tolist() == [0.0, 0.0, 0.0]
        assert result.zero_variance_keywords == ["cough"]

    def test_zero_mean_unit_variance(self):
        """测试标准化后每个关键词均值 0、方差 1."""
        rng = np.random.default_rng(6)
        frame = OutlierFrame(
            week=NEXT_WEEK,
            keywords=["pyrexia", "cough", "rash"],
            area_ids=[f"A{i}" for i in range(30)],
            raw=rng.normal(scale=1e-3, size=(30, 3)),
        )
        standardized = standardize(frame).standardized
        assert standardized is not None
        assert np.allclose(standardized.mean(axis=0), 0.0, atol=1e-9)
        assert np.allclose(standardized.var(axis=0), 1.0, atol=1e-6)

    def test_single_area(self):
        """测试只有一个区域时全部为 0."""
        frame = OutlierFrame(
            week=NEXT_WEEK, keywords=["pyrexia", "cough"], area_ids=["A"], raw=[[0.3, -0.1]]
        )
        result = standardize(frame)
        assert result.standardized is not None
        assert result.standardized.tolist() == [[0.0, 0.0]]
        assert result.zero_variance_keywords == ["pyrexia", "cough"]

    def test_input_not_modified(self):
        """测试原帧不被修改."""
        frame = OutlierFrame(
            week=NEXT_WEEK, keywords=["pyrexia"], area_ids=["A", "B"], raw=[[1.0], [3.0]]
        )
        standardize(frame)
        assert frame.standardized is None


class TestCompositeSignal:
    """测试组合信号."""

    def test_product(self):
        """测试组合信号为两个标准化值之积."""
        frame = composite_signal(_frame([[2.0, 1.5, 0.0], [0.0, 4.0, 0.0], [-2.0, -1.5, 0.0]]))
        assert frame.composite == {"A00": 3.0, "A01": 0.0, "A02": 3.0}
        assert frame.both_negative == {"A00": False, "A01": False, "A02": True}
        assert frame.composite_keywords == PAIR

    def test_keyword_swap_symmetry(self):
        """测试交换两个关键词不改变组合信号."""
        rng = np.random.default_rng(5)
        frame = _frame(rng.normal(size=(12, 3)).tolist())
        forward = composite_signal(frame, ("pyrexia", "cough"))
        backward = composite_signal(frame, ("cough", "pyrexia"))
        assert backward.composite == forward.composite
        assert backward.both_negative == forward.both_negative

    def test_non_finite_factor_omitted(self):
        """测试因子非有限的区域不计算组合信号."""
        frame = composite_signal(_frame([[np.nan, 1.0, 0.0], [1.0, 1.0, 0.0]]))
        assert frame.composite_omitted == ["A00"]
        assert "A00" not in frame.composite

    def test_unknown_keyword(self):
        """测试关键词不在帧中."""
        with pytest.raises(UnknownKeywordError):
            composite_signal(_frame([[1.0, 1.0, 0.0]]), ("pyrexia", "anosmia"))

    def test_requires_standardized(self):
        """测试未标准化的帧."""
        frame = OutlierFrame(
            week=NEXT_WEEK, keywords=["pyrexia", "cough"], area_ids=["A"], raw=[[1.0, 1.0]]
        )
        with pytest.raises(ValueError, match="standardized"):
            composite_signal(frame)


class TestAlertThreshold:
    """测试百分位告警."""

    def test_linear_percentile(self):
        """测试参照值 1..100 的第 95 百分位为 95.05."""
        rows = [[0.0, 0.0, float(v)] for v in range(1, 101)]
        rows[0][:2] = [10.0, 10.0]
        rows[1][:2] = [-10.0, -10.0]
        rows[2][:2] = [9.8, 9.8]
        report = alert_threshold(composite_signal(_frame(rows)), 95.0)

        assert report.threshold == pytest.approx(95.05)
        assert [a.area_id for a in report.alerts] == ["A00", "A01", "A02"]
        assert [a.composite for a in report.alerts] == pytest.approx([100.0, 100.0, 96.04])
        assert report.alerts[1].both_negative
        assert report.n_areas_covered == 100

    def test_no_alerts(self):
        """测试组合信号均不超过阈值."""
        rows = [[0.1, 0.1, float(v)] for v in range(10)]
        report = alert_threshold(composite_signal(_frame(rows)))
        assert report.alerts == []

    def test_alert_requires_strict_excess(self):
        """测试组合信号等于阈值时不告警."""
        rows = [[1.0, 2.0, 2.0], [0.0, 0.0, 2.0]]
        report = alert_threshold(composite_signal(_frame(rows)), 50.0)
        assert report.threshold == 2.0
        assert report.alerts == []

    def test_empty_pool(self):
        """测试没有纳入区域时参照值池为空."""
        frame = OutlierFrame(
            week=NEXT_WEEK,
            keywords=["pyrexia", "cough", "rash"],
            raw=np.zeros((0, 3)),
            standardized=np.zeros((0, 3)),
        )
        with pytest.raises(EmptyReferencePoolError):
            alert_threshold(composite_signal(frame))

    def test_null_calibration(self):
        """测试独立噪声下告警率约为 5%."""
        rng = np.random.default_rng(2020)
        keywords = ["pyrexia", "cough", *[f"k{i}" for i in range(23)]]
        area_ids = [f"A{i:02d}" for i in range(50)]
        n_alerts = 0
        n_weeks = 200
        for _ in range(n_weeks):
            frame = OutlierFrame(
                week=NEXT_WEEK,
                keywords=keywords,
                area_ids=area_ids,
                raw=rng.normal(size=(50, 25)),
            )
            report = alert_threshold(composite_signal(standardize(frame)))
            n_alerts += len(report.alerts)
        rate = n_alerts / (n_weeks * len(area_ids))
        assert 0.03 <= rate <= 0.07


class TestWeeklyRun:
    """测试单周完整检测."""

    def test_synthetic_two_weeks(self):
        """测试 20 区域 2 周合成面板全部得到度量."""
        data = generate(Scenario(seed=3, n_areas=20, n_weeks=2))
        weeks = data.panel.weeks
        run = weekly_run(data.panel, data.areas, (weeks[0], weeks[1]), cases=data.cases)

        assert run.counters.n_areas_modeled == 20
        assert run.counters.n_areas_with_data == 20
        assert run.counters.n_coverage_lost == 0
        assert run.counters.n_case_rises_2_5x is not None
        assert set(run.frame.composite) == set(data.panel.area_ids)
        assert run.counters.keyword_coverage == {"pyrexia": 20, "cough": 20}
        assert run.counters.n_over_2sd <= 20
        assert all(a.composite > run.alerts.threshold for a in run.alerts.alerts)

    def test_missing_next_week(self, make_panel, random_fractions, areas8):
        """测试面板缺少预测周."""
        panel = make_panel(random_fractions(1, 8, seed=7))
        with pytest.raises(WeekNotFoundError):
            weekly_run(panel, areas8, (WEEK, NEXT_WEEK))

    def test_non_consecutive(self, make_panel, random_fractions, areas8):
        """测试两周不相邻."""
        panel = make_panel(random_fractions(3, 8, seed=8))
        with pytest.raises(WeekMismatchError):
            weekly_run(panel, areas8, (WEEK, WEEK + timedelta(weeks=2)))

    def test_no_candidates_anywhere(self, make_panel, random_fractions, make_areas):
        """测试没有区域能拟合模型."""
        panel = make_panel(random_fractions(2, 1, seed=9))
        with pytest.raises(NoEligibleCandidatesError, match="no eligible candidates"):
            weekly_run(panel, make_areas(1), (WEEK, NEXT_WEEK))

    @pytest.mark.parametrize("factor", [0.1, 0.5, 3.7])
    def test_scale_invariance(self, make_panel, random_fractions, areas8, factor):
        """测试所有比例乘以常数不改变标准化度量与告警."""
        panel = make_panel(random_fractions(2, 8, seed=10))
        run = weekly_run(panel, areas8, (WEEK, NEXT_WEEK))
        scaled = weekly_run(panel.rescaled(factor), areas8, (WEEK, NEXT_WEEK))

        assert run.frame.standardized is not None and scaled.frame.standardized is not None
        assert np.allclose(run.frame.standardized, scaled.frame.standardized, rtol=0.0, atol=1e-9)
        assert scaled.frame.composite.keys() == run.frame.composite.keys()
        for area_id, value in run.frame.composite.items():
            assert scaled.frame.composite[area_id] == pytest.approx(value, rel=0.0, abs=1e-9)
        assert [a.area_id for a in run.alerts.alerts] == [a.area_id for a in scaled.alerts.alerts]
        assert {a: m.controls for a, m in run.models.items()} == {
            a: m.controls for a, m in scaled.models.items()
        }

    def test_case_rises(self, make_panel, random_fractions, areas8):
        """测试病例周环比上升计数."""
        panel = make_panel(random_fractions(2, 8, seed=11))
        values = np.ones((14, 8))
        values[7:, 0] = 2.5
        values[7:, 1] = 2.4
        cases = EpiSeries(
            kind="daily_cases",
            dates=tuple(WEEK + timedelta(days=i) for i in range(14)),
            area_ids=panel.area_ids,
            values=values,
        )
        run = weekly_run(panel, areas8, (WEEK, NEXT_WEEK), cases=cases)
        assert run.counters.n_case_rises_2_5x == 1

    def test_custom_composite(self, make_panel, random_fractions, areas8):
        """测试自定义组合信号关键词."""
        panel = make_panel(random_fractions(2, 8, seed=12))
        params = DetectionParams(
            composite_keywords=("rash", "nausea"), over_sd_keywords=("rash",)
        )
        run = weekly_run(panel, areas8, (WEEK, NEXT_WEEK), params=params)
        assert run.frame.composite_keywords == ("rash", "nausea")
        assert set(run.counters.over_sd_by_keyword) == {"rash"}

    @staticmethod
    def _injected_top_ranks(excess_sd: float, skip_both_negative: bool) -> int:
        """100 个种子中被注入区域组合信号排名第一的次数."""
        flat = EpidemicParams(onset_week=0.0, growth_rate=0.1, peak_incidence=0.0)
        hits = 0
        for seed in range(100):
            scenario = Scenario(
                seed=seed,
                n_areas=15,
                n_weeks=2,
                epidemics=[flat] * 15,
                n_outbreaks=1,
                outbreak_lead_weeks=0,
                outbreak_excess_sd=excess_sd,
            )
            data = generate(scenario)
            target = data.ground_truth.injections[0].area_id
            weeks = data.panel.weeks
            run = weekly_run(data.panel, data.areas, (weeks[0], weeks[1]))
            ranked = sorted(
                (
                    a
                    for a, v in run.frame.composite.items()
                    if not (skip_both_negative and run.frame.both_negative[a])
                ),
                key=lambda a: -run.frame.composite[a],
            )
            hits += ranked[0] == target
        return hits

    @pytest.mark.slow
    def test_injection_detectability(self):
        """测试注入 5 倍噪声标准差时被注入区域在多数试验中排名第一."""
        # 以被注入区域为对照的区域同样偏离预测，少数试验中排名更高
        assert self._injected_top_ranks(5.0, skip_both_negative=False) >= 85

    @pytest.mark.slow
    def test_injection_detectability_without_echo(self):
        """测试注入 6 倍噪声标准差、排除两个因子同时为负的区域后至少 95 次排名第一."""
        assert self._injected_top_ranks(6.0, skip_both_negative=True) >= 95

    @pytest.mark.slow
    def test_injection_monotonicity(self, make_panel, random_fractions, make_areas):
        """测试未被用作对照的区域两个因子均不低于 1/√(n−1) 后，注入量增大不降低其排名."""
        areas = make_areas(12)
        params = DetectionParams(max_controls=1)
        columns = [DEFAULT_REGISTRY.names.index(k) for k in PAIR]
        checked = 0
        for seed in range(10):
            base = random_fractions(2, 12, seed=200 + seed)
            panel = make_panel(base)
            run = weekly_run(panel, areas, (WEEK, NEXT_WEEK), params=params)
            used = {c for model in run.models.values() for c in model.controls}
            free = [a for a in run.frame.area_ids if a not in used]
            if not free:
                continue
            target = free[0]
            row = panel.area_index(target)
            floor = 1.0 / np.sqrt(len(run.frame.area_ids) - 1)

            ranks = []
            for excess in np.arange(0.0, 21.0):
                fractions = base.copy()
                for k in columns:
                    fractions[1, row, k] += excess * 0.05 * base[1, :, k].mean()
                injected = weekly_run(
                    make_panel(fractions), areas, (WEEK, NEXT_WEEK), params=params
                )
                frame = injected.frame
                if min(frame.standardized_value(target, k) for k in PAIR) < floor:
                    continue
                ranks.append(sum(v > frame.composite[target] for v in frame.composite.values()))
            assert ranks
            assert all(later <= earlier for earlier, later in zip(ranks, ranks[1:]))
            checked += 1
        assert checked >= 5

    def test_rank_can_fall_from_both_negative_baseline(self):
        """测试两个因子同时为负的区域在注入量较小时排名可能下降."""
        rng = np.random.default_rng(13)
        others = rng.normal(scale=0.3, size=(9, 3))

        def rank(excess: float) -> int:
            raw = np.vstack([[-3.0 + excess, -3.0 + excess, 0.0], others])
            frame = OutlierFrame(
                week=NEXT_WEEK,
                keywords=["pyrexia", "cough", "rash"],
                area_ids=[f"A{i:02d}" for i in range(10)],
                raw=raw,
            )
            composite = composite_signal(standardize(frame)).composite
            return sum(v > composite["A00"] for v in composite.values())

        assert rank(0.0) == 0
        assert rank(3.0) > 0
        assert rank(10.0) == 0
