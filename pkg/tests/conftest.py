"""Pytest 配置和共享 fixtures."""

from datetime import date, timedelta
from pathlib import Path
from typing import Callable, Generator

import numpy as np
import pytest

from symwatch.core.config import OUTPUT_DIR_ENV
from symwatch.schemas.panel import DEFAULT_REGISTRY, Area, QueryPanel
from symwatch.schemas.scenario import Scenario
from symwatch.services.synthgen import SyntheticData, generate
from symwatch.utils.io import write_areas, write_epi, write_panel

MONDAY = date(2020, 3, 2)
TOTAL_USERS = 1_000_000.0

PanelFactory = Callable[..., QueryPanel]


@pytest.fixture(scope="function", autouse=True)
def clean_environment(monkeypatch: pytest.MonkeyPatch) -> Generator[None, None, None]:
    """移除可能影响配置的环境变量."""
    monkeypatch.delenv(OUTPUT_DIR_ENV, raising=False)
    yield


@pytest.fixture
def weeks() -> list[date]:
    """从 2020-03-02 开始的 4 个周一."""
    return [MONDAY + timedelta(weeks=i) for i in range(4)]


def _line_areas(n: int, spacing_deg: float = 1.0) -> list[Area]:
    """沿经线等距排列的区域，1 度约 111 km."""
    return [
        Area(area_id=f"A{i:02d}", latitude=50.0 + i * spacing_deg, longitude=0.0)
        for i in range(n)
    ]


@pytest.fixture
def make_areas() -> Callable[..., list[Area]]:
    """沿经线排列区域的工厂."""
    return _line_areas


@pytest.fixture
def areas8() -> list[Area]:
    """8 个两两相距 100 km 以上的区域."""
    return _line_areas(8)


@pytest.fixture
def make_panel() -> PanelFactory:
    """由比例数组 [P, A, K] 构造面板；present 为空时全部有数据."""

    def factory(
        fractions: np.ndarray,
        area_ids: list[str] | None = None,
        periods: list[date] | None = None,
        present: np.ndarray | None = None,
        total: float = TOTAL_USERS,
    ) -> QueryPanel:
        fractions = np.asarray(fractions, dtype=float)
        n_p, n_a, n_k = fractions.shape
        if periods is None:
            periods = [MONDAY + timedelta(weeks=i) for i in range(n_p)]
        if area_ids is None:
            area_ids = [f"A{i:02d}" for i in range(n_a)]
        if present is None:
            present = np.ones((n_p, n_a), dtype=bool)
        totals = np.where(present, total, 0.0)
        counts = np.where(present[:, :, None], fractions * total, 0.0)
        return QueryPanel(
            periods=tuple(periods),
            area_ids=tuple(area_ids),
            keywords=DEFAULT_REGISTRY.names[:n_k],
            counts=counts,
            totals=totals,
            present=present,
        )

    return factory


@pytest.fixture
def random_fractions() -> Callable[..., np.ndarray]:
    """区域倾向 × 关键词基线 + 噪声的随机比例."""

    def factory(n_weeks: int, n_areas: int, n_keywords: int = 25, seed: int = 0) -> np.ndarray:
        rng = np.random.default_rng(seed)
        baseline = np.exp(rng.uniform(np.log(5e-4), np.log(5e-3), size=n_keywords))
        propensity = rng.uniform(0.8, 1.2, size=n_areas)
        clean = propensity[None, :, None] * baseline[None, None, :]
        noise = rng.normal(size=(n_weeks, n_areas, n_keywords)) * 0.05 * baseline
        return np.clip(clean + noise, 0.0, 1.0)

    return factory


@pytest.fixture(scope="session")
def small_synthetic() -> SyntheticData:
    """10 区域 × 8 周的合成数据（含两次暴发）."""
    return generate(Scenario(seed=7, n_areas=10, n_weeks=8, n_outbreaks=2))


@pytest.fixture
def synth_files(tmp_path: Path, small_synthetic: SyntheticData) -> dict[str, Path]:
    """将合成数据写成 CLI 输入文件."""
    data_dir = tmp_path / "data"
    data_dir.mkdir()
    files = {
        "panel": data_dir / "panel.csv",
        "search_daily": data_dir / "search_daily.csv",
        "areas": data_dir / "areas.csv",
        "cases": data_dir / "cases.csv",
        "mortality": data_dir / "mortality.csv",
    }
    write_panel(files["panel"], small_synthetic.panel)
    write_panel(files["search_daily"], small_synthetic.daily_search)
    write_areas(files["areas"], small_synthetic.areas)
    write_epi(files["cases"], small_synthetic.cases)
    write_epi(files["mortality"], small_synthetic.mortality)
    return files
