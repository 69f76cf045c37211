"""测试配置加载."""

import json
from pathlib import Path

import pytest

from symwatch.core.config import OUTPUT_DIR_ENV, Settings, SynthSettings, load_settings
from symwatch.core.errors import ConfigError


def _write_config(tmp_path: Path, payload: dict) -> Path:
    path = tmp_path / "config.json"
    path.write_text(json.dumps(payload), encoding="utf-8")
    return path


class TestDefaults:
    """测试默认配置."""

    def test_default_values(self):
        """测试默认值."""
        settings = load_settings()
        assert settings.min_area_users == 10_000
        assert settings.min_cell_users == 10
        assert settings.min_distance_km == 50.0
        assert settings.max_controls == 5
        assert settings.alert_percentile == 95.0
        assert settings.composite_keywords == ("pyrexia", "cough")
        assert settings.over_sd_keywords == ("pyrexia", "cough")
        assert settings.case_lag_days == (-7, 21)
        assert settings.mortality_lag_weeks == (-1, 5)
        assert settings.roc_lags_days == (3, 8)
        assert settings.output_dir == Path("output")
        assert settings.log_level == "INFO"

    def test_detection_params(self):
        """测试检测参数来自配置."""
        params = load_settings(max_controls=3, alert_percentile=90.0).detection_params()
        assert params.max_controls == 3
        assert params.alert_percentile == 90.0
        assert params.over_sd_keywords == ("pyrexia", "cough")


class TestSources:
    """测试配置来源与优先级."""

    def test_json_file(self, tmp_path):
        """测试从 JSON 文件读取."""
        path = _write_config(
            tmp_path, {"max_controls": 3, "composite_keywords": ["fever", "sore_throat"]}
        )
        settings = load_settings(path)
        assert settings.max_controls == 3
        assert settings.composite_keywords == ("pyrexia", "sore_throat")

    def test_overrides_beat_file(self, tmp_path):
        """测试命令行参数优先于配置文件，None 值被忽略."""
        path = _write_config(tmp_path, {"max_controls": 3, "min_distance_km": 80.0})
        settings = load_settings(path, max_controls=4, min_distance_km=None)
        assert settings.max_controls == 4
        assert settings.min_distance_km == 80.0

    def test_env_output_dir(self, tmp_path, monkeypatch):
        """测试环境变量只覆盖输出目录，且低于命令行参数."""
        path = _write_config(tmp_path, {"output_dir": "from-file"})
        monkeypatch.setenv(OUTPUT_DIR_ENV, str(tmp_path / "from-env"))
        assert load_settings(path).output_dir == tmp_path / "from-env"
        assert load_settings(path, output_dir=tmp_path / "cli").output_dir == tmp_path / "cli"

    def test_other_env_ignored(self, monkeypatch):
        """测试其他环境变量不影响配置."""
        monkeypatch.setenv("MAX_CONTROLS", "2")
        assert load_settings().max_controls == 5

    def test_synth_block(self, tmp_path):
        """测试 synth 配置块转换为情景."""
        path = _write_config(tmp_path, {"synth": {"seed": 7, "n_areas": 6, "n_outbreaks": 2}})
        scenario = load_settings(path).synth.to_scenario()
        assert (scenario.seed, scenario.n_areas, scenario.n_outbreaks) == (7, 6, 2)
        assert scenario.n_weeks == 12


class TestValidation:
    """测试配置校验."""

    def test_missing_file(self, tmp_path):
        """测试配置文件不存在."""
        with pytest.raises(ConfigError, match="not found"):
            load_settings(tmp_path / "absent.json")

    def test_invalid_json(self, tmp_path):
        """测试配置文件不是合法 JSON."""
        path = tmp_path / "config.json"
        path.write_text("{not json", encoding="utf-8")
        with pytest.raises(ConfigError):
            load_settings(path)

    def test_unknown_key(self, tmp_path):
        """测试未知配置项."""
        path = _write_config(tmp_path, {"max_control": 3})
        with pytest.raises(ConfigError, match="invalid configuration"):
            load_settings(path)

    @pytest.mark.parametrize(
        "overrides",
        [
            {"composite_keywords": ("fever", "pyrexia")},
            {"composite_keywords": ("pyrexia", "hiccups")},
            {"over_sd_keywords": ("hiccups",)},
            {"case_lag_days": (5, -5)},
            {"alert_percentile": 100.0},
            {"max_controls": 0},
            {"jump_rule": "median_rule"},
            {"log_level": "VERBOSE"},
        ],
    )
    def test_invalid_values(self, overrides):
        """测试无效配置值."""
        with pytest.raises(ConfigError):
            load_settings(**overrides)

    def test_over_sd_keywords_resolved(self):
        """测试超阈关键词解析同义词并去重."""
        settings = load_settings(over_sd_keywords=("fever", "pyrexia", "cough"))
        assert settings.over_sd_keywords == ("pyrexia", "cough")

    def test_log_level_normalized(self):
        """测试日志级别转为大写."""
        assert load_settings(log_level="debug").log_level == "DEBUG"

    def test_invalid_scenario(self):
        """测试 synth 参数组合无效."""
        synth = SynthSettings(n_weeks=2, n_outbreaks=1, outbreak_lead_weeks=1)
        with pytest.raises(ConfigError, match="invalid scenario"):
            synth.to_scenario()

    def test_settings_class_without_file(self):
        """测试直接构造时不读取配置文件."""
        assert Settings().max_controls == 5

    def test_sample_config(self):
        """测试仓库自带的配置样例可以加载."""
        sample = Path(__file__).resolve().parents[1] / "config.example.json"
        settings = load_settings(sample)
        assert settings.composite_keywords == ("pyrexia", "cough")
        assert settings.synth.to_scenario().n_outbreaks == 4
