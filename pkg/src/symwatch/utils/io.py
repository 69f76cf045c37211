"""文件输出：确定性的 CSV / JSON 写入与检测结果读取."""

import json
import logging
from pathlib import Path
from typing import Any, Iterable, Sequence

import pandas as pd
from pydantic import BaseModel, ValidationError

from symwatch.core.errors import InputError, MissingRunsError
from symwatch.core.fingerprint import run_directory_name
from symwatch.schemas.detection import DetectionRun
from symwatch.schemas.panel import Area, EpiSeries, QueryPanel
from symwatch.services.panel import (
    AREAS_COLUMNS,
    CASES_COLUMNS,
    DAILY_SEARCH_COLUMNS,
    MORTALITY_COLUMNS,
    PANEL_COLUMNS,
)

logger = logging.getLogger(__name__)

ALERT_COLUMNS = ["week_start", "area_id", "composite", "threshold", "both_negative_flag"]
RUN_GLOB = "run_*.json"
UNDEFINED = "undefined"


def prepare_run_dir(output_dir: Path, command: str, fingerprint: str) -> Path:
    """创建（或复用）``<output_dir>/<command>-<fingerprint>`` 运行目录."""
    run_dir = Path(output_dir) / run_directory_name(command, fingerprint)
    run_dir.mkdir(parents=True, exist_ok=True)
    return run_dir


def write_table(path: Path, rows: Iterable[Sequence[Any]], columns: Sequence[str]) -> Path:
    """写入 CSV（UTF-8，``\\n`` 换行，不带索引）."""
    frame = pd.DataFrame(list(rows), columns=list(columns))
    frame.to_csv(path, index=False, lineterminator="\n", encoding="utf-8")
    return path


def write_json(path: Path, payload: BaseModel | dict[str, Any] | list[Any]) -> Path:
    """写入带缩进的 JSON；字典按键排序."""
    if isinstance(payload, BaseModel):
        text = payload.model_dump_json(indent=2)
    else:
        text = json.dumps(payload, indent=2, sort_keys=True, ensure_ascii=False)
    path.write_text(text + "\n", encoding="utf-8")
    return path


# ---- 数据文件 ----


def write_panel(path: Path, panel: QueryPanel) -> Path:
    """按面板 CSV 格式写出有数据的 (周期, 区域) 单元格."""
    columns = PANEL_COLUMNS if panel.resolution == "weekly" else DAILY_SEARCH_COLUMNS
    rows = []
    for p, period in enumerate(panel.periods):
        for a, area_id in enumerate(panel.area_ids):
            if not panel.present[p, a]:
                continue
            total = int(panel.totals[p, a])
            for k, keyword in enumerate(panel.keywords):
                rows.append(
                    (period.isoformat(), area_id, keyword, int(panel.counts[p, a, k]), total)
                )
    return write_table(path, rows, columns)


def write_areas(path: Path, areas: Iterable[Area]) -> Path:
    rows = [(a.area_id, a.name, repr(a.latitude), repr(a.longitude)) for a in areas]
    return write_table(path, rows, AREAS_COLUMNS)


def write_epi(path: Path, series: EpiSeries) -> Path:
    """写出病例（日）或死亡（周）CSV；计数取整."""
    columns = CASES_COLUMNS if series.kind == "daily_cases" else MORTALITY_COLUMNS
    rows = [
        (day.isoformat(), area_id, int(round(series.values[t, a])))
        for t, day in enumerate(series.dates)
        for a, area_id in enumerate(series.area_ids)
    ]
    return write_table(path, rows, columns)


# ---- 检测结果 ----


def alert_rows(run: DetectionRun) -> list[tuple[str, str, float, float, bool]]:
    week = run.week_next.isoformat()
    return [
        (week, a.area_id, a.composite, a.threshold, a.both_negative) for a in run.alerts.alerts
    ]


def write_run(run_dir: Path, run: DetectionRun) -> tuple[Path, Path]:
    """写出 ``run_<week>.json`` 与 ``alerts_<week>.csv``."""
    week = run.week_next.isoformat()
    run_path = write_json(run_dir / f"run_{week}.json", run)
    alerts_path = write_table(run_dir / f"alerts_{week}.csv", alert_rows(run), ALERT_COLUMNS)
    return run_path, alerts_path


def read_runs(runs_dir: Path | None) -> list[DetectionRun]:
    """读取目录中的全部检测结果（按预测周排序）.

    Raises:
        MissingRunsError: 目录不存在或没有检测结果
        InputError: 结果文件无法解析
    """
    if runs_dir is None or not Path(runs_dir).is_dir():
        raise MissingRunsError(f"detection runs directory not found: {runs_dir}")
    paths = sorted(Path(runs_dir).glob(RUN_GLOB))
    if not paths:
        raise MissingRunsError(f"no detection runs ({RUN_GLOB}) in {runs_dir}")
    runs = []
    for path in paths:
        try:
            runs.append(DetectionRun.model_validate_json(path.read_text(encoding="utf-8")))
        except ValidationError as e:
            raise InputError(f"cannot parse detection run {path}: {e}") from e
    logger.info("读取检测结果", extra={"runs": len(runs), "runs_dir": str(runs_dir)})
    return sorted(runs, key=lambda r: r.week_next)


def format_auc(value: float | None) -> str | float:
    return UNDEFINED if value is None else value
