"""命令行入口：synth / detect / evaluate / report."""

import json
import logging
from datetime import timedelta
from pathlib import Path
from typing import Any, Callable

import click

from symwatch.core.config import Settings, load_settings
from symwatch.core.errors import (
    EXIT_INPUT_ERROR,
    ConfigError,
    DegenerateDataError,
    DegenerateLabelsError,
    NoAnalyzableWeeksError,
    SymwatchError,
)
from symwatch.core.fingerprint import compute_fingerprint
from symwatch.core.logging_config import setup_logging
from symwatch.schemas.detection import DetectionRun
from symwatch.schemas.evaluation import AucPoint, JumpLabels
from symwatch.services.evaluation import (
    Score,
    auc_vs_lag,
    collect_scores,
    label_jumps,
    mean_r2_curve,
    median_lag_table,
    roc_auc,
)
from symwatch.services.outlier import weekly_run
from symwatch.services.panel import (
    apply_suppression,
    load_areas,
    load_cases,
    load_daily_search,
    load_mortality,
    load_query_panel,
)
from symwatch.services.synthgen import generate
from symwatch.utils.io import (
    format_auc,
    prepare_run_dir,
    read_runs,
    write_areas,
    write_epi,
    write_json,
    write_panel,
    write_run,
    write_table,
)
from symwatch.utils.plots import line_chart, render_report

logger = logging.getLogger(__name__)

# 不参与运行指纹的配置项（输入文件按内容参与）
_FINGERPRINT_EXCLUDE = {
    "panel_path",
    "areas_path",
    "cases_path",
    "mortality_path",
    "search_daily_path",
    "runs_dir",
    "evaluation_dir",
    "output_dir",
    "log_level",
}

COVERAGE_COLUMNS = [
    "week_start",
    "n_areas_modeled",
    "n_areas_with_data",
    "n_coverage_lost",
    "n_over_2sd",
    "n_case_rises_2_5x",
    "n_alerts",
]


def _fingerprint(command: str, settings: Settings, files: list[Path | None]) -> str:
    payload = {
        "command": command,
        "settings": settings.model_dump(mode="json", exclude=_FINGERPRINT_EXCLUDE),
    }
    return compute_fingerprint(payload, files)


def _require(settings: Settings, field: str) -> Path:
    value = getattr(settings, field)
    if value is None:
        raise ConfigError(f"{field} is required (set it in the config file or by flag)")
    return Path(value)


# ---- synth ----


def run_synth(settings: Settings) -> Path:
    """生成合成面板、区域、病例、死亡与真值文件."""
    scenario = settings.synth.to_scenario()
    data = generate(scenario)
    fingerprint = _fingerprint("synth", settings, [])
    run_dir = prepare_run_dir(settings.output_dir, "synth", fingerprint)

    write_panel(run_dir / "panel.csv", data.panel)
    write_panel(run_dir / "search_daily.csv", data.daily_search)
    write_areas(run_dir / "areas.csv", data.areas)
    write_epi(run_dir / "cases.csv", data.cases)
    write_epi(run_dir / "mortality.csv", data.mortality)
    write_json(run_dir / "ground_truth.json", data.ground_truth)
    return run_dir


# ---- detect ----


def run_detect(settings: Settings) -> Path:
    """对每个相邻周对执行检测，写出检测结果与告警 CSV.

    单个周对的退化错误记录为警告并跳过；所有周对都失败时抛出最后一个错误.
    """
    panel_path = _require(settings, "panel_path")
    areas_path = _require(settings, "areas_path")
    panel = load_query_panel(panel_path)
    areas = load_areas(areas_path)
    cases = load_cases(settings.cases_path) if settings.cases_path else None
    panel = apply_suppression(panel, settings.min_area_users, settings.min_cell_users)

    weeks = set(panel.periods)
    pairs = [
        (w, w + timedelta(days=7))
        for w in panel.periods
        if w + timedelta(days=7) in weeks
        and panel.areas_present(w)
        and panel.areas_present(w + timedelta(days=7))
    ]
    if not pairs:
        raise NoAnalyzableWeeksError(f"no analyzable week pairs in {panel_path}")

    fingerprint = _fingerprint("detect", settings, [panel_path, areas_path, settings.cases_path])
    run_dir = prepare_run_dir(settings.output_dir, "detect", fingerprint)
    params = settings.detection_params()
    last_error: DegenerateDataError | None = None
    written = 0
    for pair in pairs:
        try:
            run = weekly_run(panel, areas, pair, cases=cases, params=params)
        except DegenerateDataError as e:
            logger.warning(
                "周对检测失败，已跳过",
                extra={"week": pair[1].isoformat(), "error": str(e)},
            )
            last_error = e
            continue
        write_run(run_dir, run)
        written += 1

    if written == 0 and last_error is not None:
        raise last_error
    logger.info("检测完成", extra={"week_pairs": written, "run_dir": str(run_dir)})
    return run_dir


# ---- evaluate ----


def _auc_rows(points: list[AucPoint]) -> list[tuple[int, Any, int, int]]:
    return [(p.lag, format_auc(p.auc), p.n_pos, p.n_neg) for p in points]


def _best(points: list[AucPoint]) -> dict[str, Any]:
    defined = [p for p in points if p.auc is not None]
    if not defined:
        return {"best_lag": None, "best_auc": None}
    # 并列时取最小滞后
    best = max(defined, key=lambda p: (p.auc, -p.lag))
    return {"best_lag": best.lag, "best_auc": best.auc}


def _coverage_keywords(runs: list[DetectionRun]) -> tuple[list[str], list[str]]:
    covered: dict[str, None] = {}
    over: dict[str, None] = {}
    for run in runs:
        covered.update(dict.fromkeys(run.counters.keyword_coverage))
        over.update(dict.fromkeys(run.counters.over_sd_by_keyword))
    return list(covered), list(over)


def _coverage_table(runs: list[DetectionRun]) -> tuple[list[tuple[Any, ...]], list[str]]:
    """每周覆盖计数，附各关键词的非零区域数与超阈区域数."""
    covered, over = _coverage_keywords(runs)
    columns = [
        *COVERAGE_COLUMNS,
        *(f"nonzero_{k}" for k in covered),
        *(f"over_2sd_{k}" for k in over),
    ]
    rows = [
        (
            run.week_next.isoformat(),
            run.counters.n_areas_modeled,
            run.counters.n_areas_with_data,
            run.counters.n_coverage_lost,
            run.counters.n_over_2sd,
            run.counters.n_case_rises_2_5x if run.counters.n_case_rises_2_5x is not None else "",
            len(run.alerts.alerts),
            *(run.counters.keyword_coverage.get(k, "") for k in covered),
            *(run.counters.over_sd_by_keyword.get(k, "") for k in over),
        )
        for run in runs
    ]
    return rows, columns


def _write_roc_curves(
    run_dir: Path, scores: Score, labels: JumpLabels, lags: tuple[int, ...]
) -> dict[str, list[tuple[float, float | None]]]:
    """写出组合信号在指定滞后下的 ROC 曲线，无定义的滞后跳过."""
    curves: dict[str, list[tuple[float, float | None]]] = {}
    for lag in lags:
        try:
            result = roc_auc(scores, labels, lag)
        except DegenerateLabelsError as e:
            logger.warning("ROC 曲线无定义，已跳过", extra={"lag": lag, "error": str(e)})
            continue
        write_table(run_dir / f"roc_cases_lag{lag}.csv", result.roc_points, ["fpr", "tpr"])
        curves[f"lag {lag}"] = [(fpr, tpr) for fpr, tpr in result.roc_points]
    return curves


def run_evaluate(settings: Settings) -> Path:
    """评估检测结果：覆盖计数、R² 曲线、滞后相关表与病例 / 死亡 AUC-滞后曲线."""
    runs = read_runs(settings.runs_dir)
    run_files = sorted(Path(settings.runs_dir or ".").glob("run_*.json"))
    search_path = settings.search_daily_path or settings.panel_path
    files: list[Path | None] = [
        *run_files,
        settings.cases_path,
        settings.mortality_path,
        search_path,
    ]
    fingerprint = _fingerprint("evaluate", settings, files)
    run_dir = prepare_run_dir(settings.output_dir, "evaluate", fingerprint)

    signals = ["composite", *settings.composite_keywords]
    scores = {name: collect_scores(runs, name) for name in signals}
    summary: dict[str, Any] = {
        "n_runs": len(runs),
        "first_week": runs[0].week_next.isoformat(),
        "last_week": runs[-1].week_next.isoformat(),
        "n_alerts": sum(len(r.alerts.alerts) for r in runs),
        "jump_rule": settings.jump_rule,
    }
    figures: dict[str, dict[str, list[tuple[float, float | None]]]] = {}
    roc_curves: dict[str, list[tuple[float, float | None]]] = {}

    coverage_rows, coverage_columns = _coverage_table(runs)
    write_table(run_dir / "coverage.csv", coverage_rows, coverage_columns)
    curve = mean_r2_curve(runs)
    write_table(
        run_dir / "r2_curve.csv",
        [(p.n_controls, p.mean_r2, p.n_models) for p in curve],
        ["n_controls", "mean_r2", "n_models"],
    )

    targets: list[tuple[str, Any, tuple[int, int], int]] = []
    if settings.cases_path:
        cases = load_cases(settings.cases_path)
        targets.append(("cases", cases.rolling_weekly(), settings.case_lag_days, 1))
        if search_path:
            search = (
                load_daily_search(search_path)
                if settings.search_daily_path
                else load_query_panel(search_path)
            )
            table = median_lag_table(
                search,
                cases,
                lag_range=settings.correlation_lag_days,
                window=settings.smoothing_window,
                min_overlap=settings.min_overlap_days,
            )
            write_table(
                run_dir / "lag_table.csv",
                [(r.keyword, r.median_correlation, r.median_lag_days) for r in table],
                ["keyword", "median_correlation", "median_lag_days"],
            )
            summary["lag_table_keywords"] = len(table)
        else:
            logger.warning("未提供搜索数据，跳过滞后相关表")
    if settings.mortality_path:
        mortality = load_mortality(settings.mortality_path)
        targets.append(("mortality", mortality, settings.mortality_lag_weeks, 7))

    for target, series, lag_range, unit_days in targets:
        labels = label_jumps(
            series,
            rule=settings.jump_rule,
            ratio=settings.ratio,
            sd_multiplier=settings.sd_multiplier,
            sd_population=settings.sd_population,
        )
        figures[target] = {}
        for name in signals:
            points = auc_vs_lag(scores[name], labels, lag_range, unit_days)
            if all(p.auc is None for p in points):
                logger.warning(
                    "所有滞后的 AUC 均无定义", extra={"target": target, "signal": name}
                )
            write_table(
                run_dir / f"auc_{target}_{name}.csv",
                _auc_rows(points),
                ["lag", "auc", "n_pos", "n_neg"],
            )
            best = _best(points)
            summary[f"{target}_{name}_best_lag"] = best["best_lag"]
            summary[f"{target}_{name}_best_auc"] = best["best_auc"]
            figures[target][name] = [(p.lag, p.auc) for p in points]
        if target == "cases" and settings.roc_lags_days:
            roc_curves = _write_roc_curves(
                run_dir, scores["composite"], labels, settings.roc_lags_days
            )

    write_json(run_dir / "summary.json", summary)

    if settings.plots:
        units = {"cases": "滞后（天）", "mortality": "滞后（周）"}
        for target, series_points in figures.items():
            svg = line_chart(f"AUC - {target}", units[target], "AUC", series_points, 0.5)
            (run_dir / f"auc_{target}.svg").write_text(svg, encoding="utf-8")
        if roc_curves:
            svg = line_chart("ROC - cases", "假阳性率", "真阳性率", roc_curves)
            (run_dir / "roc_cases.svg").write_text(svg, encoding="utf-8")
        if curve:
            svg = line_chart(
                "R² vs controls",
                "对照区域数",
                "平均 R²",
                {"mean_r2": [(p.n_controls, p.mean_r2) for p in curve]},
            )
            (run_dir / "r2_curve.svg").write_text(svg, encoding="utf-8")
        coverage = {
            "n_areas_with_data": [
                (float(i), float(r.counters.n_areas_with_data)) for i, r in enumerate(runs)
            ],
            "n_over_2sd": [(float(i), float(r.counters.n_over_2sd)) for i, r in enumerate(runs)],
        }
        covered, over = _coverage_keywords(runs)
        for keyword in covered:
            coverage[f"nonzero_{keyword}"] = [
                (float(i), float(r.counters.keyword_coverage.get(keyword, 0)))
                for i, r in enumerate(runs)
            ]
        for keyword in over:
            coverage[f"over_2sd_{keyword}"] = [
                (float(i), float(r.counters.over_sd_by_keyword.get(keyword, 0)))
                for i, r in enumerate(runs)
            ]
        svg = line_chart("Coverage", "周序号", "区域数", coverage)
        (run_dir / "coverage.svg").write_text(svg, encoding="utf-8")

    logger.info("评估完成", extra={"run_dir": str(run_dir)})
    return run_dir


# ---- report ----


def run_report(settings: Settings) -> Path:
    """渲染 HTML 报告."""
    runs = read_runs(settings.runs_dir)
    evaluation_dir = settings.evaluation_dir
    summary: dict[str, Any] = {}
    figures: list[tuple[str, str]] = []
    svg_files: list[Path] = []
    if evaluation_dir is not None and Path(evaluation_dir).is_dir():
        summary_path = Path(evaluation_dir) / "summary.json"
        if summary_path.is_file():
            summary = json.loads(summary_path.read_text(encoding="utf-8"))
        svg_files = sorted(Path(evaluation_dir).glob("*.svg"))
        figures = [(p.name, p.read_text(encoding="utf-8")) for p in svg_files]

    run_files = sorted(Path(settings.runs_dir or ".").glob("run_*.json"))
    files: list[Path | None] = [*run_files, *svg_files]
    fingerprint = _fingerprint("report", settings, files)
    run_dir = prepare_run_dir(settings.output_dir, "report", fingerprint)
    percentile = runs[0].alerts.percentile if runs else settings.alert_percentile
    html = render_report(runs, percentile, summary, figures)
    (run_dir / "report.html").write_text(html, encoding="utf-8")
    return run_dir


# ---- 命令行 ----


def _execute(
    ctx: click.Context, command: str, action: Callable[[Settings], Path], **overrides: Any
) -> None:
    """加载配置并执行命令；领域错误按类别映射为退出码."""
    options = ctx.obj or {}
    setup_logging(options.get("log_level") or "INFO")
    try:
        settings = load_settings(
            options.get("config_path"), log_level=options.get("log_level"), **overrides
        )
        setup_logging(settings.log_level)
        run_dir = action(settings)
    except SymwatchError as e:
        logger.error("命令执行失败", extra={"command": command, "error": str(e)})
        click.echo(f"error: {e}", err=True)
        ctx.exit(e.exit_code)
    except Exception as e:
        logger.error(
            "未处理的异常", extra={"command": command, "error": str(e)}, exc_info=True
        )
        click.echo(f"error: internal error: {e}", err=True)
        ctx.exit(EXIT_INPUT_ERROR)
    click.echo(str(run_dir))


def _path(value: str | None) -> Path | None:
    return Path(value) if value is not None else None


@click.group()
@click.option(
    "--config",
    "config_path",
    type=click.Path(dir_okay=False, path_type=Path),
    default=None,
    help="JSON 配置文件",
)
@click.option(
    "--log-level",
    type=click.Choice(["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"], case_sensitive=False),
    default=None,
    help="日志级别",
)
@click.pass_context
def cli(ctx: click.Context, config_path: Path | None, log_level: str | None) -> None:
    """基于搜索查询的区域疫情异常检测."""
    ctx.obj = {
        "config_path": config_path,
        "log_level": log_level.upper() if log_level else None,
    }


@cli.command()
@click.option("--seed", type=int, default=None, help="随机种子")
@click.option("--n-areas", type=int, default=None, help="区域数")
@click.option("--n-weeks", type=int, default=None, help="周数")
@click.option("--n-outbreaks", type=int, default=None, help="随机暴发事件数")
@click.option("--output-dir", type=str, default=None, help="输出根目录")
@click.pass_context
def synth(
    ctx: click.Context,
    seed: int | None,
    n_areas: int | None,
    n_weeks: int | None,
    n_outbreaks: int | None,
    output_dir: str | None,
) -> None:
    """生成合成数据."""
    block = {
        k: v
        for k, v in {
            "seed": seed,
            "n_areas": n_areas,
            "n_weeks": n_weeks,
            "n_outbreaks": n_outbreaks,
        }.items()
        if v is not None
    }
    _execute(ctx, "synth", run_synth, synth=block or None, output_dir=_path(output_dir))


@cli.command()
@click.option("--panel", "panel_path", type=str, default=None, help="周查询面板 CSV")
@click.option("--areas", "areas_path", type=str, default=None, help="区域 CSV")
@click.option("--cases", "cases_path", type=str, default=None, help="日病例 CSV")
@click.option("--output-dir", type=str, default=None, help="输出根目录")
@click.option("--max-controls", type=int, default=None, help="最多对照区域数")
@click.option("--min-distance-km", type=float, default=None, help="对照区域最小距离")
@click.option("--alert-percentile", type=float, default=None, help="告警百分位")
@click.option("--min-area-users", type=int, default=None, help="区域周用户数下限")
@click.option("--min-cell-users", type=int, default=None, help="单元格用户数下限")
@click.option("--max-workers", type=int, default=None, help="并行线程数")
@click.pass_context
def detect(
    ctx: click.Context,
    panel_path: str | None,
    areas_path: str | None,
    cases_path: str | None,
    output_dir: str | None,
    max_controls: int | None,
    min_distance_km: float | None,
    alert_percentile: float | None,
    min_area_users: int | None,
    min_cell_users: int | None,
    max_workers: int | None,
) -> None:
    """逐周检测异常并输出告警."""
    _execute(
        ctx,
        "detect",
        run_detect,
        panel_path=_path(panel_path),
        areas_path=_path(areas_path),
        cases_path=_path(cases_path),
        output_dir=_path(output_dir),
        max_controls=max_controls,
        min_distance_km=min_distance_km,
        alert_percentile=alert_percentile,
        min_area_users=min_area_users,
        min_cell_users=min_cell_users,
        max_workers=max_workers,
    )


@cli.command()
@click.option("--runs-dir", type=str, default=None, help="检测结果目录")
@click.option("--cases", "cases_path", type=str, default=None, help="日病例 CSV")
@click.option("--mortality", "mortality_path", type=str, default=None, help="周死亡 CSV")
@click.option("--panel", "panel_path", type=str, default=None, help="周查询面板 CSV")
@click.option("--search-daily", "search_daily_path", type=str, default=None, help="日查询面板 CSV")
@click.option("--output-dir", type=str, default=None, help="输出根目录")
@click.option(
    "--jump-rule", type=click.Choice(["ratio_rule", "sd_rule"]), default=None, help="跃升规则"
)
@click.option("--plots/--no-plots", default=None, help="是否输出 SVG 图")
@click.pass_context
def evaluate(
    ctx: click.Context,
    runs_dir: str | None,
    cases_path: str | None,
    mortality_path: str | None,
    panel_path: str | None,
    search_daily_path: str | None,
    output_dir: str | None,
    jump_rule: str | None,
    plots: bool | None,
) -> None:
    """评估检测结果."""
    _execute(
        ctx,
        "evaluate",
        run_evaluate,
        runs_dir=_path(runs_dir),
        cases_path=_path(cases_path),
        mortality_path=_path(mortality_path),
        panel_path=_path(panel_path),
        search_daily_path=_path(search_daily_path),
        output_dir=_path(output_dir),
        jump_rule=jump_rule,
        plots=plots,
    )


@cli.command()
@click.option("--runs-dir", type=str, default=None, help="检测结果目录")
@click.option("--evaluation-dir", type=str, default=None, help="评估结果目录")
@click.option("--output-dir", type=str, default=None, help="输出根目录")
@click.pass_context
def report(
    ctx: click.Context,
    runs_dir: str | None,
    evaluation_dir: str | None,
    output_dir: str | None,
) -> None:
    """渲染 HTML 报告."""
    _execute(
        ctx,
        "report",
        run_report,
        runs_dir=_path(runs_dir),
        evaluation_dir=_path(evaluation_dir),
        output_dir=_path(output_dir),
    )


if __name__ == "__main__":
    cli()
