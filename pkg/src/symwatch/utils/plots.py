"""SVG 图表与 HTML 报告渲染（Jinja2 模板）."""

from dataclasses import dataclass
from typing import Any, Mapping, Sequence

import numpy as np
from jinja2 import Environment, PackageLoader, StrictUndefined

WIDTH = 640
HEIGHT = 360
MARGIN = {"left": 56, "right": 16, "top": 32, "bottom": 44}
PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"]
N_TICKS = 5

_env = Environment(
    loader=PackageLoader("symwatch", "templates"),
    autoescape=True,
    trim_blocks=True,
    lstrip_blocks=True,
    keep_trailing_newline=True,
    undefined=StrictUndefined,
)

Point = tuple[float, float | None]


@dataclass(frozen=True)
class _Axis:
    lo: float
    hi: float
    start: float
    end: float

    def __call__(self, value: float) -> float:
        scale = (self.end - self.start) / (self.hi - self.lo)
        return round(self.start + (value - self.lo) * scale, 2)

    def ticks(self) -> list[dict[str, Any]]:
        return [
            {"pos": self(v), "label": f"{v:.3g}"} for v in np.linspace(self.lo, self.hi, N_TICKS)
        ]


def _span(values: list[float]) -> tuple[float, float]:
    lo, hi = min(values), max(values)
    if lo == hi:
        return lo - 0.5, hi + 0.5
    return lo, hi


def line_chart(
    title: str,
    x_label: str,
    y_label: str,
    series: Mapping[str, Sequence[Point]],
    reference: float | None = None,
) -> str:
    """渲染折线图；y 为 None 的点断开折线.

    Args:
        title: 标题
        x_label: x 轴标签
        y_label: y 轴标签
        series: 名称 → (x, y) 点列
        reference: 水平参考线（如 AUC 0.5）

    Returns:
        SVG 文本
    """
    xs = [x for points in series.values() for x, _ in points]
    ys = [y for points in series.values() for _, y in points if y is not None]
    if reference is not None:
        ys.append(reference)
    plot = {
        "left": MARGIN["left"],
        "right": WIDTH - MARGIN["right"],
        "top": MARGIN["top"],
        "bottom": HEIGHT - MARGIN["bottom"],
    }
    x_axis = _Axis(*_span(xs or [0.0]), plot["left"], plot["right"])
    y_axis = _Axis(*_span(ys or [0.0]), plot["bottom"], plot["top"])

    lines = []
    for i, (name, points) in enumerate(series.items()):
        segments: list[str] = []
        current: list[str] = []
        for x, y in points:
            if y is None:
                if current:
                    segments.append(" ".join(current))
                current = []
                continue
            current.append(f"{x_axis(x)},{y_axis(y)}")
        if current:
            segments.append(" ".join(current))
        lines.append({"name": name, "color": PALETTE[i % len(PALETTE)], "segments": segments})

    return _env.get_template("line_chart.svg.j2").render(
        width=WIDTH,
        height=HEIGHT,
        title=title,
        x_label=x_label,
        y_label=y_label,
        plot=plot,
        x_ticks=x_axis.ticks(),
        y_ticks=y_axis.ticks(),
        reference=y_axis(reference) if reference is not None else None,
        lines=lines,
    )


def render_report(
    runs: Sequence[Any],
    percentile: float,
    summary: Mapping[str, Any] | None = None,
    figures: Sequence[tuple[str, str]] = (),
    title: str = "搜索查询疫情异常检测报告",
) -> str:
    """渲染 HTML 报告：覆盖计数、每周告警、评估摘要与图表."""
    return _env.get_template("report.html.j2").render(
        title=title,
        runs=runs,
        percentile=percentile,
        summary=dict(summary or {}),
        figures=list(figures),
    )
