"""Render experiment figures from the simulator's CSV artifacts.

Four figure kinds, all reading only the documented CSV schemas:

* ``effect-series``  - daily play-count effect (test/control - 1)
* ``bucket-curves``  - per-activity-bucket metric curves over the shaded
                       user-population histogram (control group)
* ``four-panel``     - effect time series for the four exploration metrics,
                       panels ordered EI, TD, IU, TE
* ``engagement``     - loop-rate and skip-rate effects

Rendering is deterministic: identical inputs give byte-identical images.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

FIGURE_KINDS = ("effect-series", "bucket-curves", "four-panel", "engagement")

PANEL_METRICS = ("ei", "td", "iu", "te")
PANEL_TITLES = {
    "ei": "exploration inefficiency",
    "td": "diversity (# topics)",
    "iu": "interest uncertainty",
    "te": "topic excellence",
}


class RenderError(ValueError):
    """Raised for missing files, missing columns, or empty inputs."""


@dataclass(frozen=True)
class FigureSpec:
    """One render request: where the CSVs live, what to draw, where to
    write it, and the day index where phase 2 starts."""

    kind: str
    in_dir: Path
    out_path: Path
    phase_boundary: int | None = None

    def __post_init__(self) -> None:
        if self.kind not in FIGURE_KINDS:
            raise RenderError(
                f"unknown figure kind {self.kind!r}; expected one of "
                f"{', '.join(FIGURE_KINDS)}")


def _read_csv(path: Path, required: tuple[str, ...]) -> list[dict]:
    if not path.exists():
        raise RenderError(f"input file not found: {path}")
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for column in required:
            if column not in header:
                raise RenderError(f"{path.name}: missing column {column!r}")
        rows = list(reader)
    if not rows:
        raise RenderError(f"{path.name}: no data rows")
    return rows


def _effect_series(rows: list[dict], metric: str) -> tuple[list[int], list[float]]:
    days, values = [], []
    for row in rows:
        if row["metric"] == metric:
            days.append(int(row["day"]))
            values.append(float(row["value"]))
    order = sorted(range(len(days)), key=days.__getitem__)
    return [days[i] for i in order], [values[i] for i in order]


def _phase_boundary(rows: list[dict], override: int | None) -> int | None:
    if override is not None:
        return override
    phase2_days = [int(r["day"]) for r in rows if r.get("phase") == "2"]
    return min(phase2_days) if phase2_days else None


def _draw_boundary(ax, boundary: int | None) -> None:
    if boundary is not None:
        ax.axvline(boundary - 0.5, color="grey", linestyle="--", linewidth=1)


def _render_effect_series(spec: FigureSpec):
    rows = _read_csv(spec.in_dir / "effects.csv",
                     ("day", "phase", "metric", "value"))
    days, values = _effect_series(rows, "plays")
    if not days:
        raise RenderError("effects.csv: no rows for metric 'plays'")
    fig, ax = plt.subplots(figsize=(7, 3.5))
    ax.plot(days, values, color="tab:blue", linewidth=1.5)
    ax.axhline(0.0, color="black", linewidth=0.8)
    _draw_boundary(ax, _phase_boundary(rows, spec.phase_boundary))
    ax.set_xlabel("day")
    ax.set_ylabel("plays: test/control - 1")
    ax.set_title("Effect on play count")
    return fig


def _render_four_panel(spec: FigureSpec):
    rows = _read_csv(spec.in_dir / "effects.csv",
                     ("day", "phase", "metric", "value"))
    boundary = _phase_boundary(rows, spec.phase_boundary)
    fig, axes = plt.subplots(2, 2, figsize=(8, 6))
    for ax, metric in zip(axes.ravel(), PANEL_METRICS):
        days, values = _effect_series(rows, metric)
        if not days:
            raise RenderError(f"effects.csv: no rows for metric {metric!r}")
        ax.plot(days, values, color="tab:blue", linewidth=1.2)
        ax.axhline(0.0, color="black", linewidth=0.8)
        _draw_boundary(ax, boundary)
        ax.set_title(PANEL_TITLES[metric], fontsize=10)
        ax.set_xlabel("day", fontsize=9)
    fig.suptitle("Effect on exploration efficiency (test/control - 1)")
    fig.tight_layout()
    return fig


def _render_engagement(spec: FigureSpec):
    rows = _read_csv(spec.in_dir / "effects.csv",
                     ("day", "phase", "metric", "value"))
    boundary = _phase_boundary(rows, spec.phase_boundary)
    fig, axes = plt.subplots(1, 2, figsize=(8, 3.2))
    for ax, (metric, title) in zip(
            axes, [("loop_rate", "loop rate"), ("skip_rate", "skip rate")]):
        days, values = _effect_series(rows, metric)
        if not days:
            raise RenderError(f"effects.csv: no rows for metric {metric!r}")
        ax.plot(days, values, color="tab:blue", linewidth=1.2)
        ax.axhline(0.0, color="black", linewidth=0.8)
        _draw_boundary(ax, boundary)
        ax.set_title(title, fontsize=10)
        ax.set_xlabel("day", fontsize=9)
    fig.suptitle("Effect on video engagement (test/control - 1)")
    fig.tight_layout()
    return fig


def _render_bucket_curves(spec: FigureSpec):
    rows = _read_csv(spec.in_dir / "buckets.csv",
                     ("bucket", "metric", "value", "users"))
    buckets = sorted({int(r["bucket"]) for r in rows})
    users = {int(r["bucket"]): int(r["users"]) for r in rows}
    fig, axes = plt.subplots(2, 2, figsize=(8, 6))
    for ax, metric in zip(axes.ravel(), PANEL_METRICS):
        series = {int(r["bucket"]): float(r["value"])
                  for r in rows if r["metric"] == metric}
        if not series:
            raise RenderError(f"buckets.csv: no rows for metric {metric!r}")
        xs = [b for b in buckets if not math.isnan(series.get(b, math.nan))]
        ys = [series[b] for b in xs]
        pop_ax = ax.twinx()
        pop_ax.bar(buckets, [users[b] for b in buckets], width=1.0,
                   color="lightsteelblue", alpha=0.45, zorder=0)
        pop_ax.set_yticks([])
        ax.plot(xs, ys, color="tab:blue", linewidth=1.4, marker="o",
                markersize=3, zorder=3)
        ax.set_title(PANEL_TITLES[metric], fontsize=10)
        ax.set_xlabel("activity bucket", fontsize=9)
        ax.set_zorder(pop_ax.get_zorder() + 1)
        ax.patch.set_visible(False)
    fig.suptitle("Exploration efficiency by user activity (control)")
    fig.tight_layout()
    return fig


_RENDERERS = {
    "effect-series": _render_effect_series,
    "bucket-curves": _render_bucket_curves,
    "four-panel": _render_four_panel,
    "engagement": _render_engagement,
}


def render(spec: FigureSpec) -> Path:
    """Render the requested figure; returns the written image path.

    Never writes a file when the inputs are missing or empty.
    """
    fig = _RENDERERS[spec.kind](spec)
    try:
        spec.out_path.parent.mkdir(parents=True, exist_ok=True)
        fig.savefig(spec.out_path, dpi=120, metadata={"Software": "banditplots"})
    finally:
        plt.close(fig)
    return spec.out_path
