"""Figure rendering for run reports.

All output goes to files via the Agg backend; nothing here opens a window.
Figures are a convenience view of the same payload the reports carry, never
an extra source of truth.
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Optional, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
from matplotlib.patches import Patch

from .ban import GoalReport, render_formula
from .checker import Event, SearchStats
from .terms import format_term


def _principals_in(trace: Sequence[Event]) -> list:
    seen: list = []
    for e in trace:
        for name in (e.actor if e.kind == "send" else e.apparent, e.receiver, e.actor):
            if name not in seen:
                seen.append(name)
    return seen


def message_sequence_chart(trace: Sequence[Event], path, title: str = "") -> None:
    """Lifelines and arrows, one row per event; dashed arrows are deliveries
    forged by the attacker under another name."""
    principals = _principals_in(trace)
    cols = {p: i for i, p in enumerate(principals)}
    height = max(len(trace), 1)
    fig, ax = plt.subplots(figsize=(2.2 * max(len(principals), 2), 0.85 * height + 1.4))
    for p, x in cols.items():
        ax.plot([x, x], [0.5, -height + 0.25], color="#999999", linewidth=1, zorder=1)
        ax.text(x, 0.8, p, ha="center", va="bottom", fontsize=12, fontweight="bold")
    for row, e in enumerate(trace):
        y = -row - 0.25
        src = cols[e.actor]
        dst = cols[e.receiver]
        forged = e.kind == "deliver" and e.apparent != e.actor
        color = "#b03030" if forged else "#20507a"
        ax.annotate(
            "", xy=(dst, y), xytext=(src, y),
            arrowprops={
                "arrowstyle": "->", "color": color, "linewidth": 1.4,
                "linestyle": "dashed" if forged else "solid",
            },
            zorder=2,
        )
        shown = f"{e.actor} as {e.apparent}" if forged else e.actor
        label = f"{e.label}) {format_term(e.message)}"
        if forged:
            label += f"   [{shown}]"
        ax.text((src + dst) / 2, y + 0.12, label, ha="center", va="bottom", fontsize=8)
    ax.set_xlim(-0.6, len(principals) - 0.4)
    ax.set_ylim(-height - 0.2, 1.2)
    ax.axis("off")
    if title:
        ax.set_title(title, fontsize=11)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def search_levels_figure(stats: SearchStats, path, title: str = "") -> None:
    depths = [lv.depth for lv in stats.levels]
    new_states = [lv.new_states for lv in stats.levels]
    frontier = [lv.frontier for lv in stats.levels]
    fig, ax = plt.subplots(figsize=(7, 4))
    if depths:
        ax.plot(depths, new_states, marker="o", label="new states")
        ax.plot(depths, frontier, marker="s", label="frontier kept")
        ax.set_xticks(depths)
    ax.set_xlabel("trace length")
    ax.set_ylabel("states")
    ax.grid(True, linewidth=0.4, alpha=0.5)
    ax.legend()
    ax.set_title(title or f"search levels ({stats.states_explored} states explored)")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def search_levels_csv(stats: SearchStats, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["depth", "new_states", "frontier"])
        for lv in stats.levels:
            writer.writerow([lv.depth, lv.new_states, lv.frontier])


def ban_goals_figure(report: GoalReport, path, title: str = "") -> None:
    labels = [render_formula(s.goal) for s in report.statuses]
    colors = []
    for s in report.statuses:
        if not s.derivable:
            colors.append("#b03030")
        elif s.flagged:
            colors.append("#d58a26")
        else:
            colors.append("#3a7d44")
    fig, ax = plt.subplots(figsize=(8, 0.6 * max(len(labels), 1) + 1.6))
    y = list(range(len(labels)))[::-1]
    ax.barh(y, [1] * len(labels), color=colors, height=0.55)
    for yi, label in zip(y, labels):
        ax.text(0.02, yi, label, va="center", ha="left", fontsize=10, color="white")
    ax.set_xlim(0, 1)
    ax.set_yticks([])
    ax.set_xticks([])
    ax.legend(
        handles=[
            Patch(color="#3a7d44", label="derivable"),
            Patch(color="#d58a26", label="derivable via unjustified assumption"),
            Patch(color="#b03030", label="not derivable"),
        ],
        loc="lower right", fontsize=8,
    )
    ax.set_title(title or "belief goals")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_figures(
    outdir,
    trace: Optional[Sequence[Event]] = None,
    stats: Optional[SearchStats] = None,
    goal_report: Optional[GoalReport] = None,
    title: str = "",
) -> list:
    """Write whichever figures the available data supports; returns paths."""
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    if trace:
        p = out / "trace_msc.png"
        message_sequence_chart(trace, p, title=title)
        written.append(str(p))
    if stats is not None:
        p = out / "search_levels.png"
        search_levels_figure(stats, p)
        written.append(str(p))
        c = out / "search_levels.csv"
        search_levels_csv(stats, c)
        written.append(str(c))
    if goal_report is not None:
        p = out / "ban_goals.png"
        ban_goals_figure(goal_report, p, title=title)
        written.append(str(p))
    return written
