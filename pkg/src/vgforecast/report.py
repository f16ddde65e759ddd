"""Delimited outputs and matplotlib figures for evaluation and backtests.

Every curve and metric table is written as plain CSV next to a rendered
PNG so results can be inspected without rerunning anything.  Float
formatting uses round-trip reprs to keep reruns byte-identical.
"""

from __future__ import annotations

import datetime as dt
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .backtest import DistributionReport, NetValueCurve  # noqa: E402

METRICS_HEADER = ("period,n,accuracy,precision,recall,f1,"
                  "strategy_return,baseline_return")


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return repr(x)
    return str(x)


def write_nv_csv(path, curve: NetValueCurve) -> None:
    """date,net_value rows; an inception row pins the unit start value."""
    lines = ["date,net_value"]
    inception = curve.dates[0] - dt.timedelta(days=1) if curve.dates else None
    if inception is not None:
        lines.append(f"{inception.isoformat()},{_fmt(float(curve.values[0]))}")
    for day, value in zip(curve.dates, curve.values[1:]):
        lines.append(f"{day.isoformat()},{_fmt(float(value))}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_metrics_summary(path, rows: list[dict]) -> None:
    """One row per split/period with classification and return columns."""
    lines = [METRICS_HEADER]
    for row in rows:
        lines.append(",".join(_fmt(row.get(col)) for col in
                              METRICS_HEADER.split(",")))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def plot_nv_curves(path, curves: dict[str, NetValueCurve], title: str) -> None:
    fig, ax = plt.subplots(figsize=(9, 5))
    for name, curve in curves.items():
        xs = [curve.dates[0] - dt.timedelta(days=1), *curve.dates]
        ax.plot(xs, curve.values, label=name, linewidth=1.4)
    ax.set_title(title)
    ax.set_xlabel("date")
    ax.set_ylabel("net value")
    ax.legend()
    ax.grid(alpha=0.3)
    fig.autofmt_xdate()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_ci_distributions(path, report: DistributionReport) -> None:
    n = max(1, len(report.channels))
    cols = 3
    rows = (n + cols - 1) // cols
    fig, axes = plt.subplots(rows, cols, figsize=(4.2 * cols, 3.2 * rows),
                             squeeze=False)
    for i, chd in enumerate(report.channels):
        ax = axes[i // cols][i % cols]
        centers = (chd.bin_edges[:-1] + chd.bin_edges[1:]) / 2
        width = (chd.bin_edges[1] - chd.bin_edges[0]) * 0.45
        ax.bar(centers - width / 2, chd.rise_counts, width=width,
               label="rise", color="tab:red", alpha=0.7)
        ax.bar(centers + width / 2, chd.fall_counts, width=width,
               label="fall", color="tab:green", alpha=0.7)
        ax.set_title(f"{chd.channel}  (KS={chd.statistic:.3f}, p={chd.p_value:.2e})",
                     fontsize=9)
        ax.legend(fontsize=7)
    for j in range(len(report.channels), rows * cols):
        axes[j // cols][j % cols].axis("off")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def write_ci_report_csv(path, report: DistributionReport) -> None:
    lines = ["channel,ks_statistic,p_value,n_rise,n_fall"]
    for chd in report.channels:
        lines.append(
            f"{chd.channel},{_fmt(chd.statistic)},{_fmt(chd.p_value)},"
            f"{chd.rise.size},{chd.fall.size}"
        )
    for name in report.skipped:
        lines.append(f"{name},,,0,0")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_history(path, history) -> None:
    lines = ["epoch train_loss val_loss val_acc"]
    for row in history:
        lines.append(f"{row.epoch} {_fmt(row.train_loss)} {_fmt(row.val_loss)} "
                     f"{_fmt(row.val_acc)}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_history(path) -> list[tuple[int, float, float, float]]:
    rows = []
    for line in Path(path).read_text(encoding="utf-8").splitlines()[1:]:
        epoch, tl, vl, va = line.split()
        rows.append((int(epoch), float(tl), float(vl), float(va)))
    return rows
