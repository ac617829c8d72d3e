"""Comparison-report emission: delimited tables, JSON, SVG polylines, and
matplotlib figures rendered alongside the delimited output.

The CSV/JSON schemas carry a report_version field; the SVG and PNG figures
are presentational only.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .metrics import (MetricsReport, REPORT_VERSION, ScoredSet, pr_curve,
                      roc_curve)

TABLE_COLUMNS = ("Model", "Acc.", "AUC", "Prec.", "Recall", "F1", "Thresh.",
                 "Train time (s)", "#Params")


def _table_row(r: MetricsReport) -> list:
    return [r.model, f"{r.accuracy:.4f}", f"{r.auc:.4f}", f"{r.precision:.4f}",
            f"{r.recall:.4f}", f"{r.f1:.4f}", f"{r.threshold:.4f}",
            f"{r.train_time_s:.1f}", r.trainable_params + r.frozen_params]


def write_comparison_csv(reports: list[MetricsReport], path: Path) -> None:
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TABLE_COLUMNS)
        for r in reports:
            writer.writerow(_table_row(r))


def write_comparison_json(reports: list[MetricsReport], path: Path) -> None:
    payload = {
        "report_version": REPORT_VERSION,
        "models": [r.to_dict() for r in reports],
    }
    path.write_text(json.dumps(payload, indent=2))


def read_comparison_json(path: Path) -> list[MetricsReport]:
    payload = json.loads(path.read_text())
    return [MetricsReport.from_dict(d) for d in payload["models"]]


def write_curve_csv(curves: dict[str, tuple[np.ndarray, np.ndarray]],
                    path: Path, x_name: str, y_name: str) -> None:
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["model", x_name, y_name])
        for model, (xs, ys) in curves.items():
            for x, y in zip(xs, ys):
                writer.writerow([model, f"{x:.6f}", f"{y:.6f}"])


def write_curve_svg(curves: dict[str, tuple[np.ndarray, np.ndarray]],
                    path: Path, title: str, width: int = 480,
                    height: int = 480) -> None:
    """Minimal standalone SVG: one polyline per model on a unit square."""
    margin = 40
    span_w, span_h = width - 2 * margin, height - 2 * margin
    palette = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
               "#8c564b", "#e377c2")
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
        f'height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect x="{margin}" y="{margin}" width="{span_w}" height="{span_h}" '
        'fill="none" stroke="#888"/>',
        f'<text x="{width // 2}" y="{margin - 12}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="14">{title}</text>',
    ]
    for i, (model, (xs, ys)) in enumerate(curves.items()):
        pts = " ".join(
            f"{margin + x * span_w:.1f},{height - margin - y * span_h:.1f}"
            for x, y in zip(xs, ys))
        color = palette[i % len(palette)]
        parts.append(f'<polyline fill="none" stroke="{color}" '
                     f'stroke-width="1.5" points="{pts}"/>')
        parts.append(f'<text x="{margin + 6}" y="{margin + 16 + 14 * i}" '
                     f'fill="{color}" font-family="sans-serif" '
                     f'font-size="12">{model}</text>')
    parts.append("</svg>")
    path.write_text("\n".join(parts))


def plot_curves(curves: dict[str, tuple[np.ndarray, np.ndarray]], path: Path,
                title: str, x_label: str, y_label: str) -> None:
    fig, ax = plt.subplots(figsize=(5, 5))
    for model, (xs, ys) in curves.items():
        ax.plot(xs, ys, label=model, linewidth=1.5)
    ax.set_xlabel(x_label)
    ax.set_ylabel(y_label)
    ax.set_title(title)
    ax.set_xlim(0, 1)
    ax.set_ylim(0, 1.02)
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_efficiency(reports: list[MetricsReport], path: Path) -> None:
    """Trainable-parameter budget (log scale) and wall-time bars."""
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 4))
    names = [r.model for r in reports]
    ax1.bar(names, [max(r.trainable_params, 1) for r in reports],
            color="#1f77b4")
    ax1.set_yscale("log")
    ax1.set_ylabel("trainable parameters")
    ax1.tick_params(axis="x", rotation=30)
    ax2.bar(names, [r.train_time_s for r in reports], color="#ff7f0e")
    ax2.set_ylabel("train time (s)")
    ax2.tick_params(axis="x", rotation=30)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def write_efficiency_csv(reports: list[MetricsReport], path: Path) -> None:
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["model", "trainable_params", "frozen_params",
                         "train_time_s"])
        for r in reports:
            writer.writerow([r.model, r.trainable_params, r.frozen_params,
                             f"{r.train_time_s:.3f}"])


def emit_report(reports: list[MetricsReport], out_dir: str | Path,
                scored: dict[str, ScoredSet] | None = None) -> list[Path]:
    """Write the full comparison artifact set; returns the created paths."""
    if not reports:
        raise ValueError("emit_report requires at least one report")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    created = []

    path = out / "comparison.csv"
    write_comparison_csv(reports, path)
    created.append(path)
    path = out / "comparison.json"
    write_comparison_json(reports, path)
    created.append(path)
    path = out / "efficiency.csv"
    write_efficiency_csv(reports, path)
    created.append(path)
    path = out / "efficiency.png"
    plot_efficiency(reports, path)
    created.append(path)

    if scored:
        rocs = {name: roc_curve(s) for name, s in scored.items()}
        prs = {name: pr_curve(s) for name, s in scored.items()}
        for stem, curves, labels in (
                ("roc", rocs, ("fpr", "tpr")),
                ("pr", prs, ("recall", "precision"))):
            path = out / f"{stem}_points.csv"
            write_curve_csv(curves, path, *labels)
            created.append(path)
            path = out / f"{stem}.svg"
            write_curve_svg(curves, path, stem.upper())
            created.append(path)
            path = out / f"{stem}.png"
            plot_curves(curves, path, stem.upper(), *labels)
            created.append(path)
    return created
