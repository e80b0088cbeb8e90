"""Tables, ROC curve files and the hand-emitted SVG overlay."""

from __future__ import annotations

import csv
from pathlib import Path

from .experiment import RunResults
from .metrics import MetricInterval, roc_points, roc_thresholds
from .training import write_history

_SVG_COLORS = (
    "#1f77b4",
    "#ff7f0e",
    "#2ca02c",
    "#d62728",
    "#9467bd",
    "#8c564b",
    "#e377c2",
    "#7f7f7f",
    "#bcbd22",
    "#17becf",
)


def format_estimate(interval: MetricInterval) -> str:
    """Point estimate with its CI, e.g. ``0.983 [0.979 - 0.987]``."""
    return f"{interval.point:.3f} [{interval.ci_low:.3f} - {interval.ci_high:.3f}]"


def format_p_value(p: float) -> str:
    """p-value cell: values below 0.001 are truncated to ``<0.001``."""
    if p < 0.001:
        return "<0.001"
    return f"{p:.2g}"


def _table1_md(results: RunResults) -> str:
    lines = [
        "# Test-set performance",
        "",
        "| Model | AUROC | Accuracy | Sensitivity | Specificity |",
        "| --- | --- | --- | --- | --- |",
    ]
    for v in results.variants:
        r = v.report
        lines.append(
            f"| {v.name} | {format_estimate(r.auroc)} | {format_estimate(r.accuracy)} "
            f"| {format_estimate(r.sensitivity)} | {format_estimate(r.specificity)} |"
        )
    lines += [
        "",
        f"Decision threshold {results.variants[0].report.threshold:g}. "
        "Secondary rows below use each model's Youden-optimal threshold.",
        "",
        "| Model | Youden threshold | Accuracy | Sensitivity | Specificity |",
        "| --- | --- | --- | --- | --- |",
    ]
    for v in results.variants:
        r = v.youden_report
        lines.append(
            f"| {v.name} (youden) | {v.youden_threshold:.3f} | {format_estimate(r.accuracy)} "
            f"| {format_estimate(r.sensitivity)} | {format_estimate(r.specificity)} |"
        )
    return "\n".join(lines) + "\n"


def _write_table1_csv(results: RunResults, path: Path) -> None:
    columns = [
        "model",
        "roi",
        "method",
        "auroc",
        "auroc_lo",
        "auroc_hi",
        "accuracy",
        "accuracy_lo",
        "accuracy_hi",
        "sensitivity",
        "sensitivity_lo",
        "sensitivity_hi",
        "specificity",
        "specificity_lo",
        "specificity_hi",
        "n_pos",
        "n_neg",
        "threshold",
        "operating_point",
    ]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for v in results.variants:
            for report, policy, threshold in (
                (v.report, "default", v.report.threshold),
                (v.youden_report, "youden", v.youden_threshold),
            ):
                writer.writerow(
                    [
                        v.name,
                        v.request.kind.value,
                        v.request.method.value if v.request.method else "",
                        f"{report.auroc.point:.6f}",
                        f"{report.auroc.ci_low:.6f}",
                        f"{report.auroc.ci_high:.6f}",
                        f"{report.accuracy.point:.6f}",
                        f"{report.accuracy.ci_low:.6f}",
                        f"{report.accuracy.ci_high:.6f}",
                        f"{report.sensitivity.point:.6f}",
                        f"{report.sensitivity.ci_low:.6f}",
                        f"{report.sensitivity.ci_high:.6f}",
                        f"{report.specificity.point:.6f}",
                        f"{report.specificity.ci_low:.6f}",
                        f"{report.specificity.ci_high:.6f}",
                        report.n_pos,
                        report.n_neg,
                        f"{threshold:.6f}",
                        policy,
                    ]
                )


def _write_table2_csv(results: RunResults, path: Path) -> None:
    names = [v.name for v in results.variants]
    p_by_pair = {(a, b): r.p_value for a, b, r in results.comparisons}
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([""] + names)
        for i, row_name in enumerate(names[:-1]):
            row = [row_name]
            for j, col_name in enumerate(names):
                row.append(format_p_value(p_by_pair[(row_name, col_name)]) if j > i else "")
            writer.writerow(row)


def _write_roc_csv(score_set, path: Path) -> None:
    pts = roc_points(score_set)
    thresholds = roc_thresholds(score_set)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["fpr", "tpr", "threshold"])
        for (fpr, tpr), t in zip(pts, thresholds):
            writer.writerow([f"{fpr:.6f}", f"{tpr:.6f}", "inf" if t == float("inf") else f"{t:.6f}"])


def _roc_svg(results: RunResults) -> str:
    width, height, margin = 520, 520, 60
    plot = width - 2 * margin

    def sx(x: float) -> float:
        return margin + x * plot

    def sy(y: float) -> float:
        return height - margin - y * plot

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<rect x="{margin}" y="{margin}" width="{plot}" height="{plot}" '
        'fill="none" stroke="black" stroke-width="1"/>',
        f'<line x1="{sx(0):.1f}" y1="{sy(0):.1f}" x2="{sx(1):.1f}" y2="{sy(1):.1f}" '
        'stroke="#999999" stroke-dasharray="5,5"/>',
        f'<text x="{width / 2:.0f}" y="{height - 15}" text-anchor="middle" '
        'font-family="sans-serif" font-size="14">False positive rate</text>',
        f'<text x="18" y="{height / 2:.0f}" text-anchor="middle" font-family="sans-serif" '
        f'font-size="14" transform="rotate(-90 18 {height / 2:.0f})">True positive rate</text>',
    ]
    for frac in (0.0, 0.25, 0.5, 0.75, 1.0):
        parts.append(
            f'<text x="{sx(frac):.1f}" y="{height - margin + 20}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="11">{frac:g}</text>'
        )
        parts.append(
            f'<text x="{margin - 8}" y="{sy(frac) + 4:.1f}" text-anchor="end" '
            f'font-family="sans-serif" font-size="11">{frac:g}</text>'
        )
    legend_y = margin + 16
    for k, v in enumerate(results.variants):
        color = _SVG_COLORS[k % len(_SVG_COLORS)]
        pts = roc_points(v.scores)
        coords = " ".join(f"{sx(f):.2f},{sy(t):.2f}" for f, t in pts)
        parts.append(
            f'<polyline points="{coords}" fill="none" stroke="{color}" stroke-width="1.5"/>'
        )
        parts.append(
            f'<line x1="{sx(0.55):.1f}" y1="{legend_y}" x2="{sx(0.55) + 24:.1f}" y2="{legend_y}" '
            f'stroke="{color}" stroke-width="2"/>'
        )
        parts.append(
            f'<text x="{sx(0.55) + 30:.1f}" y="{legend_y + 4}" font-family="sans-serif" '
            f'font-size="11">{v.name} (AUROC {v.report.auroc.point:.3f})</text>'
        )
        legend_y += 16
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def emit_report(results: RunResults, output_dir: str | Path) -> list[Path]:
    """Write table1.md/.csv, table2.csv, per-variant ROC CSVs, roc.svg and
    training-history CSVs. Returns the emitted paths."""
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    emitted: list[Path] = []

    path = out / "table1.md"
    path.write_text(_table1_md(results), encoding="utf-8")
    emitted.append(path)

    path = out / "table1.csv"
    _write_table1_csv(results, path)
    emitted.append(path)

    path = out / "table2.csv"
    _write_table2_csv(results, path)
    emitted.append(path)

    for v in results.variants:
        path = out / f"roc_{v.name}.csv"
        _write_roc_csv(v.scores, path)
        emitted.append(path)
        path = write_history(v.history, out / f"history_{v.name}.csv")
        emitted.append(path)

    path = out / "roc.svg"
    path.write_text(_roc_svg(results), encoding="utf-8")
    emitted.append(path)
    return emitted
