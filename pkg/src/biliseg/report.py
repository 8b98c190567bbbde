"""Evaluation report emission (JSON, CSV, Markdown).

Summary tables carry one row per segmentation method with the fixed columns
``method, DSC, HD_mm, RVD, outliers, false_communicating_IHDs,
false_non_communicating_IHDs``. Overlap/distance cells are printed with three
decimals, count cells as mean with one decimal and spread with two
("0.819 ±0.057", "6.2 ±3.86"). Emission is deterministic: identical inputs
produce byte-identical files.
"""
from __future__ import annotations

import csv
import io
import json

from .errors import ConfigError
from .metrics import MetricsReport
from ._util import atomic_write_text

REPORT_COLUMNS = (
    "method",
    "DSC",
    "HD_mm",
    "RVD",
    "outliers",
    "false_communicating_IHDs",
    "false_non_communicating_IHDs",
)
_COUNT_COLUMNS = frozenset(REPORT_COLUMNS[4:])
FORMATS = ("json", "csv", "markdown")


def format_cell(column: str, value) -> str:
    """Render one table cell. ``value`` is a scalar or a (mean, std) pair."""
    if isinstance(value, tuple):
        mean, std = value
        if column in _COUNT_COLUMNS:
            return f"{mean:.1f} ±{std:.2f}"
        return f"{mean:.3f} ±{std:.3f}"
    if column in _COUNT_COLUMNS:
        return str(int(value))
    return f"{value:.3f}"


def metrics_to_dict(report: MetricsReport) -> dict:
    return {
        "dsc": report.dsc,
        "hd_mm": report.hd_mm,
        "hd_directed_pred_to_gt": report.hd_directed_pred_to_gt,
        "hd_directed_gt_to_pred": report.hd_directed_gt_to_pred,
        "rvd": report.rvd,
        "outliers": report.outliers,
        "missed_components": report.missed_components,
        "false_communicating": report.false_communicating,
        "false_non_communicating": report.false_non_communicating,
    }


def _report_row(report: MetricsReport, method: str) -> dict:
    return {
        "method": method,
        "DSC": report.dsc,
        "HD_mm": report.hd_mm,
        "RVD": report.rvd,
        "outliers": report.outliers,
        "false_communicating_IHDs": report.false_communicating,
        "false_non_communicating_IHDs": report.false_non_communicating,
    }


def _render_rows(rows) -> list[dict]:
    rendered = []
    for row in rows:
        missing = [c for c in REPORT_COLUMNS if c not in row]
        if missing:
            raise ConfigError(f"summary row is missing column(s) {missing}")
        out = {"method": str(row["method"])}
        for col in REPORT_COLUMNS[1:]:
            out[col] = format_cell(col, row[col])
        rendered.append(out)
    return rendered


def _anova_row(anova) -> dict:
    row = {"method": "ANOVA p-value"}
    for col in REPORT_COLUMNS[1:]:
        res = anova.get(col)
        if res is None:
            row[col] = ""
        else:
            row[col] = f"{res.p_value:.6f}" + ("*" if res.significant else "")
    return row


def write_report(report, fmt: str, path, anova=None, method: str = "") -> None:
    """Write a single per-case report or a summary table.

    ``report`` is either a MetricsReport (full numeric dump in JSON, a single
    table row otherwise) or a list of summary rows, each a mapping from the
    report columns to scalars or (mean, std) pairs. ``anova`` optionally maps
    metric columns to AnovaResult; significant p-values gain a ``*``.
    """
    if fmt not in FORMATS:
        raise ConfigError(f"unknown report format {fmt!r}, expected one of {FORMATS}")

    if isinstance(report, MetricsReport):
        if fmt == "json":
            atomic_write_text(path, json.dumps(metrics_to_dict(report), indent=2) + "\n")
            return
        rows = _render_rows([_report_row(report, method)])
    else:
        rows = _render_rows(list(report))
        if anova:
            rows.append(_anova_row(anova))

    if fmt == "json":
        doc = {"columns": list(REPORT_COLUMNS), "rows": rows}
        if anova:
            doc["anova"] = {
                col: None if res is None else {
                    "f_stat": res.f_stat,
                    "df_between": res.df_between,
                    "df_within": res.df_within,
                    "p_value": res.p_value,
                    "significant": res.significant,
                }
                for col, res in anova.items()
            }
        atomic_write_text(path, json.dumps(doc, indent=2) + "\n")
    elif fmt == "csv":
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=REPORT_COLUMNS, lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
        atomic_write_text(path, buf.getvalue())
    else:  # markdown
        lines = [
            "| " + " | ".join(REPORT_COLUMNS) + " |",
            "| " + " | ".join("---" for _ in REPORT_COLUMNS) + " |",
        ]
        for row in rows:
            lines.append("| " + " | ".join(str(row[c]) for c in REPORT_COLUMNS) + " |")
        if anova:
            lines.append("")
            lines.append("One-way ANOVA across methods (* marks p < 0.05):")
            for col, res in anova.items():
                if res is None:
                    lines.append(f"- {col}: undefined (zero within-group variance)")
                    continue
                star = "*" if res.significant else ""
                lines.append(
                    f"- {col}: F({res.df_between}, {res.df_within}) = "
                    f"{res.f_stat:.6g}, p = {res.p_value:.6f}{star}"
                )
        atomic_write_text(path, "\n".join(lines) + "\n")
