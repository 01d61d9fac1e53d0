"""Plain-text tables for metrics reports.

Two layouts are rendered: an overall table with one row per (dataset, model,
L) run showing accuracy, MF1, kappa and per-class F1, and a per-run confusion
table whose rows are predicted stages followed by PR/RE/F1 columns.
"""

from __future__ import annotations

import json
from pathlib import Path

from .evaluation import MetricsReport
from .stages import STAGE_NAMES


def _as_dict(report) -> dict:
    return report.to_dict() if isinstance(report, MetricsReport) else report


def load_report(path) -> dict:
    """Read a single report JSON or a cross-validation report (its aggregate is used)."""
    data = json.loads(Path(path).read_text())
    return data.get("aggregate", data)


def overall_table(reports) -> str:
    rows = [_as_dict(r) for r in reports]
    header = ["Dataset", "Model", "L", "Epochs", "Acc", "MF1", "Kappa"] + list(STAGE_NAMES)
    body = []
    for r in rows:
        f1 = [r["per_class"][name]["F1"] for name in STAGE_NAMES]
        body.append(
            [str(r.get("dataset_kind") or "-"), str(r.get("model") or "-"),
             "-" if r.get("L") is None else str(r["L"]), str(r["n_epochs"]),
             f"{100 * r['accuracy']:.1f}", f"{100 * r['mf1']:.1f}", f"{r['kappa']:.3f}"]
            + [f"{100 * v:.1f}" for v in f1]
        )
    return _grid(header, body)


def confusion_table(report) -> str:
    r = _as_dict(report)
    header = ["Pred\\True"] + list(STAGE_NAMES) + ["PR", "RE", "F1"]
    body = []
    for name, row in zip(STAGE_NAMES, r["confusion"]):
        pc = r["per_class"][name]
        body.append([name] + [str(c) for c in row]
                    + [f"{100 * pc['PR']:.1f}", f"{100 * pc['RE']:.1f}", f"{100 * pc['F1']:.1f}"])
    return _grid(header, body)


def render(report) -> str:
    r = _as_dict(report)
    text = overall_table([r]) + "\n\n" + confusion_table(r)
    if r.get("zero_support"):
        text += "\n\nscored 0 (no predictions or no true epochs): " + ", ".join(r["zero_support"])
    return text + "\n"


def _grid(header, body) -> str:
    widths = [max(len(row[i]) for row in [header] + body) for i in range(len(header))]
    line = lambda cells: "  ".join(c.rjust(w) if i else c.ljust(w)
                                   for i, (c, w) in enumerate(zip(cells, widths)))
    rule = "  ".join("-" * w for w in widths)
    return "\n".join([line(header), rule] + [line(row) for row in body])
