"""
Model comparison report, curve point files and the two overlay figures.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Literal, Optional, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from detector.models.records import CurveKind, CurvePoints  # noqa: E402
from detector.models.schemas import MetricsRow  # noqa: E402
from detector.services.metrics import (  # noqa: E402
    confusion_metrics,
    pr_auc,
    pr_curve,
    roc_auc,
    roc_curve,
)
from detector.utils.errors import MisalignedScores  # noqa: E402
from detector.utils.logger import get_logger  # noqa: E402

log = get_logger("services.reporting")

# stable SVG ids and no timestamp, so reruns produce identical figures
matplotlib.rcParams["svg.hashsalt"] = "detector"

Layout = Literal["validation", "test"]

# (header, MetricsRow attribute)
LAYOUTS: dict[str, list[tuple[str, str]]] = {
    "validation": [("ROC", "roc_auc"), ("ACC", "accuracy"), ("P", "precision"), ("R", "recall"), ("F", "f1")],
    "test": [
        ("ROC", "roc_auc"),
        ("PR", "pr_auc"),
        ("ACC", "accuracy"),
        ("P", "precision"),
        ("R", "recall"),
        ("F", "f1"),
    ],
}


@dataclass
class EvaluationReport:
    rows: list[MetricsRow]
    curves: dict[str, tuple[CurvePoints, CurvePoints]]  # tag -> (roc, pr)
    selected: str


def evaluate_models(
    models: Sequence[tuple[str, np.ndarray]],
    labels,
    *,
    row_ids: Optional[Sequence[str]] = None,
    threshold: float = 0.5,
) -> EvaluationReport:
    """One metrics row and both curves per model; selects the best validation ROC-AUC."""
    y = np.asarray(labels).astype(bool)
    prevalence = float(y.mean()) if y.size else 0.0
    rows: list[MetricsRow] = []
    curves: dict[str, tuple[CurvePoints, CurvePoints]] = {}
    for tag, scores in models:
        scores = np.asarray(scores, dtype=np.float64)
        if scores.shape != y.shape:
            raise MisalignedScores(f"model {tag}: {scores.size} scores for {y.size} labels")
        cm = confusion_metrics(scores, y, threshold)
        rows.append(
            MetricsRow(
                model_tag=tag,
                roc_auc=roc_auc(scores, y),
                pr_auc=pr_auc(scores, y, row_ids),
                accuracy=cm.accuracy,
                precision=cm.precision,
                recall=cm.recall,
                f1=cm.f1,
                threshold=threshold,
                prevalence=prevalence,
            )
        )
        curves[tag] = (roc_curve(scores, y), pr_curve(scores, y))

    selected = rows[0]
    for row in rows[1:]:
        if row.roc_auc > selected.roc_auc:
            selected = row
    log.info("Selected %s (ROC-AUC %.4f) out of %d models", selected.model_tag, selected.roc_auc, len(rows))
    return EvaluationReport(rows=rows, curves=curves, selected=selected.model_tag)


# ── files ─────────────────────────────────────────────

def _write_header(fh, header: Iterable[str]) -> None:
    for line in header:
        fh.write(f"# {line}\n")


def write_report(path: str | Path, rows: Sequence[MetricsRow], layout: Layout = "validation", header=()) -> None:
    columns = LAYOUTS[layout]
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        _write_header(fh, header)
        fh.write("\t".join(["Metric", *(name for name, _ in columns), "threshold", "prevalence"]) + "\n")
        for row in rows:
            cells = [f"{getattr(row, attr):.4f}" for _, attr in columns]
            fh.write("\t".join([row.model_tag, *cells, repr(row.threshold), f"{row.prevalence:.4f}"]) + "\n")


def read_report(path: str | Path) -> tuple[list[str], dict[str, dict[str, float]]]:
    """Header columns and {model: {column: value}}; works for either layout."""
    columns: list[str] = []
    table: dict[str, dict[str, float]] = {}
    with Path(path).open(encoding="utf-8") as fh:
        for line in fh:
            if line.startswith("#") or not line.strip():
                continue
            fields = line.rstrip("\r\n").split("\t")
            if not columns:
                columns = fields
                continue
            table[fields[0]] = {c: float(v) for c, v in zip(columns[1:], fields[1:])}
    return columns, table


def write_curve(path: str | Path, curve: CurvePoints, header=()) -> None:
    names = ("fpr", "tpr") if curve.kind is CurveKind.roc else ("recall", "precision")
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        _write_header(fh, header)
        fh.write("\t".join(names) + "\n")
        for x, y in curve.points:
            fh.write(f"{x!r}\t{y!r}\n")


def plot_curves(path: str | Path, report: EvaluationReport, kind: CurveKind, header=()) -> None:
    """All models overlaid on one axes, legend carrying each area.

    ``header`` lines go into XML comments right after the declaration.
    """
    fig, ax = plt.subplots(figsize=(5.5, 4.5))
    by_tag = {row.model_tag: row for row in report.rows}
    for tag, (roc, pr) in report.curves.items():
        if kind is CurveKind.roc:
            ax.plot(roc.x, roc.y, label=f"{tag} (AUC = {by_tag[tag].roc_auc:.4f})")
        else:
            ax.step(pr.x, pr.y, where="post", label=f"{tag} (AP = {by_tag[tag].pr_auc:.4f})")

    if kind is CurveKind.roc:
        ax.plot([0, 1], [0, 1], linestyle="--", color="grey", linewidth=0.8)
        ax.set_xlabel("False positive rate")
        ax.set_ylabel("True positive rate")
        ax.set_title("ROC curves")
    else:
        ax.set_xlabel("Recall")
        ax.set_ylabel("Precision")
        ax.set_title("Precision-recall curves")
    ax.set_xlim(0, 1)
    ax.set_ylim(0, 1.02)
    ax.legend(loc="lower right" if kind is CurveKind.roc else "upper right", fontsize=8)
    fig.tight_layout()
    buf = io.StringIO()
    fig.savefig(buf, format="svg", metadata={"Date": None})
    plt.close(fig)

    declaration, _, body = buf.getvalue().partition("\n")
    # "--" may not appear inside an XML comment
    comments = "".join(f"<!-- # {line.replace('--', '- -')} -->\n" for line in header)
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"{declaration}\n{comments}{body}")


def write_scores(path: str | Path, row_ids: Sequence[str], scores: np.ndarray, header=()) -> None:
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        _write_header(fh, header)
        for rid, score in zip(row_ids, scores.tolist()):
            fh.write(f"{rid}\t{score:.6f}\n")
