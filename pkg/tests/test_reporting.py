from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from detector.models.records import CurveKind
from detector.services.reporting import (
    evaluate_models,
    plot_curves,
    read_report,
    write_curve,
    write_report,
    write_scores,
)
from detector.utils.errors import MisalignedScores

FIXTURES = Path(__file__).parent / "fixtures"

LABELS = [1, 0, 1, 0]


@pytest.fixture
def report():
    return evaluate_models(
        [("LR", np.array([0.9, 0.8, 0.7, 0.3])), ("GBT", np.array([0.9, 0.2, 0.8, 0.1]))],
        LABELS,
        row_ids=["a", "b", "c", "d"],
    )


def test_metrics_rows(report):
    lr, gbt = report.rows
    assert lr.roc_auc == 0.75
    assert lr.pr_auc == pytest.approx(5 / 6)
    assert lr.accuracy == 0.75
    assert gbt.roc_auc == 1.0
    assert lr.prevalence == 0.5
    assert report.selected == "GBT"


def test_selection_keeps_first_on_ties():
    same = np.array([0.9, 0.2, 0.8, 0.1])
    report = evaluate_models([("ET", same), ("GBT", same.copy())], LABELS)
    assert report.selected == "ET"


def test_misaligned_model_scores():
    with pytest.raises(MisalignedScores):
        evaluate_models([("LR", np.array([0.1, 0.2]))], LABELS)


@pytest.mark.parametrize("layout, fixture", [("validation", "validation_layout.tsv"), ("test", "test_layout.tsv")])
def test_report_layout_matches_published_tables(tmp_path, report, layout, fixture):
    columns, table = read_report(FIXTURES / fixture)
    path = tmp_path / "report.tsv"
    write_report(path, report.rows, layout, header=["seed = 0"])
    written, values = read_report(path)
    assert written[: len(columns)] == columns
    assert written[len(columns):] == ["threshold", "prevalence"]
    assert set(values) == {"LR", "GBT"}
    assert values["LR"]["ROC"] == 0.75
    assert all(set(row) <= set(written[1:]) for row in table.values())


def test_published_values_parse():
    _, table = read_report(FIXTURES / "test_layout.tsv")
    assert table["XGB"] == {"ROC": 0.92, "PR": 0.337, "ACC": 0.929, "P": 0.011, "R": 0.767, "F": 0.022}


def test_report_cells(tmp_path, report):
    path = tmp_path / "report.tsv"
    write_report(path, report.rows, "validation")
    lines = path.read_text().splitlines()
    assert lines[0] == "Metric\tROC\tACC\tP\tR\tF\tthreshold\tprevalence"
    assert lines[1] == "LR\t0.7500\t0.7500\t0.6667\t1.0000\t0.8000\t0.5\t0.5000"


def test_curve_and_score_files(tmp_path, report):
    roc, pr = report.curves["LR"]
    write_curve(tmp_path / "roc.tsv", roc, header=["x"])
    write_curve(tmp_path / "pr.tsv", pr)
    assert (tmp_path / "roc.tsv").read_text().splitlines()[:3] == ["# x", "fpr\ttpr", "0.0\t0.0"]
    assert (tmp_path / "pr.tsv").read_text().splitlines()[:2] == ["recall\tprecision", "0.0\t1.0"]

    write_scores(tmp_path / "scores.tsv", ["a", "b"], np.array([0.25, 1 / 3]))
    assert (tmp_path / "scores.tsv").read_text() == "a\t0.250000\nb\t0.333333\n"


@pytest.mark.parametrize("kind", list(CurveKind))
def test_figures_are_reproducible(tmp_path, report, kind):
    plot_curves(tmp_path / "a.svg", report, kind)
    plot_curves(tmp_path / "b.svg", report, kind)
    text = (tmp_path / "a.svg").read_text()
    assert text.lstrip().startswith("<?xml")
    assert (tmp_path / "a.svg").read_bytes() == (tmp_path / "b.svg").read_bytes()


def test_figures_carry_provenance_comments(tmp_path, report):
    plot_curves(tmp_path / "roc.svg", report, CurveKind.roc, ["detector 0.1.0 evaluate", "seed = 0", "note = a--b"])
    lines = (tmp_path / "roc.svg").read_text().splitlines()
    assert lines[0].startswith("<?xml")
    assert lines[1:4] == ["<!-- # detector 0.1.0 evaluate -->", "<!-- # seed = 0 -->", "<!-- # note = a- -b -->"]
    assert lines[4].startswith("<!DOCTYPE") or lines[4].startswith("<svg")
