import csv
import json

import numpy as np
import pytest

from pyrocast import report as rp
from pyrocast.metrics import ScoredSet, score_model


def _reports(n=3):
    rng = np.random.default_rng(0)
    out, scored = [], {}
    for i in range(n):
        scores = rng.uniform(size=40)
        labels = rng.integers(0, 2, size=40)
        labels[:2] = [0, 1]
        s = ScoredSet(scores, labels)
        out.append(score_model(f"model_{i}", s, train_time_s=float(i),
                               trainable_params=100 * (i + 1),
                               frozen_params=7 if i == 0 else 0))
        scored[f"model_{i}"] = s
    return out, scored


class TestComparisonTable:
    def test_csv_header_order(self, tmp_path):
        reports, _ = _reports()
        path = tmp_path / "comparison.csv"
        rp.write_comparison_csv(reports, path)
        rows = list(csv.reader(path.open()))
        assert rows[0] == list(rp.TABLE_COLUMNS)
        assert len(rows) == 4

    def test_param_column_sums_trainable_and_frozen(self, tmp_path):
        reports, _ = _reports()
        path = tmp_path / "comparison.csv"
        rp.write_comparison_csv(reports, path)
        rows = list(csv.reader(path.open()))
        assert rows[1][-1] == "107"

    def test_json_round_trip(self, tmp_path):
        reports, _ = _reports()
        path = tmp_path / "comparison.json"
        rp.write_comparison_json(reports, path)
        payload = json.loads(path.read_text())
        assert payload["report_version"] == 1
        assert rp.read_comparison_json(path) == reports


class TestCurveArtifacts:
    def test_svg_one_polyline_per_model(self, tmp_path):
        _, scored = _reports(4)
        from pyrocast.metrics import roc_curve
        curves = {name: roc_curve(s) for name, s in scored.items()}
        path = tmp_path / "roc.svg"
        rp.write_curve_svg(curves, path, "ROC")
        text = path.read_text()
        assert text.count("<polyline") == 4
        for name in curves:
            assert name in text

    def test_curve_csv_long_format(self, tmp_path):
        _, scored = _reports(2)
        from pyrocast.metrics import roc_curve
        curves = {name: roc_curve(s) for name, s in scored.items()}
        path = tmp_path / "roc_points.csv"
        rp.write_curve_csv(curves, path, "fpr", "tpr")
        rows = list(csv.reader(path.open()))
        assert rows[0] == ["model", "fpr", "tpr"]
        models = {r[0] for r in rows[1:]}
        assert models == set(curves)


class TestEmitReport:
    def test_full_artifact_set(self, tmp_path):
        reports, scored = _reports()
        created = rp.emit_report(reports, tmp_path, scored)
        names = {p.name for p in created}
        assert names == {"comparison.csv", "comparison.json",
                         "efficiency.csv", "efficiency.png",
                         "roc_points.csv", "roc.svg", "roc.png",
                         "pr_points.csv", "pr.svg", "pr.png"}
        for p in created:
            assert p.exists() and p.stat().st_size > 0
        assert (tmp_path / "efficiency.png").read_bytes()[:8] == \
            b"\x89PNG\r\n\x1a\n"

    def test_without_scored_sets_skips_curves(self, tmp_path):
        reports, _ = _reports()
        created = rp.emit_report(reports, tmp_path)
        assert {p.name for p in created} == {"comparison.csv",
                                             "comparison.json",
                                             "efficiency.csv",
                                             "efficiency.png"}

    def test_empty_reports_rejected(self, tmp_path):
        with pytest.raises(ValueError):
            rp.emit_report([], tmp_path)

    def test_delimited_output_deterministic(self, tmp_path):
        reports, scored = _reports()
        a_dir, b_dir = tmp_path / "a", tmp_path / "b"
        rp.emit_report(reports, a_dir, scored)
        rp.emit_report(reports, b_dir, scored)
        for name in ("comparison.csv", "comparison.json", "efficiency.csv",
                     "roc_points.csv", "pr_points.csv", "roc.svg", "pr.svg"):
            assert (a_dir / name).read_bytes() == (b_dir / name).read_bytes()
