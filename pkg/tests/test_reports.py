"""Table rendering, JSONL persistence, and figure files."""

import json

from speechbridge.evaluate import LATENCY_STAGES, LatencyTrace, error_report
from speechbridge.reports import (
    error_counts_figure,
    grid_comparison_figure,
    latency_series_figure,
    latency_stage_figure,
    loss_curve_figure,
    read_jsonl,
    render_table,
    write_jsonl,
)


def test_render_table_alignment():
    text = render_table(("name", "value"), [("aa", 1.5), ("b", 20.25)])
    lines = text.splitlines()
    assert len(lines) == 4
    assert lines[0].startswith("name")
    assert set(lines[1]) <= {"-", " "}
    # float cells render at 4 decimals and right-align
    assert "1.5000" in lines[2] and " 20.2500" in lines[3]
    assert lines[3].rstrip() == lines[3]


def test_render_table_empty_rows():
    text = render_table(("a", "b"), [])
    assert text.splitlines()[0].startswith("a")


def test_jsonl_roundtrip_sorted_keys(tmp_path):
    path = str(tmp_path / "r.jsonl")
    records = [{"z": 1, "a": 2}, {"loss": 0.5, "step": 0}]
    write_jsonl(path, records)
    assert read_jsonl(path) == records
    with open(path) as f:
        first = f.readline().strip()
    assert first == json.dumps({"a": 2, "z": 1}, sort_keys=True)
    assert first.index('"a"') < first.index('"z"')


def test_loss_curve_figure(tmp_path):
    path = str(tmp_path / "loss.png")
    metrics = [{"step": i, "loss": 1.0 / (i + 1)} for i in range(10)]
    assert loss_curve_figure(metrics, path) == path
    assert (tmp_path / "loss.png").stat().st_size > 0

    multi = {"stage1": metrics, "stage2": metrics[:5]}
    loss_curve_figure(multi, str(tmp_path / "multi.png"))
    assert (tmp_path / "multi.png").stat().st_size > 0


def test_latency_figures(tmp_path):
    stats = {2.0: {"chunks": 3, "ms": [5.0, 1.0, 1.1]},
             5.0: {"chunks": 8, "ms": [5.0] + [1.0] * 7}}
    p1 = str(tmp_path / "series.png")
    latency_series_figure(stats, p1)
    assert (tmp_path / "series.png").stat().st_size > 0

    trace = LatencyTrace(tuple(zip(LATENCY_STAGES, (1, 2, 3, 4))))
    p2 = str(tmp_path / "stages.png")
    latency_stage_figure(trace.stage_ms, p2)
    assert (tmp_path / "stages.png").stat().st_size > 0


def test_error_counts_figure(tmp_path):
    report = error_report(["a b c"], ["a x c y"])
    path = str(tmp_path / "errs.png")
    error_counts_figure(report, path)
    assert (tmp_path / "errs.png").stat().st_size > 0


def test_grid_comparison_figure(tmp_path):
    results = [{"label": "mlp-d2", "final_loss": 1.2},
               {"label": "cnn-d4", "final_loss": 0.9}]
    path = str(tmp_path / "grid.png")
    grid_comparison_figure(results, path)
    assert (tmp_path / "grid.png").stat().st_size > 0
