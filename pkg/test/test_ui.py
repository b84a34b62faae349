import io
import json

from pose_boost.models import AblationRow, MetricsReport, TrainResult
from pose_boost.ui import (
    format_table,
    render_ablation_table,
    render_metrics_report,
    render_train_result,
    render_violations,
    save_records,
    threshold_label,
    write_records,
)


def _render(fn, *args, **kwargs) -> str:
    buf = io.StringIO()
    fn(*args, file=buf, **kwargs)
    return buf.getvalue()


def test_table_alignment():
    lines = format_table(["variant", "PCK@5"], [["fb", 0.5], ["fb_plus", 0.75]])
    assert lines == [
        "variant   PCK@5",
        "-------  ------",
        "fb       0.5000",
        "fb_plus  0.7500",
    ]


def test_threshold_labels():
    assert threshold_label(20.0) == "20"
    assert threshold_label(0.5) == "0.5"
    assert threshold_label(2.25) == "2.25"


def test_metrics_report_sections():
    report = MetricsReport(
        pck={10.0: 0.5, 5.0: 0.25},
        mean_error=9.0,
        count=4,
        pckf={0.5: 1.0},
        per_joint=[1.0, 2.0],
        per_tag={"facing_left": 3.0},
    )
    text = _render(render_metrics_report, report, joint_names=["root", "tip"])
    lines = text.splitlines()
    assert lines[0] == "Samples: 4"
    metric_rows = [line.split()[0] for line in lines[3:7]]
    assert metric_rows == ["PCK@5", "PCK@10", "PCKf@0.5", "mean"]
    assert "--- Per joint ---" in lines
    assert any(line.startswith("tip") and line.endswith("2.0000") for line in lines)
    assert "--- Per tag ---" in lines
    assert any(line.startswith("facing_left") for line in lines)


def test_bare_report_has_no_breakdowns():
    text = _render(render_metrics_report, MetricsReport(pck={5.0: 1.0}, mean_error=0.0, count=1))
    assert "Per joint" not in text and "Per tag" not in text and "PCKf" not in text


def test_ablation_table():
    rows = [
        AblationRow(axis="cells", variant="convlstm", seeds=[0, 1, 2], pck={5.0: 0.5}, mean_error=4.0),
        AblationRow(axis="cells", variant="convgru", seeds=[0, 1, 2], pck={5.0: 0.25}, mean_error=6.0),
    ]
    lines = _render(render_ablation_table, rows).splitlines()
    assert lines[0] == "Seeds: 0, 1, 2"
    assert lines[1].split() == ["cells", "PCK@5", "mean", "error"]
    assert lines[3].split() == ["convlstm", "0.5000", "4.0000"]
    assert _render(render_ablation_table, []) == "(no variants)\n"


def test_train_result_without_initial_loss():
    result = TrainResult(checkpoint="run/model.ckpt", log_path="run/train_log.jsonl", steps=8, initial_loss=None, final_loss=0.125)
    text = _render(render_train_result, result)
    assert text.startswith("Trained 8 steps\n")
    assert "Initial loss" not in text
    assert "Final loss:   0.125000" in text


def test_violations():
    assert _render(render_violations, "g.graph", []) == "g.graph: OK\n"
    assert _render(render_violations, "g.graph", ["cycle: 1 -> 2 -> 1", "self-loop on joint 3"]) == (
        "g.graph: 2 violation(s)\n- cycle: 1 -> 2 -> 1\n- self-loop on joint 3\n"
    )


def test_records_are_sorted_jsonl(tmp_path):
    buf = io.StringIO()
    assert write_records([{"b": 1, "a": 2}, {"z": None}], file=buf) == 2
    assert buf.getvalue() == '{"a": 2, "b": 1}\n{"z": null}\n'
    path = save_records(tmp_path / "nested" / "out.jsonl", [{"k": 1.5}])
    assert json.loads(path.read_text(encoding="utf-8")) == {"k": 1.5}
