# pose_boost/ui.py
# Presentation-only utilities for CLI output: aligned text tables and JSONL records.
from __future__ import annotations

import json
from pathlib import Path
from typing import IO, Any, Iterable, Sequence

from pose_boost.models import AblationRow, MetricsReport, TrainResult


def _writeln(text: str = "", *, file: IO[str]) -> None:
    file.write(text + "\n")


def threshold_label(t: float) -> str:
    return str(int(t)) if float(t).is_integer() else f"{t:g}"


def format_table(headers: Sequence[str], rows: Iterable[Sequence[Any]]) -> list[str]:
    """
    Left-aligned first column, right-aligned numbers, two spaces between columns.

    Floats are shown with four decimals.
    """
    cells = [[str(h) for h in headers]]
    for row in rows:
        cells.append([f"{v:.4f}" if isinstance(v, float) else str(v) for v in row])
    widths = [max(len(r[i]) for r in cells) for i in range(len(headers))]
    lines = []
    for r in cells:
        parts = [r[0].ljust(widths[0])] + [c.rjust(w) for c, w in zip(r[1:], widths[1:])]
        lines.append("  ".join(parts).rstrip())
    lines.insert(1, "  ".join("-" * w for w in widths))
    return lines


def render_table(headers: Sequence[str], rows: Iterable[Sequence[Any]], *, file: IO[str]) -> None:
    for line in format_table(headers, rows):
        _writeln(line, file=file)


def render_metrics_report(report: MetricsReport, *, file: IO[str], joint_names: Sequence[str] = ()) -> None:
    _writeln(f"Samples: {report.count}", file=file)
    rows: list[tuple[str, float]] = [(f"PCK@{threshold_label(t)}", v) for t, v in sorted(report.pck.items())]
    if report.pckf:
        rows += [(f"PCKf@{threshold_label(t)}", v) for t, v in sorted(report.pckf.items())]
    rows.append(("mean error", report.mean_error))
    render_table(["metric", "value"], rows, file=file)
    if report.per_joint:
        _writeln("\n--- Per joint ---", file=file)
        names = list(joint_names) or [str(j) for j in range(len(report.per_joint))]
        render_table(["joint", "mean error"], zip(names, report.per_joint), file=file)
    if report.per_tag:
        _writeln("\n--- Per tag ---", file=file)
        render_table(["tag", "mean error"], sorted(report.per_tag.items()), file=file)


def render_ablation_table(rows: Sequence[AblationRow], *, file: IO[str]) -> None:
    if not rows:
        _writeln("(no variants)", file=file)
        return
    thresholds = sorted(rows[0].pck)
    headers = [rows[0].axis] + [f"PCK@{threshold_label(t)}" for t in thresholds] + ["mean error"]
    body = [[r.variant] + [r.pck[t] for t in thresholds] + [r.mean_error] for r in rows]
    _writeln(f"Seeds: {', '.join(str(s) for s in rows[0].seeds)}", file=file)
    render_table(headers, body, file=file)


def render_train_result(result: TrainResult, *, file: IO[str]) -> None:
    _writeln(f"Trained {result.steps} steps", file=file)
    if result.initial_loss is not None:
        _writeln(f"Initial loss: {result.initial_loss:.6f}", file=file)
    _writeln(f"Final loss:   {result.final_loss:.6f}", file=file)
    _writeln(f"Checkpoint:   {result.checkpoint}", file=file)
    _writeln(f"Log:          {result.log_path}", file=file)


def render_violations(source: str, violations: Sequence[str], *, file: IO[str]) -> None:
    if not violations:
        _writeln(f"{source}: OK", file=file)
        return
    _writeln(f"{source}: {len(violations)} violation(s)", file=file)
    for v in violations:
        _writeln(f"- {v}", file=file)


def render_paths(header: str, paths: Iterable[Path | str], *, file: IO[str]) -> None:
    _writeln(header, file=file)
    for p in paths:
        _writeln(f"  {p}", file=file)


def write_records(records: Iterable[dict[str, Any]], *, file: IO[str]) -> int:
    """Line-delimited JSON, one object per line, keys sorted."""
    n = 0
    for record in records:
        _writeln(json.dumps(record, sort_keys=True), file=file)
        n += 1
    return n


def save_records(path: Path | str, records: Iterable[dict[str, Any]]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as f:
        write_records(records, file=f)
    return path
