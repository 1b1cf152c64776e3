"""CSV and JSON emitters for timelines, shift analysis, epoch curves and model comparisons.

Every number is written with six decimals.
"""
from __future__ import annotations

import csv
import io
import json
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

from .data import window_label
from .expressions import CLASS_NAMES, ExpressionDistribution
from .rnn import EmotionTimeline, ShiftReport, detect_shift, smoothness

TIMELINE_HEADER = ["timestamp_s", *CLASS_NAMES]


def fmt(v: float) -> str:
    return f"{round(float(v), 6) + 0.0:.6f}"


def write_rows(path, header, rows) -> Path:
    path = Path(path)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    path.write_text(buf.getvalue())
    return path


def _dist_from_row(values) -> ExpressionDistribution:
    s = np.array(values, dtype=np.float64)
    return ExpressionDistribution(s, normalized=abs(s.sum() - 1.0) <= 1e-6)


def write_timeline_csv(timeline: EmotionTimeline, path) -> Path:
    rows = [[fmt(ts), *map(fmt, d.scores)] for ts, d in zip(timeline.timestamps, timeline.distributions)]
    return write_rows(path, TIMELINE_HEADER, rows)


def parse_timeline_csv(text: str, source: str = "<timeline>") -> EmotionTimeline:
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None or [h.strip() for h in header] != TIMELINE_HEADER:
        raise ValueError(f"{source}: expected header {','.join(TIMELINE_HEADER)}")
    stamps, dists = [], []
    for lineno, row in enumerate(reader, 2):
        if not row:
            continue
        if len(row) != len(TIMELINE_HEADER):
            raise ValueError(f"{source}:{lineno}: expected {len(TIMELINE_HEADER)} fields, got {len(row)}")
        try:
            vals = [float(v) for v in row]
        except ValueError:
            raise ValueError(f"{source}:{lineno}: non-numeric field") from None
        stamps.append(vals[0])
        dists.append(_dist_from_row(vals[1:]))
    spacing = stamps[1] - stamps[0] if len(stamps) > 1 else None
    return EmotionTimeline(stamps, dists, spacing)


def read_timeline_csv(path) -> EmotionTimeline:
    path = Path(path)
    return parse_timeline_csv(path.read_text(), str(path))


def table2_timeline() -> EmotionTimeline:
    """The bundled four-window reference scores as a timeline at 0, 10, 20, 30 s."""
    text = resources.files("rcnn_fer.fixtures").joinpath("table2_timeline.csv").read_text()
    return parse_timeline_csv(text, "table2_timeline.csv")


def table1_distribution() -> ExpressionDistribution:
    text = resources.files("rcnn_fer.fixtures").joinpath("table1.csv").read_text()
    rows = list(csv.reader(io.StringIO(text)))[1:]
    if [r[0] for r in rows] != list(CLASS_NAMES):
        raise ValueError("table1 fixture rows are not in class order")
    return _dist_from_row([float(r[1]) for r in rows])


def write_table2_csv(timeline: EmotionTimeline, path) -> Path:
    """One row per window labelled t, t+10s, ... with scores in class order."""
    t0 = timeline.timestamps[0]
    rows = [[window_label(round(ts - t0, 6)), *map(fmt, d.scores)]
            for ts, d in zip(timeline.timestamps, timeline.distributions)]
    return write_rows(path, ["window", *CLASS_NAMES], rows)


def shift_summary(timeline: EmotionTimeline, report: ShiftReport | None = None) -> dict:
    report = report or detect_shift(timeline)
    return {
        "dominants": [{"timestamp_s": fmt(ts), "class": c.label}
                      for ts, c in zip(timeline.timestamps, report.dominants)],
        "transitions": [{"from": t.source.label, "to": t.target.label, "timestamp_s": fmt(t.timestamp)}
                        for t in report.transitions],
        "deltas": {name: fmt(v) for name, v in zip(CLASS_NAMES, report.deltas)},
        "smoothness": smoothness(timeline),
        "predicted_next": None if timeline.predicted_next is None else
        {name: fmt(v) for name, v in zip(CLASS_NAMES, timeline.predicted_next.scores)},
    }


def write_shift_json(timeline: EmotionTimeline, path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(shift_summary(timeline), indent=2) + "\n")
    return path


def write_fold_csv(folds, path) -> Path:
    rows = []
    for f in folds:
        for e, (tr, te) in enumerate(zip(f.train_accuracy, f.test_accuracy), 1):
            rows.append([f.fold, e, fmt(tr), fmt(te)])
    return write_rows(path, ["fold", "epoch", "train_acc", "test_acc"], rows)


def write_comparison_csv(accuracies: dict[str, float], path) -> Path:
    order = [m for m in ("baseline", "cnn", "rcnn") if m in accuracies]
    return write_rows(path, ["model", "accuracy"], [[m, fmt(accuracies[m])] for m in order])


def write_epochs_csv(accuracies: Sequence[float], path) -> Path:
    return write_rows(path, ["epoch", "accuracy"], [[i, fmt(a)] for i, a in enumerate(accuracies, 1)])


def emit_plot_data(out_dir, timeline: EmotionTimeline | None = None, report: ShiftReport | None = None,
                   epoch_accuracy: Sequence[float] | None = None,
                   comparison: dict[str, float] | None = None) -> list[Path]:
    """Write whichever figure data files the given inputs support."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    if timeline is not None:
        written.append(write_timeline_csv(timeline, out / "fig4_timeline.csv"))
        report = report or detect_shift(timeline)
        written.append(write_rows(out / "fig5_deltas.csv", ["class", "delta"],
                                   [[n, fmt(v)] for n, v in zip(CLASS_NAMES, report.deltas)]))
    if epoch_accuracy is not None:
        written.append(write_epochs_csv(epoch_accuracy, out / "fig7_epochs.csv"))
    if comparison is not None:
        written.append(write_comparison_csv(comparison, out / "fig8_comparison.csv"))
    return written
