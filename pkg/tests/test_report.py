import json

import numpy as np
import pytest

from rcnn_fer.expressions import ExpressionDistribution
from rcnn_fer.report import (emit_plot_data, fmt, parse_timeline_csv, read_timeline_csv, table2_timeline,
                             write_comparison_csv, write_shift_json, write_table2_csv, write_timeline_csv)
from rcnn_fer.rnn import EmotionTimeline

TABLE2_ROWS = [
    "window,anger,disgust,fear,happy,sadness,neutral,sleep",
    "t,0.036045,0.277319,0.129893,0.144559,0.141052,0.203560,0.070315",
    "t+10s,0.036154,0.223589,0.127850,0.162430,0.139840,0.234870,0.079840",
    "t+20s,0.046045,0.207319,0.129893,0.154455,0.151052,0.253560,0.083145",
    "t+30s,0.043152,0.184560,0.123890,0.156711,0.149986,0.258760,0.102457",
]


def test_fmt():
    assert fmt(0.0552) == "0.055200"
    assert fmt(-1e-9) == "0.000000"
    assert fmt(1 / 7) == "0.142857"


def test_table2_csv(tmp_path):
    write_table2_csv(table2_timeline(), tmp_path / "t2.csv")
    assert (tmp_path / "t2.csv").read_text().splitlines() == TABLE2_ROWS


def test_timeline_round_trip(tmp_path, rng):
    dists = [ExpressionDistribution(rng.dirichlet(np.ones(7))) for _ in range(3)]
    tl = EmotionTimeline([0.0, 10.0, 20.0], dists)
    write_timeline_csv(tl, tmp_path / "tl.csv")
    back = read_timeline_csv(tmp_path / "tl.csv")
    assert back.timestamps == tl.timestamps
    assert np.abs(back.matrix() - tl.matrix()).max() <= 1e-6


def test_timeline_header_checked():
    with pytest.raises(ValueError, match="header"):
        parse_timeline_csv("t,a,b\n0,1,2\n")


def test_plot_data(tmp_path):
    emit_plot_data(tmp_path, table2_timeline(), epoch_accuracy=[0.8462, 0.8784, 0.8937, 0.937826, 0.954157],
                   comparison={"baseline": 0.5, "cnn": 0.9, "rcnn": 0.95})
    deltas = dict(line.split(",") for line in (tmp_path / "fig5_deltas.csv").read_text().splitlines()[1:])
    assert deltas["neutral"] == "0.055200" and deltas["disgust"] == "-0.092759"
    epochs = (tmp_path / "fig7_epochs.csv").read_text().splitlines()
    assert epochs == ["epoch,accuracy", "1,0.846200", "2,0.878400", "3,0.893700", "4,0.937826", "5,0.954157"]
    assert len((tmp_path / "fig8_comparison.csv").read_text().splitlines()) == 4
    assert (tmp_path / "fig4_timeline.csv").read_text().startswith("timestamp_s,anger,")


def test_constant_deltas(tmp_path):
    d = ExpressionDistribution(np.full(7, 1 / 7))
    emit_plot_data(tmp_path, EmotionTimeline([0, 10], [d, d]))
    rows = (tmp_path / "fig5_deltas.csv").read_text().splitlines()[1:]
    assert all(r.endswith(",0.000000") for r in rows)


def test_shift_json(tmp_path):
    summary = json.loads(write_shift_json(table2_timeline(), tmp_path / "s.json").read_text())
    assert summary["transitions"] == [{"from": "disgust", "to": "neutral", "timestamp_s": "10.000000"}]
    assert summary["smoothness"] == 1


def test_comparison_order(tmp_path):
    write_comparison_csv({"rcnn": 1, "baseline": 0.25, "cnn": 0.5}, tmp_path / "c.csv")
    assert (tmp_path / "c.csv").read_text().splitlines() == [
        "model,accuracy", "baseline,0.250000", "cnn,0.500000", "rcnn,1.000000"]
