import subprocess
import sys

import numpy as np
import pytest

from rcnn_fer import __version__
from rcnn_fer.checkpoint import save_checkpoint
from rcnn_fer.cli import main
from rcnn_fer.cnn import CnnConfig, build_model, zeroed
from rcnn_fer.images import write_image
from rcnn_fer.landmarks import template_face, write_sidecar
from rcnn_fer.report import table2_timeline, write_timeline_csv


@pytest.fixture
def zero_ckpt(tmp_path):
    path = tmp_path / "zero.ckpt"
    save_checkpoint(zeroed(build_model(CnnConfig(input_size=32))), path)
    return path


def test_version(capsys):
    assert main(["--version"]) == 0
    assert __version__ in capsys.readouterr().out


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "rcnn_fer", "--version"], capture_output=True, text=True)
    assert out.returncode == 0 and __version__ in out.stdout


def test_usage_errors(capsys):
    assert main(["train", "--bogus"]) == 2
    assert main([]) == 2
    assert main(["report", "--out", "x", "--format", "nope"]) == 2


def test_predict_uniform(tmp_path, zero_ckpt, capsys):
    write_image(np.random.default_rng(0).uniform(0, 255, size=(20, 30, 3)), tmp_path / "img.ppm")
    assert main(["predict", str(zero_ckpt), str(tmp_path / "img.ppm")]) == 0
    values = capsys.readouterr().out.splitlines()[1].split(",")
    assert values == ["0.142857"] * 7


def test_predict_with_landmarks(tmp_path, capsys):
    path = tmp_path / "aux.ckpt"
    save_checkpoint(zeroed(build_model(CnnConfig(input_size=32, aux_landmarks=True))), path)
    write_image(np.zeros((32, 32, 1)), tmp_path / "img.pgm")
    write_sidecar(template_face(), tmp_path / "img.lm")
    assert main(["predict", str(path), str(tmp_path / "img.pgm"), "--landmarks", str(tmp_path / "img.lm")]) == 0
    assert capsys.readouterr().out.splitlines()[1] == ",".join(["0.142857"] * 7)


def test_missing_file_exit_1(tmp_path, zero_ckpt, capsys):
    assert main(["predict", str(zero_ckpt), str(tmp_path / "missing.pgm")]) == 1
    assert "missing.pgm" in capsys.readouterr().err


def test_bad_magic_exit_1(tmp_path, capsys):
    (tmp_path / "bad.ckpt").write_bytes(b"XXXX\n{}\n")
    write_image(np.zeros((4, 4, 1)), tmp_path / "i.pgm")
    assert main(["predict", str(tmp_path / "bad.ckpt"), str(tmp_path / "i.pgm")]) == 1
    assert "magic" in capsys.readouterr().err


def test_report_fixture(tmp_path, capsys):
    assert main(["report", "--fixture", "table2", "--format", "table2", "--out", str(tmp_path)]) == 0
    rows = (tmp_path / "table2.csv").read_text().splitlines()
    assert rows[1] == "t,0.036045,0.277319,0.129893,0.144559,0.141052,0.203560,0.070315"
    assert len(rows) == 5
    assert "disgust -> neutral" in capsys.readouterr().out
    for name in ("shift.json", "fig4_timeline.csv", "fig5_deltas.csv"):
        assert (tmp_path / name).exists()


def test_report_from_csv(tmp_path):
    write_timeline_csv(table2_timeline(), tmp_path / "tl.csv")
    assert main(["report", str(tmp_path / "tl.csv"), "--out", str(tmp_path / "r")]) == 0
    assert (tmp_path / "r" / "table2.csv").read_text().splitlines()[2].startswith("t+10s,0.036154")


def test_seed_printed(tmp_path, capsys):
    main(["synth", str(tmp_path), "--per-class", "1", "--seed", "11"])
    assert "seed=11" in capsys.readouterr().err


def test_profile_env(tmp_path, monkeypatch, capsys):
    main(["synth", str(tmp_path / "d"), "--per-class", "1"])
    monkeypatch.setenv("FER_PROFILE", "bogus")
    assert main(["train", str(tmp_path / "d" / "manifest.txt"), "--out", str(tmp_path / "o")]) == 2
    monkeypatch.setenv("FER_PROFILE", "reduced-32")
    assert main(["train", str(tmp_path / "d" / "manifest.txt"), "--out", str(tmp_path / "o"), "--epochs", "1"]) == 0
    from rcnn_fer.checkpoint import load_checkpoint
    assert load_checkpoint(tmp_path / "o" / "model.ckpt").config.input_size == 32


def test_pipeline_end_to_end(tmp_path, capsys):
    d = tmp_path
    assert main(["synth", str(d / "data"), "--per-class", "3"]) == 0
    assert main(["train", str(d / "data" / "manifest.txt"), "--out", str(d / "run"), "--profile", "reduced-32",
                 "--epochs", "2", "--folds", "3"]) == 0
    assert (d / "run" / "folds.csv").read_text().startswith("fold,epoch,train_acc,test_acc\n0,1,")
    assert len((d / "run" / "fig7_epochs.csv").read_text().splitlines()) == 3
    assert main(["synth", str(d / "frames"), "--frames", "disgust:10,neutral:30"]) == 0
    assert main(["timeline", str(d / "run" / "model.ckpt"), str(d / "frames"), "--out", str(d / "tl.csv")]) == 0
    assert len((d / "tl.csv").read_text().splitlines()) == 5
    assert main(["train-rnn", str(d / "tl.csv"), "--out", str(d / "cell.ckpt"), "--epochs", "3"]) == 0
    assert main(["timeline", str(d / "run" / "model.ckpt"), str(d / "frames"), "--out", str(d / "tl2.csv"),
                 "--rnn", str(d / "cell.ckpt"), "--variance-max", "--keep-rate", "1/3"]) == 0
    assert (d / "tl2_next.csv").exists()
    # 25 s of frames cannot fill the t+30s window
    assert main(["synth", str(d / "short"), "--frames", "happy:25"]) == 0
    assert main(["timeline", str(d / "run" / "model.ckpt"), str(d / "short"), "--out", str(d / "x.csv")]) == 1
    assert "t+30s" in capsys.readouterr().err


def test_selftest_and_gradcheck(capsys):
    assert main(["selftest", "--cases", "10"]) == 0
    assert main(["gradcheck", "--samples", "2"]) == 0
    assert "FAIL" not in capsys.readouterr().out
