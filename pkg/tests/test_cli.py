import json

import numpy as np
import pytest

from attmidflow.cli import run
from attmidflow.data import read_flo, read_image, write_flo, write_image

MICRO = ["--width-divisor", "8"]


def records(capsys):
    return [json.loads(line) for line in capsys.readouterr().out.splitlines() if line.strip()]


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    return tmp_path_factory.mktemp("cli")


@pytest.fixture(scope="module")
def trained(workdir):
    data = workdir / "data"
    assert run(["generate-data", "--out", str(data), "--count", "4", "--profile", "translation"]) == 0
    ckpt = workdir / "m.ckpt"
    assert run(["train", "--data", str(data / "manifest.jsonl"), "--out", str(ckpt), "--iterations", "2",
                "--batch-size", "2", "--arch", "FlowNetS", *MICRO]) == 0
    return data, ckpt


def test_help_exits_zero(capsys):
    assert run(["--help"]) == 0
    assert "generate-data" in capsys.readouterr().out
    assert run(["train", "--help"]) == 0
    assert "--config" in capsys.readouterr().out


def test_usage_errors_exit_two(capsys):
    assert run([]) == 2
    assert run(["nonsense"]) == 2
    assert run(["viz", "--flo", "a.flo", "--out", "b.ppm", "--bogus"]) == 2
    assert run(["bench", "--size", "12by3"]) == 2


def test_domain_error_exits_one(tmp_path, capsys):
    bad = tmp_path / "bad.flo"
    bad.write_bytes(bytes(20))
    assert run(["viz", "--flo", str(bad), "--out", str(tmp_path / "o.ppm")]) == 1
    assert "202021.25" in capsys.readouterr().err


def test_generate_refuses_to_clobber(trained, capsys):
    data, _ = trained
    assert run(["generate-data", "--out", str(data), "--count", "4"]) == 1
    assert "--overwrite" in capsys.readouterr().err


def test_infer_writes_readable_flo(trained, workdir, capsys):
    data, ckpt = trained
    capsys.readouterr()
    out = workdir / "flow.flo"
    assert run(["infer", "--model", str(ckpt), "--im1", str(data / "00000_img1.ppm"),
                "--im2", str(data / "00000_img2.ppm"), "--out", str(out), "--json"]) == 0
    flow = read_flo(out)
    assert flow.shape == (64, 64, 2) and np.isfinite(flow).all()
    recs = records(capsys)
    assert recs[0]["event"] == "config" and recs[0]["model"] == str(ckpt)
    assert recs[-1]["event"] == "infer"
    assert run(["infer", "--model", str(ckpt), "--im1", str(data / "00000_img1.ppm"),
                "--im2", str(data / "00000_img2.ppm"), "--out", str(out)]) == 1


def test_eval_reports_epe(trained, capsys):
    data, ckpt = trained
    capsys.readouterr()
    assert run(["eval", "--model", str(ckpt), "--data", str(data / "manifest.jsonl"), "--json"]) == 0
    rec = records(capsys)[-1]
    assert rec["event"] == "eval" and rec["samples"] == 4 and rec["epe"] > 0


def test_viz_zero_field_is_white(tmp_path):
    write_flo(tmp_path / "z.flo", np.zeros((8, 8, 2), np.float32))
    assert run(["viz", "--flo", str(tmp_path / "z.flo"), "--out", str(tmp_path / "z.ppm")]) == 0
    assert np.all(read_image(tmp_path / "z.ppm") == 255)


def test_config_file_overrides_defaults(trained, workdir, tmp_path, capsys):
    data, _ = trained
    cfg = tmp_path / "train.toml"
    cfg.write_text('iterations = 1\nbatch-size = 2\nwidth_divisor = 8\nloss_weights = [0, 0, 1, 0, 0, 0, 0]\n'
                   f'data = "{data / "manifest.jsonl"}"\n')
    out = tmp_path / "c.ckpt"
    capsys.readouterr()
    assert run(["train", "--config", str(cfg), "--out", str(out), "--json", "--iterations", "2"]) == 0
    recs = records(capsys)
    assert recs[0]["iterations"] == 2 and recs[0]["batch_size"] == 2 and recs[0]["loss_weights"][2] == 1
    assert recs[-1]["event"] == "train" and recs[-1]["iterations"] == 2
    cfg.write_text("unknown_key = 3\n")
    assert run(["train", "--config", str(cfg), "--out", str(tmp_path / "d.ckpt")]) == 2


def test_train_log_is_jsonl(trained, tmp_path):
    data, _ = trained
    log = tmp_path / "log.jsonl"
    assert run(["train", "--data", str(data / "manifest.jsonl"), "--out", str(tmp_path / "e.ckpt"), "--iterations",
                "3", "--batch-size", "2", "--log", str(log), *MICRO]) == 0
    lines = [json.loads(x) for x in log.read_text().splitlines()]
    assert [x["iteration"] for x in lines] == [1, 2, 3]


def test_bench_flownets_full_size(capsys):
    assert run(["bench", "--arch", "flownets", "--size", "384x512", "--json"]) == 0
    rec = records(capsys)[-1]
    assert rec["model"] == "FlowNetS" and abs(rec["params"] - 38.5e6) / 38.5e6 < 0.05
    assert rec["median_seconds"] > 0


def test_gesture_commands(tmp_path, capsys):
    clips = tmp_path / "clips"
    assert run(["gesture-synth", "--out", str(clips), "--per-class", "2", "--with-frames"]) == 0
    clf = tmp_path / "clf.npz"
    manifest = str(clips / "manifest.jsonl")
    assert run(["gesture-train", "--data", manifest, "--out", str(clf), "--iterations", "3", "--batch-size", "4"]) == 0
    preds = tmp_path / "pred.jsonl"
    capsys.readouterr()
    assert run(["gesture-eval", "--model", str(clf), "--data", manifest, "--predictions", str(preds), "--json"]) == 0
    rec = records(capsys)[-1]
    assert rec["clips"] == 12 and 0 <= rec["accuracy"] <= 1
    lines = [json.loads(x) for x in preds.read_text().splitlines()]
    assert len(lines) == 12 and set(lines[0]) == {"clip", "label", "scores"} and len(lines[0]["scores"]) == 6

    flow_ckpt = tmp_path / "flow.ckpt"
    data = tmp_path / "flowdata"
    assert run(["generate-data", "--out", str(data), "--count", "2"]) == 0
    assert run(["train", "--data", str(data / "manifest.jsonl"), "--out", str(flow_ckpt), "--iterations", "1",
                "--batch-size", "1", "--arch", "AttMidFlowNetRes", *MICRO]) == 0
    capsys.readouterr()
    assert run(["pipeline", "--flow-model", str(flow_ckpt), "--classifier", str(clf),
                "--frames", str(clips / "clip_00000"), "--json"]) == 0
    rec = records(capsys)[-1]
    assert rec["event"] == "pipeline" and rec["label"] in ("left", "right", "up", "down", "circle-cw", "wave")
    assert rec["total_seconds"] == pytest.approx(rec["flow_seconds"] + rec["classify_seconds"])


def test_images_written_by_write_image_are_ppm(tmp_path):
    write_image(tmp_path / "x.ppm", np.zeros((2, 2, 3), np.uint8))
    assert (tmp_path / "x.ppm").read_bytes().startswith(b"P6")
