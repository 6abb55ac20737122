import json

import numpy as np
import pytest

from lava.checkpoint import load_checkpoint
from lava.cli import main


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    """Tiny corpus, autoencoder and both heads built through the CLI."""
    d = tmp_path_factory.mktemp("cli")
    cfg = d / "train.json"
    cfg.write_text(json.dumps({"max_epochs": 1, "batch_size": 4, "limit_train": 4,
                               "limit_val": 2}))
    head_cfg = d / "head.json"
    head_cfg.write_text(json.dumps({"max_epochs": 1, "batch_size": 8, "lr": 1e-3}))
    assert main(["synth-corpus", "--out", str(d / "corpus"), "--train", "6", "--val", "6",
                 "--test", "6", "--real-test", "2", "--unseen-test", "2"]) == 0
    m = d / "corpus" / "manifest.jsonl"
    assert main(["train-ae", "--manifest", str(m), "--out", str(d / "ae.lava"),
                 "--config", str(cfg), "--history", str(d / "ae.jsonl")]) == 0
    for level, extra in (("ada", []), ("admr", ["--no-attention"])):
        assert main(["train-head", "--level", level, "--manifest", str(m), "--encoder",
                     str(d / "ae.lava"), "--out", str(d / f"{level}.lava"),
                     "--config", str(head_cfg), *extra]) == 0
    return d


def test_history_is_jsonl(workdir):
    lines = (workdir / "ae.jsonl").read_text().splitlines()
    assert len(lines) == 1 and json.loads(lines[0])["epoch"] == 1


def test_no_attention_flag_in_metadata(workdir):
    assert load_checkpoint(workdir / "admr.lava").meta["attention"] is False
    assert load_checkpoint(workdir / "ada.lava").meta["attention"] is True


def test_calibrate_writes_threshold(workdir, capsys):
    m = workdir / "corpus" / "manifest.jsonl"
    out = workdir / "ada_cal.lava"
    code, text, _ = run(capsys, "calibrate", "--level", "ada", "--target-acc", "0.85",
                        "--manifest", m, "--encoder", workdir / "ae.lava",
                        "--head", workdir / "ada.lava", "--out", out)
    assert code == 0
    first, second = text.splitlines()
    assert first.startswith("tau_ada = ")
    th = json.loads(second)
    assert th["target_acc"] == "0.85" and th["level"] == "ADA"
    assert load_checkpoint(out).meta["threshold"] == th


def test_infer_prints_one_json_line(workdir, capsys):
    audio = next((workdir / "corpus" / "audio" / "F03" / "test").glob("*.wav"))
    code, text, _ = run(capsys, "infer", "--audio", audio, "--encoder", workdir / "ae.lava",
                        "--ada", workdir / "ada.lava", "--admr", workdir / "admr.lava")
    assert code == 0
    lines = text.splitlines()
    assert len(lines) == 1
    res = json.loads(lines[0])
    assert {"technology", "model"} == set(res["attribution"])
    assert (res["admr"] is not None) == (res["attribution"]["technology"] == "Codec")


def test_eval_modes(workdir, capsys):
    m = workdir / "corpus" / "manifest.jsonl"
    models = ["--encoder", workdir / "ae.lava", "--ada", workdir / "ada.lava",
              "--admr", workdir / "admr.lava"]
    code, text, _ = run(capsys, "eval", "--mode", "metrics", "--manifest", m, "--split",
                        "test", "--level", "admr", *models)
    assert code == 0 and json.loads(text)["level"] == "ADMR"
    code, text, _ = run(capsys, "eval", "--mode", "error-prop", "--manifest", m, "--split",
                        "test", *models)
    assert code == 0 and "ada_error_rate" in json.loads(text)
    g = workdir / "corpus" / "generalization.jsonl"
    code, text, _ = run(capsys, "eval", "--mode", "generalization", "--manifest", g, *models)
    assert code == 0 and "conforming_fraction" in json.loads(text)


def test_preprocess_to_npy(workdir, capsys):
    out = workdir / "x.npy"
    code, _, _ = run(capsys, "preprocess", "--manifest", workdir / "corpus" / "manifest.jsonl",
                     "--split", "test", "--out", out)
    x = np.load(out)
    assert code == 0 and x.shape[1] == 48000 and x.dtype == np.float32


def test_wrong_version_checkpoint_exit_1(workdir, capsys, tmp_path):
    data = bytearray((workdir / "ada.lava").read_bytes())
    data[4:5] = b"9"
    bad = tmp_path / "bad.lava"
    bad.write_bytes(bytes(data))
    audio = next((workdir / "corpus" / "audio" / "ASV" / "test").glob("*.wav"))
    code, _, err = run(capsys, "infer", "--audio", audio, "--encoder", workdir / "ae.lava",
                       "--ada", bad)
    assert code == 1 and "version" in err


def test_missing_file_exit_2(workdir, capsys, tmp_path):
    code, _, _ = run(capsys, "infer", "--audio", tmp_path / "nope.wav",
                     "--encoder", workdir / "ae.lava", "--ada", workdir / "ada.lava")
    assert code == 2


def test_bad_flags_exit_1(capsys):
    assert run(capsys, "train-head", "--level", "xyz", "--manifest", "m", "--encoder", "e",
               "--out", "o")[0] == 1
    assert run(capsys, "no-such-command")[0] == 1


def test_invalid_config_exit_1(capsys, tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text("{not json")
    code, _, err = run(capsys, "run-experiment", "--config", cfg, "--out", tmp_path / "o")
    assert code == 1 and "line 1" in err
    cfg.write_text(json.dumps({"bogus": 1}))
    assert run(capsys, "run-experiment", "--config", cfg, "--out", tmp_path / "o")[0] == 1


def test_gradcheck_command(capsys, tmp_path):
    out = tmp_path / "g.json"
    code, _, _ = run(capsys, "gradcheck", "--length", "64", "--out", out)
    rep = json.loads(out.read_text())
    assert code == 0 and rep["passed"]
    assert set(rep["results"]) == {"encoder.train", "encoder.eval", "decoder.train",
                                   "decoder.eval"}
