import json
import math

import pytest

from pulseforge import cli
from pulseforge.pipeline import dataset as ds


def run(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def data(tmp_path, capsys):
    d = tmp_path / "data"
    code, _, _ = run(capsys, "synth", "--out", d, "--n", 3, "--hr", 72, "--snr", "inf", "--duration", 12, "--meta-rois", 2)
    assert code == 0
    return d


def test_synth_is_byte_reproducible(tmp_path, capsys):
    for name in ("a", "b"):
        assert run(capsys, "synth", "--out", tmp_path / name, "--n", 2, "--duration", 4, "--meta-rois", 2)[0] == 0
    files = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file() and p.name != "run_config.json")
    assert files
    for rel in files:
        assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes()
    assert len(ds.read_manifest(tmp_path / "a" / "manifest.csv")) == 2


@pytest.mark.parametrize("flag", ["--hr", "--hr-max"])
def test_synth_rejects_out_of_range_hr(tmp_path, capsys, flag):
    code, _, err = run(capsys, "synth", "--out", tmp_path, flag, 300)
    assert code == 2 and "40-180" in err


def test_round_trip_baseline(data, tmp_path, capsys):
    pred = tmp_path / "pred"
    assert run(capsys, "predict", "--manifest", data / "manifest.csv", "--out", pred)[0] == 0
    header = (pred / "windows.csv").read_text().splitlines()[0]
    assert header == "sample_id,window_index,hr_bpm"
    code, out, _ = run(capsys, "evaluate", "--predictions", pred / "summary.csv", "--manifest", data / "manifest.csv", "--out", tmp_path / "ev")
    assert code == 0
    rmse = float(out.strip().splitlines()[-1].split()[0].split("=")[1])
    assert rmse <= 2


def test_evaluate_fixture(tmp_path, capsys):
    (tmp_path / "p.csv").write_text("sample_id,video_hr\na,72\nb,80\n")
    (tmp_path / "g.csv").write_text("sample_id,hr_gt\na,70\nb,85\n")
    code, out, _ = run(capsys, "evaluate", "--predictions", tmp_path / "p.csv", "--manifest", tmp_path / "g.csv", "--out", tmp_path / "o")
    assert code == 0 and f"rmse={math.sqrt(14.5)!r} count=2" in out
    assert (tmp_path / "o" / "report.csv").read_text().splitlines()[-1] == f"# rmse={math.sqrt(14.5)!r}"


def test_ensemble_identity_and_mean(tmp_path, capsys):
    (tmp_path / "a.csv").write_text("sample_id,video_hr\ns,70\n")
    (tmp_path / "b.csv").write_text("sample_id,video_hr\ns,74\n")
    assert run(capsys, "ensemble", "--inputs", tmp_path / "a.csv", tmp_path / "a.csv", "--out", tmp_path / "i")[0] == 0
    assert (tmp_path / "i" / "summary.csv").read_text() == (tmp_path / "a.csv").read_text().replace("70", "70.0")
    assert run(capsys, "ensemble", "--inputs", tmp_path / "a.csv", tmp_path / "b.csv", "--out", tmp_path / "m")[0] == 0
    assert "s,72.0" in (tmp_path / "m" / "summary.csv").read_text()
    assert run(capsys, "ensemble", "--inputs", tmp_path / "a.csv", "--out", tmp_path / "x")[0] == 2


@pytest.mark.parametrize(
    "cmd,values",
    [
        ("predict", ["300", "15", "0.66", "3.0"]),
        ("pretrain", ["128", "(default: 6)", "(default: 2)", "150", "0.0001", "(default: 4)", "(default: 3)"]),
        ("finetune", ["0.1", "0.2", "1e-05", "(default: 6)", "(default: 3)"]),
    ],
)
def test_help_lists_defaults(capsys, cmd, values):
    code, out, _ = run(capsys, cmd, "--help")
    assert code == 0
    flat = " ".join(out.split())
    for v in values:
        assert v in flat, v


def test_config_merge_and_echo(data, tmp_path, capsys, monkeypatch):
    conf = tmp_path / "c.json"
    conf.write_text(json.dumps({"step": 30, "reduce": "median"}))
    out = tmp_path / "p"
    code, text, _ = run(capsys, "predict", "--manifest", data / "manifest.csv", "--out", out, "--config", conf, "--step", 60)
    assert code == 0
    echoed = json.loads((out / "run_config.json").read_text())
    assert echoed["step"] == 60 and echoed["reduce"] == "median" and echoed["window"] == 300
    assert json.loads(text) == echoed
    conf.write_text(json.dumps({"bogus": 1}))
    assert run(capsys, "predict", "--manifest", data / "manifest.csv", "--out", out, "--config", conf)[0] == 2


def test_seed_env_and_flag_precedence(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("PULSEFORGE_SEED", "7")
    run(capsys, "synth", "--out", tmp_path / "e", "--n", 1, "--duration", 2, "--meta-rois", 1)
    assert json.loads((tmp_path / "e" / "run_config.json").read_text())["seed"] == 7
    run(capsys, "synth", "--out", tmp_path / "f", "--n", 1, "--duration", 2, "--meta-rois", 1, "--seed", 3)
    assert json.loads((tmp_path / "f" / "run_config.json").read_text())["seed"] == 3
    monkeypatch.setenv("PULSEFORGE_SEED", "x")
    assert run(capsys, "synth", "--out", tmp_path / "g")[0] == 2


def test_error_exit_codes(data, tmp_path, capsys):
    assert run(capsys, "predict", "--manifest", tmp_path / "missing.csv", "--out", tmp_path / "p")[0] == 2
    (tmp_path / "bad.rppg").write_bytes(b"junk")
    code, _, _ = run(capsys, "predict", "--manifest", data / "manifest.csv", "--out", tmp_path / "p", "--mode", "solution1", "--checkpoint", tmp_path / "bad.rppg")
    assert code == 2
    assert run(capsys, "predict", "--out", tmp_path / "p")[0] == 2
    assert run(capsys, "mstmap", "--input", tmp_path / "nope.bin", "--out", tmp_path / "m.csv")[0] == 2
    # windows longer than the 12 s samples violate the window contract
    assert run(capsys, "predict", "--manifest", data / "manifest.csv", "--out", tmp_path / "p", "--window", 600)[0] == 3
    assert run(capsys, "pretrain", "--manifest", data / "manifest.csv", "--out", tmp_path / "t", "--window", 600)[0] == 3


def test_mstmap_export(data, tmp_path, capsys):
    first = ds.read_manifest(data / "manifest.csv")[0]
    src = data / first["path"] / "mstmap.bin"
    assert run(capsys, "mstmap", "--input", src, "--out", tmp_path / "m.csv")[0] == 0
    lines = (tmp_path / "m.csv").read_text().splitlines()
    assert lines[0] == "t,n,c,value" and len(lines) == 1 + 360 * 3 * 6


def _train_chain(data, root, capsys):
    common = ["--D", 4, "--L", 1, "--window", 150, "--steps", 2, "--lr", 1e-3]
    assert run(capsys, "pretrain", "--manifest", data / "manifest.csv", "--out", root / "pre", *common)[0] == 0
    assert run(capsys, "finetune", "--manifest", data / "manifest.csv", "--checkpoint", root / "pre" / "model.rppg", "--out", root / "ft", "--steps", 2)[0] == 0
    assert run(capsys, "predict", "--manifest", data / "manifest.csv", "--checkpoint", root / "ft" / "model.rppg", "--mode", "solution1", "--window", 150, "--out", root / "pred")[0] == 0


def test_training_commands_are_deterministic(data, tmp_path, capsys):
    _train_chain(data, tmp_path / "r1", capsys)
    _train_chain(data, tmp_path / "r2", capsys)
    for rel in ("pre/model.rppg", "pre/loss_trace.csv", "ft/model.rppg", "ft/loss_trace.csv", "pred/summary.csv", "pred/windows.csv"):
        assert (tmp_path / "r1" / rel).read_bytes() == (tmp_path / "r2" / rel).read_bytes(), rel
    head = (tmp_path / "r1" / "pre" / "loss_trace.csv").read_text().splitlines()[0]
    assert head == "step,loss_name,value"


def test_contrastive_commands(tmp_path, capsys):
    d = tmp_path / "v"
    assert run(capsys, "synth", "--out", d, "--n", 2, "--duration", 4, "--meta-rois", 1, "--video-size", 8, "--snr", 20)[0] == 0
    args = ["--clip-len", 60, "--delta-t", 30, "--steps", 2, "--lr", 1e-3, "--width", 4]
    assert run(capsys, "pretrain", "--manifest", d / "manifest.csv", "--regime", "contrastive", "--out", tmp_path / "c", *args)[0] == 0
    ck = tmp_path / "c" / "model.rppg"
    assert run(capsys, "finetune", "--manifest", d / "manifest.csv", "--checkpoint", ck, "--out", tmp_path / "f", "--clip-len", 60, "--delta-t", 30, "--steps", 1)[0] == 0
    code, _, _ = run(capsys, "predict", "--manifest", d / "manifest.csv", "--checkpoint", tmp_path / "f" / "model.rppg", "--mode", "solution2", "--clip-len", 60, "--out", tmp_path / "p")
    assert code == 0
    rows = (tmp_path / "p" / "summary.csv").read_text().splitlines()
    assert len(rows) == 3
    # solution1 mode with a solution2 checkpoint is a usage error
    assert run(capsys, "predict", "--manifest", d / "manifest.csv", "--checkpoint", ck, "--mode", "solution1", "--out", tmp_path / "q")[0] == 2
