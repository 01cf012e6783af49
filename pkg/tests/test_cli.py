import json
import subprocess
import sys

import pytest

from stllc.cli import main
from stllc.dictionary import load_dictionary
from stllc.pipeline import load_model


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert main(["synth", "--out", str(root / "data"), "--per-class", "3", "--seed", "5"]) == 0
    (root / "cfg.txt").write_text("n_s=12\nseed=1\n")
    return root


def test_synth_writes_manifest(workspace):
    lines = (workspace / "data" / "manifest.csv").read_text().splitlines()
    assert lines[0] == "path,label,subject"
    assert len(lines) == 10


def test_train_predict_evaluate(workspace, capsys):
    model = workspace / "m.stlm"
    assert main(["train", "--manifest", str(workspace / "data" / "manifest.csv"),
                 "--config", str(workspace / "cfg.txt"), "--model", str(model),
                 "--method", "sc", "--seed", "4"]) == 0
    cfg = load_model(model).config
    assert (cfg.method, cfg.seed, cfg.n_s) == ("sc", 4, 12)

    capsys.readouterr()
    dump = workspace / "desc.txt"
    assert main(["predict", "--model", str(model), "--input",
                 str(workspace / "data" / "left_001.dvs"), "--dump-descriptor", str(dump)]) == 0
    assert capsys.readouterr().out.strip() == "left"
    assert len(dump.read_text().split()) == 105

    conf = workspace / "conf.csv"
    assert main(["evaluate", "--model", str(model), "--manifest",
                 str(workspace / "data" / "manifest.csv"), "--confusion", str(conf)]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["accuracy"] == 1.0
    assert conf.read_text().splitlines()[0] == "true\\predicted,down,left,up"

    assert main(["evaluate", "--model", str(model), "--manifest",
                 str(workspace / "data" / "manifest.csv"), "--report", "csv"]) == 0
    assert capsys.readouterr().out.startswith("path,true,predicted\n")


def test_build_dict(workspace):
    out = workspace / "d.stld"
    assert main(["build-dict", "--manifest", str(workspace / "data" / "manifest.csv"),
                 "--config", str(workspace / "cfg.txt"), "--out", str(out)]) == 0
    assert load_dictionary(out).atoms.shape == (48, 12)


def test_loso(workspace):
    out = workspace / "loso.json"
    assert main(["loso", "--manifest", str(workspace / "data" / "manifest.csv"),
                 "--config", str(workspace / "cfg.txt"), "--report", str(out)]) == 0
    result = json.loads(out.read_text())
    assert len(result["folds"]) == 3
    assert result["overall"]["total"] == 9


def test_default_config(tmp_path):
    assert main(["default-config", "--out", str(tmp_path / "c.txt")]) == 0
    assert "n_s=200" in (tmp_path / "c.txt").read_text().splitlines()


def test_usage_errors():
    with pytest.raises(SystemExit) as exc:
        main(["train"])
    assert exc.value.code == 1
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 1
    with pytest.raises(SystemExit) as exc:
        main(["train", "--manifest", "m", "--config", "c", "--model", "x", "--method", "pca"])
    assert exc.value.code == 1


def test_data_errors(workspace, tmp_path):
    assert main(["predict", "--model", str(tmp_path / "missing.stlm"), "--input", "x"]) == 2
    bad_cfg = tmp_path / "bad.txt"
    bad_cfg.write_text("colour=blue\n")
    assert main(["train", "--manifest", str(workspace / "data" / "manifest.csv"),
                 "--config", str(bad_cfg), "--model", str(tmp_path / "m")]) == 2
    corrupt = tmp_path / "c.stlm"
    corrupt.write_bytes(b"STLM" + b"\x01\x00\x00\x00" + b"\x00" * 20)
    assert main(["predict", "--model", str(corrupt), "--input", "x"]) == 2


def test_numeric_failure(workspace, tmp_path):
    cfg = tmp_path / "cfg.txt"
    cfg.write_text("n_s=12\nmethod=llc\nsigma=0.001\n")
    code = main(["train", "--manifest", str(workspace / "data" / "manifest.csv"),
                 "--config", str(cfg), "--model", str(tmp_path / "m")])
    assert code == 3


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "stllc", "synth", "--out", str(tmp_path),
                           "--per-class", "1", "--seed", "0"], capture_output=True, text=True)
    assert proc.returncode == 0
    proc = subprocess.run([sys.executable, "-m", "stllc", "predict"], capture_output=True, text=True)
    assert proc.returncode == 1
