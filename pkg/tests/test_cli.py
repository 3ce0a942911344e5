import json
import subprocess
import sys

import pytest

from featquant.cli import main
from featquant.deploy import EncoderTable, unpack

GRID = {
    "dropout_rate": [0.0],
    "learning_rate": [0.01],
    "hidden_layers": [1],
    "hidden_neurons": [8],
    "epochs": [2],
    "tau_end": [0.01],
}


@pytest.fixture
def config(tmp_path):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps({"grid": GRID, "folds": 2, "eval_splits": 2, "bit_widths": [2]}))
    return p


def test_help():
    res = subprocess.run([sys.executable, "-m", "featquant.cli", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    for cmd in ("fit", "train", "eval", "ablate", "report", "export-encoder", "pack", "unpack"):
        assert cmd in res.stdout


def test_train_export_pack_unpack(tmp_path, config, capsys):
    out = tmp_path / "run"
    main(["train", "--dataset", "fried:200", "--config", str(config), "--method", "Bw-SQ", "--bits", "2",
          "--out", str(out)])
    assert (out / "checkpoint.json").exists()

    main(["export-encoder", "--checkpoint", str(out / "checkpoint.json"), "--style", "binary_search",
          "--name", "dev", "--out", str(out)])
    report = json.loads(capsys.readouterr().out.split("\n", 2)[-1])
    assert report["threshold_bytes"] == 10 * 3 * 4
    assert "encode_features" in (out / "dev_encoder.c").read_text()
    table = EncoderTable.load(out / "dev_table.json")

    row = ",".join(["0.5"] * 10)
    main(["pack", "--table", str(out / "dev_table.json"), "--row", row, "--out", str(out / "f.bin")])
    data = (out / "f.bin").read_bytes()
    assert len(data) == 8 + 3
    assert unpack(data) == table.encode([0.5] * 10).tolist()

    main(["pack", "--table", str(out / "dev_table.json"), "--row", row])
    assert capsys.readouterr().out.strip() == data.hex()

    main(["unpack", "--frame", str(out / "f.bin")])
    decoded = json.loads(capsys.readouterr().out)
    assert decoded == {"k": 10, "bits": 2, "codes": unpack(data)}


def test_eval_then_report(tmp_path, config, capsys):
    out = tmp_path / "eval"
    main(["eval", "--dataset", "fried:120", "--config", str(config), "--out", str(out)])
    text = capsys.readouterr().out
    assert "| fried | Bw-SQ | 2 |" in text and "| fried | FP | 32 |" in text
    first = (out / "results.csv").read_text()
    main(["report", "--results", str(out / "results.csv"), "--out", str(tmp_path / "again")])
    assert (tmp_path / "again" / "results.csv").read_text() == first
    assert (tmp_path / "again" / "curves.svg").exists()


def test_fit_writes_best(tmp_path, config):
    out = tmp_path / "fit"
    main(["fit", "--dataset", "fried:80", "--config", str(config), "--method", "Pr-QQ", "--out", str(out)])
    best = json.loads((out / "best_hyperparams.json").read_text())
    assert best["Pr-QQ@2"] == {k: v[0] for k, v in GRID.items()}


def test_ablate(tmp_path, config, capsys):
    out = tmp_path / "abl"
    main(["ablate", "--dataset", "fried:80", "--config", str(config), "--out", str(out)])
    assert "vs Bw-SQ" in capsys.readouterr().out
    assert (out / "ablation.md").exists()


def test_csv_dataset_needs_target(tmp_path, config):
    p = tmp_path / "d.csv"
    p.write_text("a,y\n" + "".join(f"{i},{i * 2}\n" for i in range(20)))
    with pytest.raises(ValueError, match="--target"):
        main(["fit", "--dataset", str(p), "--config", str(config), "--out", str(tmp_path / "o")])
