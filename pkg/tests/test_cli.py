import numpy as np
import pytest

from ffcnet.cli import build_parser, main


def write_ini(tmp_path):
    ini = tmp_path / "run.ini"
    ini.write_text(f"""
[run]
out = {tmp_path}/run
seed = 3
precision = f32

[data]
root = {tmp_path}/data
image_size = 16

[synth]
per_class = 5
bands = 2-5,6-10
patterns = iso,iso
noise_sigma = 0.02

[psm]
k = 2
p = 0.3

[arch]
preset = custom
stem_channels = 4
stages = 1x4s1,1x6s2

[train]
epochs = 2
batch_size = 4
early_stop_patience = 0
""")
    return ini


def test_no_command_prints_help_and_fails():
    assert main([]) == 1


def test_usage_errors_exit_1(capsys):
    with pytest.raises(SystemExit) as e:
        main(["frobnicate"])
    assert e.value.code == 1
    with pytest.raises(SystemExit) as e:
        main(["train", "--bogus"])
    assert e.value.code == 1
    with pytest.raises(SystemExit) as e:
        main(["eval", "--split", "holdout"])
    assert e.value.code == 1


def test_bad_config_exits_1(tmp_path, capsys):
    bad = tmp_path / "bad.ini"
    bad.write_text("[psm]\nkk = 4\n")
    assert main(["train", "--config", str(bad)]) == 1
    assert "unknown key" in capsys.readouterr().err


def test_missing_data_root_exits_1(tmp_path, capsys):
    assert main(["train", "--out", str(tmp_path / "o")]) == 1
    assert "dataset root" in capsys.readouterr().err


def test_missing_checkpoint_exits_1(tmp_path, capsys):
    ini = write_ini(tmp_path)
    assert main(["gen-data", "--config", str(ini)]) == 0
    assert main(["eval", "--config", str(ini)]) == 1
    assert "checkpoint" in capsys.readouterr().err


def test_broken_dataset_is_runtime_error_2(tmp_path, capsys):
    (tmp_path / "data" / "class_0").mkdir(parents=True)  # empty class dir
    ini = write_ini(tmp_path)
    assert main(["preprocess", "--config", str(ini)]) == 2
    assert "empty" in capsys.readouterr().err


def test_parser_declares_all_subcommands():
    text = build_parser().format_help()
    for cmd in ("gen-data", "preprocess", "train", "eval", "sweep", "inspect"):
        assert cmd in text


def test_full_chain(tmp_path, capsys):
    ini = write_ini(tmp_path)
    run = tmp_path / "run"
    data = tmp_path / "data"

    assert main(["gen-data", "--config", str(ini)]) == 0
    assert (data / "class_0" / "sample_00004.png").is_file()
    manifest = (data / "manifest.txt").read_text()
    assert "fingerprint=" in manifest and "classes=2" in manifest

    # regeneration is idempotent, fingerprint included
    assert main(["gen-data", "--config", str(ini)]) == 0
    assert (data / "manifest.txt").read_text() == manifest

    assert main(["preprocess", "--config", str(ini)]) == 0
    for split in ("train", "val", "test"):
        assert (run / f"{split}.ffcs").stat().st_size > 0

    assert main(["train", "--config", str(ini)]) == 0
    history = (run / "history.txt").read_text()
    assert history.count("\n") == 2  # one line per epoch
    assert "val_acc=" in history
    assert (run / "best.ffcw").is_file() and (run / "last.ffcw").is_file()

    ckpt = str(run / "best.ffcw")
    assert main(["eval", "--config", str(ini), "--checkpoint", ckpt]) == 0
    out = capsys.readouterr().out
    assert "accuracy" in out
    metrics = (run / "metrics_test.txt").read_text()
    assert "accuracy" in metrics
    counts = (run / "confusion_test_counts.csv").read_text()
    assert counts.startswith("true\\pred,class_0,class_1")
    total = sum(int(v) for line in counts.strip().split("\n")[1:]
                for v in line.split(",")[1:])
    assert total == 2  # test split: 1 sample per class at per_class=5
    assert (run / "confusion_test_percent.csv").is_file()
    assert (run / "confusion_test.svg").read_text().startswith("<svg")

    # eval is deterministic: a second run reproduces the artifacts exactly
    assert main(["eval", "--config", str(ini), "--checkpoint", ckpt]) == 0
    assert (run / "metrics_test.txt").read_text() == metrics
    assert (run / "confusion_test_counts.csv").read_text() == counts

    # eval on the train split writes its own artifact set
    assert main(["eval", "--config", str(ini), "--checkpoint", ckpt,
                 "--split", "train"]) == 0
    assert (run / "metrics_train.txt").is_file()

    sample = str(data / "class_0" / "sample_00000.png")
    assert main(["inspect", "--config", str(ini), sample]) == 0
    inspect_dir = run / "inspect"
    mags = sorted(p.name for p in inspect_dir.glob("*_mag.png"))
    assert mags == [f"sample_00000_c0_p{i:02d}_mag.png" for i in range(4)]
    assert len(list(inspect_dir.glob("*_phase.png"))) == 4
    assert main(["inspect", "--config", str(ini), sample, "--centered"]) == 0


def test_inspect_missing_image_exits_1(tmp_path, capsys):
    ini = write_ini(tmp_path)
    assert main(["inspect", "--config", str(ini), str(tmp_path / "no.png")]) == 1
    assert "does not exist" in capsys.readouterr().err


def test_cli_seed_override_beats_config(tmp_path):
    ini = write_ini(tmp_path)
    assert main(["gen-data", "--config", str(ini)]) == 0
    base = (tmp_path / "data" / "manifest.txt").read_text()
    assert "seed=3" in base
    assert main(["gen-data", "--config", str(ini), "--seed", "4"]) == 0
    override = (tmp_path / "data" / "manifest.txt").read_text()
    assert "seed=4" in override
    assert base.split("fingerprint")[1] != override.split("fingerprint")[1]
