import subprocess
import sys

import pytest

from elevgan import logcodec
from elevgan.cli import build_parser, main

SUBCOMMANDS = ["simulate", "pretrain-gen", "pretrain-disc", "train", "generate", "evaluate", "features"]


def write_train_config(tmp_path, corpus, **extra):
    lines = {
        "corpus": corpus,
        "out_dir": "run",
        "seq_length": 30,
        "batch_size": 8,
        "emb_dim": 4,
        "hidden_dim": 8,
        "mle_epochs": 1,
        "disc_emb_dim": 4,
        "conv_filters": 4,
        "conv_width": 3,
        "disc_hidden_dim": 4,
        "disc_epochs": 1,
        "disc_windows": 16,
        "epochs": 0,
        "g_batch_size": 2,
        "n_rollouts": 2,
        "eval_chars": 1000,
        **extra,
    }
    path = tmp_path / "train.cfg"
    path.write_text("# test run\n" + "".join(f"{k} = {v}\n" for k, v in lines.items()))
    return path


@pytest.fixture
def small_log(tmp_path):
    cfg = tmp_path / "building.cfg"
    cfg.write_text("num_shafts = 2\ncars_per_shaft = 2\nnum_floors = 12\narrival_rate = 0.02\nseed = 4\nt_max = 6000\n")
    out = tmp_path / "sim.log"
    assert main(["simulate", "-c", str(cfg), "-o", str(out)]) == 0
    return out


def test_simulate_writes_parseable_log(small_log):
    text = small_log.read_text()
    assert text.endswith("\n") and "\r" not in text
    report = logcodec.realism_features(text)
    assert report.line_count > 100 and report.line_parse_rate == 1.0


def test_simulate_zero_horizon(tmp_path, capsys):
    out = tmp_path / "empty.log"
    assert main(["simulate", "-t", "0", "-o", str(out)]) == 0
    assert out.read_text() == ""
    assert "0 lines" in capsys.readouterr().err


def test_simulate_batch_directory(tmp_path):
    configs = tmp_path / "configs"
    configs.mkdir()
    (configs / "a.cfg").write_text("num_shafts = 1\ncars_per_shaft = 2\nnum_floors = 8\narrival_rate = 0.01\n")
    (configs / "b.cfg").write_text("num_shafts = 2\nnum_floors = 6\ncars_per_shaft = 1\n")
    (configs / "notes.md").write_text("ignored")
    assert main(["simulate", "-c", str(configs), "-o", str(tmp_path / "logs")]) == 0
    logs = sorted(p.name for p in (tmp_path / "logs").iterdir())
    assert logs == ["a.log", "b.log"]
    last = logcodec.split_lines((tmp_path / "logs" / "a.log").read_text())[-1]
    assert int(last.split(" ")[0]) <= 10_000


def test_simulate_bad_config_removes_partial_output(tmp_path, capsys):
    configs = tmp_path / "configs"
    configs.mkdir()
    (configs / "a.cfg").write_text("num_floors = 8\n")
    (configs / "b.cfg").write_text("num_floors = 1\n")
    assert main(["simulate", "-c", str(configs), "-o", str(tmp_path / "logs")]) == 1
    assert list((tmp_path / "logs").iterdir()) == []
    assert "num_floors" in capsys.readouterr().err


def test_simulate_missing_config(tmp_path):
    assert main(["simulate", "-c", str(tmp_path / "none.cfg"), "-o", str(tmp_path / "x.log")]) == 1
    assert not (tmp_path / "x.log").exists()


def test_features_and_csv(small_log, tmp_path, capsys):
    csv_path = tmp_path / "features.csv"
    for _ in range(2):
        assert main(["features", str(small_log), "--csv", str(csv_path)]) == 0
    out = capsys.readouterr().out
    assert "line_parse_rate=1.0" in out and "lifecycle_complete_rate=1.0" in out
    rows = csv_path.read_text().splitlines()
    assert rows[0].startswith("line_count,") and len(rows) == 3


def test_evaluate_log_file(small_log, capsys):
    assert main(["evaluate", str(small_log)]) == 0
    assert "timestamp_monotonic_fraction=1.0" in capsys.readouterr().out


def test_unknown_flag_is_an_error(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["simulate", "--bogus", "-o", "x"])
    assert exc.value.code == 2
    assert "unrecognized arguments" in capsys.readouterr().err


@pytest.mark.parametrize("command", SUBCOMMANDS)
def test_help_documents_flags(command, capsys):
    with pytest.raises(SystemExit) as exc:
        main([command, "--help"])
    assert exc.value.code == 0
    help_text = capsys.readouterr().out
    sub = build_parser()._subparsers._group_actions[0].choices[command]
    for action in sub._actions:
        for flag in action.option_strings:
            assert flag in help_text


def test_pretrain_then_generate_and_evaluate(small_log, tmp_path, capsys):
    cfg = write_train_config(tmp_path, small_log)
    assert main(["pretrain-gen", "-c", str(cfg)]) == 0
    run = tmp_path / "run"
    assert (run / "generator.npz").exists() and (run / "history_pretrain_gen.csv").exists()
    assert main(["pretrain-disc", "-c", str(cfg)]) == 0
    assert (run / "discriminator.npz").exists()

    a, b = tmp_path / "a.txt", tmp_path / "b.txt"
    for out in (a, b):
        assert main(["generate", "--checkpoint", str(run / "generator.npz"), "--length", "500", "--seed", "3", "-o", str(out)]) == 0
    assert a.read_text() == b.read_text() and len(a.read_text()) == 500
    assert "chars/s" in capsys.readouterr().err

    empty = tmp_path / "empty.txt"
    assert main(["generate", "-c", str(cfg), "--length", "0", "-o", str(empty)]) == 0
    assert empty.read_text() == ""

    assert main(["evaluate", "-c", str(cfg), "--length", "1000"]) == 0
    assert "line_parse_rate=" in capsys.readouterr().out


def test_train_zero_epochs_is_deterministic(small_log, tmp_path):
    cfg = write_train_config(tmp_path, small_log)
    assert main(["train", "-c", str(cfg)]) == 0
    history = tmp_path / "run" / "history.csv"
    first = history.read_bytes()
    assert [line.split(",")[0] for line in first.decode().splitlines()[1:]] == ["mle_1", "disc_1"]
    assert main(["train", "-c", str(cfg)]) == 0
    assert history.read_bytes() == first


def test_train_missing_corpus_fails(tmp_path, capsys):
    cfg = write_train_config(tmp_path, tmp_path / "absent.log")
    assert main(["train", "-c", str(cfg)]) == 1
    assert "corpus not found" in capsys.readouterr().err
    assert not (tmp_path / "run").exists()


def test_pretrain_disc_rejects_vocab_mismatch(small_log, tmp_path, capsys):
    cfg = write_train_config(tmp_path, small_log)
    assert main(["pretrain-gen", "-c", str(cfg)]) == 0
    other = tmp_path / "other.log"
    other.write_text(small_log.read_text() + "ZZZ\n")
    cfg = write_train_config(tmp_path, other)
    assert main(["pretrain-disc", "-c", str(cfg)]) == 1
    assert "vocabulary" in capsys.readouterr().err
    assert not (tmp_path / "run" / "discriminator.npz").exists()


def test_generate_rejects_corrupt_manifest(small_log, tmp_path):
    cfg = write_train_config(tmp_path, small_log)
    assert main(["pretrain-gen", "-c", str(cfg)]) == 0
    manifest = tmp_path / "run" / "generator.manifest"
    manifest.write_text(manifest.read_text().replace("vocab_digest=", "vocab_digest=00"))
    out = tmp_path / "g.txt"
    assert main(["generate", "--checkpoint", str(tmp_path / "run" / "generator"), "-o", str(out)]) == 1
    assert not out.exists()


def test_console_entry_point_runs():
    result = subprocess.run([sys.executable, "-m", "elevgan.cli", "--help"], capture_output=True, text=True)
    assert result.returncode == 0
    for command in SUBCOMMANDS:
        assert command in result.stdout
