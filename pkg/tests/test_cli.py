import argparse

import pytest
from PIL import Image

from uwcolor.cli import SEED_ENV, build_parser, main
from uwcolor.config import parse_config

TINY = """[arch]
preset = toy
image_size = 32

[train]
steps = 6
checkpoint_every = 3
buffer_capacity = 4
"""


@pytest.fixture(scope="module")
def toy_dirs(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli_toy")
    assert main(["make-toy", "--out", str(root), "--n", "4", "--size", "32", "--seed", "1"]) == 0
    return root


@pytest.fixture(scope="module")
def trained_run(toy_dirs, tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    cfg = out / "tiny.ini"
    cfg.write_text(TINY)
    code = main(["train", "--config", str(cfg), "--domain-x", str(toy_dirs / "X"), "--domain-y", str(toy_dirs / "Y"),
                 "--out", str(out / "full")])
    assert code == 0
    return out


def test_make_toy_byte_identical(tmp_path):
    for name in ("a", "b"):
        assert main(["make-toy", "--out", str(tmp_path / name), "--n", "2", "--size", "16", "--seed", "7"]) == 0
    files = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*.png"))
    assert len(files) == 4
    for f in files:
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_make_toy_bad_gains(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["make-toy", "--out", "x", "--gains", "1,2"])
    assert exc.value.code == 2


def test_train_outputs(trained_run):
    full = trained_run / "full"
    assert (full / "checkpoint_000003.ckpt").exists() and (full / "final.ckpt").exists()
    assert len((full / "losses.tsv").read_text().splitlines()) == 7
    assert parse_config((full / "config.ini").read_text()).train.steps == 6


def test_resume_reproduces_log(trained_run, toy_dirs, tmp_path):
    part = tmp_path / "part"
    part.mkdir()
    (part / "losses.tsv").write_text((trained_run / "full" / "losses.tsv").read_text() + "99\tjunk\n")
    code = main(["train", "--resume", str(trained_run / "full" / "checkpoint_000003.ckpt"),
                 "--domain-x", str(toy_dirs / "X"), "--domain-y", str(toy_dirs / "Y"), "--out", str(part)])
    assert code == 0
    assert (part / "losses.tsv").read_text() == (trained_run / "full" / "losses.tsv").read_text()
    assert (part / "final.ckpt").read_bytes() == (trained_run / "full" / "final.ckpt").read_bytes()


def test_seed_precedence(toy_dirs, tmp_path, monkeypatch):
    cfg = tmp_path / "c.ini"
    cfg.write_text(TINY.replace("steps = 6", "steps = 1"))
    args = ["train", "--config", str(cfg), "--domain-x", str(toy_dirs / "X"), "--domain-y", str(toy_dirs / "Y")]
    monkeypatch.setenv(SEED_ENV, "42")
    assert main(args + ["--out", str(tmp_path / "env")]) == 0
    assert parse_config((tmp_path / "env" / "config.ini").read_text()).train.seed == 42
    assert main(args + ["--out", str(tmp_path / "flag"), "--seed", "5"]) == 0
    assert parse_config((tmp_path / "flag" / "config.ini").read_text()).train.seed == 5


def test_unknown_config_key_exits_2(toy_dirs, tmp_path, capsys):
    cfg = tmp_path / "bad.ini"
    cfg.write_text("[optim]\nlearning_rate = 0.1\n")
    code = main(["train", "--config", str(cfg), "--domain-x", str(toy_dirs / "X"), "--domain-y", str(toy_dirs / "Y"),
                 "--out", str(tmp_path / "o")])
    assert code == 2
    assert "optim.learning_rate" in capsys.readouterr().err


def test_missing_domain_exits_2(tmp_path, capsys):
    code = main(["train", "--domain-x", str(tmp_path / "nope"), "--domain-y", str(tmp_path), "--out", str(tmp_path / "o")])
    assert code == 2 and "domain X" in capsys.readouterr().err


def test_infer_counts(trained_run, tmp_path):
    src = tmp_path / "in"
    src.mkdir()
    for i in range(3):
        Image.new("RGB", (40, 30), (20 * i, 100, 200)).save(src / f"p{i}.jpg")
    ckpt = str(trained_run / "full" / "final.ckpt")
    assert main(["infer", "--checkpoint", ckpt, "--input", str(src), "--output", str(tmp_path / "out")]) == 0
    assert len(list((tmp_path / "out").glob("*_corrected.png"))) == 3
    assert main(["infer", "--checkpoint", ckpt, "--input", str(src / "p0.jpg"), "--output", str(tmp_path / "one")]) == 0
    assert [p.name for p in (tmp_path / "one").iterdir()] == ["p0_corrected.png"]


def test_bad_checkpoint_exits_2(tmp_path, capsys):
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(b"garbage")
    assert main(["infer", "--checkpoint", str(bad), "--input", str(tmp_path), "--output", str(tmp_path / "o")]) == 2
    assert "checkpoint" in capsys.readouterr().err


def test_eval_empty_dir(trained_run, tmp_path, capsys):
    empty = tmp_path / "empty"
    empty.mkdir()
    assert main(["eval", "--checkpoint", str(trained_run / "full" / "final.ckpt"), "--dir", str(empty)]) == 0
    assert "warning" in capsys.readouterr().err


def test_eval_writes_report(trained_run, toy_dirs, tmp_path, capsys):
    code = main(["eval", "--checkpoint", str(trained_run / "full" / "final.ckpt"), "--dir", str(toy_dirs / "X"),
                 "--report", str(tmp_path / "r.tsv")])
    assert code == 0
    assert len((tmp_path / "r.tsv").read_text().splitlines()) == 6
    assert "proxy" in capsys.readouterr().out


def test_selftest_passes(capsys):
    assert main(["selftest"]) == 0
    out = capsys.readouterr().out
    for suite in ("ssim-oracle", "gradients", "architecture", "replay-buffer", "loss-identities", "adam"):
        assert f"PASS {suite}" in out


def test_config_command(tmp_path):
    assert main(["config", "--out", str(tmp_path / "ref.ini")]) == 0
    assert parse_config((tmp_path / "ref.ini").read_text()).optim.lr == 0.0002


def test_help_lists_every_flag():
    parser = build_parser()
    sub = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    assert set(sub.choices) == {"train", "infer", "eval", "make-toy", "selftest", "config"}
    for name, p in sub.choices.items():
        text = p.format_help()
        for action in p._actions:
            for opt in action.option_strings:
                assert opt in text, (name, opt)
            if action.option_strings and action.dest != "help":
                assert action.help, (name, action.dest)
