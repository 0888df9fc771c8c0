import re
from pathlib import Path

import pytest

from miniformer import cli
from miniformer import data as D
from miniformer import training as Tr

FIXTURES = Path(__file__).parent / "fixtures"

SMALL = """\
model = {model}
corpus = corpus
output_dir = {out}
seed = 1
d_embed = 8
d_hidden = 6
d_model = 8
n_heads = 2
d_ff = 16
n_layers = 1
batch_size = 16
max_epochs = {epochs}
"""


def kv_lines(text):
    return dict(line.split("=", 1) for line in text.splitlines() if "=" in line and " " not in line)


@pytest.fixture
def workdir(tmp_path):
    D.write_parallel(tmp_path / "corpus", D.make_copy_corpus(60, vocab_size=8, min_len=2, max_len=5, seed=0))
    return tmp_path


def write_cfg(folder, model="miniformer", out="run", epochs=3, name="run.cfg"):
    path = folder / name
    path.write_text(SMALL.format(model=model, out=out, epochs=epochs))
    return path


# -- config ----------------------------------------------------------------------------
def test_parse_config_comments_and_types():
    cfg = cli.parse_config("# header\nlr = 0.01  # trailing\nd_hidden=7\nmodel = transformer\n")
    assert (cfg.lr, cfg.d_hidden, cfg.model, cfg.batch_size) == (0.01, 7, "transformer", 32)


@pytest.mark.parametrize("text", ["hidden = 3\n", "d_hidden 3\n", "d_hidden = three\n"])
def test_bad_config_exit_2(tmp_path, text, capsys):
    (tmp_path / "bad.cfg").write_text(text)
    assert cli.main(["train", "--config", str(tmp_path / "bad.cfg")]) == 2
    err = capsys.readouterr().err
    assert err.startswith("error: line 1") and len(err.strip().splitlines()) == 1


def test_invalid_dims_exit_2(tmp_path):
    (tmp_path / "c.cfg").write_text("corpus = x\nd_model = 10\nn_heads = 4\n")
    assert cli.main(["train", "--config", str(tmp_path / "c.cfg")]) == 2
    (tmp_path / "c.cfg").write_text("corpus = x\nd_hidden = 0\n")
    assert cli.main(["params", "--config", str(tmp_path / "c.cfg")]) == 2


def test_missing_corpus_exit_3(tmp_path, capsys):
    (tmp_path / "c.cfg").write_text("corpus = nowhere/corpus\n")
    assert cli.main(["train", "--config", str(tmp_path / "c.cfg")]) == 3
    assert "nowhere/corpus.src" in capsys.readouterr().err


def test_seed_env_override(tmp_path, monkeypatch):
    path = write_cfg(tmp_path)
    assert cli.load_config(path).seed == 1
    monkeypatch.setenv("MINIFORMER_SEED", "42")
    assert cli.load_config(path).seed == 42
    monkeypatch.setenv("MINIFORMER_SEED", "x")
    with pytest.raises(cli.ConfigError):
        cli.load_config(path)


# -- train / translate -----------------------------------------------------------------
@pytest.mark.parametrize("model", ["miniformer", "transformer"])
def test_train_writes_layout_and_improves(workdir, model, capsys):
    assert cli.main(["train", "--config", str(write_cfg(workdir, model))]) == 0
    out = workdir / "run"
    for name in ("checkpoint.bin", "vocab.src", "vocab.tgt", "train.log", "config.resolved", "test.src", "test.tgt"):
        assert (out / name).is_file(), name
    log = (out / "train.log").read_text().splitlines()
    assert len(log) == 3 and log[0].startswith("epoch=1 train_loss=")
    summary = kv_lines(capsys.readouterr().out.splitlines()[-1].replace(" ", "\n"))
    assert float(summary["best_val_loss"]) < float(summary["initial_val_loss"])
    resolved = cli.parse_config((out / "config.resolved").read_text())
    assert resolved.model == model and resolved.lr == 0.001
    assert len((out / "test.src").read_text().splitlines()) == 12


def test_train_then_translate_then_score(workdir, capsys):
    cli.main(["train", "--config", str(write_cfg(workdir))])
    out = workdir / "run"
    rc = cli.main(["translate", "--checkpoint", str(out / "checkpoint.bin"),
                   "--in", str(out / "test.src"), "--out", str(out / "hyp.txt"), "--max-len", "7"])
    assert rc == 0
    hyps = (out / "hyp.txt").read_text().splitlines()
    assert len(hyps) == len((out / "test.src").read_text().splitlines())
    assert all(len(h.split()) <= 7 for h in hyps)
    capsys.readouterr()
    assert cli.main(["score", "--hyp", str(out / "hyp.txt"), "--ref", str(out / "test.tgt")]) == 0
    assert "bleu1" in kv_lines(capsys.readouterr().out)


def test_translate_empty_input_and_blank_lines(workdir):
    cli.main(["train", "--config", str(write_cfg(workdir, epochs=1))])
    ck = str(workdir / "run" / "checkpoint.bin")
    (workdir / "empty.txt").write_text("")
    assert cli.main(["translate", "--checkpoint", ck, "--in", str(workdir / "empty.txt"),
                     "--out", str(workdir / "o.txt")]) == 0
    assert (workdir / "o.txt").read_text() == ""
    (workdir / "gaps.txt").write_text("t1 t2\n\nt3\n")
    cli.main(["translate", "--checkpoint", ck, "--in", str(workdir / "gaps.txt"), "--out", str(workdir / "o.txt")])
    lines = (workdir / "o.txt").read_text().split("\n")
    assert len(lines) == 4 and lines[1] == "" and lines[3] == ""


def test_translate_vocab_mismatch_exit_2(workdir, capsys):
    cli.main(["train", "--config", str(write_cfg(workdir, epochs=1))])
    out = workdir / "run"
    (out / "vocab.tgt").write_text("only\n")
    (workdir / "in.txt").write_text("t1\n")
    assert cli.main(["translate", "--checkpoint", str(out / "checkpoint.bin"),
                     "--in", str(workdir / "in.txt"), "--out", str(workdir / "o.txt")]) == 2
    assert "vocab" in capsys.readouterr().err


def test_translate_missing_checkpoint_exit_2(tmp_path):
    (tmp_path / "in.txt").write_text("a\n")
    assert cli.main(["translate", "--checkpoint", str(tmp_path / "none.bin"),
                     "--in", str(tmp_path / "in.txt"), "--out", str(tmp_path / "o.txt")]) == 2


def test_corrupt_checkpoint_exit_2(workdir):
    cli.main(["train", "--config", str(write_cfg(workdir, epochs=1))])
    ck = workdir / "run" / "checkpoint.bin"
    ck.write_bytes(b"garbage!" + ck.read_bytes()[8:])
    (workdir / "in.txt").write_text("t1\n")
    assert cli.main(["translate", "--checkpoint", str(ck), "--in", str(workdir / "in.txt"),
                     "--out", str(workdir / "o.txt")]) == 2


# -- score -----------------------------------------------------------------------------
def test_score_identical_all_ones(tmp_path, capsys):
    (tmp_path / "a.txt").write_text("a b c d\nThe quick brown fox\n")
    assert cli.main(["score", "--hyp", str(tmp_path / "a.txt"), "--ref", str(tmp_path / "a.txt")]) == 0
    kv = kv_lines(capsys.readouterr().out)
    assert len(kv) == 13 and set(kv.values()) == {"1.0000"}


def test_score_fixture_matches_hand_counts(capsys):
    assert cli.main(["score", "--hyp", str(FIXTURES / "score_hyp.txt"), "--ref", str(FIXTURES / "score_ref.txt")]) == 0
    out = capsys.readouterr().out
    expected = kv_lines("\n".join(l for l in (FIXTURES / "score_expected.txt").read_text().splitlines()
                                  if not l.startswith("#")))
    assert kv_lines(out) == expected
    assert "BLEU-1" in out and "ROUGE-L" in out


def test_score_sentence_and_cumulative_flags(capsys):
    args = ["score", "--hyp", str(FIXTURES / "score_hyp.txt"), "--ref", str(FIXTURES / "score_ref.txt")]
    assert cli.main(args + ["--sentence", "--cumulative"]) == 0
    out = capsys.readouterr().out
    assert out.count("sentence=") == 3


def test_score_line_count_mismatch_exit_2(tmp_path, capsys):
    (tmp_path / "h.txt").write_text("a\nb\n")
    (tmp_path / "r.txt").write_text("a\n")
    assert cli.main(["score", "--hyp", str(tmp_path / "h.txt"), "--ref", str(tmp_path / "r.txt")]) == 2
    err = capsys.readouterr().err
    assert "2" in err and "1" in err


# -- params ----------------------------------------------------------------------------
def test_params_ratio_format_and_monotone(tmp_path, capsys):
    (tmp_path / "p.cfg").write_text("d_hidden = 32\nd_model = 64\n")
    assert cli.main(["params", "--config", str(tmp_path / "p.cfg")]) == 0
    out = capsys.readouterr().out
    assert re.search(r"^ratio=\d\.\d{3}$", out, re.M)
    small = kv_lines(out)
    (tmp_path / "p.cfg").write_text("d_hidden = 64\nd_model = 128\n")
    cli.main(["params", "--config", str(tmp_path / "p.cfg")])
    big = kv_lines(capsys.readouterr().out)
    for key in ("miniformer.total", "transformer.total"):
        assert int(big[key]) > int(small[key])


def test_params_shipped_config_ratio_below_one(capsys):
    shipped = Path(__file__).parent.parent / "configs" / "copy_task.cfg"
    assert cli.main(["params", "--config", str(shipped)]) == 0
    assert float(kv_lines(capsys.readouterr().out)["ratio"]) < 1.0


def test_checkpoint_kind_roundtrip(workdir):
    cli.main(["train", "--config", str(write_cfg(workdir, "transformer", epochs=1))])
    assert Tr.load_checkpoint(workdir / "run" / "checkpoint.bin").kind == "transformer"
