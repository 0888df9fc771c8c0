"""``miniformer`` command line: train, translate, score, params.

Exit codes: 0 success, 1 unexpected failure, 2 configuration / checkpoint /
input-shape errors, 3 data errors, 4 training divergence.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys
from dataclasses import dataclass
from pathlib import Path

from . import data as D
from . import metrics as Me
from . import models as M
from . import training as Tr
from .layers import ConfigError

SEED_ENV = "MINIFORMER_SEED"
EXIT_CONFIG, EXIT_DATA, EXIT_DIVERGED = 2, 3, 4


@dataclass
class RunConfig:
    model: str = "miniformer"
    corpus: str = ""
    output_dir: str = "run"
    seed: int = 0
    # data
    vocab_size: int = 10000
    min_freq: int = 1
    max_len: int = 64
    train_fraction: float = 0.8
    val_fraction: float = 0.1
    # Mini-Former
    d_embed: int = 64
    d_hidden: int = 32
    enc_layers: int = 1
    # Transformer
    d_model: int = 64
    n_heads: int = 4
    d_ff: int = 256
    n_layers: int = 2
    ffn_activation: str = "none"
    # optimisation
    lr: float = 0.001
    batch_size: int = 32
    max_epochs: int = 50
    patience: int = 5
    min_delta: float = 0.0001
    clip_norm: float = 0.0

    def validate(self, need_corpus: bool = True) -> None:
        if self.model not in M.MODEL_KINDS:
            raise ConfigError(f"model must be one of {sorted(M.MODEL_KINDS)}, got {self.model!r}")
        for name in ("vocab_size", "max_len", "d_embed", "d_hidden", "enc_layers", "d_model", "n_heads",
                     "d_ff", "n_layers", "batch_size", "max_epochs", "patience"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.vocab_size <= len(D.RESERVED):
            raise ConfigError(f"vocab_size must exceed {len(D.RESERVED)}")
        if self.d_model % self.n_heads:
            raise ConfigError(f"d_model={self.d_model} is not divisible by n_heads={self.n_heads}")
        if self.ffn_activation not in ("none", "relu"):
            raise ConfigError(f"ffn_activation must be none or relu, got {self.ffn_activation!r}")
        if not 0 < self.train_fraction < 1 or not 0 < self.val_fraction < 1:
            raise ConfigError("train_fraction and val_fraction must lie in (0, 1)")
        if self.lr < 0 or self.seed < 0 or self.clip_norm < 0 or self.min_delta < 0:
            raise ConfigError("lr, seed, clip_norm and min_delta must be non-negative")
        if need_corpus and not self.corpus:
            raise ConfigError("corpus is required")

    def miniformer_config(self, vocab_src: int, vocab_tgt: int) -> M.MiniFormerConfig:
        return M.MiniFormerConfig(vocab_src, vocab_tgt, self.d_embed, self.d_hidden, self.enc_layers,
                                  self.max_len, self.ffn_activation)

    def transformer_config(self, vocab_src: int, vocab_tgt: int) -> M.TransformerConfig:
        return M.TransformerConfig(vocab_src, vocab_tgt, self.d_model, self.n_heads, self.d_ff,
                                   self.n_layers, self.n_layers, self.max_len, self.ffn_activation)

    def dumps(self) -> str:
        return "".join(f"{f.name} = {getattr(self, f.name)}\n" for f in dataclasses.fields(self))


def parse_config(text: str) -> RunConfig:
    """Flat ``key = value`` lines; ``#`` starts a comment; unknown keys are errors."""
    types = {f.name: f.type for f in dataclasses.fields(RunConfig)}
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value, got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in types:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        conv = {"int": int, "float": float, "str": str}[types[key]]
        try:
            values[key] = conv(value)
        except ValueError:
            raise ConfigError(f"line {lineno}: {key} expects {types[key]}, got {value!r}") from None
    return RunConfig(**values)


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    cfg = parse_config(path.read_text(encoding="utf-8"))
    # relative paths are resolved against the config file's directory
    for key in ("corpus", "output_dir"):
        val = getattr(cfg, key)
        if val and not Path(val).is_absolute():
            setattr(cfg, key, str(path.parent / val))
    if os.environ.get(SEED_ENV):
        try:
            cfg.seed = int(os.environ[SEED_ENV])
        except ValueError:
            raise ConfigError(f"{SEED_ENV} must be an integer") from None
    return cfg


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------
def _split_and_vocab(cfg: RunConfig):
    pairs = D.read_parallel(cfg.corpus)
    train, test = D.split_corpus(pairs, cfg.seed, cfg.train_fraction)
    vocab_src = D.build_vocab([s for s, _ in train], cfg.vocab_size, cfg.min_freq)
    vocab_tgt = D.build_vocab([t for _, t in train], cfg.vocab_size, cfg.min_freq)
    return train, test, vocab_src, vocab_tgt


def cmd_train(config_path) -> int:
    cfg = load_config(config_path)
    cfg.validate()
    out = Path(cfg.output_dir)
    train, test, vocab_src, vocab_tgt = _split_and_vocab(cfg)
    fit_pairs, val_pairs = D.carve_validation(train, cfg.val_fraction, cfg.seed)
    train_batches = D.make_batches(fit_pairs, vocab_src, vocab_tgt, cfg.batch_size, cfg.max_len)
    val_batches = D.make_batches(val_pairs, vocab_src, vocab_tgt, cfg.batch_size, cfg.max_len)

    if cfg.model == "miniformer":
        model = M.MiniFormer(cfg.miniformer_config(len(vocab_src), len(vocab_tgt)), seed=cfg.seed)
    else:
        model = M.Transformer(cfg.transformer_config(len(vocab_src), len(vocab_tgt)), seed=cfg.seed)

    out.mkdir(parents=True, exist_ok=True)
    vocab_src.save(out / "vocab.src")
    vocab_tgt.save(out / "vocab.tgt")
    (out / "config.resolved").write_text(cfg.dumps(), encoding="utf-8")
    D.write_parallel(out / "test", test)

    initial_val = Tr.evaluate_loss(model, val_batches)
    with open(out / "train.log", "w", encoding="utf-8") as logf:
        def emit(line: str) -> None:
            logf.write(line + "\n")
            logf.flush()
            print(line)

        result = Tr.fit(
            model, train_batches, val_batches, Tr.AdamState(lr=cfg.lr), seed=cfg.seed,
            max_epochs=cfg.max_epochs, patience=cfg.patience, min_delta=cfg.min_delta,
            clip_norm=cfg.clip_norm or None, checkpoint_path=out / "checkpoint.bin", log=emit,
        )
    if not (out / "checkpoint.bin").exists():
        # validation never improved; keep the initial weights on disk
        Tr.save_checkpoint(out / "checkpoint.bin", model, Tr.AdamState(lr=cfg.lr), 0, cfg.seed)
    print(f"initial_val_loss={initial_val:.6f} best_val_loss={result.best_val_loss:.6f} "
          f"best_epoch={result.best_epoch} checkpoint={out / 'checkpoint.bin'}")
    return 0


def _load_translator(checkpoint):
    try:
        ckpt = Tr.load_checkpoint(checkpoint)
    except FileNotFoundError:
        raise ConfigError(f"checkpoint not found: {checkpoint}") from None
    model = ckpt.build_model()
    folder = Path(checkpoint).parent
    try:
        vocab_src = D.Vocab.load(folder / "vocab.src")
        vocab_tgt = D.Vocab.load(folder / "vocab.tgt")
    except FileNotFoundError as exc:
        raise ConfigError(f"vocabulary file missing beside checkpoint: {exc.filename}") from None
    if len(vocab_src) != model.config.vocab_src or len(vocab_tgt) != model.config.vocab_tgt:
        raise ConfigError(
            f"vocab sizes ({len(vocab_src)}, {len(vocab_tgt)}) do not match checkpoint "
            f"({model.config.vocab_src}, {model.config.vocab_tgt})"
        )
    return model, vocab_src, vocab_tgt


def translate_lines(model: M.Model, vocab_src: D.Vocab, vocab_tgt: D.Vocab, lines, max_len: int,
                    batch_size: int = 64) -> list[str]:
    encoded = [vocab_src.encode(D.tokenize(line)) for line in lines]
    results = [""] * len(encoded)
    todo = sorted((i for i, ids in enumerate(encoded) if ids), key=lambda i: len(encoded[i]))
    for start in range(0, len(todo), batch_size):
        idx = todo[start : start + batch_size]
        batch = D.pad_batch([encoded[i] for i in idx], [[] for _ in idx])
        for i, ids in zip(idx, model.greedy_decode_batch(batch.src_ids, batch.src_lengths, max_len)):
            results[i] = " ".join(vocab_tgt.decode(ids))
    return results


def cmd_translate(checkpoint, input_file, output_file, max_len: int = 64) -> int:
    model, vocab_src, vocab_tgt = _load_translator(checkpoint)
    if max_len < 1:
        raise ConfigError(f"--max-len must be >= 1, got {max_len}")
    try:
        lines = Path(input_file).read_text(encoding="utf-8").splitlines()
    except FileNotFoundError:
        raise D.DataError(f"input file not found: {input_file}") from None
    outputs = translate_lines(model, vocab_src, vocab_tgt, lines, max_len)
    Path(output_file).write_text("".join(o + "\n" for o in outputs), encoding="utf-8")
    return 0


def _score_tokens(line: str) -> list[str]:
    return line.lower().split()


def cmd_score(hyp_file, ref_file, cumulative: bool = False, sentence: bool = False) -> int:
    try:
        hyps = Path(hyp_file).read_text(encoding="utf-8").splitlines()
        refs = Path(ref_file).read_text(encoding="utf-8").splitlines()
    except FileNotFoundError as exc:
        raise D.DataError(f"file not found: {exc.filename}") from None
    if len(hyps) != len(refs):
        raise ConfigError(f"line count mismatch: {len(hyps)} hypotheses vs {len(refs)} references")
    if not hyps:
        raise D.DataError("nothing to score: files are empty")
    hyp_toks = [_score_tokens(h) for h in hyps]
    ref_toks = [_score_tokens(r) for r in refs]
    report = Me.evaluate(hyp_toks, ref_toks, cumulative)
    print(report.to_table("System"))
    print()
    print(report.to_kv())
    if sentence:
        for i, (h, r) in enumerate(zip(hyp_toks, ref_toks), 1):
            print()
            print(f"sentence={i}")
            print(Me.sentence_scores(h, r, cumulative).to_kv())
    return 0


def cmd_params(config_path) -> int:
    cfg = load_config(config_path)
    cfg.validate(need_corpus=False)
    # real vocabulary sizes when the corpus is at hand, else the configured cap
    n_src = n_tgt = cfg.vocab_size
    if cfg.corpus and Path(f"{cfg.corpus}.src").is_file():
        _, _, vocab_src, vocab_tgt = _split_and_vocab(cfg)
        n_src, n_tgt = len(vocab_src), len(vocab_tgt)
    print(f"vocab_src={n_src}")
    print(f"vocab_tgt={n_tgt}")
    mini_cfg = cfg.miniformer_config(n_src, n_tgt)
    mini = M.MiniFormer(mini_cfg, seed=cfg.seed)
    tf = M.Transformer(M.matched_transformer_config(mini_cfg, cfg.n_heads, cfg.n_layers, cfg.d_ff), seed=cfg.seed)
    for label, model in (("miniformer", mini), ("transformer", tf)):
        for part, n in M.param_breakdown(model).items():
            print(f"{label}.{part}={n}")
        print(f"{label}.total={M.count_params(model)}")
    print(f"ratio={M.count_params(mini) / M.count_params(tf):.3f}")
    return 0


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------
def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="miniformer", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("train", help="train a model from a config file")
    p.add_argument("--config", required=True)
    p = sub.add_parser("translate", help="greedy-decode a file line by line")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--in", dest="input_file", required=True)
    p.add_argument("--out", dest="output_file", required=True)
    p.add_argument("--max-len", type=int, default=64)
    p = sub.add_parser("score", help="BLEU-1..4 and ROUGE-1/2/L of a hypothesis file")
    p.add_argument("--hyp", required=True)
    p.add_argument("--ref", required=True)
    p.add_argument("--cumulative", action="store_true", help="geometric-mean BLEU-n instead of per-order")
    p.add_argument("--sentence", action="store_true", help="also print per-sentence scores")
    p = sub.add_parser("params", help="parameter counts of Mini-Former vs matched Transformer")
    p.add_argument("--config", required=True)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "train":
            return cmd_train(args.config)
        if args.command == "translate":
            return cmd_translate(args.checkpoint, args.input_file, args.output_file, args.max_len)
        if args.command == "score":
            return cmd_score(args.hyp, args.ref, args.cumulative, args.sentence)
        return cmd_params(args.config)
    except (ConfigError, Tr.CheckpointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except D.DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Tr.TrainingDivergence as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED


if __name__ == "__main__":
    sys.exit(main())
