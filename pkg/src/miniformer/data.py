"""Parallel corpora: tokenisation, vocabularies, 4:1 splitting and padded batches."""

from __future__ import annotations

import logging
import unicodedata
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

logger = logging.getLogger(__name__)

PAD, BOS, EOS, UNK = 0, 1, 2, 3
RESERVED = ("<pad>", "<bos>", "<eos>", "<unk>")

Pair = tuple[list[str], list[str]]


class DataError(ValueError):
    """Corpus, vocabulary or batching problem."""


def _is_punct(ch: str) -> bool:
    return unicodedata.category(ch).startswith("P")


def tokenize(line: str) -> list[str]:
    """Lowercase, split on whitespace, peel edge punctuation into single-char tokens.

    >>> tokenize("The cat.")
    ['the', 'cat', '.']
    """
    tokens: list[str] = []
    for word in line.lower().split():
        start, end = 0, len(word)
        while start < end and _is_punct(word[start]):
            start += 1
        while end > start and _is_punct(word[end - 1]):
            end -= 1
        tokens.extend(word[:start])
        if start < end:
            tokens.append(word[start:end])
        tokens.extend(word[end:])
    return tokens


class Vocab:
    """Token <-> id map with PAD=0, BOS=1, EOS=2, UNK=3 reserved."""

    def __init__(self, tokens: Iterable[str] = ()):
        self.itos: list[str] = list(RESERVED)
        self.stoi: dict[str, int] = {t: i for i, t in enumerate(RESERVED)}
        for tok in tokens:
            if tok in self.stoi:
                raise DataError(f"duplicate vocabulary entry {tok!r}")
            self.stoi[tok] = len(self.itos)
            self.itos.append(tok)

    def __len__(self) -> int:
        return len(self.itos)

    def __contains__(self, token: str) -> bool:
        return token in self.stoi

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocab) and self.itos == other.itos

    def encode(self, tokens: Sequence[str]) -> list[int]:
        return [self.stoi.get(t, UNK) for t in tokens]

    def decode(self, ids: Iterable[int]) -> list[str]:
        return [self.itos[i] for i in ids]

    def save(self, path) -> None:
        # line number = id - 4; reserved entries are implicit
        Path(path).write_text("".join(f"{t}\n" for t in self.itos[len(RESERVED):]), encoding="utf-8")

    @classmethod
    def load(cls, path) -> Vocab:
        text = Path(path).read_text(encoding="utf-8")
        return cls(text.split("\n")[:-1] if text else [])


def build_vocab(corpus: Iterable[Sequence[str]], max_size: int, min_freq: int = 1) -> Vocab:
    """Most frequent tokens first, ties broken lexicographically.

    ``max_size`` counts the four reserved entries.
    """
    if max_size <= len(RESERVED):
        raise DataError(f"max_size must exceed {len(RESERVED)}, got {max_size}")
    counts = Counter(tok for sent in corpus for tok in sent)
    ranked = sorted((t for t, c in counts.items() if c >= min_freq and t not in RESERVED),
                    key=lambda t: (-counts[t], t))
    return Vocab(ranked[: max_size - len(RESERVED)])


def read_parallel(prefix) -> list[Pair]:
    """Read ``<prefix>.src`` / ``<prefix>.tgt`` and tokenise; pairs with an empty side are dropped."""
    src_path, tgt_path = Path(f"{prefix}.src"), Path(f"{prefix}.tgt")
    for p in (src_path, tgt_path):
        if not p.is_file():
            raise DataError(f"corpus file not found: {p}")
    src = src_path.read_text(encoding="utf-8").splitlines()
    tgt = tgt_path.read_text(encoding="utf-8").splitlines()
    if len(src) != len(tgt):
        raise DataError(f"{src_path} has {len(src)} lines but {tgt_path} has {len(tgt)}")
    pairs = [(tokenize(s), tokenize(t)) for s, t in zip(src, tgt)]
    kept = [(s, t) for s, t in pairs if s and t]
    if len(kept) < len(pairs):
        logger.info("dropped %d pairs with an empty side", len(pairs) - len(kept))
    return kept


def write_parallel(prefix, pairs: Sequence[Pair]) -> None:
    Path(f"{prefix}.src").write_text("".join(" ".join(s) + "\n" for s, _ in pairs), encoding="utf-8")
    Path(f"{prefix}.tgt").write_text("".join(" ".join(t) + "\n" for _, t in pairs), encoding="utf-8")


def split_corpus(pairs: Sequence, seed: int, train_fraction: float = 0.8) -> tuple[list, list]:
    """Seeded shuffle, then cut at floor(train_fraction * N). Default is 4:1."""
    n = len(pairs)
    if n < 5:
        raise DataError(f"need at least 5 pairs to split, got {n}")
    order = np.random.default_rng(seed).permutation(n)
    cut = int(np.floor(train_fraction * n))
    return [pairs[i] for i in order[:cut]], [pairs[i] for i in order[cut:]]


def carve_validation(train: Sequence, fraction: float, seed: int) -> tuple[list, list]:
    """Hold out ``fraction`` of the training pairs (at least one) for early stopping."""
    n = len(train)
    if n < 2:
        raise DataError("training split too small to carve a validation set")
    order = np.random.default_rng([seed, 1]).permutation(n)
    n_val = min(n - 1, max(1, int(round(fraction * n))))
    return [train[i] for i in order[n_val:]], [train[i] for i in order[:n_val]]


@dataclass(frozen=True)
class Batch:
    src_ids: np.ndarray  # [B, S_max]
    tgt_ids: np.ndarray  # [B, T_max], BOS ... EOS PAD...
    src_lengths: np.ndarray
    tgt_lengths: np.ndarray  # including BOS and EOS
    src_pad_mask: np.ndarray  # True on real tokens

    def __len__(self) -> int:
        return self.src_ids.shape[0]

    @property
    def decoder_input(self) -> np.ndarray:
        return self.tgt_ids[:, :-1]

    @property
    def gold(self) -> np.ndarray:
        return self.tgt_ids[:, 1:]

    @property
    def n_target_tokens(self) -> int:
        return int((self.gold != PAD).sum())


def pad_batch(src: Sequence[Sequence[int]], tgt: Sequence[Sequence[int]]) -> Batch:
    B = len(src)
    src_len = np.array([len(s) for s in src], dtype=np.int64)
    tgt_len = np.array([len(t) + 2 for t in tgt], dtype=np.int64)
    src_ids = np.full((B, src_len.max()), PAD, dtype=np.int64)
    tgt_ids = np.full((B, tgt_len.max()), PAD, dtype=np.int64)
    for b, (s, t) in enumerate(zip(src, tgt)):
        src_ids[b, : len(s)] = s
        tgt_ids[b, : len(t) + 2] = [BOS, *t, EOS]
    mask = np.arange(src_ids.shape[1])[None, :] < src_len[:, None]
    return Batch(src_ids, tgt_ids, src_len, tgt_len, mask)


def make_batches(
    pairs: Sequence[Pair], vocab_src: Vocab, vocab_tgt: Vocab, batch_size: int, max_len: int = 64
) -> list[Batch]:
    """Encode, length-filter, sort by source length and chunk (last partial batch kept)."""
    if batch_size < 1:
        raise DataError(f"batch_size must be >= 1, got {batch_size}")
    kept = [(s, t) for s, t in pairs if len(s) <= max_len and len(t) <= max_len]
    if len(kept) < len(pairs):
        logger.info("dropped %d pairs longer than %d tokens", len(pairs) - len(kept), max_len)
    if not kept:
        raise DataError("no pairs left after length filtering")
    kept.sort(key=lambda p: len(p[0]))  # stable: ties keep corpus order
    batches = []
    for i in range(0, len(kept), batch_size):
        chunk = kept[i : i + batch_size]
        batches.append(pad_batch([vocab_src.encode(s) for s, _ in chunk],
                                 [vocab_tgt.encode(t) for _, t in chunk]))
    return batches


def make_copy_corpus(n_pairs: int, vocab_size: int = 20, min_len: int = 3, max_len: int = 10,
                     seed: int = 0) -> list[Pair]:
    """Synthetic copy task: target equals source, tokens ``w0 .. w{vocab_size-1}``."""
    rng = np.random.default_rng(seed)
    words = [f"w{i}" for i in range(vocab_size)]
    pairs = []
    for _ in range(n_pairs):
        n = int(rng.integers(min_len, max_len + 1))
        sent = [words[i] for i in rng.integers(0, vocab_size, n)]
        pairs.append((sent, list(sent)))
    return pairs
