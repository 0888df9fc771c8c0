"""Corpus BLEU-1..4 and ROUGE-1/2/L (precision, recall, F1), single reference."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

Tokens = Sequence[str]
SENTENCE_EPS = 1e-9


def ngram_counts(tokens: Tokens, n: int) -> Counter:
    """Contiguous n-grams of ``tokens`` with multiplicity, keyed by tuple."""
    if n < 1:
        raise ValueError(f"n-gram order must be >= 1, got {n}")
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def _check_parallel(hyps, refs) -> None:
    if len(hyps) != len(refs):
        raise ValueError(f"{len(hyps)} hypotheses but {len(refs)} references")


def _clipped(hyp: Tokens, ref: Tokens, n: int) -> tuple[int, int, int]:
    h, r = ngram_counts(hyp, n), ngram_counts(ref, n)
    matches = sum(min(c, r[g]) for g, c in h.items())
    return matches, sum(h.values()), sum(r.values())


def modified_precision(hyps: Sequence[Tokens], refs: Sequence[Tokens], n: int) -> tuple[int, int]:
    """Corpus-summed clipped n-gram matches and total hypothesis n-grams."""
    _check_parallel(hyps, refs)
    matches = total = 0
    for hyp, ref in zip(hyps, refs):
        m, t, _ = _clipped(hyp, ref, n)
        matches += m
        total += t
    return matches, total


def brevity_penalty(hyp_len: int, ref_len: int) -> float:
    if hyp_len <= 0:
        return 0.0
    if hyp_len >= ref_len:
        return 1.0
    return math.exp(1.0 - ref_len / hyp_len)


def bleu_n(hyps: Sequence[Tokens], refs: Sequence[Tokens], n: int, cumulative: bool = False) -> float:
    """Brevity penalty times the order-``n`` precision.

    With ``cumulative`` the precision is instead the geometric mean of orders
    1..n with uniform weights (conventional BLEU-n).
    """
    _check_parallel(hyps, refs)
    bp = brevity_penalty(sum(map(len, hyps)), sum(map(len, refs)))
    orders = range(1, n + 1) if cumulative else (n,)
    log_p = 0.0
    for k in orders:
        m, t = modified_precision(hyps, refs, k)
        if m == 0:
            return 0.0
        log_p += math.log(m / t)
    return bp * math.exp(log_p / len(orders))


def lcs_length(a: Tokens, b: Tokens) -> int:
    """Longest common subsequence length, O(len(a) * len(b)) dynamic programme."""
    if len(a) < len(b):
        a, b = b, a
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b):
            cur.append(prev[j] + 1 if x == y else max(prev[j + 1], cur[j]))
        prev = cur
    return prev[-1]


def _prf(c: float, p_sys: float, p_ref: float, eps: float = 0.0) -> tuple[float, float, float]:
    p = c / (p_sys + eps) if p_sys + eps > 0 else 0.0
    r = c / (p_ref + eps) if p_ref + eps > 0 else 0.0
    f = 2 * p * r / (p + r) if p + r > 0 else 0.0
    return p, r, f


def _rouge_counts(hyp: Tokens, ref: Tokens, variant) -> tuple[int, int, int]:
    if variant in ("L", "l"):
        return lcs_length(hyp, ref), len(hyp), len(ref)
    return _clipped(hyp, ref, int(variant))


def rouge(hyps: Sequence[Tokens], refs: Sequence[Tokens], variant=1) -> tuple[float, float, float]:
    """Corpus ROUGE-N (``variant`` 1 or 2) or ROUGE-L (``"L"``) as (P, R, F).

    Numerators and denominators are summed over sentences before dividing.
    """
    _check_parallel(hyps, refs)
    if not hyps:
        raise ValueError("rouge of an empty corpus")
    c = p_sys = p_ref = 0
    for hyp, ref in zip(hyps, refs):
        m, hs, rs = _rouge_counts(hyp, ref, variant)
        c, p_sys, p_ref = c + m, p_sys + hs, p_ref + rs
    return _prf(c, p_sys, p_ref)


@dataclass(frozen=True)
class MetricReport:
    bleu: tuple[float, float, float, float]
    rouge1: tuple[float, float, float]
    rouge2: tuple[float, float, float]
    rougeL: tuple[float, float, float]

    def items(self) -> list[tuple[str, float]]:
        out = [(f"bleu{i + 1}", v) for i, v in enumerate(self.bleu)]
        for name in ("rouge1", "rouge2", "rougeL"):
            for tag, v in zip("prf", getattr(self, name)):
                out.append((f"{name}_{tag}", v))
        return out

    def to_kv(self, digits: int = 4) -> str:
        return "\n".join(f"{k}={v:.{digits}f}" for k, v in self.items())

    def to_table(self, label: str = "Model", digits: int = 4) -> str:
        """Fixed-width text table with one row per model, BLEU then ROUGE P/R/F."""
        head = ["Metric", "BLEU-1", "BLEU-2", "BLEU-3", "BLEU-4", "ROUGE-1", "ROUGE-2", "ROUGE-L"]
        fmt = f"{{:.{digits}f}}"
        rouge_cells = [[f"{tag}:{fmt.format(v)}" for tag, v in zip("PRF", getattr(self, n))]
                       for n in ("rouge1", "rouge2", "rougeL")]
        rows = [[label, *(fmt.format(v) for v in self.bleu)]]
        widths = [max(len(head[0]), len(label))] + [max(len(h), digits + 2) for h in head[1:5]] \
            + [max(len(h), digits + 4) for h in head[5:]]
        lines = [" | ".join(h.ljust(w) for h, w in zip(head, widths))]
        lines.append("-+-".join("-" * w for w in widths))
        for k in range(3):
            left = rows[0] if k == 0 else [""] * 5
            cells = left + [rc[k] for rc in rouge_cells]
            lines.append(" | ".join(c.ljust(w) for c, w in zip(cells, widths)))
        return "\n".join(lines)


def evaluate(hyps: Sequence[Tokens], refs: Sequence[Tokens], cumulative: bool = False) -> MetricReport:
    return MetricReport(
        bleu=tuple(bleu_n(hyps, refs, n, cumulative) for n in range(1, 5)),
        rouge1=rouge(hyps, refs, 1),
        rouge2=rouge(hyps, refs, 2),
        rougeL=rouge(hyps, refs, "L"),
    )


def sentence_scores(hyp: Tokens, ref: Tokens, cumulative: bool = False) -> MetricReport:
    """Single-sentence report; denominators carry a 1e-9 guard instead of erroring."""
    bp = brevity_penalty(len(hyp), len(ref))
    bleu = []
    log_p = 0.0
    for n in range(1, 5):
        m, t, _ = _clipped(hyp, ref, n)
        p = m / (t + SENTENCE_EPS)
        if cumulative:
            log_p += math.log(p) if p > 0 else -math.inf
            bleu.append(bp * math.exp(log_p / n) if log_p > -math.inf else 0.0)
        else:
            bleu.append(bp * p)
    rouge_triples = [_prf(*_rouge_counts(hyp, ref, v), eps=SENTENCE_EPS) for v in (1, 2, "L")]
    return MetricReport(tuple(bleu), *rouge_triples)
