"""Corpus BLEU and ROUGE on a three-sentence example, with the counts behind them."""

from miniformer import metrics as Me

hyps = ["the cat sat on mat", "a dog runs fast", "world hello there"]
refs = ["the cat sat on the mat", "a dog runs", "hello world"]
H = [h.split() for h in hyps]
R = [r.split() for r in refs]

# %% Clipped n-gram matches summed over the corpus
for n in range(1, 5):
    matched, total = Me.modified_precision(H, R, n)
    print(f"order {n}: {matched}/{total} n-grams matched")

# %% Hypothesis 12 tokens vs reference 11: no brevity penalty here
print("BP:", Me.brevity_penalty(12, 11))

# %% Per-order BLEU (the default) and the cumulative geometric mean
print([round(Me.bleu_n(H, R, n), 4) for n in range(1, 5)])
print([round(Me.bleu_n(H, R, n, cumulative=True), 4) for n in range(1, 5)])

# %% Clipping: "the" can only match as often as it occurs in the reference
print("clipped:", Me.modified_precision([["the"] * 3], [["the", "cat"]], 1))

# %% ROUGE-L rests on the longest common subsequence
for h, r in zip(H, R):
    print(" ".join(h), "|", " ".join(r), "| LCS =", Me.lcs_length(h, r))

# %% The full report, table first, then key=value lines as the CLI prints them
report = Me.evaluate(H, R)
print(report.to_table("example"))
print(report.to_kv())
