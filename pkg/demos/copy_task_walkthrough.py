"""Train both models on the copy task through the library API and compare them.

Takes about two minutes on one core. The CLI equivalent is

    miniformer train --config configs/copy_task.cfg
    miniformer train --config configs/copy_task_transformer.cfg
"""

import time

from miniformer import data as D
from miniformer import metrics as Me
from miniformer import models as M
from miniformer import training as Tr

SEED = 0

# %% Corpus: 2000 random sentences over a 20-word vocabulary, target = source
pairs = D.make_copy_corpus(2000, vocab_size=20, min_len=3, max_len=10, seed=SEED)
train, test = D.split_corpus(pairs, seed=SEED)             # 4:1
fit_pairs, val_pairs = D.carve_validation(train, 0.1, seed=SEED)
vocab_src = D.build_vocab([s for s, _ in train], 10000)
vocab_tgt = D.build_vocab([t for _, t in train], 10000)
train_batches = D.make_batches(fit_pairs, vocab_src, vocab_tgt, batch_size=32)
val_batches = D.make_batches(val_pairs, vocab_src, vocab_tgt, batch_size=32)
print(f"{len(fit_pairs)} train / {len(val_pairs)} val / {len(test)} test pairs, vocab {len(vocab_src)}")

# %% Models: Mini-Former with d_hidden 32 and a Transformer with d_model = 2 * 32
mini_cfg = M.MiniFormerConfig(len(vocab_src), len(vocab_tgt), d_embed=64, d_hidden=32)
models = {
    "Mini-Former": M.MiniFormer(mini_cfg, seed=SEED),
    "Transformer": M.Transformer(M.matched_transformer_config(mini_cfg), seed=SEED),
}
for name, model in models.items():
    print(f"{name}: {M.count_params(model)} parameters", M.param_breakdown(model))

# %% Train each with Adam (lr 1e-3), batch 32 and early stopping on validation loss
test_src = D.pad_batch([vocab_src.encode(s) for s, _ in test], [[] for _ in test])
refs = [t for _, t in test]
for name, model in models.items():
    t0 = time.perf_counter()
    result = Tr.fit(model, train_batches, val_batches, Tr.AdamState(lr=1e-3), seed=SEED,
                    max_epochs=50, patience=5, log=lambda line: None)
    hyps = [vocab_tgt.decode(ids) for ids in
            model.greedy_decode_batch(test_src.src_ids, test_src.src_lengths, max_len=20)]
    print(f"\n{name}: best epoch {result.best_epoch}, val loss {result.best_val_loss:.4f}, "
          f"{time.perf_counter() - t0:.0f}s")
    print(Me.evaluate(hyps, refs).to_table(name))
    print("example:", " ".join(refs[0]), "->", " ".join(hyps[0]))
