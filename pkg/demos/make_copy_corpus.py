"""Write the synthetic copy-task corpus used by the shipped configs.

Produces ``data/copy.src`` and ``data/copy.tgt``: 2000 aligned lines of 3-10
tokens drawn from a 20-word vocabulary, target identical to source.

    python demos/make_copy_corpus.py [--pairs 2000] [--seed 0]
"""

import argparse
from pathlib import Path

from miniformer.data import make_copy_corpus, write_parallel

parser = argparse.ArgumentParser()
parser.add_argument("--pairs", type=int, default=2000)
parser.add_argument("--seed", type=int, default=0)
parser.add_argument("--out", default=str(Path(__file__).resolve().parent.parent / "data" / "copy"))
args = parser.parse_args()

Path(args.out).parent.mkdir(parents=True, exist_ok=True)
write_parallel(args.out, make_copy_corpus(args.pairs, vocab_size=20, min_len=3, max_len=10, seed=args.seed))
print(f"wrote {args.out}.src / {args.out}.tgt ({args.pairs} pairs)")
