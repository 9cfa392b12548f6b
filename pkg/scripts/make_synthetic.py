#!/usr/bin/env python3
"""Write the synthetic cue/polarity corpus as JSONL train/test files.

    python scripts/make_synthetic.py data/synthetic --train 1000 --test 300 --seed 0
"""

import argparse
import sys
from pathlib import Path

from fckt.corpus import corpus_stats, write_jsonl
from fckt.synthetic import generate_splits


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("out_dir")
    ap.add_argument("--train", type=int, default=1000)
    ap.add_argument("--test", type=int, default=300)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    out = Path(args.out_dir)
    train_s, test_s = generate_splits(args.train, args.test, seed=args.seed)
    write_jsonl(train_s, out / "train.jsonl")
    write_jsonl(test_s, out / "test.jsonl")
    for name, split in (("train", train_s), ("test", test_s)):
        print(name, corpus_stats(split))
    return 0


if __name__ == "__main__":
    sys.exit(main())
