"""Regenerate the bundled synthetic corpus (30 pieces, splits 16/4/10).

    python3 scripts/make_mini_corpus.py [--out data/mini_corpus] [--seed 2024]
"""

import argparse

from structok.corpus import default_corpus_dir, make_mini_corpus


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default=str(default_corpus_dir()))
    ap.add_argument("--seed", type=int, default=2024)
    args = ap.parse_args()
    print(make_mini_corpus(args.out, 30, args.seed, (16, 4, 10)))


if __name__ == "__main__":
    main()
