"""Regenerate the bundled synthetic bigram corpus and its totals file.

Usage: python3 scripts/make_fixture_corpus.py [SEED]
"""

import json
import sys
from pathlib import Path

import numpy as np

DATA = Path(__file__).resolve().parent.parent / "src" / "closeness" / "data"
VOCAB = 3000
ZIPF_S = 1.1
SUPPORT = 600
HEAD_TOTAL = 60_000

HEADS = [
    "the", "of", "and", "to", "in", "was", "he", "that", "it", "his",
    "her", "with", "as", "had", "for", "she", "not", "at", "but", "on",
    "be", "him", "by", "which",
]


def zipf_probs(k, s=ZIPF_S):
    w = 1.0 / np.arange(1, k + 1) ** s
    return w / w.sum()


def draw_counts(rng, followers, probs, total):
    counts = rng.multinomial(total, probs)
    return {f: int(c) for f, c in zip(followers, counts) if c > 0}


def main(seed=20160):
    rng = np.random.default_rng(seed)
    vocab = np.array([f"w{i:04d}" for i in range(VOCAB)])
    table = {}
    for head in HEADS:
        followers = rng.choice(vocab, size=SUPPORT, replace=False)
        table[head] = draw_counts(rng, followers, zipf_probs(SUPPORT), HEAD_TOTAL)

    # near-identical spelling variants: one follower law, two independent draws
    shared = rng.choice(vocab, size=SUPPORT, replace=False)
    table["grey"] = draw_counts(rng, shared, zipf_probs(SUPPORT), HEAD_TOTAL)
    table["gray"] = draw_counts(rng, shared, zipf_probs(SUPPORT), HEAD_TOTAL // 2)

    # fox* keeps only the 100 most frequent followers of fox
    table["fox"] = draw_counts(rng, rng.choice(vocab, size=SUPPORT, replace=False),
                               zipf_probs(SUPPORT), HEAD_TOTAL)
    top = sorted(table["fox"].items(), key=lambda kv: (-kv[1], kv[0]))[:100]
    table["fox*"] = dict(top)

    # disjoint follower vocabularies
    perm = rng.permutation(VOCAB)
    half = VOCAB // 2
    table["north"] = draw_counts(rng, vocab[perm[:SUPPORT]], zipf_probs(SUPPORT), HEAD_TOTAL)
    table["south"] = draw_counts(rng, vocab[perm[half:half + SUPPORT]], zipf_probs(SUPPORT), HEAD_TOTAL)

    lines = ["# head\tfollower\tcount (synthetic Zipfian fixture)"]
    for head in sorted(table):
        for f in sorted(table[head]):
            lines.append(f"{head}\t{f}\t{table[head][f]}")
    (DATA / "bigrams.tsv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    totals = {h: sum(table[h].values()) for h in sorted(table)}
    (DATA / "bigram_totals.json").write_text(json.dumps(totals, indent=1, sort_keys=True) + "\n",
                                             encoding="utf-8")


if __name__ == "__main__":
    main(*(int(a) for a in sys.argv[1:]))
