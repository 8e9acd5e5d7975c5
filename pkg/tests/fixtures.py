"""Shared deterministic fixtures."""

import numpy as np

WORDS = "a the dog cat runs sits in on park grass happy sad big red".split()


def metric_pairs(n=20, seed=0):
    """``n`` (candidate, references) pairs; candidates are edited references."""
    rng = np.random.default_rng(seed)
    cands, refsets = [], []
    for _ in range(n):
        refs = [[WORDS[k] for k in rng.integers(len(WORDS), size=rng.integers(4, 10))]
                for _ in range(rng.integers(1, 4))]
        cand = list(refs[0])
        for _ in range(rng.integers(0, 3)):
            op = rng.integers(3)
            pos = int(rng.integers(len(cand)))
            if op == 0 and len(cand) > 2:
                del cand[pos]
            elif op == 1:
                cand.insert(pos, WORDS[rng.integers(len(WORDS))])
            else:
                cand[pos] = WORDS[rng.integers(len(WORDS))]
        cands.append(cand)
        refsets.append(refs)
    return cands, refsets
