"""Caption metrics (corpus BLEU-1..4, ROUGE-L) and sentiment-caption statistics.

BLEU follows the usual corpus formulation: clipped n-gram counts summed
over the corpus, geometric mean of precisions, and a brevity penalty using
the reference length closest to each candidate. No smoothing.

ROUGE-L uses the LCS F-measure with ``beta = 1.2``; with several references
the best precision and best recall are combined, as the COCO caption
toolkit does.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

from .cells import SentimentLabel

ROUGE_BETA = 1.2

Tokens = Sequence[str]


def _ngrams(tokens: Tokens, n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def _check(candidates, references) -> None:
    if not candidates:
        raise ValueError("empty candidate corpus")
    if len(candidates) != len(references):
        raise ValueError(f"{len(candidates)} candidates but {len(references)} reference sets")
    if any(not refs for refs in references):
        raise ValueError("every candidate needs at least one reference")


def _closest_ref_len(c: int, refs: Sequence[Tokens]) -> int:
    return min((abs(len(r) - c), len(r)) for r in refs)[1]


def bleu_all(candidates: Sequence[Tokens], references: Sequence[Sequence[Tokens]],
             max_n: int = 4) -> list[float]:
    """Corpus BLEU-1 through BLEU-``max_n``."""
    _check(candidates, references)
    matched = [0] * max_n
    possible = [0] * max_n
    c_len = r_len = 0
    for cand, refs in zip(candidates, references):
        c_len += len(cand)
        r_len += _closest_ref_len(len(cand), refs)
        for n in range(1, max_n + 1):
            counts = _ngrams(cand, n)
            max_ref = Counter()
            for ref in refs:
                max_ref |= _ngrams(ref, n)
            matched[n - 1] += sum(min(c, max_ref[g]) for g, c in counts.items())
            possible[n - 1] += max(len(cand) - n + 1, 0)

    if c_len == 0:
        return [0.0] * max_n
    bp = 1.0 if c_len >= r_len else math.exp(1.0 - r_len / c_len)
    scores = []
    log_sum = 0.0
    for n in range(max_n):
        if matched[n] == 0 or possible[n] == 0:
            scores.extend([0.0] * (max_n - n))
            break
        log_sum += math.log(matched[n] / possible[n])
        scores.append(bp * math.exp(log_sum / (n + 1)))
    return scores


def bleu(candidates: Sequence[Tokens], references: Sequence[Sequence[Tokens]], n: int = 4) -> float:
    if not 1 <= n <= 4:
        raise ValueError("BLEU order must be in 1..4")
    return bleu_all(candidates, references, n)[n - 1]


def lcs_length(a: Tokens, b: Tokens) -> int:
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b):
            cur.append(prev[j] + 1 if x == y else max(prev[j + 1], cur[j]))
        prev = cur
    return prev[-1]


def rouge_l_single(cand: Tokens, refs: Sequence[Tokens], beta: float = ROUGE_BETA) -> float:
    if not cand:
        return 0.0
    precs, recs = [], []
    for ref in refs:
        lcs = lcs_length(cand, ref)
        precs.append(lcs / len(cand))
        recs.append(lcs / len(ref) if ref else 0.0)
    p, r = max(precs), max(recs)
    if p == 0 or r == 0:
        return 0.0
    return (1 + beta ** 2) * p * r / (r + beta ** 2 * p)


def rouge_l(candidates: Sequence[Tokens], references: Sequence[Sequence[Tokens]],
            beta: float = ROUGE_BETA) -> float:
    _check(candidates, references)
    return sum(rouge_l_single(c, refs, beta) for c, refs in zip(candidates, references)) / len(candidates)


@dataclass
class SentimentStats:
    count: int
    total_pct: float
    matched_pct: float


def sentiment_stats(captions: Sequence[Tokens], requested: Sequence[SentimentLabel],
                    positive: Iterable[str], negative: Iterable[str]) -> SentimentStats:
    """Share of captions with any lexicon word, and with one matching the request.

    A caption holding words of both polarities counts as matched if any of
    its words agrees with the requested label.
    """
    pos, neg = frozenset(positive), frozenset(negative)
    overlap = pos & neg
    if overlap:
        raise ValueError(f"sentiment lexicons overlap: {sorted(overlap)}")
    if len(captions) != len(requested):
        raise ValueError("one requested label per caption")
    total = matched = 0
    for words, label in zip(captions, requested):
        ws = set(words)
        has_pos, has_neg = bool(ws & pos), bool(ws & neg)
        if has_pos or has_neg:
            total += 1
            if (label is SentimentLabel.POS and has_pos) or (label is SentimentLabel.NEG and has_neg):
                matched += 1
    n = len(captions)
    return SentimentStats(n, 100.0 * total / n if n else 0.0, 100.0 * matched / n if n else 0.0)


@dataclass
class EvalReport:
    bleu1: float
    bleu2: float
    bleu3: float
    bleu4: float
    rouge_l: float
    total_pct: float
    matched_pct: float
    total_flipped_pct: float
    matched_flipped_pct: float
    n_captions: int
    n_sentiment_requests: int
    by_label: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def metrics_table(self) -> str:
        head = f"{'B-1':>7}{'B-2':>7}{'B-3':>7}{'B-4':>7}{'ROUGE-L':>9}"
        row = (f"{self.bleu1:7.3f}{self.bleu2:7.3f}{self.bleu3:7.3f}{self.bleu4:7.3f}"
               f"{self.rouge_l:9.3f}")
        return head + "\n" + row

    def sentiment_table(self) -> str:
        lines = [f"{'Requests':<10}{'Total':>8}{'Matched':>9}{'Total (F)':>11}{'Matched (F)':>13}"]
        rows = [(k.upper(), v) for k, v in sorted(self.by_label.items(), reverse=True)]
        rows.append(("ALL", {
            "total_pct": self.total_pct, "matched_pct": self.matched_pct,
            "total_flipped_pct": self.total_flipped_pct, "matched_flipped_pct": self.matched_flipped_pct,
        }))
        for name, s in rows:
            lines.append(f"{name:<10}{s['total_pct']:7.1f}%{s['matched_pct']:8.1f}%"
                         f"{s['total_flipped_pct']:10.1f}%{s['matched_flipped_pct']:12.1f}%")
        return "\n".join(lines)
