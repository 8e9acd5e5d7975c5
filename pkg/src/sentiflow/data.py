"""Caption records, vocabulary, corpus merging and mini-batching.

On disk a corpus is UTF-8 JSON lines, one record per line::

    {"image_id": "...", "caption": "a dog runs", "label": "pos", "feature": [0.1, ...]}

Lexicons are plain text, one word per line.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .cells import SentimentLabel

PAD, BOS, EOS, UNK = 0, 1, 2, 3
RESERVED = ("<pad>", "<bos>", "<eos>", "<unk>")


def tokenize(caption: str) -> list[str]:
    return caption.lower().split()


def detokenize(words: Sequence[str]) -> str:
    return " ".join(words)


class Vocabulary:
    def __init__(self, tokens: Sequence[str]):
        """``tokens`` lists every token by id, reserved ones first."""
        if tuple(tokens[:4]) != RESERVED:
            raise ValueError("vocabulary must start with the reserved tokens " + ", ".join(RESERVED))
        self.itos = list(tokens)
        self.stoi = {t: i for i, t in enumerate(self.itos)}
        if len(self.stoi) != len(self.itos):
            raise ValueError("duplicate token in vocabulary")

    def __len__(self) -> int:
        return len(self.itos)

    def __contains__(self, token: str) -> bool:
        return token in self.stoi

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocabulary) and self.itos == other.itos

    def lookup(self, token: str) -> int:
        return self.stoi.get(token, UNK)

    def token(self, i: int) -> str:
        return self.itos[i]

    def encode(self, caption: str) -> tuple[int, ...]:
        return (BOS, *(self.lookup(w) for w in tokenize(caption)), EOS)

    def decode(self, ids: Iterable[int]) -> str:
        """Surface text for a token-id sequence, dropping control tokens."""
        return detokenize([self.itos[i] for i in ids if i not in (PAD, BOS, EOS)])

    def words(self, ids: Iterable[int]) -> list[str]:
        return [self.itos[i] for i in ids if i not in (PAD, BOS, EOS)]


def build_vocab(captions: Iterable[str], min_count: int = 1) -> Vocabulary:
    """Vocabulary of tokens seen at least ``min_count`` times.

    Ids are assigned by descending frequency, ties broken lexicographically.
    """
    counts = Counter()
    n = 0
    for cap in captions:
        counts.update(tokenize(cap))
        n += 1
    if n == 0:
        raise ValueError("cannot build a vocabulary from an empty corpus")
    kept = [t for t, c in counts.items() if c >= min_count and t not in RESERVED]
    kept.sort(key=lambda t: (-counts[t], t))
    return Vocabulary([*RESERVED, *kept])


@dataclass(frozen=True)
class TextRecord:
    """A corpus line before tokenization."""

    image_id: str
    caption: str
    label: SentimentLabel
    feature: np.ndarray

    def to_json(self) -> str:
        return json.dumps({
            "image_id": self.image_id,
            "caption": self.caption,
            "label": self.label.value,
            "feature": [float(v) for v in self.feature],
        })

    @classmethod
    def from_json(cls, line: str) -> TextRecord:
        d = json.loads(line)
        for key in ("image_id", "caption", "label", "feature"):
            if key not in d:
                raise ValueError(f"record is missing field {key!r}")
        return cls(str(d["image_id"]), str(d["caption"]), SentimentLabel.parse(d["label"]),
                   np.asarray(d["feature"], dtype=np.float64))


@dataclass(frozen=True)
class CaptionRecord:
    image_id: str
    feature: np.ndarray
    tokens: tuple[int, ...]
    label: SentimentLabel

    def __post_init__(self):
        t = self.tokens
        if len(t) < 2 or t[0] != BOS or t[-1] != EOS:
            raise ValueError(f"record {self.image_id}: tokens must start with <bos> and end with <eos>")
        if any(x in (PAD, BOS, EOS) for x in t[1:-1]):
            raise ValueError(f"record {self.image_id}: control token inside caption")

    @property
    def n_steps(self) -> int:
        """Number of word-prediction steps (tokens after ``<bos>``)."""
        return len(self.tokens) - 1


def encode_corpus(records: Iterable[TextRecord], vocab: Vocabulary) -> list[CaptionRecord]:
    return [CaptionRecord(r.image_id, r.feature, vocab.encode(r.caption), r.label) for r in records]


def merge_corpora(factual, positive=(), negative=()) -> list:
    """Training mix: factual captions relabelled neutral, sentiment ones kept.

    No rebalancing; token content is never touched.
    """
    merged = [replace(r, label=SentimentLabel.NEU) for r in factual]
    merged.extend(positive)
    merged.extend(negative)
    return merged


@dataclass
class Batch:
    features: np.ndarray  # [B, F]
    tokens: np.ndarray  # [B, L] padded with PAD after <eos>
    lengths: np.ndarray  # [B] token counts before padding
    labels: list[SentimentLabel]

    def __len__(self) -> int:
        return len(self.labels)


def collate(records: Sequence[CaptionRecord]) -> Batch:
    lengths = np.array([len(r.tokens) for r in records], dtype=np.int64)
    tokens = np.full((len(records), int(lengths.max())), PAD, dtype=np.int64)
    for row, r in enumerate(records):
        tokens[row, : len(r.tokens)] = r.tokens
    features = np.stack([np.asarray(r.feature, dtype=np.float64) for r in records])
    return Batch(features, tokens, lengths, [r.label for r in records])


def make_batches(corpus: Sequence[CaptionRecord], batch_size: int, seed: int | None = None) -> list[Batch]:
    """Split into batches after a seeded shuffle; the last batch may be short.

    ``seed=None`` keeps corpus order.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be at least 1")
    order = np.arange(len(corpus))
    if seed is not None:
        order = np.random.default_rng(seed).permutation(len(corpus))
    return [collate([corpus[i] for i in order[k:k + batch_size]])
            for k in range(0, len(order), batch_size)]


def write_corpus(records: Iterable[TextRecord], path) -> int:
    n = 0
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for r in records:
            fh.write(r.to_json() + "\n")
            n += 1
    return n


def read_corpus(path) -> list[TextRecord]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                out.append(TextRecord.from_json(line))
            except (ValueError, TypeError) as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from exc
    return out


def write_lexicon(words: Iterable[str], path) -> None:
    Path(path).write_text("".join(w + "\n" for w in words), encoding="utf-8")


def read_lexicon(path) -> frozenset[str]:
    text = Path(path).read_text(encoding="utf-8")
    return frozenset(w.strip().lower() for w in text.splitlines() if w.strip())
