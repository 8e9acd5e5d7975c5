"""Templated sentiment-caption corpus for desk-scale experiments.

Each scene is a (noun, verb, place) triple with a one-hot feature vector.
Neutral captions read ``a <noun> <verb> in the <place>``; sentiment captions
put one lexicon adjective before the noun.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from .cells import SentimentLabel
from .data import TextRecord, merge_corpora

DEFAULT_SCENES = (
    ("dog", "runs", "park"),
    ("cat", "sleeps", "kitchen"),
    ("man", "walks", "street"),
    ("woman", "sits", "garden"),
    ("boy", "plays", "yard"),
    ("girl", "reads", "library"),
    ("horse", "stands", "field"),
    ("bird", "sings", "tree"),
    ("car", "waits", "lot"),
    ("train", "stops", "station"),
    ("boat", "floats", "harbor"),
    ("child", "laughs", "room"),
    ("elephant", "eats", "zoo"),
    ("giraffe", "stands", "savanna"),
    ("bear", "sleeps", "forest"),
    ("cow", "grazes", "meadow"),
    ("bus", "waits", "city"),
    ("chef", "cooks", "restaurant"),
    ("skier", "jumps", "snow"),
    ("surfer", "rides", "ocean"),
)
DEFAULT_POSITIVE = ("beautiful", "happy", "lovely", "nice", "pretty", "great")
DEFAULT_NEGATIVE = ("ugly", "dirty", "sad", "lonely", "broken", "gloomy")


@dataclass
class SyntheticCorpusSpec:
    scenes: tuple = DEFAULT_SCENES
    positive: tuple = DEFAULT_POSITIVE
    negative: tuple = DEFAULT_NEGATIVE
    train_per_scene: int = 10
    val_per_scene: int = 3
    test_per_scene: int = 3
    noise: float = 0.1
    jitter: float = 0.05
    seed: int = 0

    def __post_init__(self):
        self.scenes = tuple(tuple(s) for s in self.scenes)
        self.positive = tuple(self.positive)
        self.negative = tuple(self.negative)
        self.validate()

    def validate(self) -> None:
        if not self.scenes:
            raise ValueError("scenes: inventory is empty")
        if any(len(s) != 3 for s in self.scenes):
            raise ValueError("scenes: every scene must be a (noun, verb, place) triple")
        if not self.positive:
            raise ValueError("positive: lexicon is empty")
        if not self.negative:
            raise ValueError("negative: lexicon is empty")
        if set(self.positive) & set(self.negative):
            raise ValueError("positive/negative: lexicons overlap")
        lex = set(self.positive) | set(self.negative)
        scene_words = {w for s in self.scenes for w in s} | {"a", "in", "the", "near"}
        if lex & scene_words:
            raise ValueError(f"scenes: template words overlap the lexicons: {sorted(lex & scene_words)}")
        if not 0.0 <= self.noise <= 1.0:
            raise ValueError("noise: must be a probability")
        for name in ("train_per_scene", "val_per_scene", "test_per_scene"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name}: must be non-negative")

    @classmethod
    def from_dict(cls, d: dict) -> SyntheticCorpusSpec:
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"{sorted(unknown)[0]}: unknown spec field")
        return cls(**d)


def _caption(scene, adjective, rng, noise) -> str:
    noun, verb, place = scene
    prep = "near" if rng.random() < noise else "in"
    words = ["a", noun, verb, prep, "the", place]
    if adjective is not None:
        words.insert(1, adjective)
    return " ".join(words)


def _feature(k: int, n: int, rng, jitter: float) -> np.ndarray:
    f = np.zeros(n)
    f[k] = 1.0
    return f + rng.normal(0.0, jitter, size=n)


def _split(spec, rng, name, per_scene, labels_for):
    n = len(spec.scenes)
    factual, pos, neg = [], [], []
    counter = 0
    for k, scene in enumerate(spec.scenes):
        for j in range(per_scene):
            feat = _feature(k, n, rng, spec.jitter)
            image_id = f"{name}-{k:02d}-{j}"
            for label in labels_for(counter):
                if label is SentimentLabel.POS:
                    adj = spec.positive[rng.integers(len(spec.positive))]
                    pos.append(TextRecord(image_id, _caption(scene, adj, rng, spec.noise), label, feat))
                elif label is SentimentLabel.NEG:
                    adj = spec.negative[rng.integers(len(spec.negative))]
                    neg.append(TextRecord(image_id, _caption(scene, adj, rng, spec.noise), label, feat))
                else:
                    factual.append(TextRecord(image_id, _caption(scene, None, rng, spec.noise), label, feat))
            counter += 1
    return factual, pos, neg


def generate_synthetic(spec: SyntheticCorpusSpec | None = None):
    """Return ``(train, val, test)`` lists of :class:`TextRecord`.

    Train holds one neutral, one positive and one negative caption per scene
    instance, merged the same way a factual corpus and two sentiment corpora
    would be. Val and test hold sentiment captions only, alternating
    positive and negative.
    """
    spec = spec or SyntheticCorpusSpec()
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    all_three = (SentimentLabel.NEU, SentimentLabel.POS, SentimentLabel.NEG)
    alternate = lambda i: (SentimentLabel.POS if i % 2 == 0 else SentimentLabel.NEG,)  # noqa: E731

    train = merge_corpora(*_split(spec, rng, "train", spec.train_per_scene, lambda i: all_three))
    val = _interleave(_split(spec, rng, "val", spec.val_per_scene, alternate))
    test = _interleave(_split(spec, rng, "test", spec.test_per_scene, alternate))
    return train, val, test


def _interleave(parts):
    recs = [r for part in parts for r in part]
    return sorted(recs, key=lambda r: r.image_id)
