"""Recurrent step functions for the three decoder variants.

BASELINE is a plain LSTM. DIRECT appends a constant sentiment coordinate
(-1, 0 or +1) to every recurrent input. FLOW adds a sentiment cell ``s``
that is gated like the memory cell and feeds the hidden state.

Every function here works on a single vector ``[d]`` or a row batch
``[B, d]``; labels may be given per row.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from . import autodiff as ad
from .autodiff import ShapeError, Tensor


class SentimentLabel(enum.Enum):
    NEG = "neg"
    NEU = "neu"
    POS = "pos"

    @property
    def scalar(self) -> float:
        return _SCALAR[self]

    @property
    def index(self) -> int:
        return _INDEX[self]

    def flipped(self) -> SentimentLabel:
        if self is SentimentLabel.NEU:
            raise ValueError("cannot flip a neutral label")
        return SentimentLabel.NEG if self is SentimentLabel.POS else SentimentLabel.POS

    @classmethod
    def parse(cls, text: str) -> SentimentLabel:
        try:
            return cls(text.strip().lower())
        except ValueError:
            raise ValueError(f"unknown sentiment label {text!r}; expected neg, neu or pos") from None

    @classmethod
    def from_index(cls, i: int) -> SentimentLabel:
        return _BY_INDEX[i]


_SCALAR = {SentimentLabel.NEG: -1.0, SentimentLabel.NEU: 0.0, SentimentLabel.POS: 1.0}
_INDEX = {SentimentLabel.NEG: 0, SentimentLabel.NEU: 1, SentimentLabel.POS: 2}
_BY_INDEX = {v: k for k, v in _INDEX.items()}

Labels = Union[SentimentLabel, Sequence[SentimentLabel]]


class Variant(enum.Enum):
    BASELINE = "baseline"
    DIRECT = "direct"
    FLOW = "flow"

    @classmethod
    def parse(cls, text: str) -> Variant:
        try:
            return cls(text.strip().lower())
        except ValueError:
            raise ValueError(f"unknown variant {text!r}; expected baseline, direct or flow") from None


@dataclass
class ModelConfig:
    variant: Variant
    vocab_size: int
    feature_dim: int
    embed_dim: int = 256
    hidden_dim: int = 512
    sentiment_embed_dim: int = 16
    classifier_dim: int | None = None

    def __post_init__(self):
        if isinstance(self.variant, str):
            self.variant = Variant.parse(self.variant)
        if self.classifier_dim is None:
            self.classifier_dim = max(1, self.hidden_dim // 4)
        for name in ("vocab_size", "feature_dim", "embed_dim", "hidden_dim",
                     "sentiment_embed_dim", "classifier_dim"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")

    @property
    def input_dim(self) -> int:
        """Width of the recurrent input at every step."""
        return self.embed_dim + (1 if self.variant is Variant.DIRECT else 0)

    @property
    def has_sentiment_cell(self) -> bool:
        return self.variant is Variant.FLOW

    @property
    def has_classifier(self) -> bool:
        return self.variant is not Variant.BASELINE

    def to_dict(self) -> dict:
        return {
            "variant": self.variant.value,
            "vocab_size": self.vocab_size,
            "feature_dim": self.feature_dim,
            "embed_dim": self.embed_dim,
            "hidden_dim": self.hidden_dim,
            "sentiment_embed_dim": self.sentiment_embed_dim,
            "classifier_dim": self.classifier_dim,
        }

    @classmethod
    def from_dict(cls, d: dict) -> ModelConfig:
        return cls(**d)


@dataclass
class LSTMParams:
    """Stacked gate weights; rows are the blocks i, f, o, g in that order."""

    W: Tensor  # [4h, d_in]
    U: Tensor  # [4h, h]
    b: Tensor  # [4h]

    def __post_init__(self):
        four_h = self.U.shape[0]
        if four_h % 4 or self.U.shape != (four_h, four_h // 4):
            raise ShapeError(f"U must be [4h, h], got {self.U.shape}")
        if self.W.ndim != 2 or self.W.shape[0] != four_h:
            raise ShapeError(f"W must be [4h, d_in] with 4h={four_h}, got {self.W.shape}")
        if self.b.shape != (four_h,):
            raise ShapeError(f"b must be [{four_h}], got {self.b.shape}")

    @property
    def hidden_dim(self) -> int:
        return self.U.shape[1]


@dataclass
class SentimentCellParams:
    Wxs: Tensor  # [h, d_in]
    Whs: Tensor  # [h, h]
    bs: Tensor  # [h]
    Ws: Tensor  # [h, e_s]
    b0: Tensor  # [h]
    E: Tensor  # [3, e_s]

    def __post_init__(self):
        if self.E.ndim != 2 or self.E.shape[0] != 3:
            raise ShapeError(f"sentiment embedding must have 3 rows, got {self.E.shape}")


@dataclass
class StepState:
    h: Tensor
    c: Tensor
    s: Tensor | None = None

    def __post_init__(self):
        if self.h.shape != self.c.shape or (self.s is not None and self.s.shape != self.h.shape):
            raise ShapeError("h, c and s must share a shape")

    @classmethod
    def zeros(cls, hidden_dim: int, rows: int | None = None, with_s: bool = False) -> StepState:
        shape = (hidden_dim,) if rows is None else (rows, hidden_dim)
        z = lambda: ad.constant(np.zeros(shape))  # noqa: E731
        return cls(z(), z(), z() if with_s else None)


def _gates(params: LSTMParams, x: Tensor, h: Tensor):
    pre = ad.add(ad.linear(x, params.W, params.b), ad.linear(h, params.U))
    i, f, o, g = ad.split_last(pre, 4)
    return ad.sigmoid(i), ad.sigmoid(f), ad.sigmoid(o), ad.tanh(g)


def lstm_step(params: LSTMParams, x: Tensor, prev: StepState) -> StepState:
    if prev.h.shape[-1] != params.hidden_dim:
        raise ShapeError(f"state width {prev.h.shape[-1]} != hidden size {params.hidden_dim}")
    i, f, o, g = _gates(params, x, prev.h)
    c = ad.add(ad.mul(f, prev.c), ad.mul(i, g))
    h = ad.mul(o, ad.tanh(c))
    return StepState(h, c)


def sentiment_flow_step(params: LSTMParams, sparams: SentimentCellParams, x: Tensor,
                        prev: StepState) -> StepState:
    """LSTM step with a sentiment cell.

    ``s' = f*s + i*tanh(Wxs x + Whs h + bs)`` and ``h' = o*(tanh(c') + tanh(s'))``.
    """
    if prev.s is None:
        raise ValueError("sentiment_flow_step needs a previous sentiment-cell state")
    if prev.h.shape[-1] != params.hidden_dim:
        raise ShapeError(f"state width {prev.h.shape[-1]} != hidden size {params.hidden_dim}")
    i, f, o, g = _gates(params, x, prev.h)
    c = ad.add(ad.mul(f, prev.c), ad.mul(i, g))
    cand = ad.tanh(ad.add(ad.linear(x, sparams.Wxs, sparams.bs), ad.linear(prev.h, sparams.Whs)))
    s = ad.add(ad.mul(f, prev.s), ad.mul(i, cand))
    h = ad.mul(o, ad.add(ad.tanh(c), ad.tanh(s)))
    return StepState(h, c, s)


def _label_column(label: Labels, rows: int | None) -> np.ndarray:
    if isinstance(label, SentimentLabel):
        vals = np.array([label.scalar])
        return vals if rows is None else np.full((rows, 1), label.scalar)
    vals = np.array([lab.scalar for lab in label], dtype=np.float64)
    if rows is None or len(vals) != rows:
        raise ShapeError(f"{len(vals)} labels given for {rows} rows")
    return vals[:, None]


def _label_indices(label: Labels):
    if isinstance(label, SentimentLabel):
        return label.index
    return [lab.index for lab in label]


def direct_injection_input(word_embedding: Tensor, label: Labels) -> Tensor:
    """Append the label's scalar as a constant last coordinate."""
    rows = None if word_embedding.ndim == 1 else word_embedding.shape[0]
    return ad.concat(word_embedding, ad.constant(_label_column(label, rows)), axis=-1)


def init_sentiment_state(sparams: SentimentCellParams, label: Labels) -> Tensor:
    e = ad.embedding_lookup(sparams.E, _label_indices(label))
    return ad.tanh(ad.linear(e, sparams.Ws, sparams.b0))


def init_from_image(feature: Tensor, proj: Tensor, label: Labels, config: ModelConfig,
                    sparams: SentimentCellParams | None = None) -> tuple[StepState, Tensor]:
    """Initial recurrent state and the step-0 input for an image.

    ``h`` and ``c`` start at zero and the projected feature is the first
    recurrent input, before ``<bos>``. FLOW also gets ``s0`` from the label;
    DIRECT carries the label coordinate on this input too.
    """
    if proj.shape != (config.embed_dim, config.feature_dim):
        raise ShapeError(f"projection must be {(config.embed_dim, config.feature_dim)}, got {proj.shape}")
    if feature.shape[-1] != config.feature_dim:
        raise ShapeError(f"feature width {feature.shape[-1]} != feature_dim {config.feature_dim}")
    rows = None if feature.ndim == 1 else feature.shape[0]
    x0 = ad.linear(feature, proj)
    if config.variant is Variant.DIRECT:
        x0 = direct_injection_input(x0, label)
    state = StepState.zeros(config.hidden_dim, rows)
    if config.variant is Variant.FLOW:
        if sparams is None:
            raise ValueError("FLOW initialization needs sentiment-cell parameters")
        state = StepState(state.h, state.c, init_sentiment_state(sparams, label))
    return state, x0
