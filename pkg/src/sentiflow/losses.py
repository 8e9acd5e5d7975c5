"""Word-prediction loss, the two sentiment-loss placements, and the objective.

DIRECT scores the sentiment classifier on the hidden state at every step
and averages; FLOW scores it once, on the final sentiment-cell state.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .cells import SentimentLabel, Variant
from .data import PAD, Batch, CaptionRecord
from .model import (
    BatchOutput,
    CaptionModel,
    SentimentClassifierParams,
    SequenceOutput,
    forward_batch,
    forward_sequence,
)

DEFAULT_LAMBDA = 1.0


@dataclass
class LossBreakdown:
    word_loss: Tensor
    sentiment_loss: Tensor
    total: Tensor
    lam: float

    def values(self) -> dict[str, float]:
        return {
            "word_loss": self.word_loss.item(),
            "sentiment_loss": self.sentiment_loss.item(),
            "total": self.total.item(),
        }


def classifier_logits(clf: SentimentClassifierParams, state: Tensor) -> Tensor:
    hidden = ad.tanh(ad.linear(state, clf.W1, clf.b1))
    return ad.linear(hidden, clf.W2, clf.b2)


def _mean(terms: list[Tensor]) -> Tensor:
    return ad.scale(ad.add_scalars(terms), 1.0 / len(terms))


def word_loss(logits: Sequence[Tensor], gold: Sequence[int]) -> Tensor:
    """Mean per-step cross entropy; ``<pad>`` targets are skipped."""
    if len(logits) != len(gold):
        raise ValueError(f"{len(logits)} logit vectors for {len(gold)} gold tokens")
    terms = [ad.softmax_cross_entropy(lg, int(g)) for lg, g in zip(logits, gold) if g != PAD]
    if not terms:
        raise ValueError("no non-padding targets")
    return _mean(terms)


def stepwise_sentiment_loss(states: Sequence[Tensor], clf: SentimentClassifierParams,
                            label: SentimentLabel) -> Tensor:
    if not states:
        raise ValueError("stepwise sentiment loss needs at least one state")
    return _mean([ad.softmax_cross_entropy(classifier_logits(clf, h), label.index) for h in states])


def terminal_sentiment_loss(final_s: Tensor | None, clf: SentimentClassifierParams,
                            label: SentimentLabel) -> Tensor:
    if final_s is None:
        raise ValueError("terminal sentiment loss needs a sentiment-cell state (FLOW variant)")
    return ad.softmax_cross_entropy(classifier_logits(clf, final_s), label.index)


def combine(word: Tensor, sentiment: Tensor, lam: float) -> LossBreakdown:
    return LossBreakdown(word, sentiment, ad.add(word, ad.scale(sentiment, lam)), lam)


def total_loss(record: CaptionRecord, outputs: SequenceOutput, variant: Variant,
               lam: float = DEFAULT_LAMBDA, clf: SentimentClassifierParams | None = None) -> LossBreakdown:
    word = word_loss(outputs.logits, record.tokens[1:])
    if variant is Variant.BASELINE:
        senti = ad.constant(0.0)
    elif variant is Variant.DIRECT:
        senti = stepwise_sentiment_loss([s.h for s in outputs.states], clf, record.label)
    else:
        senti = terminal_sentiment_loss(outputs.states[-1].s, clf, record.label)
    return combine(word, senti, lam)


def batch_loss(out: BatchOutput, variant: Variant, lam: float = DEFAULT_LAMBDA,
               clf: SentimentClassifierParams | None = None) -> LossBreakdown:
    """Batch mean of per-record :func:`total_loss` values."""
    B = len(out.labels)
    gold_senti = np.array([lab.index for lab in out.labels])
    w = out.step_weights / B
    word = ad.add_scalars([ad.softmax_cross_entropy(lg, tg, wt)
                           for lg, tg, wt in zip(out.logits, out.targets, w)])
    if variant is Variant.BASELINE:
        senti = ad.constant(0.0)
    elif variant is Variant.DIRECT:
        senti = ad.add_scalars([ad.softmax_cross_entropy(classifier_logits(clf, st.h), gold_senti, wt)
                                for st, wt in zip(out.states, w)])
    else:
        senti = ad.softmax_cross_entropy(classifier_logits(clf, out.final.s), gold_senti)
    return combine(word, senti, lam)


def batch_loss_for(model: CaptionModel, batch: Batch, lam: float = DEFAULT_LAMBDA) -> LossBreakdown:
    return batch_loss(forward_batch(model, batch), model.variant, lam, model.classifier)


def record_loss_for(model: CaptionModel, record: CaptionRecord, lam: float = DEFAULT_LAMBDA) -> LossBreakdown:
    return total_loss(record, forward_sequence(model, record), model.variant, lam, model.classifier)
