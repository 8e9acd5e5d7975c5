"""Greedy and beam-search caption generation conditioned on a sentiment label.

Scores are cumulative negative log-probabilities under the full softmax,
with no length normalization; lower is better. ``<pad>`` and ``<bos>`` are
never emitted.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .cells import SentimentLabel, StepState
from .data import BOS, EOS, PAD
from .model import CaptionModel

DEFAULT_BEAM = 5
DEFAULT_MAX_LEN = 20
FORBIDDEN = (PAD, BOS)


@dataclass
class Hypothesis:
    tokens: tuple[int, ...]  # emitted tokens, excluding <bos>; ends with <eos> when finished by it
    score: float
    state: StepState | None = None
    finished: bool = False

    @property
    def words(self) -> tuple[int, ...]:
        """Caption tokens without the trailing ``<eos>``."""
        return self.tokens[:-1] if self.tokens and self.tokens[-1] == EOS else self.tokens

    def sort_key(self):
        return (self.score, self.tokens)


def _stack(states: list[StepState]) -> StepState:
    cat = lambda xs: ad.constant(np.stack([x.data for x in xs]))  # noqa: E731
    s = None if states[0].s is None else cat([st.s for st in states])
    return StepState(cat([st.h for st in states]), cat([st.c for st in states]), s)


def _row(state: StepState, i: int) -> StepState:
    s = None if state.s is None else ad.constant(state.s.data[i])
    return StepState(ad.constant(state.h.data[i]), ad.constant(state.c.data[i]), s)


def _advance(model: CaptionModel, states: list[StepState], tokens: list[int], label: SentimentLabel):
    """Feed one token per hypothesis; returns next-token log-probs ``[k, V]`` and new states."""
    rows = len(states)
    state = _stack(states)
    x = model.token_input(tokens, [label] * rows)
    new = model.step(x, state)
    logp = ad.log_softmax(model.logits(new.h).data)
    return logp, [_row(new, i) for i in range(rows)]


def start_state(model: CaptionModel, feature, label: SentimentLabel) -> StepState:
    """Single-row state after the image step."""
    state = model.start(np.asarray(feature, dtype=np.float64)[None, :], [label])
    return _row(state, 0)


def greedy_decode(model: CaptionModel, feature, label: SentimentLabel,
                  max_len: int = DEFAULT_MAX_LEN) -> Hypothesis:
    if max_len < 1:
        raise ValueError("max_len must be at least 1")
    state = start_state(model, feature, label)
    token, out, score = BOS, [], 0.0
    for _ in range(max_len):
        logp, (state,) = _advance(model, [state], [token], label)
        row = logp[0].copy()
        row[list(FORBIDDEN)] = -np.inf
        token = int(np.argmax(row))
        score += -float(logp[0, token])
        out.append(token)
        if token == EOS:
            break
    return Hypothesis(tuple(out), score, state, True)


def beam_search(model: CaptionModel, feature, label: SentimentLabel, beam_size: int = DEFAULT_BEAM,
                max_len: int = DEFAULT_MAX_LEN) -> list[Hypothesis]:
    """Completed hypotheses ranked by ascending score.

    Each step keeps the ``k`` best expansions of the live hypotheses, where
    ``k`` is ``beam_size`` minus the number already completed; expansions
    ending in ``<eos>`` move to the completed pool. Hypotheses still live
    after ``max_len`` tokens are completed as they stand.
    """
    if beam_size < 1:
        raise ValueError("beam_size must be at least 1")
    if max_len < 1:
        raise ValueError("max_len must be at least 1")
    live = [Hypothesis((), 0.0, start_state(model, feature, label))]
    done: list[Hypothesis] = []
    allowed = np.array([t for t in range(model.config.vocab_size) if t not in FORBIDDEN])
    for step in range(max_len):
        prev = [h.tokens[-1] if h.tokens else BOS for h in live]
        logp, states = _advance(model, [h.state for h in live], prev, label)
        cands = []
        for i, hyp in enumerate(live):
            for tok in allowed:
                cands.append((hyp.score - float(logp[i, tok]), hyp.tokens + (int(tok),), i))
        cands.sort(key=lambda c: (c[0], c[1]))
        live = []
        for score, toks, i in cands[: beam_size - len(done)]:
            hyp = Hypothesis(toks, score, states[i], toks[-1] == EOS)
            (done if hyp.finished else live).append(hyp)
        if not live:
            break
    for hyp in live:
        hyp.finished = True
        done.append(hyp)
    done.sort(key=Hypothesis.sort_key)
    return done[:beam_size]


def generate_with_flip(model: CaptionModel, feature, label: SentimentLabel,
                       beam_size: int = DEFAULT_BEAM, max_len: int = DEFAULT_MAX_LEN):
    """Best caption for ``label`` and for its opposite polarity."""
    flipped = label.flipped()
    original = beam_search(model, feature, label, beam_size, max_len)[0]
    other = beam_search(model, feature, flipped, beam_size, max_len)[0]
    return original, other


def sequence_score(model: CaptionModel, feature, label: SentimentLabel, tokens) -> float:
    """Recompute ``-sum log p`` of an emitted token sequence, one step at a time."""
    state = start_state(model, feature, label)
    prev, total = BOS, 0.0
    for tok in tokens:
        logp, (state,) = _advance(model, [state], [prev], label)
        total -= float(logp[0, tok])
        prev = tok
    return total
