"""Decode a labelled test corpus and score it."""

from __future__ import annotations

from collections import defaultdict
from typing import Callable, Sequence

from .cells import SentimentLabel
from .data import CaptionRecord
from .decode import DEFAULT_BEAM, DEFAULT_MAX_LEN, beam_search
from .metrics import EvalReport, bleu_all, rouge_l, sentiment_stats
from .model import CaptionModel

Generator = Callable[[CaptionRecord, SentimentLabel], Sequence[int]]


def beam_generator(model: CaptionModel, beam_size: int = DEFAULT_BEAM,
                   max_len: int = DEFAULT_MAX_LEN) -> Generator:
    def generate(record: CaptionRecord, label: SentimentLabel):
        return beam_search(model, record.feature, label, beam_size, max_len)[0].words

    return generate


def evaluate(model: CaptionModel, corpus: Sequence[CaptionRecord], positive, negative,
             beam_size: int = DEFAULT_BEAM, max_len: int = DEFAULT_MAX_LEN,
             generate: Generator | None = None) -> EvalReport:
    """Decode every record under its own label and report all metrics.

    References for a record are the captions of all records sharing its
    image id and label. Sentiment statistics cover the positive and negative
    requests; each of those is decoded again with the flipped label.
    """
    if model.vocab is None:
        raise ValueError("model has no vocabulary")
    vocab = model.vocab
    generate = generate or beam_generator(model, beam_size, max_len)

    refs_by_key = defaultdict(list)
    for r in corpus:
        refs_by_key[(r.image_id, r.label)].append(vocab.words(r.tokens))

    hyps, refs = [], []
    senti = {SentimentLabel.POS: ([], []), SentimentLabel.NEG: ([], [])}
    for r in corpus:
        words = vocab.words(generate(r, r.label))
        hyps.append(words)
        refs.append(refs_by_key[(r.image_id, r.label)])
        if r.label in senti:
            orig, flipped = senti[r.label]
            orig.append(words)
            flipped.append(vocab.words(generate(r, r.label.flipped())))

    b = bleu_all(hyps, refs, 4)
    by_label = {}
    all_orig, all_orig_req, all_flip, all_flip_req = [], [], [], []
    for label, (orig, flipped) in senti.items():
        if not orig:
            continue
        s = sentiment_stats(orig, [label] * len(orig), positive, negative)
        f = sentiment_stats(flipped, [label.flipped()] * len(flipped), positive, negative)
        by_label[label.value] = {
            "count": s.count, "total_pct": s.total_pct, "matched_pct": s.matched_pct,
            "total_flipped_pct": f.total_pct, "matched_flipped_pct": f.matched_pct,
        }
        all_orig += orig
        all_orig_req += [label] * len(orig)
        all_flip += flipped
        all_flip_req += [label.flipped()] * len(flipped)
    s = sentiment_stats(all_orig, all_orig_req, positive, negative)
    f = sentiment_stats(all_flip, all_flip_req, positive, negative)
    return EvalReport(
        bleu1=b[0], bleu2=b[1], bleu3=b[2], bleu4=b[3],
        rouge_l=rouge_l(hyps, refs),
        total_pct=s.total_pct, matched_pct=s.matched_pct,
        total_flipped_pct=f.total_pct, matched_flipped_pct=f.matched_pct,
        n_captions=len(hyps), n_sentiment_requests=len(all_orig),
        by_label=by_label,
    )
