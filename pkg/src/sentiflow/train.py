"""Mini-batch training with Adam and global-norm gradient clipping."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import autodiff as ad
from .cells import Variant
from .data import CaptionRecord, make_batches
from .losses import DEFAULT_LAMBDA, batch_loss_for
from .model import CaptionModel

log = logging.getLogger(__name__)

# Batch size suited to full-scale corpora; the desk default is 16.
FULL_SCALE_BATCH_SIZE = 150


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    learning_rate: float = 0.001
    batch_size: int = 16
    epochs: int = 60
    lam: float = DEFAULT_LAMBDA
    seed: int = 0
    variant: Variant = Variant.DIRECT
    clip_norm: float | None = 5.0
    # Abort when the epoch loss has not improved for this many epochs while above stall_floor.
    stall_window: int | None = None
    stall_floor: float = 0.5
    # Stop after the first epoch whose mean total loss is below this.
    target_loss: float | None = None

    def __post_init__(self):
        if isinstance(self.variant, str):
            self.variant = Variant.parse(self.variant)
        if not self.learning_rate >= 0:
            raise ValueError("learning_rate must be non-negative")
        if self.epochs < 1:
            raise ValueError("epochs must be at least 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")


@dataclass
class AdamState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def adam_update(params: dict[str, np.ndarray], grads: dict[str, np.ndarray], state: AdamState,
                lr: float) -> tuple[dict[str, np.ndarray], AdamState]:
    """One bias-corrected Adam step, applied to ``params`` in place."""
    missing = set(params) - set(grads)
    if missing:
        raise KeyError(f"no gradient for parameter(s): {sorted(missing)}")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for name, theta in params.items():
        g = grads[name]
        if name not in state.m:
            state.m[name] = np.zeros_like(theta)
            state.v[name] = np.zeros_like(theta)
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        theta -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params, state


def global_norm(grads: dict[str, np.ndarray]) -> float:
    return math.sqrt(sum(float(np.vdot(g, g)) for g in grads.values()))


def clip_by_global_norm(grads: dict[str, np.ndarray], max_norm: float) -> float:
    """Rescale ``grads`` in place so their joint norm is at most ``max_norm``.

    Returns the norm before clipping.
    """
    norm = global_norm(grads)
    if norm > max_norm:
        factor = max_norm / norm
        for g in grads.values():
            g *= factor
    return norm


@dataclass
class EpochLog:
    epoch: int
    word_loss: float
    sentiment_loss: float
    total: float

    def to_json(self) -> str:
        return json.dumps(asdict(self))


def train_batch(model: CaptionModel, batch, config: TrainConfig, adam: AdamState) -> dict[str, float]:
    names = list(model.params)
    tensors = [model.params[n] for n in names]
    with ad.Tape() as tape:
        loss = batch_loss_for(model, batch, config.lam)
    values = loss.values()
    if not all(math.isfinite(x) for x in values.values()):
        raise TrainingError(f"non-finite loss {values}")
    raw = ad.backward(tape, loss.total, tensors)
    grads = {n: np.array(raw[t], dtype=np.float64) for n, t in zip(names, tensors)}
    if config.clip_norm is not None:
        clip_by_global_norm(grads, config.clip_norm)
    adam_update(model.named_arrays(), grads, adam, config.learning_rate)
    return values


def train(config: TrainConfig, corpus: Sequence[CaptionRecord], model: CaptionModel,
          on_epoch: Callable[[EpochLog], None] | None = None) -> tuple[CaptionModel, list[EpochLog]]:
    """Train ``model`` in place; returns it with the per-epoch loss log.

    Epoch ``e`` shuffles with seed ``config.seed + e``, so runs are
    reproducible from the config alone.
    """
    if not corpus:
        raise TrainingError("cannot train on an empty corpus")
    if model.variant is not config.variant:
        raise TrainingError(f"model variant {model.variant.value} != configured {config.variant.value}")
    adam = AdamState()
    history: list[EpochLog] = []
    best = math.inf
    since_best = 0
    for epoch in range(1, config.epochs + 1):
        sums = {"word_loss": 0.0, "sentiment_loss": 0.0, "total": 0.0}
        batches = make_batches(corpus, config.batch_size, seed=config.seed + epoch)
        for b, batch in enumerate(batches):
            try:
                values = train_batch(model, batch, config, adam)
            except TrainingError as exc:
                raise TrainingError(f"epoch {epoch} batch {b}: {exc}") from None
            for k in sums:
                sums[k] += values[k] * len(batch)
        n = len(corpus)
        entry = EpochLog(epoch, sums["word_loss"] / n, sums["sentiment_loss"] / n, sums["total"] / n)
        history.append(entry)
        log.debug("epoch %d word %.4f senti %.4f total %.4f", epoch, entry.word_loss,
                 entry.sentiment_loss, entry.total)
        if on_epoch is not None:
            on_epoch(entry)
        if config.target_loss is not None and entry.total < config.target_loss:
            break
        if entry.total < best:
            best, since_best = entry.total, 0
        else:
            since_best += 1
        if config.stall_window and since_best >= config.stall_window and entry.total > config.stall_floor:
            raise TrainingError(f"loss stalled at {entry.total:.4f} for {since_best} epochs")
    return model, history
