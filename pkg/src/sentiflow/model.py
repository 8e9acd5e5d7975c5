"""Caption model: parameters, initialization and teacher-forced forward passes."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .cells import (
    LSTMParams,
    ModelConfig,
    SentimentCellParams,
    SentimentLabel,
    StepState,
    Variant,
    direct_injection_input,
    init_from_image,
    lstm_step,
    sentiment_flow_step,
)
from .data import PAD, Batch, CaptionRecord, Vocabulary

INIT_RANGE = 0.08
FORGET_BIAS = 1.0


def param_shapes(config: ModelConfig) -> dict[str, tuple[int, ...]]:
    """Name and shape of every learnable tensor, in canonical order."""
    h, e, d = config.hidden_dim, config.embed_dim, config.input_dim
    shapes = {
        "embed": (config.vocab_size, e),
        "img_proj": (e, config.feature_dim),
        "lstm.W": (4 * h, d),
        "lstm.U": (4 * h, h),
        "lstm.b": (4 * h,),
        "out.W": (config.vocab_size, h),
        "out.b": (config.vocab_size,),
    }
    if config.has_sentiment_cell:
        es = config.sentiment_embed_dim
        shapes.update({
            "senti.Wxs": (h, d),
            "senti.Whs": (h, h),
            "senti.bs": (h,),
            "senti.Ws": (h, es),
            "senti.b0": (h,),
            "senti.E": (3, es),
        })
    if config.has_classifier:
        m = config.classifier_dim
        shapes.update({
            "clf.W1": (m, h),
            "clf.b1": (m,),
            "clf.W2": (3, m),
            "clf.b2": (3,),
        })
    return shapes


def _is_bias(name: str) -> bool:
    return name.split(".")[-1] in ("b", "bs", "b0", "b1", "b2")


def init_params(config: ModelConfig, seed: int = 0, init_range: float = INIT_RANGE) -> dict[str, Tensor]:
    """Uniform weights in ``[-init_range, init_range]``, zero biases, forget-gate bias +1."""
    rng = np.random.default_rng(seed)
    params = {}
    for name, shape in param_shapes(config).items():
        if _is_bias(name):
            data = np.zeros(shape)
        else:
            data = rng.uniform(-init_range, init_range, size=shape)
        params[name] = Tensor(data, requires_grad=True, name=name)
    h = config.hidden_dim
    params["lstm.b"].data[h:2 * h] += FORGET_BIAS
    return params


@dataclass
class SentimentClassifierParams:
    """Two-layer perceptron over a state vector, three output classes."""

    W1: Tensor
    b1: Tensor
    W2: Tensor
    b2: Tensor

    def __post_init__(self):
        if self.W2.shape[0] != 3 or self.b2.shape != (3,):
            raise ad.ShapeError("sentiment classifier must have exactly 3 outputs")


class CaptionModel:
    def __init__(self, config: ModelConfig, params: dict[str, Tensor] | None = None,
                 vocab: Vocabulary | None = None, seed: int = 0):
        self.config = config
        self.params = params if params is not None else init_params(config, seed)
        self.vocab = vocab
        expected = param_shapes(config)
        if set(self.params) != set(expected):
            missing = set(expected) ^ set(self.params)
            raise ValueError(f"parameter set does not match config: {sorted(missing)}")
        for name, shape in expected.items():
            if self.params[name].shape != shape:
                raise ad.ShapeError(f"{name}: expected {shape}, got {self.params[name].shape}")

    @property
    def variant(self) -> Variant:
        return self.config.variant

    @property
    def lstm(self) -> LSTMParams:
        p = self.params
        return LSTMParams(p["lstm.W"], p["lstm.U"], p["lstm.b"])

    @property
    def senti(self) -> SentimentCellParams | None:
        if not self.config.has_sentiment_cell:
            return None
        p = self.params
        return SentimentCellParams(p["senti.Wxs"], p["senti.Whs"], p["senti.bs"],
                                   p["senti.Ws"], p["senti.b0"], p["senti.E"])

    @property
    def classifier(self) -> SentimentClassifierParams | None:
        if not self.config.has_classifier:
            return None
        p = self.params
        return SentimentClassifierParams(p["clf.W1"], p["clf.b1"], p["clf.W2"], p["clf.b2"])

    def named_arrays(self) -> dict[str, np.ndarray]:
        return {k: v.data for k, v in self.params.items()}

    # -- step machinery shared by training and decoding --------------------

    def step(self, x: Tensor, state: StepState) -> StepState:
        if self.config.variant is Variant.FLOW:
            return sentiment_flow_step(self.lstm, self.senti, x, state)
        return lstm_step(self.lstm, x, state)

    def token_input(self, token_ids, label) -> Tensor:
        x = ad.embedding_lookup(self.params["embed"], token_ids)
        if self.config.variant is Variant.DIRECT:
            x = direct_injection_input(x, label)
        return x

    def logits(self, h: Tensor) -> Tensor:
        return ad.linear(h, self.params["out.W"], self.params["out.b"])

    def start(self, feature, label) -> StepState:
        """State after consuming the image step."""
        feat = feature if isinstance(feature, Tensor) else ad.constant(feature)
        state, x0 = init_from_image(feat, self.params["img_proj"], label, self.config, self.senti)
        return self.step(x0, state)


@dataclass
class SequenceOutput:
    logits: list[Tensor]  # one [V] vector per word-prediction step
    states: list[StepState]  # state that produced each logit vector
    image_state: StepState


def forward_sequence(model: CaptionModel, record: CaptionRecord) -> SequenceOutput:
    """Teacher-forced pass over one record.

    Inputs are the image, then ``tokens[:-1]``; step ``t`` predicts
    ``tokens[t+1]``.
    """
    V = model.config.vocab_size
    for tok in record.tokens:
        if not 0 <= tok < V:
            raise ValueError(f"record {record.image_id}: token id {tok} outside vocabulary of {V}")
    state = model.start(record.feature, record.label)
    image_state = state
    logits, states = [], []
    for tok in record.tokens[:-1]:
        state = model.step(model.token_input(tok, record.label), state)
        states.append(state)
        logits.append(model.logits(state.h))
    return SequenceOutput(logits, states, image_state)


@dataclass
class BatchOutput:
    logits: list[Tensor]  # [B, V] per step
    states: list[StepState]  # rows past their record's end are frozen
    targets: np.ndarray  # [T, B] gold next tokens, PAD past the end
    step_weights: np.ndarray  # [T, B]; 1/n_r on a record's own steps, else 0
    labels: list[SentimentLabel]

    @property
    def final(self) -> StepState:
        return self.states[-1]


def _freeze(new: Tensor, old: Tensor, live: Tensor, dead: Tensor) -> Tensor:
    return ad.add(ad.mul(live, new), ad.mul(dead, old))


def forward_batch(model: CaptionModel, batch: Batch) -> BatchOutput:
    """Teacher-forced pass over a padded batch.

    Rows that have finished keep their last state, so ``states[-1]`` holds
    each record's final state.
    """
    B, L = batch.tokens.shape
    T = L - 1
    h = model.config.hidden_dim
    n_steps = batch.lengths - 1
    if np.any(batch.tokens >= model.config.vocab_size):
        raise ValueError("batch holds token ids outside the vocabulary")
    state = model.start(batch.features, batch.labels)
    logits, states = [], []
    for t in range(T):
        x = model.token_input(batch.tokens[:, t], batch.labels)
        new = model.step(x, state)
        alive = (t < n_steps).astype(np.float64)
        if alive.all():
            state = new
        else:
            live = ad.constant(np.repeat(alive[:, None], h, axis=1))
            dead = ad.constant(1.0 - live.data)
            state = StepState(
                _freeze(new.h, state.h, live, dead),
                _freeze(new.c, state.c, live, dead),
                None if new.s is None else _freeze(new.s, state.s, live, dead),
            )
        states.append(state)
        logits.append(model.logits(state.h))
    ar = np.arange(T)[:, None]
    weights = np.where(ar < n_steps[None, :], 1.0 / n_steps[None, :], 0.0)
    targets = batch.tokens[:, 1:].T.copy()
    targets[weights == 0] = PAD
    return BatchOutput(logits, states, targets, weights, list(batch.labels))
