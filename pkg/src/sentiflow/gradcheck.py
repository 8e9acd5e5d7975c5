"""Central-difference verification of analytic gradients."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import autodiff as ad
from .cells import ModelConfig, SentimentLabel, Variant
from .data import BOS, EOS, CaptionRecord
from .losses import record_loss_for
from .model import CaptionModel

EPS = 1e-5
REL_TOL = 1e-5
ABS_FLOOR = 1e-8


def numerical_gradient(f: Callable[[], float], x: np.ndarray, eps: float = EPS) -> np.ndarray:
    """Central differences of ``f`` w.r.t. ``x``, perturbing ``x`` in place."""
    grad = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        orig = x[i]
        x[i] = orig + eps
        fp = f()
        x[i] = orig - eps
        fm = f()
        x[i] = orig
        grad[i] = (fp - fm) / (2 * eps)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray, rel_tol: float = REL_TOL,
                   abs_floor: float = ABS_FLOOR) -> np.ndarray:
    """Element-wise ``|a - n| / max(|a|, |n|, abs_floor / rel_tol)``.

    The denominator floor means an element passes ``< rel_tol`` when its
    absolute error is below ``abs_floor``, whatever its magnitude.
    """
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), abs_floor / rel_tol)
    return np.abs(analytic - numeric) / denom


@dataclass
class GradCheckReport:
    variant: Variant
    errors: dict[str, float] = field(default_factory=dict)
    tol: float = REL_TOL

    @property
    def max_error(self) -> float:
        return max(self.errors.values(), default=0.0)

    @property
    def passed(self) -> bool:
        return self.max_error < self.tol

    def lines(self) -> list[str]:
        out = [f"{name:12s} max rel err {err:.3e}" for name, err in self.errors.items()]
        status = "PASS" if self.passed else "FAIL"
        out.append(f"{self.variant.value}: {status} max rel err {self.max_error:.3e} (tol {self.tol:g})")
        return out


def check_model(model: CaptionModel, record: CaptionRecord, lam: float = 1.0,
                eps: float = EPS, tol: float = REL_TOL) -> GradCheckReport:
    """Compare backprop against central differences for every parameter."""
    params = list(model.params.values())
    with ad.Tape() as tape:
        loss = record_loss_for(model, record, lam).total
    grads = ad.backward(tape, loss, params)

    def f() -> float:
        return record_loss_for(model, record, lam).total.item()

    report = GradCheckReport(model.variant, tol=tol)
    for name, p in model.params.items():
        numeric = numerical_gradient(f, p.data, eps)
        report.errors[name] = float(relative_error(grads[p], numeric, tol).max())
    return report


def tiny_model(variant: Variant, seed: int = 0, embed_dim: int = 8, hidden_dim: int = 6,
               vocab_size: int = 11, feature_dim: int = 5, sentiment_embed_dim: int = 4,
               init_range: float = 0.5) -> CaptionModel:
    """Small randomly initialized model with non-trivial biases."""
    from .model import init_params

    config = ModelConfig(variant, vocab_size, feature_dim, embed_dim, hidden_dim, sentiment_embed_dim)
    params = init_params(config, seed, init_range)
    rng = np.random.default_rng(seed + 1)
    for name, p in params.items():
        if p.ndim == 1:
            p.data[:] = rng.uniform(-init_range, init_range, size=p.shape)
    return CaptionModel(config, params)


def tiny_record(model: CaptionModel, n_words: int = 1, seed: int = 0,
                label: SentimentLabel = SentimentLabel.POS) -> CaptionRecord:
    """Record with ``n_words + 1`` prediction steps (words then ``<eos>``)."""
    rng = np.random.default_rng(seed)
    words = rng.integers(3, model.config.vocab_size, size=n_words)
    tokens = (BOS, *(int(w) for w in words), EOS)
    feature = rng.normal(size=model.config.feature_dim)
    return CaptionRecord("gradcheck", feature, tokens, label)


def run_gradcheck(variant: Variant, seed: int = 0, **dims) -> GradCheckReport:
    model = tiny_model(variant, seed, **dims)
    record = tiny_record(model, n_words=1, seed=seed)
    return check_model(model, record)
