import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sentiflow.cells import ModelConfig, SentimentLabel, Variant
from sentiflow.data import BOS, EOS, CaptionRecord
from sentiflow.model import CaptionModel
from sentiflow.train import (
    AdamState,
    TrainConfig,
    TrainingError,
    adam_update,
    clip_by_global_norm,
    global_norm,
    train,
)


def model(variant=Variant.DIRECT, seed=0, embed=16, hidden=16, vocab=11):
    return CaptionModel(ModelConfig(variant, vocab, 5, embed, hidden), seed=seed)


def corpus(n=3, seed=0, vocab=11):
    rng = np.random.default_rng(seed)
    return [CaptionRecord(f"r{i}", rng.normal(size=5), (BOS, *rng.integers(4, vocab, size=3).tolist(), EOS),
                          SentimentLabel.from_index(i % 3)) for i in range(n)]


class TestAdam:
    def test_zero_gradient_is_noop(self):
        theta = np.array([1.0, -2.0])
        state = AdamState()
        for t in (1, 2, 3):
            adam_update({"w": theta}, {"w": np.zeros(2)}, state, 0.001)
            assert state.t == t
        assert theta.tolist() == [1.0, -2.0]

    def test_first_step_closed_form(self):
        theta = np.array([0.0])
        adam_update({"w": theta}, {"w": np.array([0.5])}, AdamState(), 0.001)
        # m_hat = 0.5 and v_hat = 0.25 after bias correction.
        assert theta[0] == pytest.approx(-0.001 * 0.5 / (0.5 + 1e-8), rel=1e-12)
        assert theta[0] == pytest.approx(-0.00099999998, abs=1e-13)

    def test_equal_gradients_give_equal_steps(self):
        theta = np.array([0.0])
        state = AdamState()
        adam_update({"w": theta}, {"w": np.array([0.5])}, state, 0.001)
        d1 = theta[0]
        adam_update({"w": theta}, {"w": np.array([0.5])}, state, 0.001)
        assert theta[0] - d1 == pytest.approx(d1, rel=1e-7)

    def test_moments_mirror_shapes(self):
        params = {"a": np.zeros((2, 3)), "b": np.zeros(4)}
        state = AdamState()
        adam_update(params, {"a": np.ones((2, 3)), "b": np.ones(4)}, state, 0.1)
        assert {k: v.shape for k, v in state.m.items()} == {"a": (2, 3), "b": (4,)}
        assert {k: v.shape for k, v in state.v.items()} == {"a": (2, 3), "b": (4,)}

    def test_missing_key(self):
        with pytest.raises(KeyError, match="b"):
            adam_update({"a": np.zeros(1), "b": np.zeros(1)}, {"a": np.zeros(1)}, AdamState(), 0.1)


class TestClipping:
    def test_noop_below_threshold(self):
        g = {"a": np.array([3.0]), "b": np.array([4.0])}
        assert clip_by_global_norm(g, 5.0) == 5.0
        assert g["a"].tolist() == [3.0] and g["b"].tolist() == [4.0]

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**31 - 1), st.floats(0.1, 10.0))
    def test_clips_and_preserves_direction(self, seed, max_norm):
        rng = np.random.default_rng(seed)
        g = {"a": rng.normal(size=(3, 2)) * 10, "b": rng.normal(size=4) * 10}
        before = np.concatenate([v.ravel() for v in g.values()])
        pre = clip_by_global_norm(g, max_norm)
        after = np.concatenate([v.ravel() for v in g.values()])
        assert global_norm(g) <= max_norm * (1 + 1e-12)
        if pre > max_norm:
            np.testing.assert_allclose(after * pre / max_norm, before, rtol=1e-12)


class TestTrain:
    def test_zero_lr_keeps_params_bit_identical(self):
        m = model()
        before = {k: v.copy() for k, v in m.named_arrays().items()}
        train(TrainConfig(learning_rate=0.0, epochs=3, batch_size=2), corpus(), m)
        assert all(before[k].tobytes() == v.tobytes() for k, v in m.named_arrays().items())

    def test_same_seed_same_log(self):
        logs = []
        for _ in range(2):
            _, hist = train(TrainConfig(epochs=4, batch_size=2, seed=7, variant=Variant.FLOW),
                            corpus(5), model(Variant.FLOW))
            logs.append([e.to_json() for e in hist])
        assert logs[0] == logs[1]

    def test_single_record_overfits(self):
        _, hist = train(TrainConfig(learning_rate=0.01, epochs=200, batch_size=1), corpus(1), model())
        assert hist[-1].total < 0.05

    def test_log_fields(self):
        _, hist = train(TrainConfig(epochs=2, batch_size=2), corpus(), model())
        assert [e.epoch for e in hist] == [1, 2]
        for e in hist:
            assert e.total == pytest.approx(e.word_loss + e.sentiment_loss, rel=1e-12)

    def test_nan_names_batch(self):
        m = model()
        m.params["out.b"].data[:] = np.nan
        with pytest.raises(TrainingError, match="epoch 1 batch 0"):
            train(TrainConfig(epochs=1), corpus(), m)

    def test_stall_aborts(self):
        with pytest.raises(TrainingError, match="stalled"):
            train(TrainConfig(learning_rate=0.0, epochs=10, stall_window=3), corpus(), model())

    def test_variant_mismatch(self):
        with pytest.raises(TrainingError):
            train(TrainConfig(variant=Variant.FLOW), corpus(), model(Variant.DIRECT))

    def test_empty_corpus(self):
        with pytest.raises(TrainingError):
            train(TrainConfig(), [], model())

    def test_config_validation(self):
        with pytest.raises(ValueError):
            TrainConfig(epochs=0)
        with pytest.raises(ValueError):
            TrainConfig(learning_rate=-1.0)
        with pytest.raises(ValueError):
            TrainConfig(learning_rate=math.nan)

    def test_loss_decreases(self):
        _, hist = train(TrainConfig(learning_rate=0.01, epochs=15, batch_size=2, variant=Variant.BASELINE),
                        corpus(4), model(Variant.BASELINE))
        assert hist[-1].total < hist[0].total


def test_target_loss_stops_early():
    _, hist = train(TrainConfig(learning_rate=0.01, epochs=200, batch_size=1, target_loss=0.5), corpus(1), model())
    assert hist[-1].total < 0.5 and all(e.total >= 0.5 for e in hist[:-1]) and len(hist) < 200
