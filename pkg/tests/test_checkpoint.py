import struct

import numpy as np
import pytest

from sentiflow.cells import ModelConfig, SentimentLabel, Variant
from sentiflow.checkpoint import (
    CheckpointError,
    CheckpointVersionError,
    dumps,
    load_checkpoint,
    load_checkpoint_with_meta,
    loads,
    save_checkpoint,
)
from sentiflow.data import build_vocab
from sentiflow.decode import beam_search
from sentiflow.model import CaptionModel


def model(variant=Variant.FLOW, seed=0):
    vocab = build_vocab(["a dog runs in the park", "a nice cat"])
    return CaptionModel(ModelConfig(variant, len(vocab), 4, 6, 5), vocab=vocab, seed=seed)


@pytest.mark.parametrize("variant", list(Variant))
def test_save_load_save_is_byte_identical(tmp_path, variant):
    m = model(variant)
    save_checkpoint(m, tmp_path / "a.ckpt", meta={"note": "x"})
    back, meta = load_checkpoint_with_meta(tmp_path / "a.ckpt")
    save_checkpoint(back, tmp_path / "b.ckpt", meta=meta)
    assert (tmp_path / "a.ckpt").read_bytes() == (tmp_path / "b.ckpt").read_bytes()
    assert back.config == m.config and back.vocab == m.vocab and meta == {"note": "x"}
    for name, p in m.params.items():
        assert back.params[name].data.tobytes() == p.data.tobytes()


@pytest.mark.parametrize("variant", list(Variant))
def test_generation_identical_after_load(tmp_path, variant):
    m = model(variant, seed=3)
    save_checkpoint(m, tmp_path / "m.ckpt")
    back = load_checkpoint(tmp_path / "m.ckpt")
    feat = np.random.default_rng(0).normal(size=4)
    for lab in SentimentLabel:
        a = beam_search(m, feat, lab, beam_size=3, max_len=6)
        b = beam_search(back, feat, lab, beam_size=3, max_len=6)
        assert [(h.tokens, h.score) for h in a] == [(h.tokens, h.score) for h in b]


def test_truncated(tmp_path):
    blob = dumps(model())
    for cut in (4, 20, len(blob) - 8):
        with pytest.raises(CheckpointError):
            loads(blob[:cut])


def test_corrupt_payload():
    blob = bytearray(dumps(model()))
    blob[-3] ^= 0xFF
    with pytest.raises(CheckpointError, match="checksum"):
        loads(bytes(blob))


def test_bad_magic():
    with pytest.raises(CheckpointError, match="magic"):
        loads(b"NOTACKPT" + dumps(model())[8:])


def test_version_mismatch():
    blob = dumps(model())
    bumped = blob[:8] + struct.pack("<I", 99) + blob[12:]
    with pytest.raises(CheckpointVersionError, match="99"):
        loads(bumped)
