"""Frozen text backbone: determinism, freezing, echo fit, generation."""

import pytest
import torch

from speechbridge.backbone import (
    BOS_ID,
    EOS_ID,
    VOCAB_SIZE,
    Backbone,
    BackboneConfig,
    decode_text,
    encode_text,
)
from speechbridge.errors import DimensionMismatch


@pytest.fixture(scope="module")
def bb():
    return Backbone(BackboneConfig(fit_steps=100))


def test_text_codec_roundtrip():
    s = "hello, quantizer 42!"
    ids = encode_text(s)
    assert ids.dtype == torch.long
    assert decode_text(ids.tolist()) == s
    # specials are dropped on decode
    assert decode_text([104, 105, BOS_ID, EOS_ID]) == "hi"


def test_construction_is_deterministic():
    a = Backbone(BackboneConfig(fit_steps=20))
    b = Backbone(BackboneConfig(fit_steps=20))
    assert a.checksum() == b.checksum()
    c = Backbone(BackboneConfig(fit_steps=20, seed=999))
    assert a.checksum() != c.checksum()


def test_parameters_frozen_at_construction(bb):
    assert all(not p.requires_grad for p in bb.parameters())
    bb.assert_frozen()
    # forward passes do not disturb the checksum
    bb.forward(torch.randn(4, bb.cfg.embed_dim))
    bb.assert_frozen()


def test_assert_frozen_detects_mutation():
    b = Backbone(BackboneConfig(fit_steps=0))
    with torch.no_grad():
        b.embed.weight[0, 0] += 1.0
    with pytest.raises(RuntimeError, match="changed"):
        b.assert_frozen()


def test_manifest_roundtrip(bb):
    clone = Backbone.from_manifest(bb.to_manifest())
    assert clone.checksum() == bb.checksum()


def test_echo_fit_changes_weights_and_helps():
    plain = Backbone(BackboneConfig(fit_steps=0))
    fit = Backbone(BackboneConfig(fit_steps=150))
    assert plain.checksum() != fit.checksum()

    # the fitted model should echo short byte strings better than init
    def echo_loss(model):
        gen = torch.Generator().manual_seed(55)
        total = 0.0
        for _ in range(8):
            ids = torch.randint(0, 256, (5,), generator=gen)
            seq = torch.cat((ids, torch.tensor([BOS_ID]), ids))
            _, logits = model.forward(model.embed(seq))
            tgt = torch.cat((ids, torch.tensor([EOS_ID])))
            total += float(torch.nn.functional.cross_entropy(logits[5:11], tgt))
        return total / 8

    assert echo_loss(fit) < 0.8 * echo_loss(plain)


def test_embed_text_validates_range(bb):
    with pytest.raises(ValueError, match="vocab"):
        bb.embed_text(torch.tensor([VOCAB_SIZE]))
    with pytest.raises(ValueError, match="vocab"):
        bb.embed_text(torch.tensor([-1]))


def test_forward_width_check(bb):
    with pytest.raises(DimensionMismatch, match="width"):
        bb.forward(torch.randn(3, bb.cfg.embed_dim + 1))


def test_forward_batched_matches_unbatched(bb):
    x = torch.randn(6, bb.cfg.embed_dim)
    h1, l1 = bb.forward(x)
    h2, l2 = bb.forward(x[None])
    assert torch.equal(h1, h2[0]) and torch.equal(l1, l2[0])


def test_generate_stops_on_eos(bb):
    # echo-fitted backbone repeats the prefix bytes then emits EOS
    ids = torch.randint(0, 256, (4,), generator=torch.Generator().manual_seed(9))
    prefix = bb.embed(torch.cat((ids, torch.tensor([BOS_ID]))))
    out, hidden = bb.generate(prefix, max_new=20)
    assert len(out) <= 20
    assert EOS_ID not in out
    assert hidden.shape == (len(out), bb.cfg.embed_dim)


def test_generate_validates_args(bb):
    prefix = bb.embed(torch.tensor([BOS_ID]))
    with pytest.raises(ValueError, match="max_new"):
        bb.generate(prefix, max_new=0)
    with pytest.raises(DimensionMismatch, match="unbatched"):
        bb.generate(prefix[None], max_new=3)


def test_generate_deterministic(bb):
    prefix = bb.embed(torch.tensor([72, 105, BOS_ID]))
    a, _ = bb.generate(prefix, max_new=10)
    b, _ = bb.generate(prefix, max_new=10)
    assert a == b
