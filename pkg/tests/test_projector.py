"""Projector variants: shape contracts, attach checks, final-linear transfer."""

import pytest
import torch

from speechbridge.backbone import Backbone, BackboneConfig
from speechbridge.errors import DimensionMismatch
from speechbridge.projector import (
    Projector,
    ProjectorConfig,
    adapt_final_linear,
    build_variant,
)


def test_all_variants_preserve_length():
    x = torch.randn(17, 5)
    for arch in ("mlp", "cnn", "transformer"):
        proj = build_variant(arch, 2, seed=0)
        y = proj(x)
        assert y.shape == (17, 64), arch


def test_batched_matches_unbatched():
    x = torch.randn(2, 9, 5)
    for arch in ("mlp", "cnn", "transformer"):
        proj = build_variant(arch, 3, seed=1).eval()
        y = proj(x)
        for b in range(2):
            assert torch.allclose(proj(x[b]), y[b], atol=1e-6), arch


def test_config_validation():
    with pytest.raises(ValueError, match="input_kind"):
        ProjectorConfig(input_kind="waveform")
    with pytest.raises(ValueError, match="arch"):
        ProjectorConfig(arch="rnn")
    with pytest.raises(ValueError, match="depth"):
        build_variant("mlp", 7)


def test_width_mismatch_rejected():
    proj = build_variant("mlp", 2)
    with pytest.raises(DimensionMismatch, match="width"):
        proj(torch.randn(4, 6))


def test_check_attach():
    bb = Backbone(BackboneConfig(fit_steps=0))
    proj = Projector(ProjectorConfig(out_dim=bb.cfg.embed_dim))
    proj.check_attach(bb)
    bad = Projector(ProjectorConfig(out_dim=bb.cfg.embed_dim + 8))
    with pytest.raises(DimensionMismatch, match="out_dim"):
        bad.check_attach(bb)


def test_project_codes_path():
    proj = Projector(seed=2)
    digits = torch.randint(0, 8, (11, 5))
    out = proj.project_codes(digits)
    assert out.shape == (11, 64)
    text_proj = Projector(ProjectorConfig(input_kind="text_embeddings", in_dim=64))
    with pytest.raises(ValueError, match="text"):
        text_proj.project_codes(digits)


def test_cnn_receptive_field():
    proj = build_variant("cnn", 4)
    assert proj.receptive_field() == 4 * (3 - 1) + 1
    with pytest.raises(ValueError, match="cnn"):
        build_variant("mlp", 2).receptive_field()


def test_cnn_is_causal():
    proj = build_variant("cnn", 2, seed=3).eval()
    x = torch.randn(20, 5)
    y1 = proj(x)
    x2 = x.clone()
    x2[12:] = 0.0
    y2 = proj(x2)
    assert torch.allclose(y1[:12], y2[:12], atol=1e-6)


def test_transformer_cache_matches_offline():
    proj = build_variant("transformer", 2, seed=4).eval()
    x = torch.randn(1, 16, 5)
    off = proj(x)
    caches = proj.new_caches()
    parts = []
    for start in range(0, 16, 8):
        parts.append(proj(x[:, start:start + 8], caches=caches, pos_offset=start))
    assert torch.allclose(off, torch.cat(parts, dim=1), atol=1e-5)


def test_mlp_and_cnn_need_no_caches():
    assert build_variant("mlp", 2).new_caches() is None
    assert build_variant("cnn", 2).new_caches() is None


def test_adapt_final_linear_freezes_trunk_bitwise():
    proj = build_variant("transformer", 2, seed=5)
    trunk_before = {
        n: p.detach().clone() for n, p in proj.named_parameters()
        if not n.startswith("final.")
    }
    adapt_final_linear(proj, 48, seed=6)
    assert proj.cfg.out_dim == 48
    assert proj.final.weight.shape == (48, proj.cfg.hidden)
    assert proj.final.weight.requires_grad
    for n, p in proj.named_parameters():
        if n.startswith("final."):
            continue
        assert not p.requires_grad, n
        assert torch.equal(p, trunk_before[n]), n

    y = proj(torch.randn(6, 5))
    assert y.shape == (6, 48)


def test_adapt_final_linear_validates():
    with pytest.raises(ValueError, match="positive"):
        adapt_final_linear(build_variant("mlp", 2), 0)


def test_seeded_determinism():
    a = build_variant("transformer", 3, seed=7)
    b = build_variant("transformer", 3, seed=7)
    for (_, pa), (_, pb) in zip(a.named_parameters(), b.named_parameters()):
        assert torch.equal(pa, pb)
