import math

import pytest
import torch
from torch import nn

from speechbridge.nn.layers import (CausalConv1d, DecoderLayer, EncoderLayer,
                                    KVCache, SelfAttention, apply_rope,
                                    seeded_init_)
from speechbridge.nn.masks import causal_mask, chunk_attention_mask
from speechbridge.nn.optim import AdamW, adamw_step
from speechbridge.nn.schedule import LrSchedule, cosine_warmup_lr


def test_causal_mask_shape_and_triangularity():
    m = causal_mask(5)
    assert m.shape == (5, 5)
    assert m[0, 0] and not m[0, 1]
    assert (m == m.tril()).all()


def test_chunk_mask_window():
    # chunk_len 2, lookback 1: position 5 (chunk 2) sees chunks 1..2 only
    m = chunk_attention_mask(8, 2, 1)
    assert m[5].tolist() == [False, False, True, True, True, True, False, False]
    # lookback covering everything degenerates to the causal mask
    assert (chunk_attention_mask(8, 2, 100) == causal_mask(8)).all()
    # zero lookback: chunk-local causal
    m0 = chunk_attention_mask(4, 2, 0)
    assert m0[2].tolist() == [False, False, True, False]


def test_chunk_mask_rejects_bad_args():
    with pytest.raises(ValueError):
        chunk_attention_mask(0, 2, 1)
    with pytest.raises(ValueError):
        chunk_attention_mask(4, 0, 1)
    with pytest.raises(ValueError):
        chunk_attention_mask(4, 2, -1)


def test_schedule_ramps_and_decays_to_zero():
    s = LrSchedule(base_lr=1.0, warmup_ratio=0.1, total_steps=100)
    assert cosine_warmup_lr(0, s) == 0.0
    assert cosine_warmup_lr(5, s) == pytest.approx(0.5)
    assert cosine_warmup_lr(10, s) == pytest.approx(1.0)
    assert cosine_warmup_lr(55, s) == pytest.approx(0.5, abs=1e-6)
    assert cosine_warmup_lr(100, s) == pytest.approx(0.0, abs=1e-12)
    assert cosine_warmup_lr(1000, s) == pytest.approx(0.0, abs=1e-12)
    # monotone through warmup
    vals = [cosine_warmup_lr(k, s) for k in range(11)]
    assert vals == sorted(vals)


def test_adamw_matches_torch_reference():
    torch.manual_seed(0)
    p_mine = torch.randn(4, 3)
    p_ref = p_mine.clone().requires_grad_(True)
    mine = [p_mine.clone()]
    ref_opt = torch.optim.AdamW([p_ref], lr=1e-2, betas=(0.9, 0.95),
                                weight_decay=0.01, eps=1e-8)
    state = {}
    for _ in range(5):
        g = torch.randn(4, 3)
        p_ref.grad = g.clone()
        ref_opt.step()
        state = adamw_step(mine, [g], lr=1e-2, state=state)
    assert torch.allclose(mine[0], p_ref.detach(), atol=1e-6)


def test_adamw_rejects_nonfinite_gradient():
    p = torch.zeros(2)
    with pytest.raises(ValueError, match="non-finite"):
        adamw_step([p], [torch.tensor([1.0, float("nan")])], lr=1e-3,
                   names=["w"])


def test_adamw_class_carries_state():
    p = torch.ones(3)
    opt = AdamW([("w", p)])
    before = p.clone()
    p.grad = torch.ones(3)
    opt.step(1e-2)
    assert not torch.equal(p, before)
    assert opt.state["step"] == 1


def test_seeded_init_deterministic_and_shape_preserving():
    a = nn.Linear(8, 4)
    b = nn.Linear(8, 4)
    seeded_init_(a, 7)
    seeded_init_(b, 7)
    assert torch.equal(a.weight, b.weight)
    assert (a.bias == 0).all()
    seeded_init_(b, 8)
    assert not torch.equal(a.weight, b.weight)


def test_seeded_init_damps_residual_exits():
    layer = EncoderLayer(16, 2, 32)
    seeded_init_(layer, 0)
    body = layer.attn.q_proj.weight.std()
    exit_ = layer.attn.o_proj.weight.std()
    assert exit_ < 0.2 * body


def test_rope_preserves_norm_and_relativity():
    x = torch.randn(1, 2, 6, 8)
    pos = torch.arange(6)
    y = apply_rope(x, pos)
    assert torch.allclose(x.norm(dim=-1), y.norm(dim=-1), atol=1e-5)
    # rotation at position 0 is the identity
    y0 = apply_rope(x[:, :, :1], torch.arange(1))
    assert torch.allclose(y0, x[:, :, :1], atol=1e-6)


def test_kv_cache_append_and_evict():
    c = KVCache()
    assert len(c) == 0
    k = torch.randn(1, 2, 4, 8)
    v = torch.randn(1, 2, 4, 8)
    c.append(k, v)
    c.append(k, v)
    assert len(c) == 8
    c.evict_to(5)
    assert len(c) == 5
    assert torch.equal(c.k, torch.cat((k, k), dim=2)[:, :, 3:])


def test_attention_cache_matches_offline():
    torch.manual_seed(1)
    attn = SelfAttention(16, 2)
    seeded_init_(attn, 3)
    x = torch.randn(1, 10, 16)
    with torch.no_grad():
        full = attn(x, mask=causal_mask(10))
        cache = KVCache()
        a = attn(x[:, :6], cache=cache, pos_offset=0)
        b = attn(x[:, 6:], cache=cache, pos_offset=6)
        stream = torch.cat((a, b), dim=1)
    assert torch.allclose(full, stream, atol=1e-6)


def test_causal_conv_stream_matches_offline():
    torch.manual_seed(2)
    conv = CausalConv1d(3, 5, kernel=4, stride=2)
    seeded_init_(conv, 4)
    x = torch.randn(1, 3, 20)
    with torch.no_grad():
        full = conv(x)
        ctx = conv.initial_state(1)
        ya, ctx = conv.stream(x[:, :, :8], ctx)
        yb, ctx = conv.stream(x[:, :, 8:], ctx)
        stream = torch.cat((ya, yb), dim=2)
    assert torch.allclose(full, stream, atol=1e-6)


def test_decoder_layer_cross_attention_shapes():
    layer = DecoderLayer(16, 2, 32, cross=True, kv_dim=12)
    seeded_init_(layer, 5)
    x = torch.randn(2, 7, 16)
    mem = torch.randn(2, 3, 12)
    y = layer(x, memory=mem)
    assert y.shape == x.shape
