"""Differentiable building blocks shared by every neural module.

All layers run in float32 by default; calling ``.double()`` on a module is
supported everywhere and is used for finite-difference gradient checks.
Attention takes an explicit boolean mask (True = may attend) and an
optional key/value cache so the same block serves offline (masked) and
streaming (cached) execution.
"""

import math

import torch
import torch.nn.functional as F
from torch import nn


# projections that write into the residual stream; damped at init so the
# embedding signal is not buried under per-layer noise in deep stacks
_RESIDUAL_EXITS = ("o_proj.weight", "fc2.weight", "w2.weight")


def seeded_init_(module: nn.Module, seed: int) -> nn.Module:
    """Deterministically re-initialise a module's parameters in place.

    Weights with >= 2 dims get a fan-in-scaled normal (residual-exit
    projections 10x smaller), biases are zeroed, and 1-d non-bias
    parameters (norm gains) keep their constructor values. Parameters are
    visited in sorted name order, so the result only depends on the seed
    and the module's architecture.
    """
    gen = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for name, p in sorted(module.named_parameters(), key=lambda kv: kv[0]):
            if p.ndim >= 2:
                fan_in = 1
                for d in p.shape[1:]:
                    fan_in *= d
                std = fan_in ** -0.5
                if name.endswith(_RESIDUAL_EXITS):
                    std *= 0.1
                p.copy_(torch.normal(0.0, std, p.shape, generator=gen, dtype=torch.float32).to(p.dtype))
            elif name.endswith("bias"):
                p.zero_()
    return module


def rotate_half(x):
    x1, x2 = x.chunk(2, dim=-1)
    return torch.cat((-x2, x1), dim=-1)


def rope_angles(positions, head_dim, dtype, theta=10000.0):
    inv_freq = theta ** (-torch.arange(0, head_dim, 2, dtype=dtype) / head_dim)
    ang = positions.to(dtype)[:, None] * inv_freq[None, :]
    ang = torch.cat((ang, ang), dim=-1)
    return ang.cos(), ang.sin()


def apply_rope(x, positions, theta=10000.0):
    """Rotate q/k of shape [B, H, T, hd] by their absolute positions."""
    cos, sin = rope_angles(positions, x.shape[-1], x.dtype, theta)
    return x * cos + rotate_half(x) * sin


class KVCache:
    """Per-layer key/value cache for streaming attention.

    Keys are stored already rotated, so append order is all that matters.
    """

    def __init__(self):
        self.k = None
        self.v = None

    def __len__(self):
        return 0 if self.k is None else self.k.shape[2]

    def append(self, k, v):
        if self.k is None:
            self.k, self.v = k, v
        else:
            self.k = torch.cat((self.k, k), dim=2)
            self.v = torch.cat((self.v, v), dim=2)
        return self.k, self.v

    def evict_to(self, keep_last: int):
        if self.k is not None and self.k.shape[2] > keep_last:
            self.k = self.k[:, :, self.k.shape[2] - keep_last:]
            self.v = self.v[:, :, self.v.shape[2] - keep_last:]


class SelfAttention(nn.Module):
    """Multi-head self-attention with rotary positions and a pluggable mask.

    Offline: pass ``mask`` of shape [Tq, Tk] (or [B, Tq, Tk]).
    Streaming: pass a :class:`KVCache` plus ``pos_offset``; new queries then
    attend to every cached position and causally within the new block.
    """

    def __init__(self, dim, heads, bias=False, rope=True):
        super().__init__()
        if dim % heads != 0:
            raise ValueError(f"dim {dim} not divisible by heads {heads}")
        self.dim = dim
        self.heads = heads
        self.head_dim = dim // heads
        self.rope = rope
        self.q_proj = nn.Linear(dim, dim, bias=bias)
        self.k_proj = nn.Linear(dim, dim, bias=bias)
        self.v_proj = nn.Linear(dim, dim, bias=bias)
        self.o_proj = nn.Linear(dim, dim, bias=bias)

    def _split(self, x):
        b, t, _ = x.shape
        return x.view(b, t, self.heads, self.head_dim).transpose(1, 2)

    def forward(self, x, mask=None, cache: KVCache = None, pos_offset: int = 0):
        b, t, _ = x.shape
        q = self._split(self.q_proj(x))
        k = self._split(self.k_proj(x))
        v = self._split(self.v_proj(x))

        if self.rope:
            pos = torch.arange(pos_offset, pos_offset + t)
            q = apply_rope(q, pos)
            k = apply_rope(k, pos)

        if cache is not None:
            n_cached = len(cache)
            k, v = cache.append(k, v)
            if mask is None:
                new_block = torch.ones(t, t, dtype=torch.bool).tril_()
                mask = torch.cat(
                    (torch.ones(t, n_cached, dtype=torch.bool), new_block), dim=1
                )

        scores = q @ k.transpose(-2, -1) * self.head_dim ** -0.5
        if mask is not None:
            if mask.ndim == 2:
                mask = mask[None, None]
            elif mask.ndim == 3:
                mask = mask[:, None]
            scores = scores.masked_fill(~mask, float("-inf"))
        attn = scores.softmax(dim=-1)
        out = attn @ v
        out = out.transpose(1, 2).reshape(b, t, self.dim)
        return self.o_proj(out)


class CrossAttention(nn.Module):
    """Multi-head attention where queries and keys come from different streams."""

    def __init__(self, dim, heads, kv_dim=None, bias=False):
        super().__init__()
        if dim % heads != 0:
            raise ValueError(f"dim {dim} not divisible by heads {heads}")
        kv_dim = kv_dim or dim
        self.dim = dim
        self.heads = heads
        self.head_dim = dim // heads
        self.q_proj = nn.Linear(dim, dim, bias=bias)
        self.k_proj = nn.Linear(kv_dim, dim, bias=bias)
        self.v_proj = nn.Linear(kv_dim, dim, bias=bias)
        self.o_proj = nn.Linear(dim, dim, bias=bias)

    def forward(self, x, memory):
        b, t, _ = x.shape
        split = lambda y: y.view(b, y.shape[1], self.heads, self.head_dim).transpose(1, 2)
        q = split(self.q_proj(x))
        k = split(self.k_proj(memory))
        v = split(self.v_proj(memory))
        attn = (q @ k.transpose(-2, -1) * self.head_dim ** -0.5).softmax(dim=-1)
        out = (attn @ v).transpose(1, 2).reshape(b, t, self.dim)
        return self.o_proj(out)


class FeedForward(nn.Module):
    """Position-wise FFN; ``kind`` selects plain GELU or a gated SiLU net."""

    def __init__(self, dim, hidden, kind="gelu", bias=True):
        super().__init__()
        self.kind = kind
        if kind == "gelu":
            self.fc1 = nn.Linear(dim, hidden, bias=bias)
            self.fc2 = nn.Linear(hidden, dim, bias=bias)
        elif kind == "swiglu":
            self.w1 = nn.Linear(dim, hidden, bias=False)
            self.w3 = nn.Linear(dim, hidden, bias=False)
            self.w2 = nn.Linear(hidden, dim, bias=False)
        else:
            raise ValueError(f"unknown FFN kind {kind!r}")

    def forward(self, x):
        if self.kind == "gelu":
            return self.fc2(F.gelu(self.fc1(x)))
        return self.w2(F.silu(self.w1(x)) * self.w3(x))


class EncoderLayer(nn.Module):
    """Pre-norm transformer layer: biased attention + GELU FFN + LayerNorm."""

    def __init__(self, dim, heads, ffn):
        super().__init__()
        self.ln1 = nn.LayerNorm(dim)
        self.attn = SelfAttention(dim, heads, bias=True, rope=True)
        self.ln2 = nn.LayerNorm(dim)
        self.ff = FeedForward(dim, ffn, kind="gelu", bias=True)

    def forward(self, x, mask=None, cache=None, pos_offset=0):
        x = x + self.attn(self.ln1(x), mask=mask, cache=cache, pos_offset=pos_offset)
        return x + self.ff(self.ln2(x))


class DecoderLayer(nn.Module):
    """Pre-norm gated-FFN decoder layer (RMSNorm, rotary, no biases),
    optionally with cross-attention to an external memory."""

    def __init__(self, dim, heads, ffn, cross=False, kv_dim=None):
        super().__init__()
        self.norm1 = nn.RMSNorm(dim, eps=1e-6)
        self.attn = SelfAttention(dim, heads, bias=False, rope=True)
        self.cross = None
        if cross:
            self.norm_x = nn.RMSNorm(dim, eps=1e-6)
            self.cross = CrossAttention(dim, heads, kv_dim=kv_dim, bias=False)
        self.norm2 = nn.RMSNorm(dim, eps=1e-6)
        self.ff = FeedForward(dim, ffn, kind="swiglu")

    def forward(self, x, mask=None, cache=None, pos_offset=0, memory=None):
        x = x + self.attn(self.norm1(x), mask=mask, cache=cache, pos_offset=pos_offset)
        if self.cross is not None:
            if memory is None:
                raise ValueError("cross-attention layer needs a memory tensor")
            x = x + self.cross(self.norm_x(x), memory)
        return x + self.ff(self.norm2(x))


class CausalConv1d(nn.Module):
    """1-d convolution that never looks ahead.

    Offline, the input is left-padded with ``kernel - stride`` zeros, so
    output frame i only sees inputs up to sample ``i*stride + stride - 1``.
    Streaming keeps those ``kernel - stride`` samples as carry-over state.
    """

    def __init__(self, in_ch, out_ch, kernel, stride=1, bias=True):
        super().__init__()
        if kernel < stride:
            raise ValueError(f"kernel {kernel} must be >= stride {stride}")
        self.in_ch = in_ch
        self.out_ch = out_ch
        self.kernel = kernel
        self.stride = stride
        self.conv = nn.Conv1d(in_ch, out_ch, kernel, stride=stride, bias=bias)

    @property
    def context(self) -> int:
        return self.kernel - self.stride

    def initial_state(self, batch=1, dtype=torch.float32):
        return torch.zeros(batch, self.in_ch, self.context, dtype=dtype)

    def forward(self, x):
        x = F.pad(x, (self.context, 0))
        return self.conv(x)

    def stream(self, x, state):
        """Process new samples given carried left context; returns (y, state)."""
        if x.shape[-1] % self.stride != 0:
            raise ValueError(
                f"streamed length {x.shape[-1]} not divisible by stride {self.stride}"
            )
        buf = torch.cat((state.to(x.dtype), x), dim=-1)
        y = self.conv(buf)
        new_state = buf[:, :, buf.shape[-1] - self.context:] if self.context else buf[:, :, :0]
        return y, new_state


def timestep_embedding(t, dim, max_period=10000.0):
    """Sinusoidal embedding of flow/diffusion times ``t`` in [0, 1]."""
    if dim % 2 != 0:
        raise ValueError(f"embedding dim must be even, got {dim}")
    t = torch.as_tensor(t)
    if t.ndim == 0:
        t = t[None]
    half = dim // 2
    freqs = torch.exp(-math.log(max_period) * torch.arange(half, dtype=t.dtype) / half)
    ang = t[:, None] * 1000.0 * freqs[None, :]
    return torch.cat((ang.cos(), ang.sin()), dim=-1)
