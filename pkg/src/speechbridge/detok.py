"""Flow-matching mel de-tokenizer conditioned on upsampled speech tokens.

Diffusion-transformer blocks where the mel stream provides queries and
x6-upsampled token embeddings provide cross-attention keys/values. The
network regresses the velocity of a linear noise-to-data path; synthesis
integrates it with Euler steps, infilling new frames while context
frames follow their known path.
"""

import math
from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import nn

from .errors import DimensionMismatch
from .nn.layers import (CrossAttention, FeedForward, SelfAttention,
                        seeded_init_, timestep_embedding)

MEL_RATE_HZ = 93.75
TOKEN_RATE_HZ = 12.5
FRAMES_PER_TOKEN = MEL_RATE_HZ / TOKEN_RATE_HZ     # 7.5


@dataclass(frozen=True)
class DetokConfig:
    layers: int = 2
    heads: int = 4
    embed: int = 64
    ffn: int = 128
    upsample_factor: int = 6
    mel_bins: int = 80
    mel_rate: float = MEL_RATE_HZ
    ode_steps: int = 16
    chunk_tokens: int = 25
    context_s: float = 0.5
    token_vocab: int = 32768

    def __post_init__(self):
        if TOKEN_RATE_HZ * self.upsample_factor != 75.0:
            raise ValueError("upsample factor must map 12.5 Hz tokens to 75 Hz")

    @property
    def context_frames(self) -> int:
        return math.ceil(self.context_s * self.mel_rate)       # 47

    def frames_for_tokens(self, n: int) -> int:
        return math.ceil(n * FRAMES_PER_TOKEN)


def sincos_positions(n, dim, dtype=torch.float32):
    half = dim // 2
    freqs = torch.exp(-math.log(10000.0) * torch.arange(half, dtype=dtype) / half)
    ang = torch.arange(n, dtype=dtype)[:, None] * freqs[None, :]
    return torch.cat((ang.cos(), ang.sin()), dim=-1)


def modulate(x, shift, scale):
    return x * (1 + scale[:, None, :]) + shift[:, None, :]


class CaditBlock(nn.Module):
    """Self-attn and FFN under adaptive layer norm from the flow time;
    plain pre-norm cross-attention to the token stream in between."""

    def __init__(self, dim, heads, ffn):
        super().__init__()
        self.norm1 = nn.LayerNorm(dim, elementwise_affine=False)
        self.attn = SelfAttention(dim, heads, bias=True, rope=False)
        self.norm_x = nn.LayerNorm(dim)
        self.cross = CrossAttention(dim, heads, bias=True)
        self.norm2 = nn.LayerNorm(dim, elementwise_affine=False)
        self.ff = FeedForward(dim, ffn, kind="gelu", bias=True)
        self.ada = nn.Linear(dim, 6 * dim)

    def forward(self, x, cond, t_emb):
        sh1, sc1, g1, sh2, sc2, g2 = self.ada(F.silu(t_emb)).chunk(6, dim=-1)
        x = x + g1[:, None, :] * self.attn(modulate(self.norm1(x), sh1, sc1))
        x = x + self.cross(self.norm_x(x), cond)
        x = x + g2[:, None, :] * self.ff(modulate(self.norm2(x), sh2, sc2))
        return x


class Detokenizer(nn.Module):
    def __init__(self, cfg: DetokConfig = DetokConfig(), seed=0):
        super().__init__()
        self.cfg = cfg
        self.tok_embed = nn.Embedding(cfg.token_vocab, cfg.embed)
        self.up_proj = nn.Linear(cfg.embed, cfg.embed)
        self.in_proj = nn.Linear(2 * cfg.mel_bins, cfg.embed)
        self.blocks = nn.ModuleList([
            CaditBlock(cfg.embed, cfg.heads, cfg.ffn) for _ in range(cfg.layers)
        ])
        self.norm_f = nn.LayerNorm(cfg.embed)
        self.out_proj = nn.Linear(cfg.embed, cfg.mel_bins)
        seeded_init_(self, seed)

    def upsample_tokens(self, tokens):
        """Token indices [N] or [B, N] -> conditioning rows at 75 Hz.

        Each embedding is repeated upsample_factor times then passed
        through one linear; rows carry chunk-local positions.
        """
        tokens = torch.as_tensor(tokens, dtype=torch.long)
        squeeze = tokens.ndim == 1
        if squeeze:
            tokens = tokens[None]
        if tokens.shape[-1] == 0:
            raise ValueError("empty token sequence")
        e = self.tok_embed(tokens)
        e = torch.repeat_interleave(e, self.cfg.upsample_factor, dim=1)
        e = self.up_proj(e)
        e = e + sincos_positions(e.shape[1], self.cfg.embed, e.dtype)
        return e[0] if squeeze else e

    def forward(self, x_in, t, cond):
        """(noisy mel (+) masked mel, flow time, conditioning) -> velocity.

        x_in: [B, F, 2*mel_bins] channel concat; t: scalar or [B];
        cond: [B, C, embed] from upsample_tokens. Returns [B, F, mel_bins].
        """
        if x_in.ndim == 2:
            x_in = x_in[None]
        if cond.ndim == 2:
            cond = cond[None]
        if x_in.shape[-1] != 2 * self.cfg.mel_bins:
            raise DimensionMismatch(
                f"expected {2 * self.cfg.mel_bins} input channels, got {x_in.shape[-1]}")
        t = torch.as_tensor(t, dtype=x_in.dtype)
        if t.ndim == 0:
            t = t.repeat(x_in.shape[0])
        t_emb = timestep_embedding(t, self.cfg.embed).to(x_in.dtype)
        x = self.in_proj(x_in)
        x = x + sincos_positions(x.shape[1], self.cfg.embed, x.dtype)
        for block in self.blocks:
            x = block(x, cond, t_emb)
        return self.out_proj(self.norm_f(x))


def flow_matching_loss(model, target_mel, mask, tokens, t, x0):
    """MSE between the predicted velocity and target - x0, masked frames only.

    target_mel [B, F, bins]; mask [B, F] bool (True = synthesize);
    t [B] in [0,1]; x0 noise like target_mel.
    """
    if not mask.any():
        raise ValueError("infilling mask is empty")
    x1 = target_mel
    xt = (1 - t[:, None, None]) * x0 + t[:, None, None] * x1
    context = x1 * (~mask)[:, :, None]
    cond = model.upsample_tokens(tokens)
    v = model(torch.cat((xt, context), dim=-1), t, cond)
    err = (v - (x1 - x0)) ** 2
    return err[mask].mean()


def euler_sample(velocity_fn, x0, steps: int):
    """Integrate dx/dt = v(x, t) from t=0 to 1 with fixed-step Euler."""
    if steps < 1:
        raise ValueError("steps must be >= 1")
    x = x0
    for i in range(steps):
        t = i / steps
        x = x + velocity_fn(x, t) / steps
    return x


@torch.no_grad()
def synthesize_chunk(model, tokens, context_mel=None, ode_steps=None, seed=0,
                     n_frames=None):
    """Tokens (<= chunk_tokens) + optional context frames -> new mel frames.

    Context frames are pinned to their known path during integration;
    only the new frames are returned: ceil(n_tokens * 7.5) of them unless
    the caller passes an exact n_frames (chunked utterances hand over the
    half-frame that 7.5 frames/token leaves at odd-token boundaries).
    """
    cfg = model.cfg
    tokens = torch.as_tensor(tokens, dtype=torch.long).reshape(-1)
    if tokens.shape[0] == 0 or tokens.shape[0] > cfg.chunk_tokens:
        raise ValueError(f"chunk must hold 1..{cfg.chunk_tokens} tokens")
    new = cfg.frames_for_tokens(tokens.shape[0]) if n_frames is None else n_frames
    if context_mel is None:
        context_mel = torch.zeros(0, cfg.mel_bins)
    context_mel = torch.as_tensor(context_mel, dtype=torch.float32)
    nctx = context_mel.shape[0]
    total = nctx + new
    gen = torch.Generator().manual_seed(seed)
    x0 = torch.randn(1, total, cfg.mel_bins, generator=gen)
    x1_ctx = context_mel[None]
    mask = torch.zeros(1, total, dtype=torch.bool)
    mask[:, nctx:] = True
    context = torch.zeros(1, total, cfg.mel_bins)
    context[:, :nctx] = x1_ctx
    cond = model.upsample_tokens(tokens)[None]
    steps = ode_steps or cfg.ode_steps

    x = x0.clone()
    for i in range(steps):
        t = i / steps
        # context frames ride the known interpolant toward their target
        x[:, :nctx] = (1 - t) * x0[:, :nctx] + t * x1_ctx
        v = model(torch.cat((x, context), dim=-1), t, cond)
        x = x + v / steps
    x[:, :nctx] = x1_ctx
    return x[0, nctx:]


@torch.no_grad()
def synthesize_utterance(model, tokens, ode_steps=None, seed=0):
    """Chunked synthesis: each chunk conditions on the previous chunk's
    final context window. Returns [F, mel_bins] log-mel frames."""
    cfg = model.cfg
    tokens = torch.as_tensor(tokens, dtype=torch.long).reshape(-1)
    out = []
    done = 0
    for i, start in enumerate(range(0, tokens.shape[0], cfg.chunk_tokens)):
        piece = tokens[start:start + cfg.chunk_tokens]
        end_tok = start + piece.shape[0]
        n = cfg.frames_for_tokens(end_tok) - done
        ctx = None
        if out:
            prev = torch.cat(out)
            ctx = prev[-cfg.context_frames:]
        out.append(synthesize_chunk(model, piece, ctx, ode_steps, seed=seed + i,
                                    n_frames=n))
        done += n
    return torch.cat(out)
