"""Streaming discrete speech tokenizer.

16 kHz waveform -> 7 causal convs (cumulative stride 320, 50 Hz frames)
-> chunk-causal transformer encoder -> two stride-2 causal convs
(12.5 Hz) -> linear to 5 latent dims -> FSQ digits -> packed token index.
A stride-1 convolutional phoneme head over the dequantized code vectors
provides the CTC training signal and is dropped for inference.

Chunked streaming and whole-utterance masked inference produce identical
tokens: convolutions carry exact left context, attention uses absolute
rotary positions with a KV window of `lookback_chunks` chunks, and the
chunk-position embedding depends only on position modulo the chunk
length.
"""

import math
from dataclasses import dataclass, field

import torch
import torch.nn.functional as F
from torch import nn

from .errors import DimensionMismatch
from .fsq import FsqCodec, code_to_index
from .nn.layers import CausalConv1d, EncoderLayer, KVCache, seeded_init_
from .nn.masks import chunk_attention_mask

TOKEN_RATE_HZ = 12.5
FRAME_RATE_HZ = 50.0


@dataclass(frozen=True)
class TokenizerConfig:
    sample_rate: int = 16000
    feat_channels: int = 32
    feat_kernels: tuple = (10, 3, 3, 3, 3, 2, 2)
    feat_strides: tuple = (5, 2, 2, 2, 2, 2, 2)
    dim: int = 64
    heads: int = 4
    layers: int = 2
    ffn: int = 128
    ds_kernel: int = 4
    fsq_levels: tuple = (8, 8, 8, 8, 8)
    chunk_ms: int = 640
    lookback_chunks: int = 30
    phoneme_alphabet: int = 8   # symbols, excluding the CTC blank
    head_channels: int = 32
    head_kernel: int = 3

    def __post_init__(self):
        if self.chunk_ms % 80 != 0:
            raise ValueError("chunk_ms must be a multiple of the 80 ms token period")
        if math.prod(self.fsq_levels) != 32768:
            raise ValueError("fsq_levels must multiply to 32768")
        feat_stride = math.prod(self.feat_strides)
        if self.sample_rate != feat_stride * 4 * TOKEN_RATE_HZ:
            raise ValueError("conv strides do not map sample_rate to 12.5 Hz tokens")

    @property
    def samples_per_token(self) -> int:
        return int(self.sample_rate / TOKEN_RATE_HZ)        # 1280

    @property
    def samples_per_chunk(self) -> int:
        return self.chunk_ms * self.sample_rate // 1000     # 10240

    @property
    def tokens_per_chunk(self) -> int:
        return self.chunk_ms // 80                          # 8

    @property
    def frames_per_chunk(self) -> int:
        return self.tokens_per_chunk * 4                    # 32 at 50 Hz


@dataclass
class StreamState:
    """Carried context for one audio stream; advance serially."""
    conv_ctx: list                      # feat conv left contexts, sample domain
    ds_ctx: list                        # downsample conv left contexts, frame domain
    kv_cache: list = field(default_factory=list)
    chunk_index: int = 0


class PhonemeHead(nn.Module):
    """4 stride-1 causal conv layers from code vectors to CTC log-probs."""

    def __init__(self, in_dim, channels, kernel, alphabet):
        super().__init__()
        self.convs = nn.ModuleList([
            CausalConv1d(in_dim, channels, kernel, 1),
            CausalConv1d(channels, channels, kernel, 1),
            CausalConv1d(channels, channels, kernel, 1),
            CausalConv1d(channels, alphabet + 1, kernel, 1),
        ])

    def forward(self, vec):
        """vec: [B, N, code_dim] -> log-prob rows [B, N, alphabet+1]."""
        x = vec.transpose(1, 2)
        for i, conv in enumerate(self.convs):
            x = conv(x)
            if i + 1 < len(self.convs):
                x = F.gelu(x)
        return F.log_softmax(x.transpose(1, 2), dim=-1)


class SpeechTokenizer(nn.Module):
    def __init__(self, cfg: TokenizerConfig = TokenizerConfig(), with_head=True, seed=0):
        super().__init__()
        self.cfg = cfg
        chans = [1] + [cfg.feat_channels] * len(cfg.feat_kernels)
        self.feat = nn.ModuleList([
            CausalConv1d(chans[i], chans[i + 1], k, s)
            for i, (k, s) in enumerate(zip(cfg.feat_kernels, cfg.feat_strides))
        ])
        # per-frame norm keeps content visible against the position table:
        # four GELU convs shrink raw audio ~150x below the embedding scale
        self.feat_norm = nn.LayerNorm(cfg.feat_channels)
        self.feat_proj = nn.Linear(cfg.feat_channels, cfg.dim)
        self.chunk_pos = nn.Parameter(torch.zeros(cfg.frames_per_chunk, cfg.dim))
        self.encoder = nn.ModuleList([
            EncoderLayer(cfg.dim, cfg.heads, cfg.ffn) for _ in range(cfg.layers)
        ])
        self.ln_f = nn.LayerNorm(cfg.dim)
        self.ds1 = CausalConv1d(cfg.dim, cfg.dim, cfg.ds_kernel, 2)
        self.ds2 = CausalConv1d(cfg.dim, cfg.dim, cfg.ds_kernel, 2)
        # pre-quantizer norm: without it the latent scale drifts during
        # training until the bounding tanh saturates and codes collapse
        self.ds_norm = nn.LayerNorm(cfg.dim)
        self.fsq_head = nn.Linear(cfg.dim, len(cfg.fsq_levels))
        self.codec = FsqCodec(cfg.fsq_levels)
        self.phoneme_head = None
        if with_head:
            self.phoneme_head = PhonemeHead(
                len(cfg.fsq_levels), cfg.head_channels, cfg.head_kernel,
                cfg.phoneme_alphabet)
        seeded_init_(self, seed)

    # feature extraction -------------------------------------------------

    def _extract(self, wave):
        """wave [B, T] -> 50 Hz frames [B, T/320, feat_channels]."""
        x = wave[:, None, :]
        for conv in self.feat:
            x = F.gelu(conv(x))
        return x.transpose(1, 2)

    def _extract_stream(self, wave, ctx):
        x = wave[:, None, :]
        new_ctx = []
        for conv, c in zip(self.feat, ctx):
            x, c2 = conv.stream(x, c)
            x = F.gelu(x)
            new_ctx.append(c2)
        return x.transpose(1, 2), new_ctx

    # encoder + downsampling ----------------------------------------------

    def _embed(self, frames, pos_offset):
        x = self.feat_proj(self.feat_norm(frames))
        n = x.shape[1]
        pos = (torch.arange(pos_offset, pos_offset + n)) % self.cfg.frames_per_chunk
        return x + self.chunk_pos[pos]

    def _encode(self, frames, mask=None, caches=None, pos_offset=0):
        x = self._embed(frames, pos_offset)
        for i, layer in enumerate(self.encoder):
            cache = caches[i] if caches is not None else None
            x = layer(x, mask=mask, cache=cache, pos_offset=pos_offset)
        return self.ln_f(x)

    def _downsample(self, enc):
        x = enc.transpose(1, 2)
        x = F.gelu(self.ds1(x))
        x = self.ds2(x)
        return self.ds_norm(x.transpose(1, 2))

    def _downsample_stream(self, enc, ctx):
        x = enc.transpose(1, 2)
        x, c1 = self.ds1.stream(x, ctx[0])
        x = F.gelu(x)
        x, c2 = self.ds2.stream(x, ctx[1])
        return self.ds_norm(x.transpose(1, 2)), [c1, c2]

    # offline path ---------------------------------------------------------

    def latents_offline(self, wave):
        """wave [T] or [B, T] -> pre-quantization latents [B, N, 5]."""
        if wave.ndim == 1:
            wave = wave[None]
        if wave.shape[-1] == 0:
            raise DimensionMismatch("empty waveform")
        spt = self.cfg.samples_per_token
        pad = (-wave.shape[-1]) % spt
        if pad:
            wave = F.pad(wave, (0, pad))
        frames = self._extract(wave)
        mask = chunk_attention_mask(frames.shape[1], self.cfg.frames_per_chunk,
                                    self.cfg.lookback_chunks)
        enc = self._encode(frames, mask=mask)
        return self.fsq_head(self._downsample(enc))

    @torch.no_grad()
    def tokenize_offline(self, wave):
        """Whole-utterance tokenization; returns token indices [N]."""
        z = self.latents_offline(wave)
        _, digits = self.codec(z)
        return code_to_index(digits[0], self.cfg.fsq_levels)

    def code_vectors_offline(self, wave, hard=True):
        """Differentiable path to dequantized code vectors [B, N, 5]."""
        z = self.latents_offline(wave)
        vec, _ = self.codec(z, hard=hard)
        return vec

    def phoneme_logits(self, vec):
        if self.phoneme_head is None:
            raise RuntimeError("tokenizer built without a phoneme head")
        return self.phoneme_head(vec)

    # streaming path --------------------------------------------------------

    def new_state(self, batch=1) -> StreamState:
        return StreamState(
            conv_ctx=[c.initial_state(batch) for c in self.feat],
            ds_ctx=[self.ds1.initial_state(batch), self.ds2.initial_state(batch)],
            kv_cache=[KVCache() for _ in self.encoder],
            chunk_index=0,
        )

    @torch.no_grad()
    def tokenize_chunk(self, state: StreamState, chunk):
        """One chunk of samples -> (state, tokens_per_chunk token indices).

        The state is advanced in place and also returned.
        """
        if chunk.ndim == 1:
            chunk = chunk[None]
        if chunk.shape[-1] != self.cfg.samples_per_chunk:
            raise DimensionMismatch(
                f"chunk must hold {self.cfg.samples_per_chunk} samples "
                f"({self.cfg.chunk_ms} ms at {self.cfg.sample_rate} Hz), "
                f"got {chunk.shape[-1]}")
        frames, state.conv_ctx = self._extract_stream(chunk, state.conv_ctx)
        pos_offset = state.chunk_index * self.cfg.frames_per_chunk
        enc = self._encode(frames, caches=state.kv_cache, pos_offset=pos_offset)
        keep = self.cfg.lookback_chunks * self.cfg.frames_per_chunk
        for cache in state.kv_cache:
            cache.evict_to(keep)
        ds, state.ds_ctx = self._downsample_stream(enc, state.ds_ctx)
        z = self.fsq_head(ds)
        _, digits = self.codec(z)
        state.chunk_index += 1
        return state, code_to_index(digits[0], self.cfg.fsq_levels)

    @torch.no_grad()
    def stream_utterance(self, wave):
        """Feed an utterance chunk by chunk; final short chunk is
        zero-padded and its padding-only tokens dropped. Returns tokens [N]."""
        if wave.ndim == 1:
            wave = wave[None]
        if wave.shape[-1] == 0:
            raise DimensionMismatch("empty waveform")
        spc = self.cfg.samples_per_chunk
        spt = self.cfg.samples_per_token
        state = self.new_state(wave.shape[0])
        out = []
        for start in range(0, wave.shape[-1], spc):
            piece = wave[:, start:start + spc]
            valid = piece.shape[-1]
            if valid < spc:
                piece = F.pad(piece, (0, spc - valid))
            state, toks = self.tokenize_chunk(state, piece)
            out.append(toks[:math.ceil(valid / spt)])
        return torch.cat(out)
