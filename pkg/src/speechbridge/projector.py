"""Projects speech code vectors (or text embeddings) into the backbone's
input embedding space.

Three interchangeable stacks ending in one final linear: stacked
linear+GELU (mlp), stacked stride-1 causal convs (cnn), and an input MLP
followed by pre-norm decoder layers under the tokenizer's chunk mask
(transformer). Length is always preserved; only the final linear touches
the backbone width, which is what makes final-linear-only transfer work.
"""

from dataclasses import dataclass, replace

import torch
import torch.nn.functional as F
from torch import nn

from .errors import DimensionMismatch
from .fsq import code_vectors
from .nn.layers import CausalConv1d, DecoderLayer, KVCache, seeded_init_
from .nn.masks import chunk_attention_mask

TOKENS_PER_CHUNK = 8        # 640 ms at 12.5 Hz


@dataclass(frozen=True)
class ProjectorConfig:
    input_kind: str = "speech_codes"        # or "text_embeddings"
    arch: str = "transformer"               # mlp | cnn | transformer
    depth: int = 2
    in_dim: int = 5
    hidden: int = 64
    heads: int = 4
    ffn: int = 128
    out_dim: int = 64
    cnn_kernel: int = 3
    chunk_len: int = TOKENS_PER_CHUNK
    lookback: int = 30

    def __post_init__(self):
        if self.input_kind not in ("speech_codes", "text_embeddings"):
            raise ValueError(f"unknown input_kind {self.input_kind!r}")
        if self.arch not in ("mlp", "cnn", "transformer"):
            raise ValueError(f"unknown projector arch {self.arch!r}")


class Projector(nn.Module):
    def __init__(self, cfg: ProjectorConfig = ProjectorConfig(), seed=0):
        super().__init__()
        self.cfg = cfg
        h = cfg.hidden
        if cfg.arch == "mlp":
            dims = [cfg.in_dim] + [h] * cfg.depth
            self.stack = nn.ModuleList(
                [nn.Linear(dims[i], dims[i + 1]) for i in range(cfg.depth)])
        elif cfg.arch == "cnn":
            chans = [cfg.in_dim] + [h] * cfg.depth
            self.stack = nn.ModuleList([
                CausalConv1d(chans[i], chans[i + 1], cfg.cnn_kernel, 1)
                for i in range(cfg.depth)])
        else:
            self.mlp_in = nn.ModuleList(
                [nn.Linear(cfg.in_dim, h), nn.Linear(h, h)])
            self.stack = nn.ModuleList(
                [DecoderLayer(h, cfg.heads, cfg.ffn) for _ in range(cfg.depth)])
        self.final = nn.Linear(h, cfg.out_dim, bias=False)
        seeded_init_(self, seed)

    def check_attach(self, backbone):
        if self.cfg.out_dim != backbone.cfg.embed_dim:
            raise DimensionMismatch(
                f"projector out_dim {self.cfg.out_dim} != backbone embed dim "
                f"{backbone.cfg.embed_dim}")

    def receptive_field(self) -> int:
        """Causal receptive field in tokens (cnn variant)."""
        if self.cfg.arch != "cnn":
            raise ValueError("receptive field is only defined for the cnn variant")
        return sum(c.kernel - 1 for c in self.stack) + 1

    def new_caches(self):
        if self.cfg.arch != "transformer":
            return None
        return [KVCache() for _ in self.stack]

    def forward(self, x, caches=None, pos_offset=0):
        """x: [T, in_dim] or [B, T, in_dim] -> same length, out_dim wide."""
        squeeze = x.ndim == 2
        if squeeze:
            x = x[None]
        if x.shape[-1] != self.cfg.in_dim:
            raise DimensionMismatch(
                f"projector expects width {self.cfg.in_dim}, got {x.shape[-1]}")
        if self.cfg.arch == "mlp":
            for lin in self.stack:
                x = F.gelu(lin(x))
        elif self.cfg.arch == "cnn":
            x = x.transpose(1, 2)
            for conv in self.stack:
                x = F.gelu(conv(x))
            x = x.transpose(1, 2)
        else:
            for lin in self.mlp_in:
                x = F.gelu(lin(x))
            if caches is None:
                mask = chunk_attention_mask(
                    x.shape[1], self.cfg.chunk_len, self.cfg.lookback)
                for layer in self.stack:
                    x = layer(x, mask=mask)
            else:
                for layer, cache in zip(self.stack, caches):
                    x = layer(x, cache=cache, pos_offset=pos_offset)
                keep = self.cfg.lookback * self.cfg.chunk_len
                for cache in caches:
                    cache.evict_to(keep)
        x = self.final(x)
        return x[0] if squeeze else x

    def project_codes(self, digits, **kw):
        """FSQ digit rows [T, 5] -> backbone-space embeddings [T, out_dim]."""
        if self.cfg.input_kind != "speech_codes":
            raise ValueError("projector was configured for text embeddings")
        return self.forward(code_vectors(digits), **kw)


def build_variant(arch: str, depth: int, **overrides) -> Projector:
    if not 2 <= depth <= 6:
        raise ValueError(f"depth {depth} outside the tested range [2, 6]")
    seed = overrides.pop("seed", 0)
    cfg = replace(ProjectorConfig(), arch=arch, depth=depth, **overrides)
    return Projector(cfg, seed=seed)


def adapt_final_linear(projector: Projector, new_out_dim: int, seed=0) -> Projector:
    """Reshape the final linear to a new backbone width and freeze the rest.

    Every non-final parameter keeps its exact bits and stops receiving
    gradients; only the reinitialized final linear stays trainable.
    """
    if new_out_dim <= 0:
        raise ValueError("new_out_dim must be positive")
    projector.requires_grad_(False)
    final = nn.Linear(projector.cfg.hidden, new_out_dim, bias=False)
    seeded_init_(final, seed)
    projector.final = final
    projector.cfg = replace(projector.cfg, out_dim=new_out_dim)
    return projector
