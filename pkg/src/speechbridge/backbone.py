"""Frozen, seeded, decoder-only text backbone.

Byte-level vocabulary (0..255 plus BOS/EOS), deterministic construction
from (seed, config), and parameters frozen at construction. Every other
module talks to it only through embed_text / forward / generate, so the
embedding width is the single coupling point.

Construction can optionally fit the weights on a synthetic echo task
(copy the pre-BOS bytes after the BOS) before freezing. That gives the
random backbone content-routing circuits, so conditioning a frozen copy
through trained input embeddings is non-degenerate. The fit is part of
construction: it is deterministic in (config, seed) and the parameters
are immutable afterwards, exactly as in the unfitted case.
"""

from dataclasses import dataclass, asdict

import torch
import torch.nn.functional as F
from torch import nn

from .errors import DimensionMismatch
from .nn.checkpoint import parameter_checksum
from .nn.layers import DecoderLayer, seeded_init_
from .nn.masks import causal_mask
from .nn.optim import AdamW
from .nn.schedule import LrSchedule, cosine_warmup_lr

BYTE_VOCAB = 256
BOS_ID = 256
EOS_ID = 257
VOCAB_SIZE = 258


@dataclass(frozen=True)
class BackboneConfig:
    vocab_size: int = VOCAB_SIZE
    embed_dim: int = 64
    layers: int = 2
    heads: int = 4
    seed: int = 1234
    fit_steps: int = 0          # 0 = leave the seeded init untouched
    fit_lr: float = 3e-3

    @property
    def ffn(self) -> int:
        return 4 * self.embed_dim


def encode_text(s: str):
    """Text -> byte token ids (no specials)."""
    return torch.tensor(list(s.encode("utf-8")), dtype=torch.long)


def decode_text(ids) -> str:
    return bytes(i for i in ids if 0 <= i < BYTE_VOCAB).decode("utf-8", errors="replace")


class Backbone(nn.Module):
    def __init__(self, cfg: BackboneConfig = BackboneConfig()):
        super().__init__()
        self.cfg = cfg
        self.embed = nn.Embedding(cfg.vocab_size, cfg.embed_dim)
        self.layers = nn.ModuleList([
            DecoderLayer(cfg.embed_dim, cfg.heads, cfg.ffn) for _ in range(cfg.layers)
        ])
        self.norm_f = nn.RMSNorm(cfg.embed_dim, eps=1e-6)
        seeded_init_(self, cfg.seed)
        if cfg.fit_steps:
            self._fit_echo()
        self.requires_grad_(False)
        self.eval()
        self._checksum = parameter_checksum(self)

    def _fit_echo(self, batch=8, min_len=3, max_len=10):
        """Next-byte training on [bytes, BOS, bytes, EOS] copy sequences.

        Bytes are uniform over 0..255 so the copying must be content-based
        rather than memorized.
        """
        cfg = self.cfg
        gen = torch.Generator().manual_seed(cfg.seed + 1)
        opt = AdamW(list(self.named_parameters()))
        sched = LrSchedule(cfg.fit_lr, 0.05, cfg.fit_steps)
        for step in range(cfg.fit_steps):
            losses = []
            for _ in range(batch):
                L = int(torch.randint(min_len, max_len + 1, (1,), generator=gen))
                ids = torch.randint(0, BYTE_VOCAB, (L,), generator=gen)
                seq = torch.cat((ids, torch.tensor([BOS_ID]), ids))
                _, logits = self.forward(self.embed(seq))
                tgt = torch.cat((ids, torch.tensor([EOS_ID])))
                losses.append(F.cross_entropy(logits[L:2 * L + 1], tgt))
            loss = torch.stack(losses).mean()
            opt.zero_grad()
            loss.backward()
            opt.step(cosine_warmup_lr(step, sched))

    def checksum(self) -> str:
        return parameter_checksum(self)

    def assert_frozen(self):
        if self.checksum() != self._checksum:
            raise RuntimeError("backbone parameters changed since construction")

    def to_manifest(self) -> dict:
        return asdict(self.cfg)

    @classmethod
    def from_manifest(cls, d: dict) -> "Backbone":
        return cls(BackboneConfig(**d))

    def embed_text(self, ids):
        ids = torch.as_tensor(ids, dtype=torch.long)
        if ids.numel() and (ids.min() < 0 or ids.max() >= self.cfg.vocab_size):
            raise ValueError(f"token id outside vocab of {self.cfg.vocab_size}")
        return self.embed(ids)

    def forward(self, embeddings):
        """embeddings [T, D] or [B, T, D] -> (hidden, logits), final layer.

        Logits tie the input embedding matrix as the output head.
        """
        squeeze = embeddings.ndim == 2
        if squeeze:
            embeddings = embeddings[None]
        if embeddings.shape[-1] != self.cfg.embed_dim:
            raise DimensionMismatch(
                f"backbone expects width {self.cfg.embed_dim}, got {embeddings.shape[-1]}")
        x = embeddings
        mask = causal_mask(x.shape[1])
        for layer in self.layers:
            x = layer(x, mask=mask)
        hidden = self.norm_f(x)
        logits = hidden @ self.embed.weight.t()
        if squeeze:
            return hidden[0], logits[0]
        return hidden, logits

    @torch.no_grad()
    def generate(self, prefix_embeddings, max_new: int, eos_id: int = EOS_ID):
        """Greedy decode from an embedding prefix.

        Returns (ids, hidden states at each generated token's own position).
        EOS terminates and is excluded from both outputs.
        """
        if max_new < 1:
            raise ValueError("max_new must be >= 1")
        if prefix_embeddings.ndim != 2:
            raise DimensionMismatch("generate expects an unbatched [T, D] prefix")
        seq = prefix_embeddings
        ids = []
        for _ in range(max_new):
            _, logits = self.forward(seq)
            nxt = int(logits[-1].argmax())
            if nxt == eos_id:
                break
            ids.append(nxt)
            seq = torch.cat((seq, self.embed.weight[nxt][None]), dim=0)
        n = len(ids)
        if n == 0:
            return ids, torch.zeros(0, self.cfg.embed_dim)
        hidden, _ = self.forward(seq)
        return ids, hidden[len(prefix_embeddings):]
