"""Encoder-decoder speech token generator with multi-token-prediction.

Backbone hidden states are linearly lifted and encoded into a memory;
a causal decoder cross-attends to it and emits one speech token per
iteration, after which a chain of MTP modules (one decoder layer plus
one linear head each) extends the step by up to `active_mtp` extra
tokens. Predicted tokens are always accepted.
"""

from dataclasses import dataclass, field

import torch
import torch.nn.functional as F
from torch import nn

from .errors import DimensionMismatch
from .nn.layers import DecoderLayer, seeded_init_
from .nn.masks import causal_mask

SPEECH_VOCAB = 32768
BOS = 32768
EOS = 32769


@dataclass(frozen=True)
class GeneratorConfig:
    in_dim: int = 64            # backbone embed width
    enc_layers: int = 2
    dec_layers: int = 2
    hidden: int = 64
    heads: int = 4
    ffn: int = 128
    mtp_modules: int = 5
    active_mtp: int = 2
    speech_vocab: int = SPEECH_VOCAB

    def __post_init__(self):
        if self.active_mtp > self.mtp_modules:
            raise ValueError("active_mtp cannot exceed mtp_modules")

    @property
    def full_vocab(self) -> int:
        return self.speech_vocab + 2    # BOS, EOS


@dataclass
class GenerationTrace:
    tokens: list = field(default_factory=list)
    steps: list = field(default_factory=list)   # (decoder token, [mtp tokens])
    stop_reason: str = "max_len"

    def decoder_iterations(self) -> int:
        return len(self.steps)


class MtpModule(nn.Module):
    """One decoder layer plus one linear head; runs position-locally."""

    def __init__(self, hidden, heads, ffn, vocab):
        super().__init__()
        self.layer = DecoderLayer(hidden, heads, ffn)
        self.head = nn.Linear(hidden, vocab, bias=False)

    def forward(self, h, tok_embed):
        """h, tok_embed: [N, hidden] -> (next hidden [N, hidden], logits)."""
        x = (h + tok_embed)[:, None, :]
        out = self.layer(x)[:, 0]
        return out, self.head(out)


class TokenGenerator(nn.Module):
    def __init__(self, cfg: GeneratorConfig = GeneratorConfig(), seed=0):
        super().__init__()
        self.cfg = cfg
        v = cfg.full_vocab
        self.in_proj = nn.Linear(cfg.in_dim, cfg.hidden)
        self.encoder = nn.ModuleList([
            DecoderLayer(cfg.hidden, cfg.heads, cfg.ffn)
            for _ in range(cfg.enc_layers)])
        self.tok_embed = nn.Embedding(v, cfg.hidden)
        self.decoder = nn.ModuleList([
            DecoderLayer(cfg.hidden, cfg.heads, cfg.ffn, cross=True)
            for _ in range(cfg.dec_layers)])
        self.norm_f = nn.RMSNorm(cfg.hidden, eps=1e-6)
        self.head = nn.Linear(cfg.hidden, v, bias=False)
        self.mtp = nn.ModuleList([
            MtpModule(cfg.hidden, cfg.heads, cfg.ffn, v)
            for _ in range(cfg.mtp_modules)])
        seeded_init_(self, seed)

    # conditioning ---------------------------------------------------------

    def encode_hidden(self, h):
        """Backbone hidden states [T, in_dim] or [B, T, in_dim] -> memory."""
        squeeze = h.ndim == 2
        if squeeze:
            h = h[None]
        if h.shape[-1] != self.cfg.in_dim:
            raise DimensionMismatch(
                f"generator expects width {self.cfg.in_dim}, got {h.shape[-1]}")
        x = self.in_proj(h)
        for layer in self.encoder:
            x = layer(x)
        return x[0] if squeeze else x

    # decoding -------------------------------------------------------------

    def decode_hidden(self, memory, prefix):
        """Teacher-forced decoder pass; returns all pre-norm hiddens [B, S, hidden]."""
        if memory.ndim == 2:
            memory = memory[None]
        if prefix.ndim == 1:
            prefix = prefix[None]
        if int(prefix[0, 0]) != BOS:
            raise ValueError("decoder prefix must begin with BOS")
        x = self.tok_embed(prefix)
        mask = causal_mask(x.shape[1])
        for layer in self.decoder:
            x = layer(x, mask=mask, memory=memory)
        return x

    def decode_step(self, memory, prefix):
        """-> (next-token logits [full_vocab], last pre-norm hidden [hidden])."""
        h = self.decode_hidden(memory, prefix)
        last = h[:, -1]
        logits = self.head(self.norm_f(last))
        if logits.shape[0] == 1:
            return logits[0], last[0]
        return logits, last

    def mtp_predict(self, last_hidden, k: int, prev_token=None):
        """Greedy chain of k MTP tokens from the decoder's last hidden.

        prev_token defaults to the decoder head's own greedy pick, so the
        chain is a pure function of last_hidden.
        """
        if k > self.cfg.mtp_modules:
            raise ValueError(f"k={k} exceeds {self.cfg.mtp_modules} MTP modules")
        if k < 0:
            raise ValueError("k must be >= 0")
        squeeze = last_hidden.ndim == 1
        h = last_hidden[None] if squeeze else last_hidden
        if prev_token is None:
            prev = self.head(self.norm_f(h)).argmax(-1)
        else:
            prev = torch.as_tensor(prev_token).reshape(h.shape[0])
        out = []
        for module in self.mtp[:k]:
            h, logits = module(h, self.tok_embed(prev))
            prev = logits.argmax(-1)
            out.append(prev)
        toks = torch.stack(out, -1) if out else torch.zeros(h.shape[0], 0, dtype=torch.long)
        return toks[0] if squeeze else toks

    @torch.no_grad()
    def generate_speech_tokens(self, h, max_len: int, active_mtp=None) -> GenerationTrace:
        """Greedy loop: decoder emits 1 token, MTP extends by <= active_mtp.

        Stops when a special token appears (truncating there) or when
        max_len tokens have been emitted.
        """
        if max_len < 1:
            raise ValueError("max_len must be >= 1")
        k = self.cfg.active_mtp if active_mtp is None else active_mtp
        if k > self.cfg.mtp_modules:
            raise ValueError(f"active_mtp={k} exceeds {self.cfg.mtp_modules} modules")
        memory = self.encode_hidden(h)
        prefix = torch.tensor([BOS], dtype=torch.long)
        trace = GenerationTrace()
        while len(trace.tokens) < max_len:
            logits, last = self.decode_step(memory, prefix)
            dec_tok = int(logits.argmax())
            span = self.mtp_predict(last, k, prev_token=dec_tok).tolist() if k else []
            trace.steps.append((dec_tok, list(span)))
            emitted = [dec_tok] + list(span)
            stop = None
            for i, t in enumerate(emitted):
                if t >= SPEECH_VOCAB:
                    stop = i
                    break
            if stop is not None:
                trace.tokens.extend(emitted[:stop])
                trace.stop_reason = "eos"
                break
            trace.tokens.extend(emitted)
            prefix = torch.cat((prefix, torch.tensor(emitted, dtype=torch.long)))
        if len(trace.tokens) > max_len:
            del trace.tokens[max_len:]
        if trace.stop_reason != "eos":
            trace.stop_reason = "max_len"
        return trace

    # training -------------------------------------------------------------

    def sequence_loss(self, memory, tokens):
        """Teacher-forced loss over one utterance's token sequence.

        Decoder cross-entropy over [BOS, t0..tN] -> [t0..tN, EOS], plus
        the mean over MTP modules of their shifted cross-entropies
        (module i predicts offset +1+i from teacher-forced inputs).
        """
        toks = torch.as_tensor(tokens, dtype=torch.long)
        seq = torch.cat((torch.tensor([BOS]), toks, torch.tensor([EOS])))
        inp, tgt = seq[:-1], seq[1:]
        hidden = self.decode_hidden(memory, inp)[0]          # [S, hidden]
        logits = self.head(self.norm_f(hidden))
        loss = F.cross_entropy(logits, tgt)
        mtp_losses = []
        h = hidden
        prev = tgt                                           # token at offset +1+ (i-1)
        for i, module in enumerate(self.mtp):
            h, logits_i = module(h, self.tok_embed(prev))
            # module i predicts seq position p + 2 + i from input position p
            shift = 2 + i
            n = seq.shape[0] - shift
            if n <= 0:
                break
            mtp_losses.append(F.cross_entropy(logits_i[:n], seq[shift:]))
            prev = seq[shift:shift + h.shape[0]]
            if prev.shape[0] < h.shape[0]:
                h = h[:prev.shape[0]]
        if mtp_losses:
            loss = loss + torch.stack(mtp_losses).mean()
        return loss
