"""Loss functions and training-stage orchestration.

Stages: tok_ctc (tokenizer + phoneme head under CTC), proj_stage1 /
proj_stage2 (speech projector against the frozen backbone), text_proj
then tok_gen (the two-step generator pipeline), and detok (flow
matching). Every stage declares exactly one trainable module; everything
else is checksum-audited before and after.
"""

import math
import warnings
from dataclasses import dataclass, field

import torch
import torch.nn.functional as F

from .backbone import BOS_ID, EOS_ID
from .errors import StageOrderError, TrainingDiverged
from .fsq import code_vectors, index_to_code
from .nn.checkpoint import parameter_checksum
from .nn.layers import seeded_init_
from .nn.optim import AdamW
from .nn.schedule import LrSchedule, cosine_warmup_lr

STAGES = ("tok_ctc", "proj_stage1", "proj_stage2", "text_proj", "tok_gen", "detok")


@dataclass(frozen=True)
class TrainConfig:
    stage: str = "tok_ctc"
    lr: float = 2e-4
    warmup_ratio: float = 0.03
    steps: int = 200
    batch_size: int = 8
    seed: int = 0
    checksum_interval: int = 50

    def __post_init__(self):
        if self.stage not in STAGES:
            raise ValueError(f"unknown stage {self.stage!r}, expected one of {STAGES}")

    @property
    def schedule(self) -> LrSchedule:
        return LrSchedule(self.lr, self.warmup_ratio, max(self.steps, 1))


@dataclass(frozen=True)
class StageDataMix:
    asr_fraction: float = 0.10
    qa_fraction: float = 1.0


# ---------------------------------------------------------------------------
# CTC


def ctc_loss(log_probs, targets, blank=0):
    """Negative log-probability of all valid alignments, forward algorithm.

    log_probs: [T, V+1] log-softmax rows; targets: label ids in [1, V].
    Infeasible targets (longer than any alignment can fit) return +inf
    with a warning instead of raising, so a training loop can skip them.
    """
    T = log_probs.shape[0]
    targets = [int(t) for t in targets]
    L = len(targets)
    repeats = sum(1 for a, b in zip(targets, targets[1:]) if a == b)
    if L + repeats > T:
        warnings.warn(f"CTC target of length {L} (+{repeats} repeats) "
                      f"cannot align to {T} frames")
        return torch.tensor(float("inf"), dtype=log_probs.dtype)
    ext = [blank]
    for t in targets:
        ext.extend((t, blank))
    S = len(ext)
    ext_t = torch.tensor(ext)
    lp = log_probs[:, ext_t]                      # [T, S]
    # large-negative finite sentinel: exact -inf makes logsumexp emit NaN
    # gradients for unreachable states; exp(-1e30 - finite) underflows to
    # zero, so sentinel paths carry exactly zero weight either way
    neg = torch.tensor(-1e30, dtype=log_probs.dtype)
    alpha = torch.full((S,), -1e30, dtype=log_probs.dtype)
    alpha[0] = lp[0, 0]
    if S > 1:
        alpha[1] = lp[0, 1]
    skip_ok = torch.zeros(S, dtype=torch.bool)
    for s in range(2, S):
        skip_ok[s] = ext[s] != blank and ext[s] != ext[s - 2]
    for t in range(1, T):
        stay = alpha
        step1 = torch.cat((neg[None], alpha[:-1]))
        step2 = torch.cat((neg.expand(min(S, 2)), alpha[:max(S - 2, 0)]))
        step2 = torch.where(skip_ok, step2, neg)
        alpha = lp[t] + torch.logsumexp(torch.stack((stay, step1, step2)), dim=0)
    tail = alpha[-1] if S == 1 else torch.logsumexp(alpha[-2:], dim=0)
    return -tail


def greedy_ctc_decode(log_probs, blank=0):
    """Best-path decode: argmax per frame, collapse repeats, drop blanks."""
    path = log_probs.argmax(-1).tolist()
    out, prev = [], None
    for p in path:
        if p != prev and p != blank:
            out.append(p)
        prev = p
    return out


# ---------------------------------------------------------------------------
# stage plumbing


class FrozenGuard:
    """Checksum audit over modules a stage must not touch."""

    def __init__(self, named_modules: dict):
        self.named = dict(named_modules)
        self.before = {k: parameter_checksum(m) for k, m in self.named.items()}

    def check(self, when=""):
        for name, module in self.named.items():
            now = parameter_checksum(module)
            if now != self.before[name]:
                raise RuntimeError(f"frozen module {name!r} changed {when}".strip())


def require_checkpoint(path, needed_for: str):
    import os
    if not os.path.exists(path):
        raise StageOrderError(
            f"stage {needed_for!r} requires checkpoint {path}, which does not exist; "
            f"run its prerequisite stage first")


def _loop(named_params, cfg: TrainConfig, loss_fn, guard: FrozenGuard = None,
          log=None):
    """Shared optimizer loop: cosine lr, divergence abort, checksum audits."""
    opt = AdamW(named_params)
    metrics = [] if log is None else log
    gen = torch.Generator().manual_seed(cfg.seed)
    for step in range(cfg.steps):
        lr = cosine_warmup_lr(step, cfg.schedule)
        loss = loss_fn(step, gen)
        if not torch.isfinite(loss):
            raise TrainingDiverged(step)
        opt.zero_grad()
        loss.backward()
        opt.step(lr)
        metrics.append({"step": step, "loss": float(loss.detach()), "lr": lr})
        if guard is not None and cfg.checksum_interval and \
                (step + 1) % cfg.checksum_interval == 0:
            guard.check(f"at step {step}")
    if guard is not None:
        guard.check("after training")
    return metrics


def _sample(items, n, gen):
    idx = torch.randint(len(items), (n,), generator=gen)
    return [items[int(i)] for i in idx]


# ---------------------------------------------------------------------------
# tokenizer stage


def spectral_targets(wave, spt, n_bands=16):
    """Per-token log band energies [N, n_bands]; a fixed acoustic teacher.

    Computed straight from the waveform, so it cannot collapse with the
    model. One FFT per 80 ms token window, magnitudes pooled into equal
    bands.
    """
    n = math.ceil(wave.shape[-1] / spt)
    w = F.pad(wave, (0, n * spt - wave.shape[-1])).reshape(-1, n, spt)
    mag = torch.fft.rfft(w).abs()[..., 1:]        # drop DC
    bands = mag.reshape(*mag.shape[:-1], n_bands, -1).mean(-1)
    return torch.log(bands + 1e-6)


def train_tokenizer(tokenizer, corpus, cfg: TrainConfig, frozen=None,
                    anchor_weight=1.0):
    """CTC training over (waveform, labels, transcript) utterances.

    Trains every tokenizer parameter including the phoneme head; any
    modules passed in ``frozen`` are checksum-audited. Alongside CTC, a
    throwaway linear probe regresses code vectors onto fixed spectral
    band targets; without that anchor the blank-collapse optimum wins and
    every latent saturates onto one code.
    """
    if cfg.stage != "tok_ctc":
        raise ValueError(f"wrong stage {cfg.stage!r} for tokenizer training")
    if tokenizer.phoneme_head is None:
        raise ValueError("tokenizer training needs the phoneme head attached")
    guard = FrozenGuard(frozen) if frozen else None
    waves = [torch.as_tensor(w, dtype=torch.float32) for w, _, _ in corpus]
    labels = [labs for _, labs, _ in corpus]
    spt = tokenizer.cfg.samples_per_token
    n_bands = 16
    probe = torch.nn.Linear(len(tokenizer.cfg.fsq_levels), n_bands)
    seeded_init_(probe, cfg.seed + 1)

    def loss_fn(step, gen):
        batch_idx = torch.randint(len(waves), (cfg.batch_size,), generator=gen)
        max_len = max(waves[int(i)].shape[0] for i in batch_idx)
        max_len += (-max_len) % spt
        stack = torch.stack([
            F.pad(waves[int(i)], (0, max_len - waves[int(i)].shape[0]))
            for i in batch_idx])
        vec = tokenizer.code_vectors_offline(stack)
        lp = tokenizer.phoneme_logits(vec)
        bands = spectral_targets(stack, spt, n_bands)
        losses = []
        for row, i in enumerate(batch_idx):
            t_i = math.ceil(waves[int(i)].shape[0] / spt)
            anchor = F.mse_loss(probe(vec[row, :t_i]), bands[row, :t_i])
            losses.append(ctc_loss(lp[row, :t_i], labels[int(i)])
                          + anchor_weight * anchor)
        return torch.stack(losses).mean()

    named = list(tokenizer.named_parameters())
    named += [(f"probe.{n}", p) for n, p in probe.named_parameters()]
    tokenizer.train()
    metrics = _loop(named, cfg, loss_fn, guard)
    tokenizer.eval()
    return metrics


def phoneme_error_rate(tokenizer, corpus):
    """Greedy-CTC decode vs. reference labels, summed over the corpus."""
    from .evaluate import edit_distance
    errs = total = 0
    with torch.no_grad():
        for wave, labs, _ in corpus:
            vec = tokenizer.code_vectors_offline(torch.as_tensor(wave, dtype=torch.float32))
            hyp = greedy_ctc_decode(tokenizer.phoneme_logits(vec)[0])
            s, i, d = edit_distance(labs, hyp)
            errs += s + i + d
            total += len(labs)
    return errs / max(total, 1)


# ---------------------------------------------------------------------------
# projector stages


def next_token_loss(backbone, prefix_embeds, answer_ids):
    """Cross-entropy of the frozen backbone continuing prefix with answer."""
    bos = backbone.embed.weight[BOS_ID][None]
    ans = backbone.embed_text(answer_ids)
    seq = torch.cat((prefix_embeds, bos, ans), dim=0)
    _, logits = backbone(seq)
    m = prefix_embeds.shape[0]
    tgt = torch.cat((answer_ids, torch.tensor([EOS_ID])))
    return F.cross_entropy(logits[m:m + tgt.shape[0]], tgt)


def asr_item(tokenizer, wave, transcript):
    """-> (code vectors [N, 5], transcript byte ids) for projector training."""
    from .backbone import encode_text
    with torch.no_grad():
        tokens = tokenizer.tokenize_offline(torch.as_tensor(wave, dtype=torch.float32))
    vec = code_vectors(index_to_code(tokens))
    return vec, encode_text(transcript)


def stage2_epoch(asr_items, qa_items, mix: StageDataMix, seed=0):
    """Deterministic epoch: a fraction of ASR plus the full QA set, shuffled."""
    gen = torch.Generator().manual_seed(seed)
    n_asr = max(1, round(mix.asr_fraction * len(asr_items)))
    pick = torch.randperm(len(asr_items), generator=gen)[:n_asr]
    epoch = [("asr", asr_items[int(i)]) for i in pick]
    epoch += [("qa", q) for q in qa_items]
    order = torch.randperm(len(epoch), generator=gen)
    return [epoch[int(i)] for i in order]


def train_projector(projector, backbone, items, cfg: TrainConfig,
                    qa_items=None, mix: StageDataMix = StageDataMix()):
    """Stage 1 (ASR items only) or stage 2 (ASR + QA mix) projector training.

    items: list of (input vectors, answer byte ids). Only the projector's
    trainable parameters are updated; the backbone is checksum-audited.
    """
    if cfg.stage not in ("proj_stage1", "proj_stage2"):
        raise ValueError(f"wrong stage {cfg.stage!r} for projector training")
    if cfg.stage == "proj_stage2":
        if qa_items is None:
            raise ValueError("proj_stage2 needs qa_items")
        epoch = stage2_epoch(items, qa_items, mix, seed=cfg.seed)
        pool = [item for _, item in epoch]
    else:
        pool = list(items)
    guard = FrozenGuard({"backbone": backbone})

    def loss_fn(step, gen):
        losses = []
        for vec, ans in _sample(pool, cfg.batch_size, gen):
            emb = projector(vec)
            losses.append(next_token_loss(backbone, emb, ans))
        return torch.stack(losses).mean()

    named = [(n, p) for n, p in projector.named_parameters() if p.requires_grad]
    projector.train()
    metrics = _loop(named, cfg, loss_fn, guard)
    projector.eval()
    return metrics


def projector_eval_loss(projector, backbone, items):
    with torch.no_grad():
        losses = [next_token_loss(backbone, projector(vec), ans)
                  for vec, ans in items]
    return float(torch.stack(losses).mean())


# ---------------------------------------------------------------------------
# generator pipeline (text projector, then token generator)


def qa_text_item(backbone, q_txt, a_txt):
    from .backbone import encode_text
    return encode_text(q_txt), encode_text(a_txt)


def train_text_projector(text_proj, backbone, triplets, cfg: TrainConfig):
    """Step 1: question text through the text projector, answer-text CE."""
    if cfg.stage != "text_proj":
        raise ValueError(f"wrong stage {cfg.stage!r} for text projector training")
    items = [qa_text_item(backbone, t.q_txt, t.a_txt) for t in triplets]
    guard = FrozenGuard({"backbone": backbone})

    def loss_fn(step, gen):
        losses = []
        for q_ids, a_ids in _sample(items, cfg.batch_size, gen):
            emb = text_proj(backbone.embed_text(q_ids))
            losses.append(next_token_loss(backbone, emb, a_ids))
        return torch.stack(losses).mean()

    text_proj.train()
    metrics = _loop(list(text_proj.named_parameters()), cfg, loss_fn, guard)
    text_proj.eval()
    return metrics


def answer_hidden_states(backbone, text_proj, q_ids, a_ids):
    """Teacher-forced backbone hidden states at the answer-token positions."""
    with torch.no_grad():
        emb = text_proj(backbone.embed_text(q_ids))
        bos = backbone.embed.weight[BOS_ID][None]
        ans = backbone.embed_text(a_ids)
        seq = torch.cat((emb, bos, ans), dim=0)
        hidden, _ = backbone(seq)
    m = emb.shape[0] + 1
    return hidden[m:m + a_ids.shape[0]]


def train_token_generator(gen_model, backbone, text_proj, triplets,
                          cfg: TrainConfig):
    """Step 2: backbone hidden states of teacher-forced answers -> a_sph."""
    if cfg.stage != "tok_gen":
        raise ValueError(f"wrong stage {cfg.stage!r} for generator training")
    from .backbone import encode_text
    items = []
    for t in triplets:
        h = answer_hidden_states(backbone, text_proj,
                                 encode_text(t.q_txt), encode_text(t.a_txt))
        if h.shape[0] == 0 or len(t.a_sph) == 0:
            continue
        items.append((h, torch.tensor(t.a_sph, dtype=torch.long)))
    if not items:
        raise ValueError("no usable triplets")
    guard = FrozenGuard({"backbone": backbone, "text_projector": text_proj})

    def loss_fn(step, gen):
        losses = []
        for h, toks in _sample(items, cfg.batch_size, gen):
            memory = gen_model.encode_hidden(h)
            losses.append(gen_model.sequence_loss(memory, toks))
        return torch.stack(losses).mean()

    gen_model.train()
    metrics = _loop(list(gen_model.named_parameters()), cfg, loss_fn, guard)
    gen_model.eval()
    return metrics, items


def teacher_forced_accuracy(gen_model, items):
    """Fraction of speech-token positions where greedy argmax matches."""
    from .generator import BOS
    hits = total = 0
    with torch.no_grad():
        for h, toks in items:
            memory = gen_model.encode_hidden(h)
            inp = torch.cat((torch.tensor([BOS]), toks))
            hid = gen_model.decode_hidden(memory, inp)[0]
            pred = gen_model.head(gen_model.norm_f(hid)).argmax(-1)
            hits += int((pred[:toks.shape[0]] == toks).sum())
            total += toks.shape[0]
    return hits / max(total, 1)


# ---------------------------------------------------------------------------
# de-tokenizer stage


def train_detokenizer(model, corpus, cfg: TrainConfig, frozen=None):
    """Flow-matching training on (log-mel frames, streamed tokens) pairs.

    Validates the token/mel rate ledger for every batch item: frame count
    must equal ceil(tokens * 7.5).
    """
    from .detok import flow_matching_loss
    if cfg.stage != "detok":
        raise ValueError(f"wrong stage {cfg.stage!r} for detokenizer training")
    guard = FrozenGuard(frozen) if frozen else None
    items = []
    for mel, tokens in corpus:
        mel = torch.as_tensor(mel, dtype=torch.float32)
        tokens = torch.as_tensor(tokens, dtype=torch.long)
        want = model.cfg.frames_for_tokens(tokens.shape[0])
        if mel.shape[0] != want:
            raise ValueError(
                f"rate ledger violated: {tokens.shape[0]} tokens need {want} "
                f"mel frames, got {mel.shape[0]}")
        items.append((mel, tokens))

    def loss_fn(step, gen):
        losses = []
        for mel, tokens in _sample(items, cfg.batch_size, gen):
            frames = mel.shape[0]
            t = torch.rand(1, generator=gen)
            x0 = torch.randn(1, frames, mel.shape[1], generator=gen)
            # infill a random suffix, keeping a context prefix visible
            ctx = int(torch.randint(0, max(frames - 8, 1), (1,), generator=gen))
            mask = torch.zeros(1, frames, dtype=torch.bool)
            mask[:, ctx:] = True
            losses.append(flow_matching_loss(
                model, mel[None], mask, tokens[None], t, x0))
        return torch.stack(losses).mean()

    model.train()
    metrics = _loop(list(model.named_parameters()), cfg, loss_fn, guard)
    model.eval()
    return metrics


def detok_eval_loss(model, corpus, seed=0):
    from .detok import flow_matching_loss
    gen = torch.Generator().manual_seed(seed)
    losses = []
    with torch.no_grad():
        for mel, tokens in corpus:
            mel = torch.as_tensor(mel, dtype=torch.float32)
            tokens = torch.as_tensor(tokens, dtype=torch.long)
            t = torch.rand(1, generator=gen)
            x0 = torch.randn(1, mel.shape[0], mel.shape[1], generator=gen)
            mask = torch.ones(1, mel.shape[0], dtype=torch.bool)
            losses.append(flow_matching_loss(
                model, mel[None], mask, tokens[None], t, x0))
    return float(torch.stack(losses).mean())
