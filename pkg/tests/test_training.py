"""Training stages: CTC against brute force, guards, stage plumbing."""

import itertools
import math

import pytest
import torch

from speechbridge.backbone import Backbone, BackboneConfig, encode_text
from speechbridge.data.desk import build_asr_corpus
from speechbridge.errors import StageOrderError, TrainingDiverged
from speechbridge.projector import Projector, ProjectorConfig
from speechbridge.tokenizer import SpeechTokenizer
from speechbridge.training import (
    FrozenGuard,
    StageDataMix,
    TrainConfig,
    asr_item,
    ctc_loss,
    greedy_ctc_decode,
    next_token_loss,
    phoneme_error_rate,
    require_checkpoint,
    spectral_targets,
    stage2_epoch,
    train_projector,
    train_tokenizer,
)


def brute_force_ctc(log_probs, targets, blank=0):
    """Total probability by explicit path enumeration.

    Sums exp(sum of per-frame log-probs) over every frame labeling whose
    collapse (merge repeats, then drop blanks) equals the target. Kept in
    torch so autograd can differentiate it for gradient comparison.
    """
    T, V = log_probs.shape
    targets = [int(t) for t in targets]
    total = []
    for path in itertools.product(range(V), repeat=T):
        collapsed = []
        prev = None
        for p in path:
            if p != prev and p != blank:
                collapsed.append(p)
            prev = p
        if collapsed == targets:
            total.append(sum(log_probs[t, p] for t, p in enumerate(path)))
    if not total:
        return torch.tensor(float("inf"), dtype=log_probs.dtype)
    return -torch.logsumexp(torch.stack(total), dim=0)


# CTC ------------------------------------------------------------------------

def test_ctc_uniform_worked_example():
    # 2 frames, 3 classes, uniform rows: paths aa, a-, -a each carry 1/9,
    # so P(target "a") = 1/3 and the loss is ln 3
    lp = torch.full((2, 3), math.log(1.0 / 3.0), dtype=torch.float64)
    loss = ctc_loss(lp, [1])
    assert abs(float(loss) - math.log(3.0)) < 1e-12


def test_ctc_matches_brute_force_random_cases():
    gen = torch.Generator().manual_seed(0)
    cases = 0
    for T in (1, 2, 3, 4, 5):
        for V in (2, 3):
            for L in range(0, 3):
                for _ in range(3):
                    logits = torch.randn(T, V + 1, generator=gen, dtype=torch.float64)
                    lp = logits.log_softmax(-1).detach().requires_grad_(True)
                    tgt = torch.randint(1, V + 1, (L,), generator=gen).tolist()

                    got = ctc_loss(lp, tgt)
                    lp2 = lp.detach().requires_grad_(True)
                    want = brute_force_ctc(lp2, tgt)
                    if math.isinf(float(want)):
                        assert math.isinf(float(got))
                        continue
                    assert abs(float(got) - float(want)) < 1e-9
                    got.backward()
                    want.backward()
                    assert torch.allclose(lp.grad, lp2.grad, atol=1e-9)
                    cases += 1
    assert cases > 50


def test_ctc_empty_target_is_all_blanks():
    lp = torch.randn(4, 3, dtype=torch.float64).log_softmax(-1)
    want = -float(lp[:, 0].sum())
    assert abs(float(ctc_loss(lp, [])) - want) < 1e-9


def test_ctc_infeasible_warns_and_returns_inf():
    lp = torch.randn(2, 3, dtype=torch.float64).log_softmax(-1)
    with pytest.warns(UserWarning, match="cannot align"):
        loss = ctc_loss(lp, [1, 2, 1])
    assert math.isinf(float(loss))
    # adjacent repeats need a separating blank frame
    with pytest.warns(UserWarning, match="cannot align"):
        loss = ctc_loss(lp, [1, 1])
    assert math.isinf(float(loss))


def test_ctc_sentinel_keeps_gradients_finite():
    lp = torch.randn(6, 4, dtype=torch.float64).log_softmax(-1)
    lp = lp.detach().requires_grad_(True)
    loss = ctc_loss(lp, [2, 3, 2])
    loss.backward()
    assert torch.isfinite(lp.grad).all()


def test_greedy_ctc_decode_collapses():
    # frame argmaxes: 1 1 0 2 2 2 0 1 -> 1 2 1
    ids = [1, 1, 0, 2, 2, 2, 0, 1]
    lp = torch.full((len(ids), 3), -10.0)
    for t, i in enumerate(ids):
        lp[t, i] = 0.0
    assert greedy_ctc_decode(lp) == [1, 2, 1]
    assert greedy_ctc_decode(torch.zeros(0, 3)) == []


# stage plumbing ---------------------------------------------------------------

def test_train_config_validates_stage():
    with pytest.raises(ValueError, match="stage"):
        TrainConfig(stage="pretrain")
    cfg = TrainConfig(stage="tok_ctc", steps=7)
    assert cfg.schedule.total_steps == 7


def test_frozen_guard_detects_mutation():
    mod = torch.nn.Linear(3, 3)
    guard = FrozenGuard({"mod": mod})
    guard.check()
    with torch.no_grad():
        mod.weight += 1.0
    with pytest.raises(RuntimeError, match="frozen module 'mod'"):
        guard.check("after step")


def test_require_checkpoint(tmp_path):
    with pytest.raises(StageOrderError, match="prerequisite"):
        require_checkpoint(str(tmp_path / "missing.solw"), "proj_stage2")
    ok = tmp_path / "present.solw"
    ok.write_bytes(b"x")
    require_checkpoint(str(ok), "proj_stage2")


def test_stage2_epoch_deterministic_mix():
    asr = [("a", i) for i in range(20)]
    qa = [("q", i) for i in range(5)]
    mix = StageDataMix(asr_fraction=0.10)
    e1 = stage2_epoch(asr, qa, mix, seed=4)
    e2 = stage2_epoch(asr, qa, mix, seed=4)
    assert e1 == e2
    kinds = [k for k, _ in e1]
    assert kinds.count("asr") == 2          # round(0.10 * 20)
    assert kinds.count("qa") == 5
    assert stage2_epoch(asr, qa, mix, seed=5) != e1


def test_spectral_targets_fixed_teacher():
    g = torch.Generator().manual_seed(0)
    wave = torch.randn(1, 3 * 1280, generator=g)
    bands = spectral_targets(wave, 1280)
    assert bands.shape == (1, 3, 16)
    assert torch.isfinite(bands).all()
    assert torch.equal(bands, spectral_targets(wave, 1280))
    # ragged lengths are padded up to whole token windows
    assert spectral_targets(wave[:, :1281], 1280).shape == (1, 2, 16)


# training loops (tiny budgets) ------------------------------------------------

def test_train_tokenizer_runs_and_logs():
    tok = SpeechTokenizer(seed=0)
    corpus = build_asr_corpus(count=2, seed=0, min_len=3, max_len=3)
    cfg = TrainConfig(stage="tok_ctc", steps=3, batch_size=2, lr=1e-3)
    metrics = train_tokenizer(tok, corpus, cfg)
    assert len(metrics) == 3
    assert all(math.isfinite(m["loss"]) for m in metrics)
    assert metrics[0]["lr"] <= metrics[-1]["lr"] or metrics[0]["lr"] > 0
    per = phoneme_error_rate(tok, corpus)
    assert per >= 0


def test_train_tokenizer_stage_checks():
    tok = SpeechTokenizer(seed=0)
    corpus = build_asr_corpus(count=2, seed=0)
    with pytest.raises(ValueError, match="wrong stage"):
        train_tokenizer(tok, corpus, TrainConfig(stage="detok"))
    bare = SpeechTokenizer(with_head=False, seed=0)
    with pytest.raises(ValueError, match="phoneme head"):
        train_tokenizer(bare, corpus, TrainConfig(stage="tok_ctc"))


def test_train_projector_guards_backbone():
    bb = Backbone(BackboneConfig(fit_steps=0))
    tok = SpeechTokenizer(seed=0).eval()
    corpus = build_asr_corpus(count=2, seed=0, min_len=3, max_len=3)
    items = [asr_item(tok, w, t) for w, _, t in corpus]
    proj = Projector(ProjectorConfig(), seed=0)
    before = bb.checksum()
    cfg = TrainConfig(stage="proj_stage1", steps=2, batch_size=2, lr=1e-3)
    metrics = train_projector(proj, bb, items, cfg)
    assert len(metrics) == 2
    assert bb.checksum() == before
    with pytest.raises(ValueError, match="qa_items"):
        train_projector(proj, bb, items, TrainConfig(stage="proj_stage2", steps=1))


def test_training_divergence_aborts():
    bb = Backbone(BackboneConfig(fit_steps=0))
    proj = Projector(ProjectorConfig(), seed=0)
    bad = [(torch.full((4, 5), float("nan")), encode_text("hi"))]
    with pytest.raises(TrainingDiverged):
        train_projector(proj, bb, bad,
                        TrainConfig(stage="proj_stage1", steps=2, batch_size=1))


def test_next_token_loss_shape():
    bb = Backbone(BackboneConfig(fit_steps=0))
    loss = next_token_loss(bb, torch.randn(3, 64), encode_text("ok"))
    assert loss.ndim == 0 and torch.isfinite(loss)
