"""Gradient verification suite over every trainable module class.

Each entry builds a tiny float64 instance and checks autograd against
central differences, including the loss paths (CTC, sequence CE, flow
matching MSE) so the whole training gradient is covered, not just the
forward maps. The tokenizer check runs the quantizer in its continuous
relaxation: the straight-through estimator defines the rounding gradient
as identity, so the relaxed path computes exactly the gradient training
uses while staying finite-differentiable.
"""

import time

import torch

from .nn.gradcheck import finite_diff_gradcheck

GRADCHECK_TOL = 1e-4


def _tiny_tokenizer():
    from .tokenizer import SpeechTokenizer, TokenizerConfig
    cfg = TokenizerConfig(feat_channels=4, dim=16, heads=2, layers=1, ffn=32,
                          head_channels=8)
    return SpeechTokenizer(cfg, with_head=True, seed=0)


def gradcheck_suite(eps=1e-5, seed=0, max_coords=24, quick=False):
    """Returns [{module, max_rel_err, seconds, passed}] for all checks."""
    checks = []

    tok = _tiny_tokenizer()
    wave = 0.1 * torch.randn(1, 2560, generator=torch.Generator().manual_seed(3))
    checks.append(("tokenizer", tok, (wave,),
                   lambda m, w: m.code_vectors_offline(w, hard=False)))

    vec = torch.randn(1, 6, 5, generator=torch.Generator().manual_seed(4))
    checks.append(("phoneme_head", tok.phoneme_head, (vec,), None))

    from .projector import Projector, ProjectorConfig
    for arch in ("mlp", "cnn", "transformer"):
        proj = Projector(ProjectorConfig(arch=arch, hidden=16, heads=2, ffn=32,
                                         out_dim=12), seed=0)
        x = torch.randn(6, 5, generator=torch.Generator().manual_seed(5))
        checks.append((f"projector_{arch}", proj, (x,), None))

    from .generator import GeneratorConfig, TokenGenerator
    gen = TokenGenerator(GeneratorConfig(in_dim=8, enc_layers=1, dec_layers=1,
                                         hidden=16, heads=2, ffn=32,
                                         mtp_modules=2), seed=0)
    h = torch.randn(3, 8, generator=torch.Generator().manual_seed(6))
    toks = torch.tensor([5, 9, 2])
    checks.append(("generator", gen, (h,),
                   lambda m, hh: m.sequence_loss(m.encode_hidden(hh), toks)))

    from .detok import DetokConfig, Detokenizer, flow_matching_loss
    det = Detokenizer(DetokConfig(layers=1, heads=2, embed=16, ffn=32,
                                  mel_bins=8, token_vocab=32), seed=0)
    g = torch.Generator().manual_seed(7)
    mel = torch.randn(1, 8, 8, generator=g)
    x0 = torch.randn(1, 8, 8, generator=g)
    mask = torch.zeros(1, 8, dtype=torch.bool)
    mask[:, 3:] = True
    dtoks = torch.tensor([[4]])
    t = torch.tensor([0.4])

    def detok_fwd(m, target, noise):
        return flow_matching_loss(m, target, mask, dtoks, t, noise)

    checks.append(("detokenizer", det, (mel, x0), detok_fwd))

    from .training import ctc_loss
    lp_raw = torch.randn(5, 4, generator=torch.Generator().manual_seed(8))

    class _CtcProbe(torch.nn.Module):
        def forward(self, raw):
            return ctc_loss(torch.log_softmax(raw, dim=-1), [1, 2])

    checks.append(("ctc_loss", _CtcProbe(), (lp_raw,), None))

    results = []
    for name, module, inputs, fwd in checks:
        t0 = time.time()
        coords = 8 if quick else max_coords
        err = finite_diff_gradcheck(module, inputs, eps=eps, seed=seed,
                                    forward=fwd, max_coords_per_tensor=coords)
        results.append({
            "module": name,
            "max_rel_err": err,
            "seconds": time.time() - t0,
            "passed": err < GRADCHECK_TOL,
        })
    return results
