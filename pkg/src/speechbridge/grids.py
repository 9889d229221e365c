"""Architecture comparison harnesses.

Trains every projector variant (arch x depth at its published learning
rate) and every generator encoder/decoder depth split at desk scale,
then emits comparison reports. Orderings between variants are reported,
never asserted: they are an empirical observation, not an invariant.
"""

from dataclasses import replace

import torch

from .generator import GeneratorConfig, TokenGenerator
from .projector import build_variant
from .training import (TrainConfig, projector_eval_loss, train_projector,
                       train_token_generator)

# (arch, depth, lr) rows of the published projector comparison, minus the
# two diverged runs; simple archs need the larger learning rates
PROJECTOR_GRID = (
    ("mlp", 2, 1e-2),
    ("mlp", 3, 1e-2),
    ("mlp", 4, 1e-3),
    ("mlp", 5, 1e-3),
    ("cnn", 4, 1e-2),
    ("cnn", 4, 1e-3),
    ("cnn", 4, 2e-4),
    ("transformer", 2, 1e-3),
    ("transformer", 2, 2e-4),
    ("transformer", 4, 2e-4),
    ("transformer", 6, 2e-4),
)

# (enc_layers, dec_layers) splits of the published generator comparison
GENERATOR_GRID = ((2, 4), (2, 6), (4, 4), (6, 4), (8, 4))


def run_projector_grid(backbone, items, steps=30, batch_size=4, seed=0,
                       grid=PROJECTOR_GRID):
    """Trains each variant on the same ASR items; returns comparison rows."""
    results = []
    for arch, depth, lr in grid:
        proj = build_variant(arch, depth, seed=seed)
        cfg = TrainConfig(stage="proj_stage1", lr=lr, steps=steps,
                          batch_size=batch_size, seed=seed)
        metrics = train_projector(proj, backbone, items, cfg)
        results.append({
            "label": f"{arch}-d{depth}-lr{lr:g}",
            "arch": arch,
            "depth": depth,
            "lr": lr,
            "first_loss": metrics[0]["loss"],
            "final_loss": projector_eval_loss(proj, backbone, items),
        })
    return results


def run_generator_grid(backbone, text_proj, triplets, steps=30, batch_size=4,
                       seed=0, grid=GENERATOR_GRID, base=GeneratorConfig()):
    """Trains a generator per encoder/decoder split; returns comparison rows."""
    results = []
    for enc, dec in grid:
        cfg = replace(base, enc_layers=enc, dec_layers=dec)
        gen = TokenGenerator(cfg, seed=seed)
        tc = TrainConfig(stage="tok_gen", steps=steps, batch_size=batch_size,
                         seed=seed)
        metrics, items = train_token_generator(gen, backbone, text_proj,
                                               triplets, tc)
        with torch.no_grad():
            losses = [gen.sequence_loss(gen.encode_hidden(h), toks)
                      for h, toks in items]
        results.append({
            "label": f"enc{enc}-dec{dec}",
            "enc_layers": enc,
            "dec_layers": dec,
            "first_loss": metrics[0]["loss"],
            "final_loss": float(torch.stack(losses).mean()),
        })
    return results


def grid_report(results, title):
    from .reports import render_table
    rows = [(r["label"], round(r["first_loss"], 4), round(r["final_loss"], 4))
            for r in results]
    header = f"{title}\n(orderings are observations, not assertions)\n"
    return header + render_table(("variant", "first_loss", "final_loss"), rows)
