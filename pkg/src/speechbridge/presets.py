"""Desk-scale and paper-scale configuration presets.

Desk scale keeps every module small enough to train and gradcheck on a
CPU in minutes. Paper scale reproduces the published architecture sizes;
those models are constructed only for parameter counting.
"""

from .backbone import BackboneConfig
from .detok import DetokConfig
from .generator import GeneratorConfig
from .projector import ProjectorConfig
from .tokenizer import TokenizerConfig

PRESETS = ("desk_scale", "paper_scale")

# published parameter budgets the paper presets are checked against
PAPER_TOKENIZER_PARAMS = 337_000_000        # streaming tokenizer, sans phoneme head
PAPER_PROJECTOR_PARAMS = 415_000_000


def desk_scale() -> dict:
    return {
        "tokenizer": TokenizerConfig(),
        "projector": ProjectorConfig(),
        "backbone": BackboneConfig(fit_steps=800),
        "generator": GeneratorConfig(),
        "detokenizer": DetokConfig(),
    }


def paper_scale() -> dict:
    return {
        "tokenizer": TokenizerConfig(
            feat_channels=512,
            dim=1024,
            heads=16,
            layers=24,
            ffn=4096,
            ds_kernel=10,
            head_channels=512,
        ),
        "projector": ProjectorConfig(
            arch="transformer",
            depth=6,
            in_dim=5,
            hidden=2048,
            heads=32,
            ffn=8192,
            out_dim=4096,
        ),
        "backbone": BackboneConfig(embed_dim=4096, layers=32, heads=32),
        "generator": GeneratorConfig(
            in_dim=4096, enc_layers=8, dec_layers=4,
            hidden=1024, heads=16, ffn=4096),
        "detokenizer": DetokConfig(layers=12, heads=16, embed=1024, ffn=4096),
    }


def get_preset(name: str) -> dict:
    if name == "desk_scale":
        return desk_scale()
    if name == "paper_scale":
        return paper_scale()
    raise ValueError(f"unknown preset {name!r}, expected one of {PRESETS}")


def count_parameters(module, exclude_prefixes=()) -> int:
    return sum(p.numel() for name, p in module.named_parameters()
               if not any(name.startswith(px) for px in exclude_prefixes))


def tokenizer_param_count(cfg: TokenizerConfig) -> int:
    """Count without constructing, excluding the phoneme head.

    Mirrors the module layout exactly: feature convs with bias, feature
    projection, chunk-position table, encoder layers (biased attention,
    GELU feed-forward, two LayerNorms), final LayerNorm, two downsample
    convs, and the FSQ projection.
    """
    n = 0
    in_ch = 1
    for k in cfg.feat_kernels:
        n += in_ch * cfg.feat_channels * k + cfg.feat_channels
        in_ch = cfg.feat_channels
    n += 2 * cfg.feat_channels                          # feature LayerNorm
    n += cfg.feat_channels * cfg.dim + cfg.dim          # feat_proj
    n += (cfg.chunk_ms // 80 * 4) * cfg.dim             # chunk position table
    per_layer = (4 * (cfg.dim * cfg.dim + cfg.dim)      # q,k,v,o with bias
                 + 2 * (cfg.dim * cfg.ffn) + cfg.ffn + cfg.dim    # GELU mlp
                 + 4 * cfg.dim)                         # two LayerNorms
    n += cfg.layers * per_layer
    n += 2 * cfg.dim                                    # final LayerNorm
    n += 2 * (cfg.dim * cfg.dim * cfg.ds_kernel + cfg.dim)        # downsample convs
    n += 2 * cfg.dim                                    # pre-quantizer LayerNorm
    n += cfg.dim * len(cfg.fsq_levels) + len(cfg.fsq_levels)      # fsq head
    return n


def projector_param_count(cfg: ProjectorConfig) -> int:
    """Count without constructing (transformer arch)."""
    if cfg.arch != "transformer":
        raise ValueError("closed-form count implemented for transformer only")
    h = cfg.hidden
    n = cfg.in_dim * h + h + h * h + h                  # two-layer input mlp
    per_layer = (4 * h * h                              # q,k,v,o bias-free
                 + 3 * h * cfg.ffn                      # SwiGLU
                 + 2 * h)                               # two RMSNorm gains
    n += cfg.depth * per_layer
    n += h * cfg.out_dim                                # final linear, bias-free
    return n
