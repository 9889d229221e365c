from .masks import causal_mask, chunk_attention_mask
from .schedule import LrSchedule, cosine_warmup_lr
from .optim import AdamW, adamw_step
from .layers import (
    CausalConv1d,
    CrossAttention,
    DecoderLayer,
    EncoderLayer,
    FeedForward,
    SelfAttention,
    seeded_init_,
    timestep_embedding,
)
from .gradcheck import finite_diff_gradcheck
from .checkpoint import load_checkpoint, parameter_checksum, save_checkpoint

__all__ = [
    "AdamW",
    "CausalConv1d",
    "CrossAttention",
    "DecoderLayer",
    "EncoderLayer",
    "FeedForward",
    "LrSchedule",
    "SelfAttention",
    "adamw_step",
    "causal_mask",
    "chunk_attention_mask",
    "cosine_warmup_lr",
    "finite_diff_gradcheck",
    "load_checkpoint",
    "parameter_checksum",
    "save_checkpoint",
    "seeded_init_",
    "timestep_embedding",
]
