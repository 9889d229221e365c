"""Boolean attention masks (True = query may attend to key)."""

import torch


def causal_mask(total_len: int) -> torch.Tensor:
    """Plain lower-triangular causal mask of shape [total_len, total_len]."""
    if total_len < 1:
        raise ValueError(f"total_len must be >= 1, got {total_len}")
    return torch.ones(total_len, total_len, dtype=torch.bool).tril_()


def chunk_attention_mask(total_len: int, chunk_len: int, lookback: int) -> torch.Tensor:
    """Chunked causal mask: position i in chunk c attends to positions j <= i
    whose chunk index lies in [c - lookback, c].

    With lookback large enough to cover every chunk this degenerates to the
    plain causal mask.
    """
    if total_len < 1:
        raise ValueError(f"total_len must be >= 1, got {total_len}")
    if chunk_len < 1:
        raise ValueError(f"chunk_len must be >= 1, got {chunk_len}")
    if lookback < 0:
        raise ValueError(f"lookback must be >= 0, got {lookback}")
    idx = torch.arange(total_len)
    chunk = idx // chunk_len
    allowed = (idx[None, :] <= idx[:, None]) & (chunk[None, :] >= chunk[:, None] - lookback)
    # every query can at least see itself
    assert bool(allowed.any(dim=1).all())
    return allowed
