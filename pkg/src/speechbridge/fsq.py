"""Finite scalar quantization over bounded per-dimension grids.

Each latent dimension is squashed by tanh into an asymmetric range
holding L evenly spaced integers, rounded, and shifted into a digit in
[0, L). Digits pack into a single token index by mixed-radix positional
encoding (first dimension is the least significant place).
"""

import math

import torch
from torch import nn

LEVELS = (8, 8, 8, 8, 8)
CODEBOOK_SIZE = math.prod(LEVELS)   # 32768


def _consts(levels, dtype=torch.float32):
    lv = torch.as_tensor(levels, dtype=dtype)
    half = (lv - 1) / 2
    offset = 0.5
    shift = torch.atanh(offset / half)
    return lv, half, offset, shift


def fsq_bounded(z, levels=LEVELS):
    """Continuous bounded representation: tanh(z + shift)*half - offset."""
    lv, half, offset, shift = _consts(levels, z.dtype)
    return torch.tanh(z + shift) * half - offset


def fsq_quantize(z, levels=LEVELS):
    """Map latents [..., ndim] to integer digits, digit i in [0, levels_i)."""
    lv, half, offset, shift = _consts(levels, z.dtype if z.is_floating_point() else torch.float32)
    bounded = fsq_bounded(z, levels)
    digits = torch.round(bounded) + lv / 2
    return torch.clamp(digits, torch.zeros_like(lv), lv - 1).long()


def code_to_index(digits, levels=LEVELS):
    """Mixed-radix pack: index = sum_i digit_i * prod_{j<i} levels_j."""
    digits = torch.as_tensor(digits, dtype=torch.long)
    if digits.shape[-1] != len(levels):
        raise ValueError(f"expected {len(levels)} digits, got {digits.shape[-1]}")
    lv = torch.as_tensor(levels, dtype=torch.long)
    if (digits < 0).any() or (digits >= lv).any():
        raise ValueError("digit out of range for its level count")
    place = torch.cumprod(torch.cat((torch.ones(1, dtype=torch.long), lv[:-1])), 0)
    return (digits * place).sum(-1)


def index_to_code(index, levels=LEVELS):
    """Inverse of code_to_index; index in [0, prod(levels))."""
    index = torch.as_tensor(index, dtype=torch.long)
    total = math.prod(levels)
    if (index < 0).any() or (index >= total).any():
        raise ValueError(f"token index out of range [0, {total})")
    digits = []
    rem = index
    for L in levels:
        digits.append(rem % L)
        rem = rem // L
    return torch.stack(digits, dim=-1)


def code_centers(digits, levels=LEVELS):
    """Pre-squash latents whose quantization reproduces ``digits`` exactly.

    Interior digits invert the bounded map analytically; the two extreme
    digits sit in tanh saturation, so their representatives are pulled
    just inside the open interval and land on the digit by rounding.
    """
    lv, half, offset, shift = _consts(levels, torch.float32)
    target = digits.to(torch.float32) - lv / 2
    frac = torch.clamp((target + offset) / half, -1 + 1e-3, 1 - 1e-3)
    return torch.atanh(frac) - shift


def code_vectors(digits, levels=LEVELS, dtype=torch.float32):
    """Normalized per-dimension values in [-1, 1): (digit - L/2) / (L/2).

    This is the dequantized form consumed downstream (projector input,
    phoneme head input).
    """
    lv = torch.as_tensor(levels, dtype=dtype)
    return (digits.to(dtype) - lv / 2) / (lv / 2)


class FsqCodec(nn.Module):
    """Quantizer with a straight-through gradient.

    forward(z, hard=True) -> (vec, digits): vec is the normalized code
    vector with gradients flowing as if rounding were identity; with
    hard=False rounding is skipped (continuous relaxation on the same
    path, used by finite-difference gradient checks, whose central
    differences cannot see through a piecewise-constant rounding).
    """

    def __init__(self, levels=LEVELS):
        super().__init__()
        self.levels = tuple(levels)
        lv, _, _, _ = _consts(levels)
        self.register_buffer("lv", lv)

    def forward(self, z, hard=True):
        bounded = fsq_bounded(z, self.levels)
        if hard:
            rounded = bounded + (torch.round(bounded) - bounded).detach()
        else:
            rounded = bounded
        digits = torch.clamp(torch.round(bounded) + self.lv / 2,
                             torch.zeros_like(self.lv), self.lv - 1).long()
        vec = rounded / (self.lv.to(bounded.dtype) / 2)
        return vec, digits
