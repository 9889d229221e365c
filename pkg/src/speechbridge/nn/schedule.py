"""Warmup + cosine-annealing learning-rate schedule."""

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class LrSchedule:
    base_lr: float = 2e-4
    warmup_ratio: float = 0.03
    total_steps: int = 1000

    def __post_init__(self):
        if not 0.0 <= self.warmup_ratio <= 1.0:
            raise ValueError(f"warmup_ratio must be in [0, 1], got {self.warmup_ratio}")
        if self.total_steps < 1:
            raise ValueError(f"total_steps must be >= 1, got {self.total_steps}")

    @property
    def warmup_steps(self) -> float:
        return self.warmup_ratio * self.total_steps


def cosine_warmup_lr(step: int, schedule: LrSchedule) -> float:
    """Linear ramp 0 -> base_lr over the warmup span, then cosine decay to 0.

    Steps beyond total_steps clamp to the final (zero) value.
    """
    if step < 0:
        raise ValueError(f"step must be >= 0, got {step}")
    step = min(step, schedule.total_steps)
    warm = schedule.warmup_steps
    if warm > 0 and step < warm:
        return schedule.base_lr * step / warm
    decay_span = schedule.total_steps - warm
    if decay_span <= 0:
        return 0.0
    phase = (step - warm) / decay_span
    return schedule.base_lr * 0.5 * (1.0 + math.cos(math.pi * phase))
