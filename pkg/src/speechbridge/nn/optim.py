"""AdamW with decoupled weight decay, written as an explicit step function.

The functional form keeps updates deterministic and inspectable; the class
just carries the per-parameter state between calls.
"""

import torch


def adamw_step(params, grads, lr, betas=(0.9, 0.95), weight_decay=0.01,
               eps=1e-8, state=None, names=None):
    """One in-place AdamW step over parallel lists of params and grads.

    `state` holds {"step": int, "m": [...], "v": [...]} and is created on
    first use. A non-finite gradient aborts the whole step (no partial
    updates) and names the offending parameter.
    """
    if state is None:
        state = {}
    if not state:
        state["step"] = 0
        state["m"] = [torch.zeros_like(p) for p in params]
        state["v"] = [torch.zeros_like(p) for p in params]

    for i, g in enumerate(grads):
        if g is not None and not torch.isfinite(g).all():
            name = names[i] if names else f"param[{i}]"
            raise ValueError(f"non-finite gradient for {name}")

    state["step"] += 1
    t = state["step"]
    b1, b2 = betas
    bc1 = 1.0 - b1 ** t
    bc2 = 1.0 - b2 ** t
    with torch.no_grad():
        for p, g, m, v in zip(params, grads, state["m"], state["v"]):
            if weight_decay:
                p.mul_(1.0 - lr * weight_decay)
            if g is None:
                continue
            m.mul_(b1).add_(g, alpha=1.0 - b1)
            v.mul_(b2).addcmul_(g, g, value=1.0 - b2)
            denom = (v / bc2).sqrt_().add_(eps)
            p.addcdiv_(m / bc1, denom, value=-lr)
    return state


class AdamW:
    """Stateful wrapper around :func:`adamw_step` for a named parameter set."""

    def __init__(self, named_params, betas=(0.9, 0.95), weight_decay=0.01, eps=1e-8):
        named_params = list(named_params)
        self.names = [n for n, _ in named_params]
        self.params = [p for _, p in named_params]
        self.betas = betas
        self.weight_decay = weight_decay
        self.eps = eps
        self.state = {}

    def step(self, lr):
        grads = [p.grad for p in self.params]
        self.state = adamw_step(
            self.params, grads, lr, self.betas, self.weight_decay,
            self.eps, self.state, self.names,
        )

    def zero_grad(self):
        for p in self.params:
            p.grad = None
