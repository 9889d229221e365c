"""Central-difference gradient verification for any differentiable unit.

The check runs on a float64 deep copy of the module, scores the output
against a fixed random cotangent, and compares autograd gradients with
central differences coordinate by coordinate. The returned value is the
worst relative error over all parameters and all inputs.
"""

import copy
import random
import warnings

import torch


def finite_diff_gradcheck(layer, inputs, eps=1e-5, seed=0, forward=None,
                          max_coords_per_tensor=None, atol=1e-5):
    """Max relative gradient error of ``layer`` at ``inputs``.

    inputs: a tensor or tuple of tensors (all get gradients checked).
    forward: optional ``fn(layer, *inputs) -> Tensor`` for modules whose
        forward needs extra fixed arguments; defaults to ``layer(*inputs)``.
    max_coords_per_tensor: subsample coordinates for large tensors; None
        checks every coordinate.
    atol: denominator floor for the relative error. Central differences
        on a loss of size f resolve gradients only down to about
        machine_eps * |f| / eps (~1e-10 here); components below the floor
        are certified as "zero to measurement precision" rather than
        compared, which is also how mathematically-zero gradients that
        appear as cancellation dust on both sides stay out of the ratio.

    A non-finite forward is reported as a failing error value (inf), not
    raised.
    """
    if not (1e-7 <= eps <= 1e-3):
        raise ValueError(f"eps {eps} outside [1e-7, 1e-3]")
    layer = copy.deepcopy(layer).double()
    if torch.is_tensor(inputs):
        inputs = (inputs,)
    inputs = tuple(x.detach().double().requires_grad_(True) for x in inputs)
    call = forward if forward is not None else (lambda m, *xs: m(*xs))

    out = call(layer, *inputs)
    if not torch.isfinite(out).all():
        warnings.warn("gradcheck: forward produced non-finite values")
        return float("inf")
    gen = torch.Generator().manual_seed(seed)
    cot = torch.randn(out.shape, generator=gen, dtype=torch.float64)
    loss = (out * cot).sum()

    params = [p for p in layer.parameters() if p.requires_grad]
    grads = torch.autograd.grad(loss, params + list(inputs), allow_unused=True)

    def loss_value():
        with torch.no_grad():
            return float((call(layer, *inputs) * cot).sum())

    rng = random.Random(seed)
    worst = 0.0
    for tensor, grad in zip(params + list(inputs), grads):
        flat = tensor.detach().contiguous().view(-1)
        if flat.data_ptr() != tensor.data_ptr():
            raise ValueError("gradcheck needs contiguous tensors to perturb in place")
        n = flat.numel()
        coords = range(n)
        if max_coords_per_tensor is not None and n > max_coords_per_tensor:
            coords = sorted(rng.sample(range(n), max_coords_per_tensor))
        gflat = None if grad is None else grad.reshape(-1)
        for i in coords:
            orig = float(flat[i])
            flat[i] = orig + eps
            up = loss_value()
            flat[i] = orig - eps
            down = loss_value()
            flat[i] = orig
            numeric = (up - down) / (2.0 * eps)
            analytic = 0.0 if gflat is None else float(gflat[i])
            rel = abs(analytic - numeric) / max(abs(analytic), abs(numeric), atol)
            worst = max(worst, rel)
    return worst
