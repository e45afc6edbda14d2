"""Central finite-difference oracle for tape gradients."""

from __future__ import annotations

import numpy as np

from .core import ShapeError, Tensor, no_grad


def grad_check(f, x, step=1e-5, indices=None):
    """Max relative error between tape and central-difference gradients.

    ``f`` maps ``x`` (a Tensor, possibly a Parameter closed over by ``f``) to
    a scalar Tensor. ``indices`` restricts the check to selected flat
    coordinates; by default every coordinate is perturbed. The relative
    error uses the denominator ``max(|analytic|, |numeric|, 1e-8)``.
    """
    if not isinstance(x, Tensor):
        raise TypeError("x must be a Tensor")
    saved_flag, saved_grad = x.requires_grad, x.grad
    x.requires_grad = True
    x.grad = None
    try:
        out = f(x)
        if out.data.size != 1:
            raise ShapeError(f"grad_check needs a scalar function, got shape {out.shape}")
        out.backward()
        analytic = np.zeros_like(x.data) if x.grad is None else x.grad.copy()

        flat = x.data.reshape(-1)
        coords = range(flat.size) if indices is None else indices
        worst = 0.0
        with no_grad():
            for i in coords:
                orig = flat[i]
                flat[i] = orig + step
                fp = float(f(x).data)
                flat[i] = orig - step
                fm = float(f(x).data)
                flat[i] = orig
                numeric = (fp - fm) / (2.0 * step)
                a = analytic.reshape(-1)[i]
                denom = max(abs(a), abs(numeric), 1e-8)
                worst = max(worst, abs(a - numeric) / denom)
        return worst
    finally:
        x.requires_grad, x.grad = saved_flag, saved_grad


def sample_indices(size, count, seed=0):
    """Seeded subset of flat coordinates for checks on large tensors."""
    if count >= size:
        return np.arange(size)
    return np.sort(np.random.default_rng(seed).choice(size, count, replace=False))
