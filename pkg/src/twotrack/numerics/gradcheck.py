"""Finite-difference verification of analytic gradients."""

from __future__ import annotations

import numpy as np

from ..errors import NumericError
from .tensor import Tensor


def _relative(analytic, numeric, floor=0.0):
    scale = max(np.abs(analytic).max(initial=0.0), np.abs(numeric).max(initial=0.0), floor)
    if scale == 0.0:
        return 0.0
    return float(np.abs(analytic - numeric).max() / scale)


def _checked(value):
    v = float(np.asarray(value))
    if not np.isfinite(v):
        raise NumericError("non-finite function value during gradient check")
    return v


def grad_check(function, x, epsilon=1e-6):
    """Worst relative discrepancy between backprop and central differences.

    ``function`` maps a Tensor to a scalar Tensor. The error is scaled by the
    largest gradient magnitude so near-zero entries do not dominate.
    """
    data = np.array(x.data if isinstance(x, Tensor) else x, dtype=np.float64)
    leaf = Tensor(data.copy(), requires_grad=True)
    out = function(leaf)
    _checked(out.data)
    if out.requires_grad:
        out.backward()
    analytic = leaf.grad if leaf.grad is not None else np.zeros_like(data)
    if not np.all(np.isfinite(analytic)):
        raise NumericError("non-finite analytic gradient")
    numeric = np.zeros_like(data)
    flat = data.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + epsilon
        hi = _checked(function(Tensor(data.copy())).data)
        flat[i] = orig - epsilon
        lo = _checked(function(Tensor(data.copy())).data)
        flat[i] = orig
        numeric.reshape(-1)[i] = (hi - lo) / (2 * epsilon)
    return _relative(analytic, numeric)


def grad_check_parameters(loss_fn, named_params, epsilon=1e-5, max_entries=None, rng=None,
                          floor=1e-3):
    """Check d(loss)/d(param) for every named parameter.

    Parameters must already hold float64 data. With ``max_entries`` a random
    subset of each parameter's entries is perturbed. Each parameter's error
    is scaled by its own gradient magnitude, but never by less than
    ``floor`` times the largest gradient entry of the whole set: components
    that small sit below finite-difference resolution. Returns a dict of
    per-parameter relative errors.
    """
    named_params = dict(named_params)
    for p in named_params.values():
        p.grad = None
    loss = loss_fn()
    _checked(loss.data)
    loss.backward()
    rng = np.random.default_rng(0) if rng is None else rng
    global_scale = max((np.abs(p.grad).max(initial=0.0) for p in named_params.values()
                        if p.grad is not None), default=0.0)
    errors = {}
    for name, p in named_params.items():
        analytic = p.grad if p.grad is not None else np.zeros_like(p.data)
        flat = p.data.reshape(-1)
        idx = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            idx = rng.choice(flat.size, size=max_entries, replace=False)
        numeric = np.empty(idx.size)
        for j, i in enumerate(idx):
            orig = flat[i]
            flat[i] = orig + epsilon
            hi = _checked(loss_fn().data)
            flat[i] = orig - epsilon
            lo = _checked(loss_fn().data)
            flat[i] = orig
            numeric[j] = (hi - lo) / (2 * epsilon)
        errors[name] = _relative(analytic.reshape(-1)[idx], numeric, floor * global_scale)
    return errors
