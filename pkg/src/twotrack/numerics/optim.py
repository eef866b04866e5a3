"""AdamW with decoupled weight decay, and the cosine learning-rate schedule."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import DimensionError, RangeError

BETA1 = 0.9
BETA2 = 0.99
WEIGHT_DECAY = 1e-4
BASE_LR = 1e-4
FINETUNE_LR = 5e-5


@dataclass
class OptimizerState:
    lr: float = BASE_LR
    beta1: float = BETA1
    beta2: float = BETA2
    weight_decay: float = WEIGHT_DECAY
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adamw_step(params, grads, state, lr=None):
    """Apply one AdamW update in place.

    ``params`` and ``grads`` map names to arrays; names whose gradient is
    None are skipped (frozen). Returns ``(params, state)``.
    """
    lr = state.lr if lr is None else lr
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            continue
        if g.shape != p.shape:
            raise DimensionError(f"gradient for {name} has shape {g.shape}, parameter {p.shape}")
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        if lr == 0.0:
            continue
        p *= 1.0 - lr * state.weight_decay
        p -= (lr * (m / c1) / (np.sqrt(v / c2) + state.eps)).astype(p.dtype)
    return params, state


class AdamW:
    """Binds named module parameters to an :class:`OptimizerState`."""

    def __init__(self, named_params, lr=BASE_LR, beta1=BETA1, beta2=BETA2,
                 weight_decay=WEIGHT_DECAY, eps=1e-8):
        self.params = dict(named_params)
        self.state = OptimizerState(lr=lr, beta1=beta1, beta2=beta2,
                                    weight_decay=weight_decay, eps=eps)

    def step(self, lr=None):
        arrays = {n: p.data for n, p in self.params.items()}
        grads = {n: (p.grad if p.requires_grad else None) for n, p in self.params.items()}
        adamw_step(arrays, grads, self.state, lr)

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None


def cosine_lr(step, total_steps, base_lr=BASE_LR):
    if step < 0 or step > total_steps:
        raise RangeError(f"step {step} outside [0, {total_steps}]")
    if total_steps == 0:
        return base_lr
    return base_lr * (1.0 + math.cos(math.pi * step / total_steps)) / 2.0


def clip_grad_norm(params, max_norm):
    grads = [p.grad for p in params if p.grad is not None]
    if not grads:
        return 0.0
    total = math.sqrt(sum(float((g.astype(np.float64) ** 2).sum()) for g in grads))
    if total > max_norm > 0:
        scale = max_norm / (total + 1e-12)
        for g in grads:
            g *= scale
    return total
