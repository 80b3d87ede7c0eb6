"""AdamW with decoupled weight decay, parameter groups, and EMA shadows."""

from __future__ import annotations

import numpy as np

from .errors import ShapeError
from .tensor import Tensor

Array = np.ndarray


def adamw_step(param: Array, grad: Array, m: Array, v: Array, step: int,
               lr: float, weight_decay: float, beta1: float = 0.9,
               beta2: float = 0.999, eps: float = 1e-8) -> None:
    """One in-place AdamW update on raw arrays.

    m <- b1 m + (1-b1) g; v <- b2 v + (1-b2) g^2; bias-corrected; the decay
    term is decoupled and uses the pre-update parameter value.
    """
    if not (param.shape == grad.shape == m.shape == v.shape):
        raise ShapeError("adamw_step: parameter/gradient/moment shapes differ")
    m *= beta1
    m += (1.0 - beta1) * grad
    v *= beta2
    v += (1.0 - beta2) * (grad * grad)
    denom = np.sqrt(v / (1.0 - beta2 ** step))
    denom += eps
    update = m * (lr / (1.0 - beta1 ** step))
    update /= denom
    if weight_decay != 0.0:
        param *= 1.0 - lr * weight_decay
    param -= update


def ema_update(shadow: Array, live: Array, decay: float) -> None:
    """shadow <- decay * shadow + (1 - decay) * live, in place."""
    if shadow.shape != live.shape:
        raise ShapeError("ema_update: shadow/live shapes differ")
    shadow *= decay
    shadow += (1.0 - decay) * live


class AdamW:
    """AdamW over a named parameter dict with per-name learning rates.

    ``lr_overrides`` maps parameter names to (lr, weight_decay) pairs; the
    interpolation logits get their own rate and are exempt from decay.
    """

    def __init__(self, params: dict[str, Tensor], lr: float, weight_decay: float = 0.0,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8,
                 lr_overrides: dict[str, tuple[float, float]] | None = None):
        self.lr = lr
        self.weight_decay = weight_decay
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.lr_overrides = dict(lr_overrides or {})
        self.step_count = 0
        self.m = {name: np.zeros_like(t.data) for name, t in params.items()}
        self.v = {name: np.zeros_like(t.data) for name, t in params.items()}

    def step(self, params: dict[str, Tensor]) -> None:
        self.step_count += 1
        for name, t in params.items():
            if t.grad is None:
                continue
            lr, wd = self.lr_overrides.get(name, (self.lr, self.weight_decay))
            adamw_step(t.data, t.grad, self.m[name], self.v[name], self.step_count,
                       lr, wd, self.beta1, self.beta2, self.eps)

    def zero_grad(self, params: dict[str, Tensor]) -> None:
        for t in params.values():
            t.grad = None


class EMA:
    """Exponential moving average shadow of a named parameter dict."""

    def __init__(self, params: dict[str, Tensor], decay: float):
        self.decay = decay
        self.shadow = {name: t.data.copy() for name, t in params.items()}

    def update(self, params: dict[str, Tensor]) -> None:
        for name, t in params.items():
            ema_update(self.shadow[name], t.data, self.decay)
