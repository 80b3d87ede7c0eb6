"""Deep parameter interpolation: two parameter sets blended by lambda(s).

A scalar-conditioned network is obtained from an unconditioned base network
f(theta, x) by keeping two full parameter sets theta0/theta1 for every tensor
kind in scope and evaluating f with (1 - lambda(s)) * theta0 + lambda(s) * theta1.
Out-of-scope tensors are stored once and passed through unblended.
"""

from __future__ import annotations

from typing import Callable, Iterable

import numpy as np

from .interpolant import MonotoneInterpolant
from .tensor import Tensor, scalar_lerp

ParamDict = dict[str, Tensor]


class BlendedView:
    """Parameters blended for one scalar value.

    Holds tape links to theta0, theta1 and phi; valid only for the forward
    pass it was built for.
    """

    __slots__ = ("params", "lam", "s")

    def __init__(self, params: ParamDict, lam: Tensor, s: float):
        self.params = params
        self.lam = lam
        self.s = s


class DualParams:
    """Paired parameter sets plus the interpolation scope and its lambda."""

    def __init__(self, theta0: ParamDict, theta1: ParamDict, shared: ParamDict,
                 kinds: dict[str, str], order: list[str],
                 scope: frozenset[str], interpolant: MonotoneInterpolant):
        if set(theta0) != set(theta1):
            raise ValueError("theta0 and theta1 must hold identical names")
        for name in theta0:
            if theta0[name].shape != theta1[name].shape:
                raise ValueError(f"shape mismatch between parameter sets at {name!r}")
        self.theta0 = theta0
        self.theta1 = theta1
        self.shared = shared
        self.kinds = kinds
        self.order = order
        self.scope = frozenset(scope)
        self.interpolant = interpolant

    def in_scope_size(self) -> int:
        return sum(t.size for t in self.theta0.values())

    def shared_size(self) -> int:
        return sum(t.size for t in self.shared.values())


def init_dual(init_fn: Callable[[np.random.Generator], ParamDict],
              kinds: dict[str, str], order: list[str], scope: Iterable[str],
              interpolant: MonotoneInterpolant, scheme: str = "independent",
              seed: int = 0) -> DualParams:
    """Build a DualParams pair from a base-network initializer.

    ``independent`` draws theta1 from the same init distribution with a
    different seed; ``clone`` copies theta0 exactly.
    """
    if scheme not in ("independent", "clone"):
        raise ValueError(f"unknown dual init scheme {scheme!r}")
    scope = frozenset(scope)
    base = init_fn(np.random.default_rng([seed, 0]))
    if scheme == "clone":
        second = {name: Tensor(t.data.copy(), grad_tracked=True) for name, t in base.items()}
    else:
        second = init_fn(np.random.default_rng([seed, 1]))
    theta0, theta1, shared = {}, {}, {}
    for name in order:
        if kinds[name] in scope:
            theta0[name] = base[name]
            theta1[name] = second[name]
        else:
            shared[name] = base[name]
    return DualParams(theta0, theta1, shared, dict(kinds), list(order), scope, interpolant)


def blend_parameters(dual: DualParams, s: float) -> BlendedView:
    """(1 - lambda(s)) * theta0 + lambda(s) * theta1 for in-scope tensors."""
    lam = dual.interpolant.lambda_eval(s)
    params: ParamDict = {}
    for name in dual.order:
        if name in dual.theta0:
            params[name] = scalar_lerp(dual.theta0[name], dual.theta1[name], lam)
        else:
            params[name] = dual.shared[name]
    return BlendedView(params, lam, s)


def dpi_forward(dual: DualParams, base_net: Callable[[ParamDict, Tensor], Tensor],
                x: Tensor, s: float) -> Tensor:
    """Run the base network on parameters blended at scalar s."""
    return base_net(blend_parameters(dual, s).params, x)


def count_overhead(dual: DualParams, forward_flops: float) -> dict[str, float]:
    """Parameter and blend-cost accounting for one forward pass.

    Blending costs 2 multiplies + 1 add per in-scope element and happens once
    per microbatch, so ``forward_flops`` should be the cost of the forward
    pass the blend is amortized over (e.g. a full training batch).
    """
    in_scope = dual.in_scope_size()
    shared = dual.shared_size()
    phi_len = dual.interpolant.n_logits
    if in_scope == 0:
        param_count = shared
        blend_flops = 0
    else:
        param_count = 2 * in_scope + shared + phi_len
        blend_flops = 3 * in_scope
    return {
        "param_count": param_count,
        "base_param_count": in_scope + shared,
        "phi_count": phi_len,
        "blend_flops": blend_flops,
        "forward_flops": forward_flops,
        "blend_ratio": blend_flops / forward_flops if forward_flops else float("nan"),
    }
