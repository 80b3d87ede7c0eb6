"""Scalar-conditioning mechanisms: map concat, sinusoidal/FiLM, NCSNv2 rescale.

Strategy names form the CLI vocabulary: none | tmap | sigmamap | film |
ncsnv2 | dpi. The mechanisms here are the three baseline families; parameter
interpolation itself lives in dpi.py.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ShapeError, UsageError
from .tensor import (Tensor, channel_affine, concat, group_norm, linear, silu,
                     slice1d)

STRATEGIES = ("none", "tmap", "sigmamap", "film", "ncsnv2", "dpi")


@dataclass(frozen=True)
class ScalarContext:
    """Per-step view of the conditioning scalar.

    s is the raw scalar (diffusion timestep index, or flow time in [0,1]);
    map_norm is the value appended by map-concat strategies (t/T for
    diffusion, t for flow); sigma is the effective noise level (diffusion
    only); embed is the argument fed to the sinusoidal embedding.
    """

    s: float
    map_norm: float
    sigma: float | None
    embed: float


def scalar_map_concat(x: Tensor, value: float) -> Tensor:
    """Append one constant channel (images) or coordinate (points) = value."""
    nd = x.data.ndim
    if nd == 1:
        extra = Tensor(np.full(1, value))
        return concat([x, extra], axis=0)
    if nd == 2:  # batch of points [N, d]
        extra = Tensor(np.full((x.shape[0], 1), value))
        return concat([x, extra], axis=1)
    if nd == 3:  # [C, H, W]
        extra = Tensor(np.full((1,) + x.shape[1:], value))
        return concat([x, extra], axis=0)
    if nd == 4:  # [N, C, H, W]
        extra = Tensor(np.full((x.shape[0], 1) + x.shape[2:], value))
        return concat([x, extra], axis=1)
    raise ShapeError(f"scalar_map_concat: unsupported rank {nd}")


def sinusoidal_embedding(t: float, dim: int) -> Tensor:
    """Transformer-style embedding: sin(t * w_k) then cos(t * w_k),
    w_k = 10000^(-2k/dim)."""
    if dim % 2 != 0:
        raise UsageError(f"sinusoidal_embedding: dim must be even, got {dim}")
    k = np.arange(dim // 2)
    omega = 10000.0 ** (-2.0 * k / dim)
    return Tensor(np.concatenate([np.sin(t * omega), np.cos(t * omega)]))


def film_modulate(h: Tensor, emb: Tensor, mlp: dict[str, Tensor],
                  groups: int, gain: Tensor, shift: Tensor) -> Tensor:
    """FiLM over a normalization site: a(s) * group_norm(h) + b(s).

    mlp maps the embedding through one hidden layer to 2C values; the first C
    are a raw scale (a = 1 + raw, identity at zero init), the rest the shift.
    """
    ab = linear(silu(linear(emb, mlp["w0"], mlp["b0"])), mlp["w1"], mlp["b1"])
    c = h.shape[0] if h.data.ndim == 3 else h.shape[1]
    if ab.size != 2 * c:
        raise ShapeError(f"film_modulate: MLP emits {ab.size} values for {c} channels")
    scale = 1.0 + slice1d(ab, 0, c)
    offset = slice1d(ab, c, 2 * c)
    return channel_affine(group_norm(h, groups, gain, shift), scale, offset)


def ncsnv2_rescale(base_out: Tensor, sigma: float) -> Tensor:
    """Divide an unconditional network output by the noise level."""
    if sigma <= 0:
        raise DomainError(f"ncsnv2_rescale: sigma must be positive, got {sigma}")
    return base_out / float(sigma)
