"""Base architectures and the conditioned-model wrapper.

Both networks are parameter-functional: architecture objects are stateless
and forward takes an explicit name->Tensor dict, which is what makes
parameter blending a pure input transformation.

* CondMLP: silu MLP for 2-d point data, no normalization layers (so FiLM is
  rejected for it).
* TinyUNet: two resolution levels, one residual block per level built from
  group_norm(4) + silu + conv3x3, nearest-neighbor upsampling, and a skip
  connection across the bottleneck. Final conv zero-initialized so the
  initial prediction is 0.
"""

from __future__ import annotations

import numpy as np

from .conditioning import (ScalarContext, film_modulate, scalar_map_concat,
                           sinusoidal_embedding)
from .dpi import DualParams, blend_parameters
from .errors import ConfigError, UsageError
from .tensor import (Tensor, avg_pool2, concat, conv2d, group_norm, linear,
                     silu, upsample_nearest2)

ParamDict = dict[str, Tensor]

PARAM_KINDS = ("conv_weight", "conv_bias", "linear_weight", "linear_bias", "norm_param")


def _uniform(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = np.sqrt(1.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


def _dropout(x: Tensor, p: float, rng: np.random.Generator | None) -> Tensor:
    if p <= 0.0 or rng is None:
        return x
    mask = (rng.random(x.shape) >= p) / (1.0 - p)
    return x * Tensor(mask)


class CondMLP:
    """MLP for point data: in_dim -> hidden... -> out_dim with silu."""

    has_norm_layers = False

    def __init__(self, in_dim: int = 2, hidden: tuple[int, ...] = (128, 128, 128),
                 out_dim: int = 2):
        self.in_dim = in_dim
        self.hidden = tuple(hidden)
        self.out_dim = out_dim
        self.dims = (in_dim,) + self.hidden + (out_dim,)

    def manifest(self) -> list[tuple[str, tuple[int, ...], str]]:
        rows = []
        for i in range(len(self.dims) - 1):
            rows.append((f"l{i}.w", (self.dims[i], self.dims[i + 1]), "linear_weight"))
            rows.append((f"l{i}.b", (self.dims[i + 1],), "linear_bias"))
        return rows

    def init_params(self, rng: np.random.Generator) -> ParamDict:
        params: ParamDict = {}
        last = len(self.dims) - 2
        for i in range(len(self.dims) - 1):
            k, n = self.dims[i], self.dims[i + 1]
            w = np.zeros((k, n)) if i == last else _uniform(rng, (k, n), k)
            params[f"l{i}.w"] = Tensor(w, grad_tracked=True)
            params[f"l{i}.b"] = Tensor(np.zeros(n), grad_tracked=True)
        return params

    def forward(self, params: ParamDict, x: Tensor, film=None,
                dropout_p: float = 0.0, drop_rng=None) -> Tensor:
        if film is not None:
            raise UsageError("CondMLP has no normalization layers; FiLM not supported")
        h = x
        last = len(self.dims) - 2
        for i in range(last):
            h = silu(linear(h, params[f"l{i}.w"], params[f"l{i}.b"]))
            h = _dropout(h, dropout_p, drop_rng)
        return linear(h, params[f"l{last}.w"], params[f"l{last}.b"])

    def flops(self, batch: int = 1) -> int:
        per = 0
        for i in range(len(self.dims) - 1):
            per += (2 * self.dims[i] + 1) * self.dims[i + 1]
        per += 5 * sum(self.hidden)  # silu
        return per * batch


class TinyUNet:
    """Small two-level U-Net for [C, H, W] images (H, W even)."""

    has_norm_layers = True

    def __init__(self, in_ch: int = 1, base_width: int = 16, out_ch: int | None = None,
                 groups: int = 4):
        self.in_ch = in_ch
        self.w1 = base_width
        self.w2 = 2 * base_width
        self.out_ch = out_ch if out_ch is not None else in_ch
        self.groups = groups

    def norm_sites(self) -> list[tuple[str, int]]:
        """Normalization layers as (site name, channel count); FiLM hooks here."""
        return [("rb1", self.w1), ("rb2", self.w2), ("head", 2 * self.w1)]

    def manifest(self) -> list[tuple[str, tuple[int, ...], str]]:
        w1, w2 = self.w1, self.w2
        rows = [
            ("stem.w", (w1, self.in_ch, 3, 3), "conv_weight"),
            ("stem.b", (w1,), "conv_bias"),
            ("rb1.gn_gain", (w1,), "norm_param"),
            ("rb1.gn_shift", (w1,), "norm_param"),
            ("rb1.w", (w1, w1, 3, 3), "conv_weight"),
            ("rb1.b", (w1,), "conv_bias"),
            ("lift.w", (w2, w1, 3, 3), "conv_weight"),
            ("lift.b", (w2,), "conv_bias"),
            ("rb2.gn_gain", (w2,), "norm_param"),
            ("rb2.gn_shift", (w2,), "norm_param"),
            ("rb2.w", (w2, w2, 3, 3), "conv_weight"),
            ("rb2.b", (w2,), "conv_bias"),
            ("proj.w", (w1, w2, 3, 3), "conv_weight"),
            ("proj.b", (w1,), "conv_bias"),
            ("head.gn_gain", (2 * w1,), "norm_param"),
            ("head.gn_shift", (2 * w1,), "norm_param"),
            ("head.w", (self.out_ch, 2 * w1, 3, 3), "conv_weight"),
            ("head.b", (self.out_ch,), "conv_bias"),
        ]
        return rows

    def init_params(self, rng: np.random.Generator) -> ParamDict:
        params: ParamDict = {}
        for name, shape, kind in self.manifest():
            if name == "head.w" or name == "head.b":
                val = np.zeros(shape)
            elif kind == "conv_weight":
                val = _uniform(rng, shape, shape[1] * 9)
            elif kind == "conv_bias":
                val = np.zeros(shape)
            elif name.endswith("gn_gain"):
                val = np.ones(shape)
            else:
                val = np.zeros(shape)
            params[name] = Tensor(val, grad_tracked=True)
        return params

    def _norm(self, h: Tensor, site: str, params: ParamDict, film) -> Tensor:
        gain, shift = params[f"{site}.gn_gain"], params[f"{site}.gn_shift"]
        if film is None:
            return group_norm(h, self.groups, gain, shift)
        emb, mlps = film
        return film_modulate(h, emb, mlps[site], self.groups, gain, shift)

    def forward(self, params: ParamDict, x: Tensor, film=None,
                dropout_p: float = 0.0, drop_rng=None) -> Tensor:
        ch_axis = 0 if x.data.ndim == 3 else 1
        h0 = conv2d(x, params["stem.w"], params["stem.b"])
        a = _dropout(silu(self._norm(h0, "rb1", params, film)), dropout_p, drop_rng)
        h1 = h0 + conv2d(a, params["rb1.w"], params["rb1.b"])
        q0 = conv2d(avg_pool2(h1), params["lift.w"], params["lift.b"])
        b = _dropout(silu(self._norm(q0, "rb2", params, film)), dropout_p, drop_rng)
        q1 = q0 + conv2d(b, params["rb2.w"], params["rb2.b"])
        u = conv2d(upsample_nearest2(q1), params["proj.w"], params["proj.b"])
        z = concat([h1, u], axis=ch_axis)
        c = silu(self._norm(z, "head", params, film))
        return conv2d(c, params["head.w"], params["head.b"])

    def flops(self, hw: tuple[int, int] = (8, 8), batch: int = 1) -> int:
        h, w = hw
        w1, w2 = self.w1, self.w2

        def conv_f(ci, co, hh, ww):
            return (2 * ci * 9 + 1) * co * hh * ww

        def gn_f(c, hh, ww):
            return 8 * c * hh * ww

        per = conv_f(self.in_ch, w1, h, w)
        per += gn_f(w1, h, w) + 5 * w1 * h * w + conv_f(w1, w1, h, w) + w1 * h * w
        per += w1 * h * w  # pool
        per += conv_f(w1, w2, h // 2, w // 2)
        per += gn_f(w2, h // 2, w // 2) + 5 * w2 * (h // 2) * (w // 2)
        per += conv_f(w2, w2, h // 2, w // 2) + w2 * (h // 2) * (w // 2)
        per += w2 * h * w  # upsample
        per += conv_f(w2, w1, h, w)
        per += gn_f(2 * w1, h, w) + 5 * 2 * w1 * h * w
        per += conv_f(2 * w1, self.out_ch, h, w)
        return per * batch


def param_manifest(net) -> list[tuple[str, tuple[int, ...], str]]:
    """Deterministic enumeration of a base network's learnable tensors."""
    return net.manifest()


class ConditionedModel:
    """A base network plus exactly one scalar-conditioning strategy."""

    def __init__(self, net, strategy: str, base_params: ParamDict | None = None,
                 dual: DualParams | None = None, cond_params: dict | None = None,
                 embed_dim: int = 64, dropout_p: float = 0.0):
        if strategy == "dpi":
            if dual is None:
                raise ConfigError("dpi strategy needs DualParams")
        elif base_params is None:
            raise ConfigError(f"strategy {strategy!r} needs base parameters")
        if strategy == "film" and not net.has_norm_layers:
            raise ConfigError("film conditioning requires normalization layers")
        if strategy == "film" and cond_params is None:
            raise ConfigError("film strategy needs its embedding MLP parameters")
        self.net = net
        self.strategy = strategy
        self.base_params = base_params
        self.dual = dual
        self.cond_params = cond_params
        self.embed_dim = embed_dim
        self.dropout_p = dropout_p

    def parameters(self) -> ParamDict:
        """All learnable tensors under canonical checkpoint names."""
        out: ParamDict = {}
        if self.strategy == "dpi":
            for name in self.dual.order:
                if name in self.dual.theta0:
                    out[f"theta0.{name}"] = self.dual.theta0[name]
                    out[f"theta1.{name}"] = self.dual.theta1[name]
                else:
                    out[f"theta.{name}"] = self.dual.shared[name]
            if self.dual.interpolant.phi is not None:
                out["phi"] = self.dual.interpolant.phi
            return out
        for name, t in self.base_params.items():
            out[f"theta.{name}"] = t
        if self.cond_params:
            for site, mlp in self.cond_params.items():
                for key, t in mlp.items():
                    out[f"cond.{site}.{key}"] = t
        return out

    def forward(self, x: Tensor, ctx: ScalarContext, train_rng=None) -> Tensor:
        """Raw network output under this strategy's conditioning.

        For ncsnv2 this is the unconditional output (the caller applies the
        1/sigma rescaling and coordinate changes); for every other strategy it
        is the prediction itself.
        """
        p = self.dropout_p if train_rng is not None else 0.0
        if self.strategy == "dpi":
            view = blend_parameters(self.dual, ctx.s)
            return self.net.forward(view.params, x, dropout_p=p, drop_rng=train_rng)
        if self.strategy in ("tmap", "sigmamap"):
            value = ctx.map_norm if self.strategy == "tmap" else ctx.sigma
            if value is None:
                raise UsageError(f"{self.strategy} conditioning needs a noise level")
            xin = scalar_map_concat(x, float(value))
            return self.net.forward(self.base_params, xin, dropout_p=p, drop_rng=train_rng)
        if self.strategy == "film":
            emb = sinusoidal_embedding(ctx.embed, self.embed_dim)
            return self.net.forward(self.base_params, x, film=(emb, self.cond_params),
                                    dropout_p=p, drop_rng=train_rng)
        return self.net.forward(self.base_params, x, dropout_p=p, drop_rng=train_rng)

    def forward_flops(self, data_shape, batch: int = 1) -> int:
        if isinstance(self.net, TinyUNet):
            flops = self.net.flops(data_shape[-2:], batch)
        else:
            flops = self.net.flops(batch)
        if self.strategy == "film":
            e = self.embed_dim
            for _, c in self.net.norm_sites():
                flops += (2 * e + 1) * 2 * e + 5 * 2 * e + (2 * 2 * e + 1) * 2 * c
        return flops


def make_film_params(net, embed_dim: int, rng: np.random.Generator) -> dict:
    """One small MLP per normalization site: embed -> 2*embed -> 2*channels.

    Output layer zero-initialized so modulation starts as the identity.
    """
    mlps = {}
    hidden = 2 * embed_dim
    for site, channels in net.norm_sites():
        mlps[site] = {
            "w0": Tensor(_uniform(rng, (embed_dim, hidden), embed_dim), grad_tracked=True),
            "b0": Tensor(np.zeros(hidden), grad_tracked=True),
            "w1": Tensor(np.zeros((hidden, 2 * channels)), grad_tracked=True),
            "b1": Tensor(np.zeros(2 * channels), grad_tracked=True),
        }
    return mlps
