"""Variance-preserving diffusion: schedule, corruption, losses, DDIM sampling.

Forward corruption follows x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps with
abar the running product of (1 - beta_t) over a linear beta schedule, and
sigma_t = sqrt((1 - abar_t) / abar_t) is the equivalent additive noise level.
Timesteps are 0-indexed over {0, ..., T-1} and abar_0 = 1 - beta_0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._alloc import tune_allocator
from .conditioning import ScalarContext
from .errors import ConfigError, ShapeError
from .networks import ConditionedModel
from .tensor import Tape, Tensor, tsum

Array = np.ndarray


@dataclass(frozen=True)
class VPSchedule:
    T: int
    beta: Array        # per-step variances, strictly increasing
    alpha_bar: Array   # cumulative products of (1 - beta), strictly decreasing
    sigma: Array       # sqrt((1 - abar) / abar), strictly increasing


def make_schedule(T: int = 1000, beta_min: float = 1e-4, beta_max: float = 0.02) -> VPSchedule:
    if T < 1:
        raise ConfigError(f"schedule needs T >= 1, got {T}")
    if not 0.0 < beta_min <= beta_max < 1.0:
        raise ConfigError(f"need 0 < beta_min <= beta_max < 1, got [{beta_min}, {beta_max}]")
    if T == 1:
        beta = np.array([beta_min])
    else:
        beta = beta_min + (np.arange(T) / (T - 1)) * (beta_max - beta_min)
    alpha_bar = np.cumprod(1.0 - beta)
    sigma = np.sqrt((1.0 - alpha_bar) / alpha_bar)
    return VPSchedule(T=T, beta=beta, alpha_bar=alpha_bar, sigma=sigma)


def _data(x) -> Array:
    return x.data if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)


def corrupt(x0, t: int, eps, sched: VPSchedule):
    """x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps."""
    x0d, epsd = _data(x0), _data(eps)
    if x0d.shape != epsd.shape:
        raise ShapeError(f"corrupt: x0 {x0d.shape} vs eps {epsd.shape}")
    ab = sched.alpha_bar[t]
    out = np.sqrt(ab) * x0d + np.sqrt(1.0 - ab) * epsd
    return Tensor(out) if isinstance(x0, Tensor) else out


def tweedie_denoise(x_t, eps_hat, t: int, sched: VPSchedule) -> Array:
    """x0_hat = (x_t - sqrt(1 - abar_t) eps_hat) / sqrt(abar_t)."""
    ab = sched.alpha_bar[t]
    return (_data(x_t) - np.sqrt(1.0 - ab) * _data(eps_hat)) / np.sqrt(ab)


def score_from_eps(eps_hat, t: int, sched: VPSchedule) -> Array:
    """Score of the noisy marginal in x_t coordinates: -eps_hat / sqrt(1 - abar_t)."""
    return -_data(eps_hat) / np.sqrt(1.0 - sched.alpha_bar[t])


def diffusion_context(t: int, sched: VPSchedule) -> ScalarContext:
    return ScalarContext(s=float(t), map_norm=t / sched.T,
                         sigma=float(sched.sigma[t]), embed=float(t))


def predict_eps(model: ConditionedModel, x_t: Array, t: int, sched: VPSchedule) -> Array:
    """Noise prediction for any strategy, including the NCSNv2 score route.

    NCSNv2 models see the rescaled variance-exploding coordinate
    xbar = x_t / sqrt(abar) and predict stilde with score = stilde / sigma,
    which converts back as eps_hat = -stilde.
    """
    ctx = diffusion_context(t, sched)
    if model.strategy == "ncsnv2":
        xbar = x_t / np.sqrt(sched.alpha_bar[t])
        return -model.forward(Tensor(xbar), ctx).data
    return model.forward(Tensor(x_t), ctx).data


def _chunks(n: int, size: int):
    for lo in range(0, n, size):
        yield lo, min(lo + size, n)


def epsilon_loss(model: ConditionedModel, x0_batch: Array, sched: VPSchedule,
                 rng: np.random.Generator, microbatch: int = 0) -> Tensor:
    """Mean-square noise-prediction error; one timestep per microbatch."""
    if model.strategy == "ncsnv2":
        raise ConfigError("ncsnv2 models train with ncsnv2_loss, not epsilon_loss")
    n = x0_batch.shape[0]
    size = n if microbatch <= 0 else microbatch
    total = None
    for lo, hi in _chunks(n, size):
        t = int(rng.integers(sched.T))
        eps = rng.standard_normal(x0_batch[lo:hi].shape)
        x_t = corrupt(x0_batch[lo:hi], t, eps, sched)
        pred = model.forward(Tensor(x_t), diffusion_context(t, sched), train_rng=rng)
        diff = pred - Tensor(eps)
        part = tsum(diff * diff)
        total = part if total is None else total + part
    return total / float(x0_batch.size)


def ncsnv2_loss(model: ConditionedModel, x0_batch: Array, sched: VPSchedule,
                rng: np.random.Generator, microbatch: int = 0) -> Tensor:
    """Sigma^2-weighted denoising score matching in rescaled VE coordinates.

    xbar_t = x0 + sigma_t eps; the target score is -eps / sigma_t, and with
    the parameterization s_theta = stilde / sigma the weighted residual
    sigma * s_theta + eps reduces to stilde + eps.
    """
    if model.strategy != "ncsnv2":
        raise ConfigError("ncsnv2_loss requires an ncsnv2-strategy model")
    n = x0_batch.shape[0]
    size = n if microbatch <= 0 else microbatch
    total = None
    for lo, hi in _chunks(n, size):
        t = int(rng.integers(sched.T))
        eps = rng.standard_normal(x0_batch[lo:hi].shape)
        xbar = x0_batch[lo:hi] + sched.sigma[t] * eps
        stilde = model.forward(Tensor(xbar), diffusion_context(t, sched), train_rng=rng)
        resid = stilde + Tensor(eps)
        part = tsum(resid * resid)
        total = part if total is None else total + part
    return total / float(x0_batch.size)


def ddim_timesteps(T: int, n_steps: int) -> np.ndarray:
    """Uniform integer stride over [0, T-1], both endpoints included."""
    if not 1 <= n_steps <= T:
        raise ConfigError(f"need 1 <= n_steps <= T, got {n_steps} vs T={T}")
    if n_steps == 1:
        return np.array([T - 1])
    return np.unique(np.round(np.linspace(0, T - 1, n_steps)).astype(int))


def ddim_sample(model: ConditionedModel, sched: VPSchedule, n: int,
                shape: tuple[int, ...], rng: np.random.Generator,
                n_steps: int = 200,
                eps_fn=None) -> Array:
    """Deterministic DDIM (eta = 0) over a strided timestep subsequence.

    Walks x from pure noise at tau_max down the subsequence via predicted-x0
    reconstruction, finishing with a Tweedie denoise at tau_min. ``eps_fn``
    overrides the model's noise prediction (analytic-score oracles in tests).
    """
    tune_allocator()
    taus = ddim_timesteps(sched.T, n_steps)
    predict = eps_fn if eps_fn is not None else (
        lambda x, t: predict_eps(model, x, t, sched))
    x = rng.standard_normal((n,) + tuple(shape))
    for k in range(len(taus) - 1, 0, -1):
        t, t_prev = int(taus[k]), int(taus[k - 1])
        eps_hat = predict(x, t)
        x0_hat = tweedie_denoise(x, eps_hat, t, sched)
        ab_prev = sched.alpha_bar[t_prev]
        x = np.sqrt(ab_prev) * x0_hat + np.sqrt(1.0 - ab_prev) * eps_hat
    eps_hat = predict(x, int(taus[0]))
    return tweedie_denoise(x, eps_hat, int(taus[0]), sched)
