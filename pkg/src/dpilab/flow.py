"""Flow matching on the affine path x_t = t x1 + (1-t) x0.

The path coefficients are beta_t = t and gamma_t = 1 - t, so the target
velocity is the constant x1 - x0 and sampling integrates the learned field
from t = 0 (noise) to t = 1 (data).
"""

from __future__ import annotations

import numpy as np

from ._alloc import tune_allocator
from .conditioning import ScalarContext
from .errors import ConfigError, ShapeError
from .networks import ConditionedModel
from .tensor import Tensor, tsum

Array = np.ndarray

# flow time lives in [0,1]; the sinusoidal embedding sees it stretched onto
# the same magnitude range as the 1000-step diffusion grid
EMBED_TIME_SCALE = 1000.0


def path_point(x1, x0, t: float) -> Array:
    """x_t = t * x1 + (1 - t) * x0."""
    x1d = x1.data if isinstance(x1, Tensor) else np.asarray(x1, dtype=np.float64)
    x0d = x0.data if isinstance(x0, Tensor) else np.asarray(x0, dtype=np.float64)
    if x1d.shape != x0d.shape:
        raise ShapeError(f"path_point: x1 {x1d.shape} vs x0 {x0d.shape}")
    if not 0.0 <= t <= 1.0:
        raise ShapeError(f"path_point: t must lie in [0,1], got {t}")
    return t * x1d + (1.0 - t) * x0d


def velocity_target(x1, x0) -> Array:
    """d x_t / dt along the affine path: x1 - x0, constant in t."""
    x1d = x1.data if isinstance(x1, Tensor) else np.asarray(x1, dtype=np.float64)
    x0d = x0.data if isinstance(x0, Tensor) else np.asarray(x0, dtype=np.float64)
    if x1d.shape != x0d.shape:
        raise ShapeError(f"velocity_target: x1 {x1d.shape} vs x0 {x0d.shape}")
    return x1d - x0d


def flow_context(t: float) -> ScalarContext:
    return ScalarContext(s=float(t), map_norm=float(t), sigma=None,
                         embed=EMBED_TIME_SCALE * float(t))


def predict_v(model: ConditionedModel, x: Array, t: float) -> Array:
    return model.forward(Tensor(x), flow_context(t)).data


def flow_loss(model: ConditionedModel, x1_batch: Array,
              rng: np.random.Generator, microbatch: int = 0) -> Tensor:
    """Mean-square velocity regression; one time draw per microbatch.

    Noise x0 is drawn independently of the data each call (independent
    coupling).
    """
    if model.strategy in ("ncsnv2", "sigmamap"):
        raise ConfigError(f"{model.strategy} conditioning is undefined for flow matching")
    n = x1_batch.shape[0]
    size = n if microbatch <= 0 else microbatch
    total = None
    for lo in range(0, n, size):
        hi = min(lo + size, n)
        t = float(rng.uniform())
        x0 = rng.standard_normal(x1_batch[lo:hi].shape)
        x_t = path_point(x1_batch[lo:hi], x0, t)
        v = velocity_target(x1_batch[lo:hi], x0)
        pred = model.forward(Tensor(x_t), flow_context(t), train_rng=rng)
        diff = pred - Tensor(v)
        part = tsum(diff * diff)
        total = part if total is None else total + part
    return total / float(x1_batch.size)


def ode_sample(model: ConditionedModel, n: int, shape: tuple[int, ...],
               rng: np.random.Generator, n_steps: int = 200,
               method: str = "euler", v_fn=None) -> Array:
    """Integrate the learned field from noise at t=0 to samples at t=1.

    Euler by default; Heun available for convergence checks. ``v_fn``
    overrides the model's velocity (analytic oracles in tests).
    """
    if n_steps < 1:
        raise ConfigError(f"ode_sample: n_steps must be >= 1, got {n_steps}")
    if method not in ("euler", "heun"):
        raise ConfigError(f"ode_sample: unknown method {method!r}")
    tune_allocator()
    field = v_fn if v_fn is not None else (lambda x, t: predict_v(model, x, t))
    x = rng.standard_normal((n,) + tuple(shape))
    dt = 1.0 / n_steps
    for k in range(n_steps):
        t = k * dt
        v1 = field(x, t)
        if method == "euler":
            x = x + dt * v1
        else:
            v2 = field(x + dt * v1, min(t + dt, 1.0))
            x = x + dt * 0.5 * (v1 + v2)
    return x
