"""VP diffusion: schedule anchors, corruption algebra, losses, DDIM."""

import numpy as np
import pytest

from dpilab.data import make_dataset
from dpilab.diffusion import (corrupt, ddim_sample, ddim_timesteps,
                              diffusion_context, epsilon_loss, make_schedule,
                              ncsnv2_loss, predict_eps, score_from_eps,
                              tweedie_denoise)
from dpilab.errors import ConfigError, ShapeError
from dpilab.tensor import Tensor

TABLE_ANCHORS = {0: 0.01, 333: 1.46, 666: 9.49, 999: 157.0}


class StubModel:
    """Closed-form prediction stand-in with the ConditionedModel interface."""

    def __init__(self, fn, strategy="none"):
        self.fn = fn
        self.strategy = strategy

    def forward(self, x, ctx, train_rng=None):
        return Tensor(self.fn(x.data, ctx))


def test_schedule_reproduces_reference_sigmas():
    sched = make_schedule(1000, 1e-4, 0.02)
    for t, ref in TABLE_ANCHORS.items():
        assert abs(sched.sigma[t] - ref) / ref < 0.02


def test_schedule_single_step_closed_form():
    c = 0.3
    sched = make_schedule(1, c, c)
    assert abs(sched.alpha_bar[0] - (1 - c)) < 1e-15
    assert abs(sched.sigma[0] - np.sqrt(c / (1 - c))) < 1e-15


def test_schedule_monotonicity():
    sched = make_schedule(500, 1e-4, 0.05)
    assert np.all(np.diff(sched.alpha_bar) < 0)
    assert np.all(np.diff(sched.sigma) > 0)
    assert np.all((sched.beta > 0) & (sched.beta < 1))


def test_schedule_rejects_bad_range():
    with pytest.raises(ConfigError):
        make_schedule(10, 0.0, 0.02)
    with pytest.raises(ConfigError):
        make_schedule(10, 0.1, 0.02)
    with pytest.raises(ConfigError):
        make_schedule(10, 0.1, 1.0)


def test_corrupt_direct_arithmetic():
    sched = make_schedule(1, 0.75, 0.75)  # abar = 0.25
    out = corrupt(np.array([1.0]), 0, np.array([2.0]), sched)
    assert abs(out[0] - (0.5 + np.sqrt(0.75) * 2.0)) < 1e-12


def test_corrupt_no_noise_limit():
    sched = make_schedule(1, 1e-12, 1e-12)
    x0 = np.array([0.3, -1.7])
    out = corrupt(x0, 0, np.array([5.0, 5.0]), sched)
    assert np.max(np.abs(out - x0)) < 1e-5


def test_corrupt_shape_mismatch():
    sched = make_schedule(10, 1e-4, 0.02)
    with pytest.raises(ShapeError):
        corrupt(np.zeros(3), 2, np.zeros(4), sched)


def test_corrupt_variance_monte_carlo(rng):
    sched = make_schedule(1000, 1e-4, 0.02)
    t = 420
    eps = rng.standard_normal(100_000)
    x_t = corrupt(np.zeros(100_000), t, eps, sched)
    target = 1.0 - sched.alpha_bar[t]
    assert abs(x_t.var() - target) / target < 0.02


def test_tweedie_inverts_corrupt(rng):
    sched = make_schedule(1000, 1e-4, 0.02)
    x0 = rng.standard_normal((50, 2))
    for t in (0, 123, 555, 999):
        eps = rng.standard_normal((50, 2))
        x_t = corrupt(x0, t, eps, sched)
        assert np.max(np.abs(tweedie_denoise(x_t, eps, t, sched) - x0)) < 1e-10


def test_tweedie_zero_eps():
    sched = make_schedule(100, 1e-4, 0.02)
    x_t = np.array([2.0, -4.0])
    out = tweedie_denoise(x_t, np.zeros(2), 50, sched)
    assert np.allclose(out, x_t / np.sqrt(sched.alpha_bar[50]), atol=1e-15)


def test_tweedie_matches_gaussian_posterior_mean(rng):
    # single-Gaussian data: Tweedie from the analytic score equals the
    # posterior-mean formula
    sched = make_schedule(1000, 1e-4, 0.02)
    mu, v = np.array([1.0, -0.5]), 0.25
    for t in (50, 333, 800):
        ab = sched.alpha_bar[t]
        x_t = rng.standard_normal((200, 2)) * 2.0
        score = -(x_t - np.sqrt(ab) * mu) / (ab * v + 1 - ab)
        eps_hat = -np.sqrt(1 - ab) * score
        denoised = tweedie_denoise(x_t, eps_hat, t, sched)
        posterior = mu + (np.sqrt(ab) * v / (ab * v + 1 - ab)) * (x_t - np.sqrt(ab) * mu)
        assert np.max(np.abs(denoised - posterior)) < 1e-8


def test_score_from_eps(rng):
    sched = make_schedule(100, 1e-4, 0.02)
    eps_hat = rng.standard_normal(5)
    s = score_from_eps(eps_hat, 60, sched)
    assert np.allclose(s, -eps_hat / np.sqrt(1 - sched.alpha_bar[60]), atol=1e-15)


# ---------------------------------------------------------------------------
# losses
# ---------------------------------------------------------------------------

def _exact_noise_model(x0_const, sched):
    def fn(x_t, ctx):
        t = int(ctx.s)
        ab = sched.alpha_bar[t]
        return (x_t - np.sqrt(ab) * x0_const) / np.sqrt(1 - ab)
    return StubModel(fn)


def test_epsilon_loss_zero_for_oracle(rng):
    sched = make_schedule(1000, 1e-4, 0.02)
    x0c = np.array([0.4, -0.2])
    batch = np.tile(x0c, (32, 1))
    loss = epsilon_loss(_exact_noise_model(x0c, sched), batch, sched,
                        np.random.default_rng(0))
    assert loss.item() < 1e-18


def test_epsilon_loss_zero_predictor_near_one(rng):
    sched = make_schedule(1000, 1e-4, 0.02)
    batch = make_dataset("gauss8", 3000, 11)
    zero = StubModel(lambda x, ctx: np.zeros_like(x))
    vals = [epsilon_loss(zero, batch, sched, np.random.default_rng(k)).item()
            for k in range(4)]
    assert abs(np.mean(vals) - 1.0) < 0.05


def test_epsilon_loss_rejects_ncsnv2():
    sched = make_schedule(10, 1e-4, 0.02)
    with pytest.raises(ConfigError):
        epsilon_loss(StubModel(lambda x, c: x, strategy="ncsnv2"),
                     np.zeros((4, 2)), sched, np.random.default_rng(0))


def test_ncsnv2_loss_oracle_and_zero(rng):
    sched = make_schedule(1000, 1e-4, 0.02)
    x0c = np.array([0.7, 0.1])
    batch = np.tile(x0c, (32, 1))

    def oracle_fn(xbar, ctx):
        return -(xbar - x0c) / ctx.sigma  # stilde = -eps exactly

    loss = ncsnv2_loss(StubModel(oracle_fn, "ncsnv2"), batch, sched,
                       np.random.default_rng(0))
    assert loss.item() < 1e-18

    zero = StubModel(lambda x, c: np.zeros_like(x), "ncsnv2")
    big = make_dataset("gauss8", 3000, 5)
    vals = [ncsnv2_loss(zero, big, sched, np.random.default_rng(k)).item()
            for k in range(4)]
    assert abs(np.mean(vals) - 1.0) < 0.05


def test_ncsnv2_loss_requires_strategy():
    sched = make_schedule(10, 1e-4, 0.02)
    with pytest.raises(ConfigError):
        ncsnv2_loss(StubModel(lambda x, c: x), np.zeros((4, 2)), sched,
                    np.random.default_rng(0))


def test_microbatch_draws_multiple_timesteps():
    # per-sample granularity consumes one t per chunk; with microbatch=batch
    # the whole step shares one t
    sched = make_schedule(1000, 1e-4, 0.02)
    seen = []

    def spy(x, ctx):
        seen.append(ctx.s)
        return np.zeros_like(x)

    batch = np.zeros((8, 2))
    epsilon_loss(StubModel(spy), batch, sched, np.random.default_rng(0),
                 microbatch=0)
    assert len(seen) == 1
    seen.clear()
    epsilon_loss(StubModel(spy), batch, sched, np.random.default_rng(0),
                 microbatch=1)
    assert len(seen) == 8


# ---------------------------------------------------------------------------
# DDIM
# ---------------------------------------------------------------------------

def test_ddim_timesteps_cover_endpoints():
    taus = ddim_timesteps(1000, 200)
    assert taus[0] == 0 and taus[-1] == 999
    assert np.array_equal(ddim_timesteps(1000, 1000), np.arange(1000))
    with pytest.raises(ConfigError):
        ddim_timesteps(100, 101)


def test_ddim_exact_noise_lands_on_data_point():
    sched = make_schedule(1000, 1e-4, 0.02)
    x0c = np.array([0.8, -0.3])

    def eps_fn(x, t):
        ab = sched.alpha_bar[t]
        return (x - np.sqrt(ab) * x0c) / np.sqrt(1 - ab)

    for steps in (5, 50, 200):
        out = ddim_sample(None, sched, 16, (2,), np.random.default_rng(3),
                          n_steps=steps, eps_fn=eps_fn)
        assert np.max(np.abs(out - x0c)) < 1e-8, steps


def test_ddim_analytic_score_gaussian_moments():
    # analytic eps-hat for N(mu, v I) data; sampler must reproduce the moments
    sched = make_schedule(1000, 1e-4, 0.02)
    mu, v = np.array([1.0, -0.5]), 0.25

    def eps_fn(x, t):
        ab = sched.alpha_bar[t]
        marg = ab * v + 1 - ab
        return np.sqrt(1 - ab) * (x - np.sqrt(ab) * mu) / marg

    out = ddim_sample(None, sched, 4000, (2,), np.random.default_rng(0),
                      n_steps=200, eps_fn=eps_fn)
    mean_err = np.linalg.norm(out.mean(0) - mu) / np.linalg.norm(mu)
    cov = np.cov(out.T)
    cov_err = np.linalg.norm(cov - v * np.eye(2)) / np.linalg.norm(v * np.eye(2))
    assert mean_err < 0.05
    assert cov_err < 0.05


def test_predict_eps_ncsnv2_route(rng):
    # eps_hat = -stilde(x_t / sqrt(abar)); check the coordinate handling
    sched = make_schedule(1000, 1e-4, 0.02)
    seen = {}

    def fn(xbar, ctx):
        seen["xbar"] = xbar.copy()
        return xbar * 0.5

    model = StubModel(fn, "ncsnv2")
    x_t = rng.standard_normal((4, 2))
    t = 600
    out = predict_eps(model, x_t, t, sched)
    assert np.allclose(seen["xbar"], x_t / np.sqrt(sched.alpha_bar[t]), atol=1e-15)
    assert np.allclose(out, -0.5 * x_t / np.sqrt(sched.alpha_bar[t]), atol=1e-15)


def test_diffusion_context_fields():
    sched = make_schedule(1000, 1e-4, 0.02)
    ctx = diffusion_context(333, sched)
    assert ctx.s == 333.0
    assert ctx.map_norm == 0.333
    assert abs(ctx.sigma - sched.sigma[333]) < 1e-15
    assert ctx.embed == 333.0
