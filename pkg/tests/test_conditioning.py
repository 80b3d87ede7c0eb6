"""Baseline conditioning mechanisms: map concat, sinusoidal, FiLM, NCSNv2."""

import numpy as np
import pytest

from conftest import check_gradients
from dpilab.conditioning import (film_modulate, ncsnv2_rescale,
                                 scalar_map_concat, sinusoidal_embedding)
from dpilab.errors import DomainError, ShapeError, UsageError
from dpilab.tensor import Tensor, group_norm, tsum


# ---------------------------------------------------------------------------
# scalar map concatenation
# ---------------------------------------------------------------------------

def test_map_concat_image():
    x = Tensor(np.zeros((1, 2, 2)))
    out = scalar_map_concat(x, 0.5)
    assert out.shape == (2, 2, 2)
    assert np.array_equal(out.data[1], np.full((2, 2), 0.5))


def test_map_concat_zero_value():
    out = scalar_map_concat(Tensor(np.ones((1, 3, 3))), 0.0)
    assert np.array_equal(out.data[1], np.zeros((3, 3)))


def test_map_concat_point():
    out = scalar_map_concat(Tensor([0.3, -0.7]), 0.25)
    assert np.array_equal(out.data, [0.3, -0.7, 0.25])


def test_map_concat_roundtrip_and_constant(rng):
    x = rng.standard_normal((3, 4, 4))
    out = scalar_map_concat(Tensor(x), -1.25)
    appended = out.data[3]
    assert np.all(appended == appended.flat[0])  # spatially constant
    assert np.array_equal(out.data[:3], x)       # removal recovers input

    xb = rng.standard_normal((5, 2))
    outb = scalar_map_concat(Tensor(xb), 0.7)
    assert outb.shape == (5, 3)
    assert np.array_equal(outb.data[:, :2], xb)
    assert np.all(outb.data[:, 2] == 0.7)


# ---------------------------------------------------------------------------
# sinusoidal embedding
# ---------------------------------------------------------------------------

def test_sinusoidal_t0():
    assert np.array_equal(sinusoidal_embedding(0.0, 4).data, [0.0, 0.0, 1.0, 1.0])


def test_sinusoidal_t1_first_sin():
    emb = sinusoidal_embedding(1.0, 8)
    assert abs(emb.data[0] - np.sin(1.0)) < 1e-15
    # every sin coordinate differs from the t=0 embedding
    emb0 = sinusoidal_embedding(0.0, 8)
    assert np.all(np.abs(emb.data[:4] - emb0.data[:4]) > 0)


def test_sinusoidal_bounded(rng):
    for t in rng.uniform(-1e4, 1e4, 25):
        emb = sinusoidal_embedding(float(t), 16).data
        assert np.all(np.abs(emb) <= 1.0)


def test_sinusoidal_periodicity():
    dim = 6
    k = 1
    omega = 10000.0 ** (-2.0 * k / dim)
    period = 2.0 * np.pi / omega
    a = sinusoidal_embedding(3.7, dim).data
    b = sinusoidal_embedding(3.7 + period, dim).data
    assert abs(a[k] - b[k]) < 1e-9
    assert abs(a[dim // 2 + k] - b[dim // 2 + k]) < 1e-9


def test_sinusoidal_rejects_odd_dim():
    with pytest.raises(UsageError):
        sinusoidal_embedding(1.0, 5)


# ---------------------------------------------------------------------------
# FiLM modulation
# ---------------------------------------------------------------------------

def _film_mlp(rng, emb_dim, channels, zero_head=True):
    hidden = 2 * emb_dim
    w1 = np.zeros((hidden, 2 * channels)) if zero_head else \
        rng.uniform(-0.3, 0.3, (hidden, 2 * channels))
    return {
        "w0": Tensor(rng.uniform(-0.5, 0.5, (emb_dim, hidden)), grad_tracked=True),
        "b0": Tensor(np.zeros(hidden), grad_tracked=True),
        "w1": Tensor(w1, grad_tracked=True),
        "b1": Tensor(np.zeros(2 * channels), grad_tracked=True),
    }


def test_film_identity_at_zero_modulation(rng):
    h = Tensor(rng.standard_normal((4, 3, 3)))
    gain, shift = Tensor(rng.uniform(0.5, 1.5, 4)), Tensor(rng.uniform(-1, 1, 4))
    emb = sinusoidal_embedding(17.0, 8)
    mlp = _film_mlp(rng, 8, 4, zero_head=True)
    out = film_modulate(h, emb, mlp, 2, gain, shift)
    ref = group_norm(h, 2, gain, shift)
    assert np.max(np.abs(out.data - ref.data)) < 1e-12


def test_film_zero_scale_constant_shift(rng):
    h = Tensor(rng.standard_normal((2, 3, 3)))
    gain, shift = Tensor(np.ones(2)), Tensor(np.zeros(2))
    emb = sinusoidal_embedding(3.0, 4)
    mlp = _film_mlp(rng, 4, 2, zero_head=True)
    mlp["w0"].data[:] = 0.0  # hidden = silu(0) = 0, so ab = b1 exactly
    c = 1.75
    mlp["b1"].data[:] = np.concatenate([np.full(2, -1.0), np.full(2, c)])
    out = film_modulate(h, emb, mlp, 2, gain, shift)
    assert np.max(np.abs(out.data - c)) < 1e-12


def test_film_gradients_reach_mlp(rng):
    h = Tensor(rng.standard_normal((4, 3, 3)))
    gain = Tensor(rng.uniform(0.5, 1.5, 4), grad_tracked=True)
    shift = Tensor(rng.uniform(-0.5, 0.5, 4), grad_tracked=True)
    emb = sinusoidal_embedding(12.0, 6)
    mlp = _film_mlp(rng, 6, 4, zero_head=False)
    r = Tensor(rng.standard_normal((4, 3, 3)))

    def f():
        return tsum(film_modulate(h, emb, mlp, 2, gain, shift) * r)

    check_gradients(f, [mlp["w0"], mlp["b0"], mlp["w1"], mlp["b1"], gain, shift],
                    tol=1e-5)


def test_film_channel_mismatch(rng):
    h = Tensor(rng.standard_normal((4, 3, 3)))
    mlp = _film_mlp(rng, 6, 3)  # emits 6 values, h has 4 channels
    with pytest.raises(ShapeError):
        film_modulate(h, sinusoidal_embedding(1.0, 6), mlp, 2,
                      Tensor(np.ones(4)), Tensor(np.zeros(4)))


# ---------------------------------------------------------------------------
# NCSNv2 rescaling
# ---------------------------------------------------------------------------

def test_ncsnv2_direct_scaling():
    out = ncsnv2_rescale(Tensor([1.0, -4.0]), 2.0)
    assert np.array_equal(out.data, [0.5, -2.0])


def test_ncsnv2_sigma_one_identity(rng):
    base = Tensor(rng.standard_normal(6))
    assert np.array_equal(ncsnv2_rescale(base, 1.0).data, base.data)


def test_ncsnv2_norm_homogeneity(rng):
    base = rng.standard_normal(10)
    for sigma in (0.5, 2.0, 8.0):  # powers of two: scaling is exact in floats
        out = ncsnv2_rescale(Tensor(base), sigma).data
        assert np.array_equal(out * sigma, base)
        assert np.linalg.norm(out) == np.linalg.norm(base) / sigma
    # general sigma: exact up to one ulp, argmax invariant
    out = ncsnv2_rescale(Tensor(base), 1.37).data
    assert np.allclose(out * 1.37, base, rtol=1e-15, atol=0)
    assert np.argmax(out) == np.argmax(base)


def test_ncsnv2_rejects_nonpositive_sigma():
    with pytest.raises(DomainError):
        ncsnv2_rescale(Tensor([1.0]), 0.0)
    with pytest.raises(DomainError):
        ncsnv2_rescale(Tensor([1.0]), -1.0)
