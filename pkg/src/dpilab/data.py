"""Synthetic datasets: 2-d point mixtures and tiny bump images.

All generators are deterministic given (kind, n, seed) and produce data at
zero mean and order-unity scale. Seeds may be ints or int sequences (the
training loop keys per-step streams that way).
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError

DATASETS = ("gauss8", "two_moons", "checkerboard", "blob_images")

GAUSS8_RADIUS = 1.0
GAUSS8_STD = 0.05

BLOB_SHAPE = (1, 8, 8)
_BLOB_WIDTH = 1.2
# analytic moments of the bump image family, used for a fixed standardization
_BLOB_MEAN = 2.0 * np.pi * _BLOB_WIDTH ** 2 / 64.0
_BLOB_SCALE = 0.25


def gauss8_centers() -> np.ndarray:
    angles = 2.0 * np.pi * np.arange(8) / 8.0
    return GAUSS8_RADIUS * np.stack([np.cos(angles), np.sin(angles)], axis=1)


def data_shape(kind: str) -> tuple[int, ...]:
    if kind == "blob_images":
        return BLOB_SHAPE
    if kind in DATASETS:
        return (2,)
    raise ConfigError(f"unknown dataset {kind!r}; pick one of {DATASETS}")


def make_dataset(kind: str, n: int, seed, noise_std: float | None = None) -> np.ndarray:
    """Draw n samples; noise_std overrides the component noise scale of the
    2-d point mixtures (default 0.05)."""
    if n < 0:
        raise ConfigError(f"dataset size must be >= 0, got {n}")
    if kind not in DATASETS:
        raise ConfigError(f"unknown dataset {kind!r}; pick one of {DATASETS}")
    rng = np.random.default_rng(seed)
    std = GAUSS8_STD if noise_std is None else noise_std
    if kind == "gauss8":
        centers = gauss8_centers()
        idx = rng.integers(0, 8, size=n)
        return centers[idx] + std * rng.standard_normal((n, 2))
    if kind == "two_moons":
        theta = np.pi * rng.random(n)
        upper = rng.random(n) < 0.5
        x = np.where(upper, np.cos(theta), 1.0 - np.cos(theta))
        y = np.where(upper, np.sin(theta), 0.5 - np.sin(theta))
        pts = np.stack([x, y], axis=1) + std * rng.standard_normal((n, 2))
        return pts - np.array([0.5, 0.25])
    if kind == "checkerboard":
        x1 = rng.random(n) * 4.0 - 2.0
        x2 = rng.random(n) - rng.integers(0, 2, size=n) * 2.0
        x2 = x2 + np.floor(x1) % 2  # zero mean by construction
        return np.stack([x1, x2], axis=1)
    # blob_images: one Gaussian bump at a random position in a 1x8x8 frame
    cy = rng.uniform(1.5, 6.5, size=n)
    cx = rng.uniform(1.5, 6.5, size=n)
    yy, xx = np.mgrid[0:8, 0:8]
    d2 = (yy[None] - cy[:, None, None]) ** 2 + (xx[None] - cx[:, None, None]) ** 2
    img = np.exp(-d2 / (2.0 * _BLOB_WIDTH ** 2))
    return ((img - _BLOB_MEAN) / _BLOB_SCALE)[:, None, :, :]
