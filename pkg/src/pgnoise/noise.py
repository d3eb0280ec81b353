"""Forward Poisson-Gaussian noise model: ``y = Poisson(a x) / a + Normal(0, b^2)``."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from . import rng
from .imageio import ImageBuffer, ImagePair

SEED_MAX = 2**64 - 1


@dataclass(frozen=True)
class NoiseParams:
    """``a`` scales photon counts (larger means less shot noise); ``b`` is the
    read-noise standard deviation in normalised intensity units."""

    a: float
    b: float

    def __post_init__(self):
        a, b = float(self.a), float(self.b)
        if not math.isfinite(a) or a <= 0:
            raise ValueError(f"a must be finite and > 0, got {self.a}")
        if not math.isfinite(b) or b < 0:
            raise ValueError(f"b must be finite and >= 0, got {self.b}")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    @property
    def a_inv(self) -> float:
        return 1.0 / self.a

    @property
    def b_sq(self) -> float:
        return self.b * self.b


def _check_seed(seed) -> int:
    seed = int(seed)
    if not 0 <= seed <= SEED_MAX:
        raise ValueError(f"seed must fit in an unsigned 64-bit integer, got {seed}")
    return seed


def sample(x, params: NoiseParams, seed: int, index=None) -> np.ndarray:
    """Noisy observations of the flat intensities ``x``.

    ``index`` selects the per-pixel substreams (defaults to ``0..n-1``);
    passing disjoint index ranges gives independent draws of the same model.
    """
    seed = _check_seed(seed)
    x = np.asarray(x, dtype=np.float64).ravel()
    if not np.all(np.isfinite(x)):
        raise ValueError("clean image contains non-finite values")
    if np.any(x < 0):
        raise ValueError("clean intensities must be non-negative")
    if index is None:
        index = np.arange(x.size, dtype=np.uint64)
    else:
        index = np.asarray(index, dtype=np.uint64).ravel()

    u_gauss, u_inv = rng.uniform_pair(seed, index, 0)
    counts = rng.poisson(params.a * x, seed, index, u_inv)
    y = counts / params.a
    if params.b > 0:
        y = y + params.b * ndtri(u_gauss)
    return y


def synthesize(clean: ImageBuffer, params: NoiseParams, seed: int) -> ImagePair:
    """Seeded noisy counterpart of ``clean``; no clipping is applied."""
    seed = _check_seed(seed)
    if clean.data.max() > 1.0 or clean.data.min() < 0.0:
        raise ValueError("clean intensities must lie in [0, 1]")
    y = sample(clean.ravel(), params, seed).reshape(clean.shape)
    meta = {"a": params.a, "b": params.b, "seed": seed}
    return ImagePair(clean, ImageBuffer(y), meta)


def theoretical_moments(x: float, params: NoiseParams):
    """Mean and variance of a noisy pixel with clean intensity ``x``."""
    return x, x / params.a + params.b**2
