"""Sample moments of the clean image and k-statistics of the noisy image."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .imageio import ImageBuffer, ImagePair


def _values(buf) -> np.ndarray:
    if isinstance(buf, ImageBuffer):
        return buf.ravel()
    return np.asarray(buf, dtype=np.float64).ravel()


def _mean(v: np.ndarray) -> float:
    # fsum is exactly rounded, so the result is independent of element order
    return math.fsum(v.tolist()) / v.size


@dataclass(frozen=True)
class MomentSummary:
    """Everything the cumulant system needs from a pair.

    ``var_x`` and ``c3_x`` are the second and third central moments of the
    clean image, computed around the mean rather than from raw-moment
    differences.
    """

    n: int
    x_bar: float
    x2_bar: float
    x3_bar: float
    k2_y: float
    k3_y: float
    var_x: float = None
    c3_x: float = None

    def __post_init__(self):
        if self.n < 3:
            raise ValueError("at least three samples are required")
        if self.var_x is None:
            object.__setattr__(self, "var_x", self.x2_bar - self.x_bar**2)
        if self.c3_x is None:
            c3 = self.x3_bar - 3.0 * self.x2_bar * self.x_bar + 2.0 * self.x_bar**3
            object.__setattr__(self, "c3_x", c3)


def clean_moments(x):
    """``(n, mean(x), mean(x**2), mean(x**3))``."""
    v = _values(x)
    if v.size == 0:
        raise ValueError("empty buffer")
    if not np.all(np.isfinite(v)):
        raise ValueError("non-finite values")
    return v.size, _mean(v), _mean(v * v), _mean(v * v * v)


def central_moments(x):
    """Second and third central moments (biased, 1/n)."""
    v = _values(x)
    d = v - _mean(v)
    d2 = d * d
    return _mean(d2), _mean(d2 * d)


def k_statistics(y):
    """Fisher's unbiased estimators ``(k2, k3)`` of the 2nd and 3rd cumulants."""
    v = _values(y)
    n = v.size
    if n < 3:
        raise ValueError(f"k-statistics need n >= 3, got {n}")
    if not np.all(np.isfinite(v)):
        raise ValueError("non-finite values")
    m2, m3 = central_moments(v)
    k2 = n / (n - 1) * m2
    k3 = n * n / ((n - 1) * (n - 2)) * m3
    return k2, k3


def summarize_pair(pair: ImagePair) -> MomentSummary:
    n, x1, x2, x3 = clean_moments(pair.clean)
    var_x, c3_x = central_moments(pair.clean)
    k2, k3 = k_statistics(pair.noisy)
    return MomentSummary(n, x1, x2, x3, k2, k3, var_x, c3_x)
