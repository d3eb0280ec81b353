"""Estimate ``(1/a, b^2)`` from a noisy/noise-free image pair.

Two methods are provided:

* ``estimate_cumulant`` matches the 2nd and 3rd cumulants of the noisy image
  against their closed forms in terms of the clean-image moments.
* ``estimate_var`` fits the per-intensity-level variance of the noisy pixels
  with a line ``var = x/a + b^2``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .cumulants import MomentSummary, summarize_pair
from .imageio import ImagePair


class Method(str, enum.Enum):
    CUMULANT = "cumulant"
    VAR = "var"


class EstimationError(ValueError):
    """Base class for estimator failures."""


class NoRealRootError(EstimationError):
    """The cumulant quadratic has a negative discriminant.

    ``fallback`` holds the clamped estimate obtained at the vertex of the
    quadratic so callers may still use a value if they choose to.
    """

    def __init__(self, discriminant: float, fallback: "Estimate"):
        super().__init__(f"no real root: discriminant = {discriminant:.6g}")
        self.discriminant = discriminant
        self.fallback = fallback


class DegenerateImageError(EstimationError):
    pass


class RankDeficientError(EstimationError):
    pass


@dataclass(frozen=True)
class Estimate:
    a_inv: float
    b_sq: float
    method: Method
    diagnostics: dict = field(default_factory=dict, compare=False)

    @property
    def a(self) -> float:
        return math.inf if self.a_inv == 0 else 1.0 / self.a_inv

    @property
    def b(self) -> float:
        return math.sqrt(self.b_sq)

    @property
    def clamped(self) -> bool:
        return bool(self.diagnostics.get("a_inv_clamped") or self.diagnostics.get("b_sq_clamped"))

    def to_dict(self) -> dict:
        return {
            "a_inv": self.a_inv,
            "b_sq": self.b_sq,
            "a": None if self.a_inv == 0 else self.a,
            "b": self.b,
            "diagnostics": dict(self.diagnostics),
        }


def _clamped(a_inv: float, b_sq: float, method: Method, **diag) -> Estimate:
    diag["a_inv_raw"] = a_inv
    diag["b_sq_raw"] = b_sq
    diag["a_inv_clamped"] = a_inv < 0
    diag["b_sq_clamped"] = b_sq < 0
    return Estimate(max(a_inv, 0.0), max(b_sq, 0.0), method, diag)


def solve_cumulant_system(m: MomentSummary, strict: bool = True) -> Estimate:
    """Solve for ``u = 1/a`` and ``b^2`` given the moments of a pair.

    The third-cumulant equation is the quadratic
    ``x_bar u^2 + 3 V u + (C3 - k3) = 0`` and the root with ``+sqrt`` is
    taken; it is evaluated as ``2 (k3 - C3) / (3 V + sqrt(D))`` to avoid
    cancellation when the shot-noise term is small. ``b^2`` then follows
    from the second-cumulant equation.
    """
    xb, var_x, c3_x = m.x_bar, m.var_x, m.c3_x
    rhs = m.k3_y - c3_x
    disc = 9.0 * var_x * var_x + 4.0 * xb * rhs

    if xb == 0.0:
        if var_x == 0.0:
            raise DegenerateImageError("clean image is constant zero")
        u = rhs / (3.0 * var_x)
        return _clamped(u, m.k2_y - var_x, Method.CUMULANT, discriminant=disc)

    if disc < 0.0:
        u = -1.5 * var_x / xb
        fallback = _clamped(
            u, m.k2_y - xb * u - var_x, Method.CUMULANT,
            discriminant=disc, no_real_root=True,
        )
        if strict:
            raise NoRealRootError(disc, fallback)
        return fallback

    root = math.sqrt(disc)
    denom = 3.0 * var_x + root
    if denom > 0.0:
        u = 2.0 * rhs / denom
    else:
        u = 0.0
    b_sq = m.k2_y - xb * u - var_x
    return _clamped(u, b_sq, Method.CUMULANT, discriminant=disc)


def estimate_cumulant(pair: ImagePair, strict: bool = True) -> Estimate:
    return solve_cumulant_system(summarize_pair(pair), strict=strict)


@dataclass(frozen=True)
class IntensityLevelSet:
    level: int
    mean_x: float
    count: int
    emp_var: float


def level_sets(pair: ImagePair, quantization_levels: int = 256):
    """Group noisy pixels by quantised clean intensity.

    The empirical variance of each group is taken around the known clean
    value, not the group's sample mean, so singleton groups still count.
    """
    if quantization_levels < 2:
        raise ValueError("quantization_levels must be >= 2")
    scale = quantization_levels - 1
    x = pair.clean.ravel()
    y = pair.noisy.ravel()
    q = np.rint(np.clip(x, 0.0, 1.0) * scale).astype(np.int64)
    level_x = q / scale
    sq = (y - level_x) ** 2
    counts = np.bincount(q, minlength=quantization_levels)
    sums = np.bincount(q, weights=sq, minlength=quantization_levels)
    occupied = np.flatnonzero(counts)
    return [
        IntensityLevelSet(int(k), k / scale, int(counts[k]), float(sums[k] / counts[k]))
        for k in occupied
    ]


def estimate_var(pair: ImagePair, quantization_levels: int = 256, weighted: bool = True) -> Estimate:
    """Least-squares fit of ``var(level) = u * x_level + b^2``.

    With ``weighted`` each level counts once per pixel it holds, which is the
    per-pixel sum; otherwise every occupied level counts once.
    """
    sets = level_sets(pair, quantization_levels)
    if len(sets) < 2:
        raise RankDeficientError(
            f"need at least 2 occupied intensity levels, got {len(sets)}"
        )
    xs = np.array([s.mean_x for s in sets])
    vs = np.array([s.emp_var for s in sets])
    w = np.array([s.count for s in sets], dtype=np.float64) if weighted else np.ones(len(sets))

    sw = np.sqrt(w)
    design = np.column_stack([xs, np.ones_like(xs)]) * sw[:, None]
    coef, _, rank, _ = np.linalg.lstsq(design, vs * sw, rcond=None)
    if rank < 2:
        raise RankDeficientError("intensity levels do not separate 1/a from b^2")
    u, b_sq = float(coef[0]), float(coef[1])
    resid = float(np.sum(w * (vs - u * xs - b_sq) ** 2))
    return _clamped(
        u, b_sq, Method.VAR, residual=resid, levels=len(sets), weighted=weighted,
    )


def estimate(pair: ImagePair, method, **kwargs) -> Estimate:
    method = Method(method)
    if method is Method.CUMULANT:
        return estimate_cumulant(pair, **kwargs)
    return estimate_var(pair, **kwargs)
