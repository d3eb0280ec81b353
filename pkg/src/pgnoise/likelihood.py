"""Log-likelihood of a noisy image under the Poisson-Gaussian model.

Per pixel the density is a Poisson-weighted mixture of Gaussians centred at
``k / a``; the mixture is summed in the log domain up to ``k_max``.

Truncation rule: ``k_max(i)`` is the smallest ``m`` with
``P(Poisson(a x_i) > m) < tail_mass``, floored at 7 (8 terms) and capped at
``k_cap``. Pixels with ``x_i = 0`` keep only the ``k = 0`` term.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, logsumexp, pdtrc

from .imageio import ImagePair
from .noise import NoiseParams

MIN_TERMS = 8
_CHUNK_ELEMENTS = 1 << 21


@dataclass(frozen=True)
class LikelihoodConfig:
    tail_mass: float = 1e-12
    k_cap: int = 100_000

    def __post_init__(self):
        if not 0.0 < self.tail_mass < 1.0:
            raise ValueError("tail_mass must be in (0, 1)")
        if self.k_cap < 1:
            raise ValueError("k_cap must be >= 1")


@dataclass(frozen=True)
class LikelihoodResult:
    ll: float
    k_max_max: int
    pixels: int


def _tail_bound(lam: np.ndarray, tail_mass: float) -> np.ndarray:
    """Smallest integer m with P(Poisson(lam) > m) < tail_mass, by bisection."""
    lo = np.full(lam.shape, -1.0)  # P(K > -1) = 1, never below tail_mass
    hi = np.ceil(lam + 10.0 * np.sqrt(lam) + 10.0)
    while True:
        short = pdtrc(hi, lam) >= tail_mass
        if not short.any():
            break
        hi[short] = 2.0 * hi[short] + 1.0
    while np.any(hi - lo > 1):
        mid = np.floor((lo + hi) / 2.0)
        ok = pdtrc(mid, lam) < tail_mass
        hi = np.where(ok, mid, hi)
        lo = np.where(ok, lo, mid)
    return hi


def k_max(rate, cfg: LikelihoodConfig) -> np.ndarray:
    """Summation bound for each Poisson rate (see module docstring)."""
    rate = np.asarray(rate, dtype=np.float64)
    uniq, inverse = np.unique(rate, return_inverse=True)
    m = np.zeros(uniq.shape)
    pos = uniq > 0
    if pos.any():
        m[pos] = np.clip(_tail_bound(uniq[pos], cfg.tail_mass), MIN_TERMS - 1, cfg.k_cap)
    return m.astype(np.int64)[inverse].reshape(rate.shape)


def _pixel_terms(x, y, a, b, km):
    """Per-pixel log densities for a chunk sharing one k grid."""
    lam = a * x
    kmax = int(km.max())
    k = np.arange(kmax + 1, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        # k * log(lam) with 0 * log(0) = 0
        klog = np.where(k[None, :] == 0, 0.0, k[None, :] * np.log(lam)[:, None])
    resid = y[:, None] - k[None, :] / a
    t = klog - gammaln(k + 1.0)[None, :] - lam[:, None] - resid * resid / (2.0 * b * b)
    t = np.where(k[None, :] <= km[:, None], t, -np.inf)
    return logsumexp(t, axis=1) - math.log(b * math.sqrt(2.0 * math.pi))


def pixel_log_likelihood(x, y, params: NoiseParams, cfg: LikelihoodConfig = LikelihoodConfig()):
    """Log density of each ``y_i`` given ``x_i``; returns ``(values, k_max)``."""
    if params.b <= 0:
        raise ValueError("b must be > 0 for the likelihood to be defined")
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.shape != y.shape:
        raise ValueError("x and y must have the same number of pixels")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValueError("non-finite input")
    if np.any(x < 0):
        raise ValueError("clean intensities must be non-negative")

    a, b = params.a, params.b
    km = k_max(a * x, cfg)
    out = np.empty_like(x)
    # sorted by k_max so each chunk pads to a similar grid width
    order = np.argsort(km, kind="stable")
    step = max(1, _CHUNK_ELEMENTS // (int(km.max()) + 1))
    for start in range(0, x.size, step):
        sel = order[start : start + step]
        out[sel] = _pixel_terms(x[sel], y[sel], a, b, km[sel])
    return out, km


def log_likelihood(pair: ImagePair, params: NoiseParams, cfg: LikelihoodConfig = LikelihoodConfig()) -> LikelihoodResult:
    values, km = pixel_log_likelihood(pair.clean.ravel(), pair.noisy.ravel(), params, cfg)
    return LikelihoodResult(math.fsum(values.tolist()), int(km.max()), values.size)


def params_from_estimate(est) -> NoiseParams:
    if est.a_inv <= 0 or est.b_sq <= 0:
        raise ValueError("estimate on the parameter boundary has no finite likelihood")
    return NoiseParams(1.0 / est.a_inv, math.sqrt(est.b_sq))


def relative_ll_gap(pair: ImagePair, true_params: NoiseParams, est, cfg: LikelihoodConfig = LikelihoodConfig()) -> float:
    """``|LL(estimate) - LL(truth)| / |LL(truth)|``."""
    ll_true = log_likelihood(pair, true_params, cfg).ll
    est_params = est if isinstance(est, NoiseParams) else params_from_estimate(est)
    ll_est = log_likelihood(pair, est_params, cfg).ll
    return relative_gap(ll_est, ll_true)


def relative_gap(ll_est: float, ll_true: float) -> float:
    if not (math.isfinite(ll_est) and math.isfinite(ll_true)):
        raise ValueError("log-likelihoods must be finite")
    if ll_true == 0.0:
        raise ZeroDivisionError("log-likelihood at the true parameters is zero")
    return abs((ll_est - ll_true) / ll_true)


def refine_on_grid(pair: ImagePair, est, span: float = 0.2, steps: int = 5,
                   cfg: LikelihoodConfig = LikelihoodConfig()):
    """Best ``NoiseParams`` on a small multiplicative grid around ``est``.

    Evaluates ``steps x steps`` points with ``a`` and ``b`` scaled by factors
    in ``[1 - span, 1 + span]``. This is a local polish, not a global search.
    """
    start = est if isinstance(est, NoiseParams) else params_from_estimate(est)
    factors = np.linspace(1.0 - span, 1.0 + span, steps)
    best, best_ll = start, -math.inf
    for fa in factors:
        for fb in factors:
            cand = NoiseParams(start.a * fa, start.b * fb)
            ll = log_likelihood(pair, cand, cfg).ll
            if ll > best_ll:
                best, best_ll = cand, ll
    return best, best_ll
