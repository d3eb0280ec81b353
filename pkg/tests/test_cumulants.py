import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy import stats

from pgnoise.cumulants import MomentSummary, central_moments, clean_moments, k_statistics, summarize_pair
from pgnoise.imageio import ImageBuffer, ImagePair
from pgnoise.noise import NoiseParams, sample

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


def test_clean_moments_constant():
    assert clean_moments(ImageBuffer(np.full((2, 2), 0.5))) == (4, 0.5, 0.25, 0.125)


def test_clean_moments_two_point():
    assert clean_moments(np.array([0.0, 1.0])) == (2, 0.5, 0.5, 0.5)


def test_clean_moments_vs_naive(rng):
    x = rng.random(50_000)
    n, m1, m2, m3 = clean_moments(x)
    # naive reference: plain numpy means
    assert n == x.size
    for got, ref in ((m1, x.mean()), (m2, (x**2).mean()), (m3, (x**3).mean())):
        assert got == pytest.approx(ref, rel=1e-12)


def test_clean_moments_errors():
    with pytest.raises(ValueError):
        clean_moments(np.array([]))
    with pytest.raises(ValueError):
        clean_moments(np.array([0.1, np.inf]))


def test_k_statistics_degenerate():
    assert k_statistics(np.full(10, 0.3)) == (0.0, 0.0)
    with pytest.raises(ValueError):
        k_statistics(np.array([0.0, 1.0]))


@settings(max_examples=100, deadline=None)
@given(arrays(np.float64, st.integers(3, 60), elements=finite))
def test_k_statistics_match_scipy(y):
    k2, k3 = k_statistics(y)
    scale = max(1.0, np.abs(y).max())
    assert k2 == pytest.approx(stats.kstat(y, 2), rel=1e-9, abs=1e-12 * scale**2)
    assert k3 == pytest.approx(stats.kstat(y, 3), rel=1e-7, abs=1e-9 * scale**3)


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, st.integers(3, 40), elements=st.floats(-10, 10)),
       st.floats(-5, 5), st.floats(0.1, 10))
def test_k_statistics_shift_and_scale(y, shift, scale):
    k2, k3 = k_statistics(y)
    s2, s3 = k_statistics(y + shift)
    c2, c3 = k_statistics(scale * y)
    tol = 1e-9 * (1 + np.abs(y).max() + abs(shift)) ** 3
    assert s2 == pytest.approx(k2, abs=tol) and s3 == pytest.approx(k3, abs=tol)
    assert c2 == pytest.approx(scale**2 * k2, rel=1e-9, abs=tol * scale**2)
    assert c3 == pytest.approx(scale**3 * k3, rel=1e-7, abs=tol * scale**3)


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, st.integers(3, 80), elements=finite), st.randoms())
def test_permutation_invariance_exact(y, r):
    perm = y.copy()
    r.shuffle(perm)
    # exactly rounded summation makes the result independent of order
    assert k_statistics(perm) == k_statistics(y)
    assert clean_moments(perm) == clean_moments(y)


def test_k_statistics_unbiased_gaussian_and_poisson():
    reps, n = 4000, 200
    idx = np.arange(reps * n)
    g = sample(np.zeros(reps * n), NoiseParams(1.0, 1.0), 3).reshape(reps, n)
    ks = np.array([k_statistics(row) for row in g])
    se = ks.std(axis=0, ddof=1) / np.sqrt(reps)
    assert abs(ks[:, 0].mean() - 1.0) < 4 * se[0]
    assert abs(ks[:, 1].mean()) < 4 * se[1]

    lam, a = 4.0, 2.0
    p = sample(np.full(idx.size, lam / a), NoiseParams(a, 0.0), 5).reshape(reps, n)
    ks = np.array([k_statistics(row) for row in p])
    se = ks.std(axis=0, ddof=1) / np.sqrt(reps)
    assert abs(ks[:, 0].mean() - lam / a**2) < 4 * se[0]
    # third cumulant of Poisson(lambda)/a is lambda / a^3 = 0.5
    assert abs(ks[:, 1].mean() - 0.5) < 4 * se[1]


def test_summary_jensen_and_central(gradient_image):
    pair = ImagePair(gradient_image, gradient_image)
    m = summarize_pair(pair)
    assert m.x2_bar >= m.x_bar**2
    v, c3 = central_moments(gradient_image)
    assert m.var_x == v and m.c3_x == c3
    assert m.var_x == pytest.approx(m.x2_bar - m.x_bar**2, rel=1e-9)
    assert m.c3_x == pytest.approx(m.x3_bar - 3 * m.x2_bar * m.x_bar + 2 * m.x_bar**3, abs=1e-12)


def test_summary_derives_central_from_raw():
    m = MomentSummary(n=4, x_bar=0.5, x2_bar=0.5, x3_bar=0.5, k2_y=0.0, k3_y=0.0)
    assert m.var_x == 0.25 and m.c3_x == 0.0
    with pytest.raises(ValueError):
        MomentSummary(n=2, x_bar=0, x2_bar=0, x3_bar=0, k2_y=0, k3_y=0)
