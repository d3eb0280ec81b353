import numpy as np
import pytest

from pgnoise.imageio import ImageBuffer
from pgnoise.noise import NoiseParams, sample, synthesize, theoretical_moments


def test_params_validation():
    with pytest.raises(ValueError):
        NoiseParams(0.0, 0.1)
    with pytest.raises(ValueError):
        NoiseParams(-1.0, 0.1)
    with pytest.raises(ValueError):
        NoiseParams(1.0, -0.1)
    p = NoiseParams(4, 0)
    assert p.a_inv == 0.25 and p.b_sq == 0.0


def test_theoretical_moments():
    assert theoretical_moments(0.0, NoiseParams(3.0, 0.2)) == (0.0, pytest.approx(0.04))
    m, v = theoretical_moments(0.5, NoiseParams(20, 0.05))
    assert m == 0.5 and v == pytest.approx(0.5 / 20 + 0.05**2, rel=1e-15)
    assert v == pytest.approx(0.0275, rel=1e-12)
    assert theoretical_moments(1.0, NoiseParams(1, 0)) == (1.0, 1.0)


def test_zero_signal_no_read_noise_is_exact_zero():
    pair = synthesize(ImageBuffer(np.zeros((8, 8))), NoiseParams(7.0, 0.0), 1)
    assert np.all(pair.noisy.data == 0.0)


def test_pure_poisson_lattice():
    a = 8.0
    y = sample(np.full(1000, 0.6), NoiseParams(a, 0.0), 3)
    assert np.allclose(y * a, np.rint(y * a))


def test_deterministic_and_seed_sensitive(gradient_image):
    p = NoiseParams(12.0, 0.03)
    y1 = synthesize(gradient_image, p, 42).noisy
    y2 = synthesize(gradient_image, p, 42).noisy
    assert y1.data.tobytes() == y2.data.tobytes()
    assert synthesize(gradient_image, p, 43).noisy != y1


def test_pixel_substreams_independent_of_image_layout(gradient_image):
    # pixel i draws only from substream i: the same flat image reshaped gives the same noise
    p = NoiseParams(30.0, 0.02)
    flat = gradient_image.ravel()
    reshaped = ImageBuffer(flat.reshape(64, 48))
    assert np.array_equal(
        synthesize(gradient_image, p, 9).noisy.ravel(), synthesize(reshaped, p, 9).noisy.ravel()
    )
    assert np.array_equal(sample(flat[:100], p, 9), sample(flat, p, 9)[:100])


def test_no_clipping():
    y = synthesize(ImageBuffer(np.full((50, 50), 0.99)), NoiseParams(2.0, 0.1), 0).noisy.data
    assert y.max() > 1.0
    y0 = synthesize(ImageBuffer(np.zeros((50, 50))), NoiseParams(2.0, 0.1), 0).noisy.data
    assert y0.min() < 0.0


def test_rejects_bad_inputs():
    with pytest.raises(ValueError):
        synthesize(ImageBuffer(np.array([[np.nan, 0.5]])), NoiseParams(1, 0), 0)
    with pytest.raises(ValueError):
        synthesize(ImageBuffer(np.array([[1.5]])), NoiseParams(1, 0), 0)
    with pytest.raises(ValueError):
        synthesize(ImageBuffer(np.array([[0.5]])), NoiseParams(1, 0), -1)
    with pytest.raises(ValueError):
        synthesize(ImageBuffer(np.array([[0.5]])), NoiseParams(1, 0), 2**64)


def test_mean_unbiased_over_image_and_seeds(gradient_image):
    p = NoiseParams(15.0, 0.04)
    diffs = [synthesize(gradient_image, p, s).noisy.data - gradient_image.data for s in range(20)]
    d = np.concatenate([x.ravel() for x in diffs])
    var = gradient_image.data.mean() / p.a + p.b_sq
    assert abs(d.mean()) < 5 * np.sqrt(var / d.size)


@pytest.mark.parametrize("x,a,b", [(0.5, 20.0, 0.05), (0.05, 3.0, 0.0), (0.9, 90.0, 0.12)])
def test_moment_match_5_sigma(x, a, b):
    n = 400_000
    y = sample(np.full(n, x), NoiseParams(a, b), 17)
    mean, var = x, x / a + b * b
    mu4 = x / a**3 + 3 * var**2  # fourth cumulant of K/a is x/a^3
    assert abs(y.mean() - mean) < 5 * np.sqrt(var / n)
    assert abs(y.var() - var) < 5 * np.sqrt((mu4 - var**2) / n)


def test_third_central_moment_pure_poisson():
    # third cumulant of Poisson(a x)/a is x / a^2
    x, a, n = 0.4, 5.0, 1_000_000
    y = sample(np.full(n, x), NoiseParams(a, 0.0), 8)
    m3 = np.mean((y - y.mean()) ** 3)
    # Var of the sample third moment ~ mu6 / n; mu6 of the scaled Poisson bounded via its cumulants
    lam = a * x
    mu6 = (lam + 25 * lam**2 + 15 * lam**3) / a**6
    assert abs(m3 - x / a**2) < 5 * np.sqrt(mu6 / n)
