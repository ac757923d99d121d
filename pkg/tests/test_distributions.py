import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from dvae import autodiff as ad
from dvae.autodiff import Tensor
from dvae.distributions import (
    VAR_FLOOR,
    DiagGaussian,
    GammaShape1,
    StandardGaussianPrior,
    gamma1_log_prob,
    gaussian_kl,
    gaussian_log_prob,
    gaussian_sample,
)
from dvae.errors import DomainError, ShapeError

from _oracles import central_diff, mc_kl, rel_err


def G(mean, log_var):
    return DiagGaussian(Tensor(np.atleast_1d(np.asarray(mean, float))), Tensor(np.atleast_1d(np.asarray(log_var, float))))


def test_standard_sample_is_noise():
    n = np.array([0.3, -1.2])
    np.testing.assert_array_equal(gaussian_sample(G([0, 0], [0, 0]), n).data, n)


def test_floored_sample_collapses_to_mean():
    d = G([1.0, -2.0], [-500.0, -500.0])
    noise = np.array([3.0, -4.0])
    s = gaussian_sample(d, noise).data
    assert np.all(np.abs(s - d.mean.data) <= math.sqrt(VAR_FLOOR) * np.abs(noise) + 1e-15)


def test_sample_monte_carlo_mean():
    rng = np.random.default_rng(0)
    n = 10 ** 6
    s = gaussian_sample(G(np.full(n, 1.5), np.full(n, math.log(0.25))), rng.standard_normal(n)).data
    assert abs(s.mean() - 1.5) < 3 * 0.5 / math.sqrt(n)


@given(arrays(np.float64, 3, elements=st.floats(-3, 3)), arrays(np.float64, 3, elements=st.floats(-3, 2)),
       arrays(np.float64, 3, elements=st.floats(-3, 3)))
@settings(max_examples=50, deadline=None)
def test_sample_is_affine_in_mean_and_std(m, lv, n):
    s = gaussian_sample(G(m, lv), n).data
    np.testing.assert_allclose(s, m + np.exp(0.5 * lv) * n, rtol=1e-14, atol=1e-14)
    s2 = gaussian_sample(G(2 * m, lv), n).data
    np.testing.assert_allclose(s2 - s, m, rtol=1e-12, atol=1e-12)


def test_sample_shape_error():
    with pytest.raises(ShapeError):
        gaussian_sample(G([0, 0], [0, 0]), np.zeros(3))


def test_log_prob_standard_at_zero():
    assert gaussian_log_prob(G([0.0], [0.0]), [0.0]).data == pytest.approx(-0.9189385332046727, abs=1e-15)


@given(arrays(np.float64, 2, elements=st.floats(-2, 2)), arrays(np.float64, 2, elements=st.floats(-2, 1)),
       arrays(np.float64, 2, elements=st.floats(-1, 1)))
@settings(max_examples=50, deadline=None)
def test_log_prob_peaks_at_mean(m, lv, dx):
    d = G(m, lv)
    assert gaussian_log_prob(d, m).data >= gaussian_log_prob(d, m + dx).data


def test_log_prob_high_precision():
    rng = np.random.default_rng(1)
    m, lv, x = rng.normal(size=4), rng.uniform(-2, 1, 4), rng.normal(size=4)
    mpmath.mp.dps = 40
    ref = sum(mpmath.log(mpmath.npdf(mpmath.mpf(x[i]), mpmath.mpf(m[i]), mpmath.sqrt(mpmath.exp(mpmath.mpf(lv[i])))))
              for i in range(4))
    assert gaussian_log_prob(G(m, lv), x).data == pytest.approx(float(ref), abs=1e-13)


def test_kl_identical_is_zero():
    assert gaussian_kl(G([0.0], [0.0]), G([0.0], [0.0])).data == 0.0
    assert gaussian_kl(G([0.0], [0.0]), StandardGaussianPrior(1)).data == 0.0


def test_kl_unit_shift():
    assert abs(float(gaussian_kl(G([1.0], [0.0]), G([0.0], [0.0])).data) - 0.5) < 1e-12
    assert abs(float(gaussian_kl(G([1.0], [0.0]), StandardGaussianPrior(1)).data) - 0.5) < 1e-12


def test_kl_shape_error():
    with pytest.raises(ShapeError):
        gaussian_kl(G([0, 0], [0, 0]), G([0], [0]))


@given(arrays(np.float64, 3, elements=st.floats(-2, 2)), arrays(np.float64, 3, elements=st.floats(-2, 1)),
       arrays(np.float64, 3, elements=st.floats(-2, 2)), arrays(np.float64, 3, elements=st.floats(-2, 1)))
@settings(max_examples=100, deadline=None)
def test_kl_nonnegative(mq, lq, mp, lp):
    kl = float(gaussian_kl(G(mq, lq), G(mp, lp)).data)
    assert kl >= -1e-12
    if np.array_equal(mq, mp) and np.array_equal(lq, lp):
        assert abs(kl) < 1e-12


def test_kl_matches_monte_carlo():
    rng = np.random.default_rng(2)
    for _ in range(5):
        mq, mp = rng.uniform(-2, 2, 3), rng.uniform(-2, 2, 3)
        lq, lp = rng.uniform(-2, 1, 3), rng.uniform(-2, 1, 3)
        kl = float(gaussian_kl(G(mq, lq), G(mp, lp)).data)
        assert mc_kl(mq, lq, mp, lp, 10 ** 6, rng) == pytest.approx(kl, rel=0.01)


def test_gamma_trivial_cases():
    assert gamma1_log_prob(GammaShape1(Tensor([0.0])), [0.0]).data == 0.0
    assert gamma1_log_prob(GammaShape1(Tensor([math.log(2.0)])), [2.0]).data == pytest.approx(-1.6931471805599454, abs=1e-14)


def test_gamma_rejects_negative_power():
    with pytest.raises(DomainError):
        gamma1_log_prob(GammaShape1(Tensor([0.0, 0.0])), [1.0, -1e-3])


@pytest.mark.parametrize("x", [0.01, 0.7, 3.0, 250.0])
def test_gamma_maximized_at_observation(x):
    grid = np.log(x) + np.linspace(-2, 2, 401)
    vals = [float(gamma1_log_prob(GammaShape1(Tensor([g])), [x]).data) for g in grid]
    assert abs(grid[int(np.argmax(vals))] - np.log(x)) < 1e-9


def test_gamma_matches_scipy_density():
    from scipy import stats
    rng = np.random.default_rng(3)
    theta, x = np.exp(rng.normal(size=6)), rng.exponential(size=6)
    ref = stats.gamma(a=1.0, scale=theta).logpdf(x).sum()
    assert gamma1_log_prob(GammaShape1(Tensor(np.log(theta))), x).data == pytest.approx(ref, abs=1e-12)


def test_gamma_log_scale_gradient():
    rng = np.random.default_rng(4)
    ls, x = rng.normal(size=5), rng.exponential(size=5)
    t = Tensor(ls.copy(), requires_grad=True)
    gamma1_log_prob(GammaShape1(t), x).backward()

    def f():
        with ad.no_grad():
            return float(gamma1_log_prob(GammaShape1(Tensor(ls)), x).data)

    (num,) = central_diff(f, [ls])
    assert rel_err(t.grad, num).max() < 1e-4


def test_variance_floor_applies_to_scale():
    d = GammaShape1(Tensor([-100.0]))
    assert d.scale()[0] == pytest.approx(VAR_FLOOR)
    assert np.isfinite(gamma1_log_prob(d, [1.0]).data)


def test_batched_reduction_over_last_axis():
    d = DiagGaussian(Tensor(np.zeros((4, 3))), Tensor(np.zeros((4, 3))))
    assert gaussian_log_prob(d, np.zeros((4, 3))).shape == (4,)
    assert gaussian_kl(d, StandardGaussianPrior(3)).shape == (4,)
