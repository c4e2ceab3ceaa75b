import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate, stats

from gslf import levy
from gslf.rng import stream

FAMILIES = [levy.poisson(3.0), levy.gamma(3.0, 10.0), levy.gamma(2.0, 4.0), levy.nig(2.0, 1.0, 1.0)]


def levy_khinchin(model, xi):
    """psi from the triplet by direct integration of the Levy measure."""
    trip = model.triplet
    if trip.measure[0] == "point_mass":
        lam = trip.measure[1]
        # unit jumps lie inside the compensation window |y| <= 1
        return 1j * trip.gamma * xi + lam * (np.exp(1j * xi) - 1.0 - 1j * xi)
    comp = lambda y: (np.exp(1j * xi * y) - 1.0 - 1j * xi * y * (abs(y) <= 1)) * trip.levy_density(y)
    pieces = [(0.0, 1.0), (1.0, np.inf)]
    if trip.measure[0] == "nig":
        pieces += [(-1.0, 0.0), (-np.inf, -1.0)]
    re = sum(integrate.quad(lambda y: comp(y).real, a, b, limit=400)[0] for a, b in pieces)
    im = sum(integrate.quad(lambda y: comp(y).imag, a, b, limit=400)[0] for a, b in pieces)
    return 1j * trip.gamma * xi + complex(re, im)


@pytest.mark.parametrize("model", FAMILIES, ids=lambda m: m.kind + str(m.params))
@pytest.mark.parametrize("xi", [0.3, 1.0, 4.0])
def test_char_exponent_matches_levy_khinchin_integral(model, xi):
    assert complex(model.char_exponent(xi)) == pytest.approx(levy_khinchin(model, xi), abs=1e-7)


def test_char_exponent_frozen_values():
    # oracle: Levy-Khinchin integral above, frozen
    assert complex(levy.gamma(3, 10).char_exponent(1.0)) == pytest.approx(
        -0.014925496279758 + 0.299005957473489j, abs=1e-9)
    assert complex(levy.poisson(2).char_exponent(math.pi)) == pytest.approx(-4.0 + 0j, abs=1e-12)


@given(xi=st.floats(-50, 50), idx=st.integers(0, len(FAMILIES) - 1))
def test_char_exponent_hermitian_and_dissipative(xi, idx):
    m = FAMILIES[idx]
    psi, psi_neg = complex(m.char_exponent(xi)), complex(m.char_exponent(-xi))
    assert psi_neg == pytest.approx(psi.conjugate(), abs=1e-12)
    assert psi.real <= 1e-12
    assert complex(m.char_exponent(0.0)) == 0


@pytest.mark.parametrize("model", FAMILIES, ids=lambda m: m.kind + str(m.params))
def test_moments_are_derivatives_of_exponent(model):
    h = 1e-4
    d1 = (complex(model.char_exponent(h)) - complex(model.char_exponent(-h))) / (2 * h)
    d2 = (complex(model.char_exponent(h)) - 2 * complex(model.char_exponent(0.0))
          + complex(model.char_exponent(-h))) / h**2
    t = 0.7
    m1, m2 = model.moments(t)
    assert m1 == pytest.approx((t * d1 / 1j).real, rel=1e-6)
    var = -t * d2.real
    assert m2 - m1**2 == pytest.approx(var, rel=1e-5)


def test_poisson_sample_chi_square():
    g = stream(0, 99)
    x = levy.poisson(4.0).sample(np.full(50_000, 0.75), g)
    k = np.arange(0, 10)
    obs = np.array([np.sum(x == v) for v in k] + [np.sum(x >= 10)])
    p = np.append(stats.poisson.pmf(k, 3.0), stats.poisson.sf(9, 3.0))
    chi2 = np.sum((obs - len(x) * p) ** 2 / (len(x) * p))
    assert stats.chi2.sf(chi2, len(obs) - 1) > 1e-3


def test_gamma_sample_ks():
    x = levy.gamma(3.0, 10.0).sample(np.full(20_000, 1.0), stream(1, 99))
    assert stats.kstest(x, stats.gamma(3.0, scale=0.1).cdf).pvalue > 1e-3


def test_nig_sample_matches_scipy_law():
    m = levy.nig(2.0, 1.0, 1.0)
    x = m.sample(np.full(20_000, 0.5), stream(2, 99))
    # scipy norminvgauss(a, b, loc, scale) with a = alpha delta, b = beta delta
    d = 0.5
    law = stats.norminvgauss(2.0 * d, 1.0 * d, loc=0.0, scale=d)
    assert stats.kstest(x, law.cdf).pvalue > 1e-3


def test_sample_zero_time_is_zero():
    for m in FAMILIES:
        assert np.all(m.sample(np.zeros(5), stream(0)) == 0)


def test_invalid_parameters():
    with pytest.raises(ValueError):
        levy.poisson(0.0)
    with pytest.raises(ValueError):
        levy.nig(1.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        levy.from_dict({"kind": "stable"})
    with pytest.raises(ValueError):
        levy.gamma(1, 1).sample(-1.0, stream(0))


def test_grid_path_coarsening_keeps_knots():
    p = levy.sample_grid_path(levy.gamma(2, 4), 0.01, 3.0, stream(0, 1))
    c = p.coarsen(4)
    assert c.grid_step == pytest.approx(0.04)
    t = np.array([0.0, 0.04, 0.48, 1.2, 2.96])
    assert np.array_equal(c(t), p(t))
    # between knots the coarse path holds the value of its last knot
    assert c(0.07) == p(0.04)


def test_path_rejects_times_outside_horizon():
    p = levy.sample_grid_path(levy.poisson(1), 0.5, 2.0, stream(0))
    with pytest.raises(ValueError):
        p(2.0)
    with pytest.raises(ValueError):
        p(-0.1)


def test_poisson_path_on_grid_is_floor_evaluation():
    path = levy.sample_poisson_path(levy.poisson(8), 5.0, stream(3))
    eps = 0.25
    g = path.on_grid(eps)
    t = np.linspace(0, 4.99, 301)
    assert np.array_equal(g(t), path(eps * np.floor(t / eps + 1e-10)))
    assert np.all(np.diff(path(np.sort(t))) >= 0)


def test_poisson_path_jump_count_law():
    counts = [len(levy.sample_poisson_path(levy.poisson(2), 3.0, stream(i)).jump_times) for i in range(2000)]
    assert np.mean(counts) == pytest.approx(6.0, abs=4 * math.sqrt(6.0 / 2000))


@given(st.floats(0.01, 10), st.floats(0.001, 1))
def test_grid_size_covers_horizon(h, step):
    if step > h:
        return
    n = levy.grid_size(h, step)
    assert (n - 1) * step >= h * (1 - 1e-9)
    assert (n - 2) * step < h


def test_moment_scaling_gamma_slope():
    # small shape parameters make E|l(t)| noisy at tiny t; stop at 2^-8 here
    times = 2.0 ** np.arange(1, -9, -1)
    res = levy.moment_scaling_study(levy.gamma(2, 4), [1.0, 2.0], times, samples=20_000, seed=0)
    assert 0.9 <= res.slopes[1.0] <= 1.1
    assert res.estimates.shape == (2, 10)
    # at t = 2 and t = 1 the estimates agree with the exact moments
    for j, t in ((0, 2.0), (1, 1.0)):
        m1, m2 = levy.gamma(2, 4).moments(t)
        assert res.estimates[0, j] == pytest.approx(m1, rel=0.03)
        assert res.estimates[1, j] == pytest.approx(m2, rel=0.06)


@pytest.mark.parametrize("model", FAMILIES, ids=lambda m: m.kind + str(m.params))
@pytest.mark.parametrize("t", [0.5, 2.0 ** -12])
def test_stratified_sample_is_unbiased_for_moments(model, t):
    x, w = levy.stratified_sample(model, t, 50_000, stream(5, 99))
    assert w.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.all(w > 0)
    m1, m2 = model.moments(t)
    # second moments are dominated by the deepest strata, which are covered exactly
    assert np.sum(w * x * x) == pytest.approx(m2, rel=0.05)
    if model.kind != "nig":
        assert np.sum(w * x) == pytest.approx(m1, rel=0.01)


def test_stratified_moment_slopes_are_stable_across_seeds():
    times = 2.0 ** np.arange(-4, -17, -1)
    for seed in range(3):
        res = levy.moment_scaling_study(levy.gamma(2, 4), [1.0, 2.0, 3.0], times,
                                        samples=20_000, seed=seed)
        assert res.method == "stratified"
        for s in (1.0, 2.0, 3.0):
            assert 0.95 <= res.slopes[s] <= 1.05
