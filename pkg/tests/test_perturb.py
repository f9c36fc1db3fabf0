"""Perturbation schemes: maps, inverses, densities and TV distances."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate
from scipy.stats import chi2

from longlines.core import LpBall, phi_bump, psi_bump
from longlines.perturb import (
    GaussianScheme,
    HighPScheme,
    LowPScheme,
    PairMap,
    ProductScheme,
    SchemeConstraintError,
    SimplexScheme,
    apply_scheme,
    density_1d_perturbed,
    density_highp,
    g_of,
    g_pair,
    gaussian_tv,
    highp_coordinate_mean,
    invert_scheme,
    pair_inverse,
    pair_jacobian,
    pair_jacobian_mean,
    product_density_ratio,
    tilt_normalizer,
    tv_estimate,
)
from longlines.rng import RandomStream
from longlines.samplers import (
    gaussian_component,
    gaussian_product,
    sample_lp_ball,
    sample_simplex_latent,
    uniform_component,
    uniform_cube,
)

PHI = phi_bump()
PSI = psi_bump()


def _signs(gen, shape):
    return gen.integers(0, 2, shape) * 2.0 - 1.0


# ----------------------------------------------------------------------------
# one-dimensional pieces
# ----------------------------------------------------------------------------


def test_g_for_flat_density_at_the_bump_peak():
    # flat density: g = (phi^2)'' = 2 phi'^2 + 2 phi phi'' = 2 * 0.01 * (-0.9) at 0
    assert g_of(uniform_component(), PHI, 0.0) == pytest.approx(-0.018, rel=1e-12)


def test_g_vanishes_outside_the_bump():
    t = np.array([-0.9, -0.34, 0.34, 2.0])
    assert np.all(g_of(gaussian_component(), PHI, t) == 0.0)


def test_g_matches_finite_differences_for_the_gaussian():
    comp = gaussian_component()
    t = np.linspace(-0.3, 0.3, 13)
    h = 1e-3

    def q(s):
        return PHI(s) ** 2 * comp.density(s)

    fd = (-q(t + 2 * h) + 16 * q(t + h) - 30 * q(t) + 16 * q(t - h) - q(t - 2 * h)) / (12 * h * h)
    assert np.allclose(g_of(comp, PHI, t), fd / comp.density(t), atol=1e-9)


@pytest.mark.parametrize("comp", [gaussian_component(), uniform_component()], ids=lambda c: c.name)
def test_g_integrates_to_zero_against_the_density(comp):
    val, _ = integrate.quad(lambda t: g_of(comp, PHI, t) * float(comp.density(t)), -1 / 3, 1 / 3,
                            epsabs=1e-14, limit=200)
    assert abs(val) <= 1e-8


def test_tilt_normalizer_is_one_without_tilt():
    assert tilt_normalizer(gaussian_component(), PHI, 0.0) == 1.0
    k = tilt_normalizer(gaussian_component(), PHI, 0.7)
    # g integrates to zero, so the normalizer is 1 + O(R^4)
    assert abs(k - 1.0) <= 0.7 ** 4 * 1e-2


@pytest.mark.parametrize("comp", [gaussian_component(), uniform_component()], ids=lambda c: c.name)
@pytest.mark.parametrize("R", [0.0, 0.6])
def test_perturbed_1d_density_has_unit_mass(comp, R):
    lo, hi = (-12.0, 12.0) if comp.name == "gaussian" else (-0.5, 0.5)

    def f(t):
        return float(density_1d_perturbed(comp, 0.9, R, PHI, t))

    pts = [-1 / 3 - 0.01, -1 / 3, 1 / 3, 1 / 3 + 0.01]
    mass, _ = integrate.quad(f, lo, hi, points=[p for p in pts if lo < p < hi], epsabs=1e-13, epsrel=1e-12,
                             limit=400)
    assert abs(mass - 1.0) < 1e-8


@given(st.floats(-0.45, 0.45), st.floats(0.0, 1.0))
@settings(max_examples=40, deadline=None)
def test_perturbed_1d_density_is_even_in_r(t, r):
    comp = gaussian_component()
    a = density_1d_perturbed(comp, r, 0.0, PHI, t)
    b = density_1d_perturbed(comp, -r, 0.0, PHI, t)
    assert a == pytest.approx(b, rel=1e-12)


def test_second_order_expansion_of_the_1d_density():
    # log f - log rho - (r^2 / 2) g is O(r^4), so halving r divides it by about 16
    comp = gaussian_component()
    t = np.array([-0.2, -0.05, 0.1, 0.25])
    g = g_of(comp, PHI, t)

    def resid(r):
        return np.log(density_1d_perturbed(comp, r, 0.0, PHI, t)) - np.log(comp.density(t)) - 0.5 * r * r * g

    ratio = resid(0.8) / resid(0.4)
    assert np.all((ratio >= 12) & (ratio <= 20))


# ----------------------------------------------------------------------------
# maps and inverses
# ----------------------------------------------------------------------------


def _round_trip_cases():
    gen = np.random.default_rng(42)
    n = 8
    cases = []
    mu = gaussian_product(n)
    x = gen.uniform(-0.4, 0.4, (20, n))
    cases.append(("product", ProductScheme(mu, 0.9), x, _signs(gen, x.shape), None))
    ball = LpBall(3.0, n)
    hp = HighPScheme(ball, 0.1, 2.0, strict=False)
    x = gen.uniform(0.4, 1.1, (20, n)) * gen.choice([-1, 1], (20, n))
    cases.append(("highp", hp, x, _signs(gen, x.shape), None))
    lball = LpBall(1.5, n)
    lp = LowPScheme(lball, 0.05, 2.0, 0.3, strict=False)
    lo, hi = lp.pair_map.support
    x = gen.uniform(lo - 0.1, hi + 0.1, (20, n))
    cases.append(("lowp", lp, x, _signs(gen, (20, n // 2)), None))
    cases.append(("gaussian", GaussianScheme(n, 0.3), gen.standard_normal((20, n)),
                  gen.standard_normal((20, n)), None))
    return cases


@pytest.mark.parametrize("name,scheme,x,delta,_", _round_trip_cases(), ids=lambda v: v if isinstance(v, str) else "")
def test_apply_then_invert_recovers_the_point(name, scheme, x, delta, _):
    for u in (1.0, 0.37):
        y = apply_scheme(scheme, x, delta, u)
        back = invert_scheme(scheme, y, delta, u)
        assert np.max(np.abs(back - x)) <= 1e-10


def test_simplex_round_trip_through_the_latents():
    n = 6
    scheme = SimplexScheme(n, 0.2)
    X, g, Z = sample_simplex_latent(n, RandomStream(3), 50)
    delta = _signs(np.random.default_rng(1), g.shape)
    Y = apply_scheme(scheme, X, delta, 0.8, latent=(g, Z))
    g_back = invert_scheme(scheme, Y, delta, 0.8, latent_z=Z)
    assert np.max(np.abs(g_back - g)) <= 1e-10
    assert np.all(Y >= 0)


@pytest.mark.parametrize("name,scheme,x,delta,_", _round_trip_cases(), ids=lambda v: v if isinstance(v, str) else "")
def test_zero_step_is_the_identity(name, scheme, x, delta, _):
    assert np.array_equal(apply_scheme(scheme, x, delta, 0.0), x)


def test_highp_moves_only_window_coordinates():
    ball = LpBall(4.0, 5)
    s = HighPScheme(ball, 0.1, 2.0, strict=False)
    x = np.array([0.1, 0.49, 0.75, -0.75, 1.2])
    y = apply_scheme(s, x, np.ones(5))
    moved = y != x
    # the window 1 <= R x_i <= 2 is one-sided
    assert moved.tolist() == [False, False, True, False, False]


def test_scheme_constraints():
    with pytest.raises(SchemeConstraintError):
        ProductScheme(uniform_cube(3), 1.5)
    with pytest.raises(SchemeConstraintError):
        HighPScheme(LpBall(1.5, 8), 0.1, 2.0, strict=False)
    with pytest.raises(SchemeConstraintError):
        HighPScheme(LpBall(3.0, 8), 0.5, 2.0, strict=False)  # r R max|psi'| >= 1
    with pytest.raises(SchemeConstraintError):
        HighPScheme(LpBall(3.0, 1024), 0.5, 2.0)  # n R^3 r^4 too large
    with pytest.raises(SchemeConstraintError):
        LowPScheme(LpBall(3.0, 8), 0.1, 2.0, 1.0, strict=False)
    with pytest.raises(SchemeConstraintError):
        LowPScheme(LpBall(1.5, 64), 0.1, 2.0, 1.0)  # R1 must equal log n
    with pytest.raises(SchemeConstraintError):
        SimplexScheme(4, 0.5)


# ----------------------------------------------------------------------------
# pair map
# ----------------------------------------------------------------------------

PM = PairMap(1.5, 0.05, 2.0, 0.3)


def _pair_points(count, seed=0):
    lo, hi = PM.support
    gen = np.random.default_rng(seed)
    return gen.uniform(lo, hi, count), gen.uniform(lo, hi, count)


def test_pair_map_has_no_first_order_norm_change():
    # d/dz (|x1 + z h1|^p + |x2 + z h2|^p) at z = 0 is p (x1^(p-1) h1 + x2^(p-1) h2) = 0
    x1, x2 = _pair_points(50)
    h1, h2 = PM.h(x1, x2)
    p = PM.p
    assert np.max(np.abs(x1 ** (p - 1) * h1 + x2 ** (p - 1) * h2)) <= 1e-15


def test_pair_jacobian_matches_finite_differences():
    x1, x2 = _pair_points(30, 1)
    e = 1e-6
    for z in (1.0, -1.0):
        def F(a, b):
            h1, h2 = PM.h(a, b)
            return a + z * h1, b + z * h2

        d11 = (F(x1 + e, x2)[0] - F(x1 - e, x2)[0]) / (2 * e)
        d12 = (F(x1, x2 + e)[0] - F(x1, x2 - e)[0]) / (2 * e)
        d21 = (F(x1 + e, x2)[1] - F(x1 - e, x2)[1]) / (2 * e)
        d22 = (F(x1, x2 + e)[1] - F(x1, x2 - e)[1]) / (2 * e)
        assert np.allclose(pair_jacobian(PM, x1, x2, z), d11 * d22 - d12 * d21, atol=1e-6)


def test_g_pair_matches_finite_differences():
    y1, y2 = _pair_points(30, 2)
    e = 1e-4

    def h1sq(a, b):
        return PM.h(a, b)[0] ** 2

    def h2sq(a, b):
        return PM.h(a, b)[1] ** 2

    def h12(a, b):
        h1, h2 = PM.h(a, b)
        return h1 * h2

    d11 = (h1sq(y1 + e, y2) - 2 * h1sq(y1, y2) + h1sq(y1 - e, y2)) / (e * e)
    d22 = (h2sq(y1, y2 + e) - 2 * h2sq(y1, y2) + h2sq(y1, y2 - e)) / (e * e)
    d12 = (h12(y1 + e, y2 + e) - h12(y1 + e, y2 - e) - h12(y1 - e, y2 + e) + h12(y1 - e, y2 - e)) / (4 * e * e)
    fd = 0.5 * d11 + d12 + 0.5 * d22
    scale = np.max(np.abs(fd))
    assert np.max(np.abs(g_pair(PM, y1, y2) - fd)) <= 1e-5 * scale


def test_g_pair_vanishes_off_support():
    lo, hi = PM.support
    assert np.all(g_pair(PM, np.array([lo - 0.2, hi + 0.2]), np.array([0.5 * (lo + hi)] * 2)) == 0.0)


def test_pair_inverse_solves_the_map():
    y1, y2 = _pair_points(100, 3)
    for z in (1.0, -1.0):
        x1, x2 = pair_inverse(PM, y1, y2, z)
        h1, h2 = PM.h(x1, x2)
        assert np.max(np.abs(x1 + z * h1 - y1)) <= 1e-13
        assert np.max(np.abs(x2 + z * h2 - y2)) <= 1e-13


def test_pair_jacobian_mean_is_even_in_r():
    # the remainder after 1 + g has no r^3 term, so halving r divides it by ~16
    y1, y2 = _pair_points(1, 4)
    big = PairMap(1.5, 0.02, 2.0, 0.3)
    res = []
    for pm in (big, big.with_r(0.01)):
        res.append(float(pair_jacobian_mean(pm, y1, y2)[0] - 1 - g_pair(pm, y1, y2)[0]))
    assert 12 <= res[0] / res[1] <= 20


# ----------------------------------------------------------------------------
# high-p densities
# ----------------------------------------------------------------------------


def test_highp_density_integrates_to_one_in_the_plane():
    p = 3.0
    ball = LpBall(p, 2)
    s = HighPScheme(ball, 0.15, 1.5, strict=False)
    k = ball.kappa
    # the perturbed law stays in the ball dilated by the largest move
    L = k + s.r + 1e-3
    m = 1200
    c = -L + (np.arange(m) + 0.5) * (2 * L / m)
    X, Y = np.meshgrid(c, c)
    pts = np.stack([X.ravel(), Y.ravel()], axis=1)
    dens = density_highp(s, pts)
    mass = dens.sum() * (2 * L / m) ** 2
    assert abs(mass - 1.0) < 1e-3


def test_highp_exact_and_sampled_densities_agree():
    ball = LpBall(3.0, 12)
    s = HighPScheme(ball, 0.1, 2.0, strict=False)
    gen = np.random.default_rng(5)
    y = np.sign(gen.standard_normal(12)) * gen.uniform(0.5, 1.0, 12) * 0.8
    exact = density_highp(s, y)
    mc = density_highp(s, y, mode="mc", samples=1 << 15, stream=RandomStream(6))
    assert abs(mc - exact) <= 5 * max(exact, 1e-3) * 0.1


def test_highp_density_is_one_deep_inside():
    ball = LpBall(3.0, 4)
    s = HighPScheme(ball, 0.1, 2.0, strict=False)
    assert density_highp(s, np.full(4, 0.1)) == 1.0
    assert density_highp(s, np.full(4, 5.0)) == 0.0


def test_highp_coordinate_expansion():
    # mean of the inverse Jacobian factor is 1 + (phi^2/2)'' + O(r^4)
    ball = LpBall(3.0, 8)
    y = np.array([0.6, 0.7, 0.8, 0.9])
    res = []
    # r R max|psi'| is about 0.2 here, inside the small-step regime
    for r in (0.025, 0.0125):
        s = HighPScheme(ball, r, 2.0, strict=False)
        mean, g = highp_coordinate_mean(s, y)
        res.append(mean - 1 - g)
    ratio = res[0] / res[1]
    assert np.all((ratio >= 12) & (ratio <= 20))


# ----------------------------------------------------------------------------
# total variation
# ----------------------------------------------------------------------------


def _chi2_tv(n, r):
    # both laws are radial; the squared-norm densities cross once at t*
    s2 = 1 + r * r
    t = n * math.log(s2) / (1 - 1 / s2)
    return chi2.cdf(t, n) - chi2.cdf(t / s2, n)


@pytest.mark.parametrize("n,r", [(2, 0.5), (16, 0.3), (256, 0.5 * 256 ** -0.25), (1024, 0.1)])
def test_gaussian_tv_matches_chi_square_formula(n, r):
    assert gaussian_tv(n, r) == pytest.approx(_chi2_tv(n, r), abs=1e-8)


def test_gaussian_tv_small_at_the_finder_radius():
    n = 256
    assert gaussian_tv(n, 0.5 * n ** -0.25) < 0.1


def test_gaussian_tv_mixture_lies_below_the_full_step():
    n, r = 64, 0.4
    assert 0 < gaussian_tv(n, r, mixture_u=True) < gaussian_tv(n, r)
    assert gaussian_tv(n, 0.0) == 0.0


def test_tv_estimate_is_zero_without_perturbation():
    s = ProductScheme(gaussian_product(4), 0.0)
    est = tv_estimate(s, 50, RandomStream(1))
    assert est.value == pytest.approx(0.0, abs=1e-14)


def test_product_density_ratio_averages_to_one():
    s = ProductScheme(gaussian_product(3), 0.9)
    X = np.random.default_rng(8).standard_normal((20_000, 3))
    ratio = product_density_ratio(s, X)
    se = ratio.std(ddof=1) / math.sqrt(ratio.size)
    assert abs(ratio.mean() - 1.0) <= 4 * se + 1e-12


def test_tv_estimate_terms_add_up():
    ball = LpBall(3.0, 64)
    s = HighPScheme(ball, 0.05, 2.0, strict=False)
    est = tv_estimate(s, 100, RandomStream(2), delta_draws=256)
    assert est.value == pytest.approx(est.inside_term + est.outside_term)
    assert 0 <= est.value <= 1 and est.stderr >= 0
    assert est.to_record()["method"] == "mc-over-signs"


def test_gaussian_tv_estimate_refuses_the_mixture():
    with pytest.raises(ValueError):
        tv_estimate(GaussianScheme(8, 1.0, mixture=True), 10, RandomStream(1))


def test_simplex_tv_is_small_for_small_r():
    est = tv_estimate(SimplexScheme(64, 0.01), 2000, RandomStream(3))
    assert est.value <= 0.05 and est.method == "product-1d"


def test_lp_ball_samples_feed_the_highp_density():
    # uniform ball points have density one when no coordinate is in the window
    ball = LpBall(2.0, 6)
    s = HighPScheme(ball, 0.01, 10.0, strict=False)
    X = sample_lp_ball(ball, RandomStream(4), 20)
    X = X[np.all(np.abs(X) * 10 < 1, axis=1)]
    assert np.all(density_highp(s, X) == 1.0)
