import numpy as np
import pytest
from numpy.testing import assert_allclose

from copula_forge.errors import (
    DomainError,
    ParameterError,
    UnsupportedLatentError,
    UnsupportedOrderError,
)
from copula_forge.families import ParametricGenerator

ALL_FAMILIES = [
    ("clayton", 5.0),
    ("frank", 15.0),
    ("joe", 3.0),
    ("gumbel", 2.5),
    ("nelsen12", 3.0),
    ("nelsen19", 1.0),
]

SAMPLEABLE = [("clayton", 5.0), ("frank", 15.0), ("joe", 3.0), ("gumbel", 2.5)]


@pytest.mark.parametrize("family,theta", ALL_FAMILIES)
def test_phi_at_zero_is_one(family, theta):
    gen = ParametricGenerator(family, theta)
    assert gen.phi(0.0) == pytest.approx(1.0)


def test_phi_clayton_hand_check():
    # phi(x) = (1 + x)^(-1/theta); theta=1, x=1 -> 1/2
    gen = ParametricGenerator("clayton", 1.0)
    assert gen.phi(1.0) == pytest.approx(0.5)
    assert gen.phi_inv(0.5) == pytest.approx(1.0)


@pytest.mark.parametrize("family,theta", ALL_FAMILIES)
def test_phi_vanishes_at_large_argument(family, theta):
    # nelsen19 decays only like 1/log(x), so the bound is loose
    gen = ParametricGenerator(family, theta)
    assert gen.phi(1e12) < 0.05


@pytest.mark.parametrize("family,theta", ALL_FAMILIES)
def test_phi_decreasing(family, theta):
    gen = ParametricGenerator(family, theta)
    x = np.linspace(0.0, 20.0, 200)
    vals = gen.phi(x)
    assert np.all(np.diff(vals) < 0)


@pytest.mark.parametrize("family,theta", ALL_FAMILIES)
def test_phi_inv_roundtrip(family, theta):
    gen = ParametricGenerator(family, theta)
    rng = np.random.default_rng(0)
    # exp(theta/u) in the nelsen19 inverse overflows float64 below ~theta/709
    lo = 0.01 if family == "nelsen19" else 1e-6
    u = rng.uniform(lo, 1.0, 1000)
    assert_allclose(gen.phi(gen.phi_inv(u)), u, atol=1e-12, rtol=1e-10)
    assert gen.phi_inv(1.0) == pytest.approx(0.0)


def test_phi_inv_rejects_nonpositive():
    gen = ParametricGenerator("frank", 2.0)
    with pytest.raises(DomainError):
        gen.phi_inv(0.0)
    with pytest.raises(DomainError):
        gen.phi_inv(-0.3)


def test_clayton_first_derivative_at_zero():
    # phi'(x) = -(1+x)^(-1/theta - 1)/theta; theta=1, x=0 -> -1
    gen = ParametricGenerator("clayton", 1.0)
    assert gen.phi_deriv(1, 0.0) == pytest.approx(-1.0)


@pytest.mark.parametrize("family,theta", ALL_FAMILIES)
def test_derivative_signs_alternate(family, theta):
    """(-1)^k phi^(k) >= 0 for k <= 5 across a grid."""
    gen = ParametricGenerator(family, theta)
    x = np.array([0.01, 0.1, 0.5, 1.0, 2.0, 5.0, 10.0])
    for k in range(1, 6):
        vals = np.atleast_1d(gen.phi_deriv(k, x))
        assert np.all((-1.0) ** k * vals >= 0.0), (family, k)


@pytest.mark.parametrize("family,theta", ALL_FAMILIES)
def test_derivatives_match_finite_differences(family, theta):
    gen = ParametricGenerator(family, theta)
    h = 1e-5
    for k in (1, 2, 3):
        for x in (0.3, 0.7, 1.9):
            lo = gen.phi_deriv(k - 1, x - h) if k > 1 else gen.phi(x - h)
            hi = gen.phi_deriv(k - 1, x + h) if k > 1 else gen.phi(x + h)
            fd = (hi - lo) / (2 * h)
            assert gen.phi_deriv(k, x) == pytest.approx(fd, rel=1e-5)


def test_clayton_high_order_closed_form():
    """Rising-factorial form stays exact at k=20."""
    gen = ParametricGenerator("clayton", 5.0)
    x = 0.7
    # phi^(k)(x) = (-1)^k (1+x)^(-1/t - k) prod_{i=0..k-1} (1/t + i)
    t = 5.0
    k = 20
    expected = (1 + x) ** (-1 / t - k) * np.prod(1 / t + np.arange(k))
    assert gen.phi_deriv(k, x) == pytest.approx(expected, rel=1e-12)


def test_unsupported_order_raises():
    gen = ParametricGenerator("gumbel", 2.0)
    with pytest.raises(UnsupportedOrderError):
        gen.phi_deriv(11, 0.5)


@pytest.mark.parametrize(
    "family,theta",
    [("clayton", -1.0), ("frank", 0.0), ("joe", 0.5), ("gumbel", 0.9)],
)
def test_theta_range_enforced(family, theta):
    with pytest.raises(ParameterError):
        ParametricGenerator(family, theta)


def test_clayton_latent_mean():
    gen = ParametricGenerator("clayton", 5.0)
    m = gen.sample_latent(np.random.default_rng(1), 100000)
    assert abs(m.mean() - 0.2) < 0.01


def test_sibuya_draws_are_positive_integers():
    gen = ParametricGenerator("joe", 3.0)
    m = gen.sample_latent(np.random.default_rng(2), 5000)
    assert np.all(m >= 1)
    assert_allclose(m, np.round(m))


@pytest.mark.parametrize("family,theta", SAMPLEABLE)
def test_latent_sampler_matches_transform(family, theta):
    """mean(exp(-M x)) should converge to phi(x)."""
    gen = ParametricGenerator(family, theta)
    m = gen.sample_latent(np.random.default_rng(3), 100000)
    for x in (0.1, 1.0, 5.0):
        mc = np.exp(-m * x).mean()
        assert abs(mc - gen.phi(x)) <= 5.0 / np.sqrt(m.size), (family, x)


@pytest.mark.parametrize("family", ["nelsen12", "nelsen19"])
def test_catalogue_families_have_no_latent_sampler(family):
    gen = ParametricGenerator(family, 3.0 if family == "nelsen12" else 1.0)
    with pytest.raises(UnsupportedLatentError):
        gen.sample_latent(np.random.default_rng(0), 10)


def test_marshall_olkin_tau_matches_brute_force():
    """Sample tau vs the tau = 4 E[C(U)] - 1 oracle for Clayton."""
    from copula_forge.ac import AcModel
    from copula_forge.stats import kendall_tau

    gen = ParametricGenerator("clayton", 4.0)
    model = AcModel(gen, 2)
    rng = np.random.default_rng(4)
    u = model.sample(10000, rng)
    tau_sample = kendall_tau(u[:, 0], u[:, 1])
    u_mc = model.sample(40000, rng)
    tau_oracle = 4.0 * np.mean(model.cdf(u_mc)) - 1.0
    assert abs(tau_sample - tau_oracle) < 0.02
