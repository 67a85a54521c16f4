import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats
from scipy.integrate import quad

from conftest import random_unit
from pkbd.densities import PkbdComponent, VmfComponent, log_vmf_normalizer
from pkbd.errors import EfficiencyTooLow, InvalidDimension, InvalidParameter
from pkbd.samplers import (
    envelope_constants,
    log_acceptance_ratio,
    pkbd_cdf_circle,
    pkbd_inverse_cdf_circle,
    predicted_efficiency,
    rejection_trial,
    sample_pkbd,
    sample_pkbd_circle,
    sample_pkbd_rejection,
    sample_uniform,
    sample_vmf,
    uniform_envelope_constant,
)
from pkbd.sphere import surface_area

EFFICIENCIES = [
    (3, 0.1, 0.97661, 0.73636),
    (3, 0.4, 0.60894, 0.25714),
    (5, 0.1, 0.95492, 0.59645),
    (5, 0.3, 0.60808, 0.18469),
    (10, 0.1, 0.90278, 0.35220),
    (10, 0.3, 0.33698, 0.03104),
    (50, 0.1, 0.57614, 0.00521),
    (50, 0.2, 0.08983, 0.00001),
    (100, 0.1, 0.32863, 0.00003),
]


def pkbd_t_cdf_d3(t, rho):
    """CDF of t = x.mu under PKBD on S^2 (closed-form integral of the marginal)."""
    return (1 - rho**2) / (2 * rho) * ((1 + rho**2 - 2 * rho * t) ** -0.5 - 1 / (1 + rho))


def pkbd_t_cdf(t, rho, d):
    """Numerical CDF of t for general d: density omega_{d-1} f(t) (1-t^2)^{(d-3)/2}."""
    w = surface_area(d - 1) / surface_area(d)

    def pdf(s):
        return w * (1 - rho**2) / (1 + rho**2 - 2 * rho * s) ** (d / 2) * (1 - s * s) ** ((d - 3) / 2)

    return quad(pdf, -1, t, limit=200)[0]


@pytest.mark.parametrize("d, rho, eff_vmf, eff_unif", EFFICIENCIES)
def test_efficiency_table(d, rho, eff_vmf, eff_unif):
    env = envelope_constants(rho, d)
    assert round(env.efficiency, 5) == pytest.approx(eff_vmf, abs=1e-12)
    assert round(1 / uniform_envelope_constant(rho, d), 5) == pytest.approx(eff_unif, abs=1e-12)
    assert env.kappa_rho == d * rho / (1 + rho * rho)
    assert env.m_rho >= 1.0
    assert env.efficiency >= 1 / uniform_envelope_constant(rho, d)


def test_uniform_envelope_tends_to_one():
    assert 1 / uniform_envelope_constant(1e-9, 7) == pytest.approx(1.0, abs=1e-7)


def test_envelope_rejects_bad_input():
    with pytest.raises(InvalidParameter):
        envelope_constants(1.0, 3)
    with pytest.raises(InvalidDimension):
        envelope_constants(0.5, 1)


@given(st.integers(2, 40), st.floats(0.01, 0.9), st.integers(0, 2**32 - 1))
@settings(max_examples=40)
def test_envelope_dominates(d, rho, seed):
    g = np.random.default_rng(seed)
    mu = random_unit(g, d)
    c = PkbdComponent(mu, rho)
    # points everywhere plus points at mode and antimode
    x = np.vstack([random_unit(g, d, 200), mu, -mu])
    for env in ("vmf", "uniform"):
        assert np.all(log_acceptance_ratio(x, c, env) <= 1e-9)


def test_uniform_sampler(rng):
    b = sample_uniform(3, 100_000, rng)
    assert b.proposals_used == b.n == 100_000
    np.testing.assert_allclose(np.linalg.norm(b.points, axis=1), 1.0, atol=1e-12)
    assert np.all(np.abs(b.points.mean(axis=0)) < 3 / math.sqrt(3 * 100_000))
    ang = np.mod(np.arctan2(*sample_uniform(2, 100_000, rng).points.T[::-1]), 2 * np.pi)
    assert stats.kstest(ang, stats.uniform(0, 2 * np.pi).cdf).statistic < 0.01


def test_vmf_mean_cosine(rng):
    kappa, n = 5.0, 100_000
    b = sample_vmf(VmfComponent(np.array([0.0, 0.0, 1.0]), kappa), n, rng)
    t = b.points[:, 2]
    expected = 1 / math.tanh(kappa) - 1 / kappa
    assert expected == pytest.approx(0.80009, abs=1e-5)
    assert abs(t.mean() - expected) < 3 * t.std() / math.sqrt(n)


@pytest.mark.parametrize("d", [2, 4, 7])
def test_vmf_cosine_law(d, rng):
    kappa = 3.0
    mu = random_unit(rng, d)
    t = sample_vmf(VmfComponent(mu, kappa), 20_000, rng).points @ mu
    w = surface_area(d - 1) if d > 2 else 2.0
    lc = log_vmf_normalizer(d, kappa)

    def cdf(x):
        a = (d - 3) / 2
        return quad(lambda s: w * math.exp(lc + kappa * s) * (1 - s) ** a, -1, x, weight="alg", wvar=(a, 0.0))[0] if x < 1 else 1.0

    assert stats.kstest(t, np.vectorize(cdf)).pvalue > 1e-3


def test_vmf_kappa_zero_is_uniform(rng):
    pts = sample_vmf(VmfComponent(np.eye(3)[0], 0.0), 50_000, rng).points
    assert stats.kstest(pts[:, 0], stats.uniform(-1, 2).cdf).pvalue > 1e-3


def test_circle_cdf_examples():
    for rho in (0.0, 0.2, 0.5, 0.95):
        assert pkbd_cdf_circle(np.pi, rho) == pytest.approx(0.5)
    th = np.linspace(0, 2 * np.pi, 9, endpoint=False)
    np.testing.assert_allclose(pkbd_cdf_circle(th, 0.0), th / (2 * np.pi), atol=1e-12)
    assert pkbd_cdf_circle(np.pi / 2, 0.5) == pytest.approx(math.atan(3) / math.pi, rel=1e-12)
    assert pkbd_cdf_circle(np.pi / 2, 0.5) == pytest.approx(0.3976, abs=5e-5)


def test_circle_cdf_matches_integrated_density():
    rho = 0.6
    for theta in (0.3, 1.2, 2.9, 3.5, 5.0):
        val = quad(lambda s: (1 - rho**2) / (2 * np.pi * (1 + rho**2 - 2 * rho * np.cos(s))), 0, theta)[0]
        assert pkbd_cdf_circle(theta, rho) == pytest.approx(val, abs=1e-10)


@given(st.floats(0.0, 0.99), st.floats(0.0, 0.999999))
def test_circle_inverse_roundtrip(rho, u):
    theta = pkbd_inverse_cdf_circle(u, rho)
    assert 0.0 <= theta < 2 * np.pi
    assert pkbd_cdf_circle(theta, rho) == pytest.approx(u, abs=1e-9)


def test_circle_sampler(rng):
    rho = 0.7
    ang = 2.0
    mu = np.array([math.cos(ang), math.sin(ang)])
    b = sample_pkbd_circle(PkbdComponent(mu, rho), 100_000, rng)
    assert b.proposals_used == b.n
    theta = np.mod(np.arctan2(b.points[:, 1], b.points[:, 0]) - ang, 2 * np.pi)
    assert stats.kstest(theta, lambda t: pkbd_cdf_circle(t, rho)).statistic < 0.01
    mean_dir = b.points.mean(axis=0)
    assert abs(math.degrees(math.atan2(mean_dir[1], mean_dir[0]) - ang)) < 1.0
    with pytest.raises(InvalidDimension):
        sample_pkbd_circle(PkbdComponent(np.eye(3)[0], 0.5), 10, rng)


@pytest.mark.parametrize("envelope", ["vmf", "uniform"])
@pytest.mark.parametrize("rho", [0.2, 0.8])
def test_rejection_matches_closed_form_cdf_d3(envelope, rho, rng):
    mu = random_unit(rng, 3)
    b = sample_pkbd_rejection(PkbdComponent(mu, rho), 20_000, envelope, rng)
    np.testing.assert_allclose(np.linalg.norm(b.points, axis=1), 1.0, atol=1e-12)
    t = b.points @ mu
    assert stats.kstest(t, lambda s: pkbd_t_cdf_d3(s, rho)).pvalue > 1e-3


@pytest.mark.parametrize("d, rho", [(5, 0.5), (10, 0.3)])
def test_rejection_matches_numeric_cdf(d, rho, rng):
    mu = np.eye(d)[-1]
    t = sample_pkbd(PkbdComponent(mu, rho), 10_000, rng).points @ mu
    assert stats.kstest(t, np.vectorize(lambda s: pkbd_t_cdf(s, rho, d))).pvalue > 1e-3


def test_rejection_on_circle_agrees_with_inversion(rng):
    c = PkbdComponent(np.array([0.0, 1.0]), 0.5)
    a = sample_pkbd(c, 50_000, rng, method="inverse").points
    b = sample_pkbd(c, 50_000, rng, method="reject-vmf").points
    assert stats.ks_2samp(np.arctan2(a[:, 1], a[:, 0]), np.arctan2(b[:, 1], b[:, 0])).statistic < 0.015


def test_rotational_equivariance(rng):
    d, rho = 4, 0.6
    q, _ = np.linalg.qr(rng.standard_normal((d, d)))
    mu = np.eye(d)[0]
    a = sample_pkbd(PkbdComponent(mu, rho), 20_000, rng).points @ q.T
    b = sample_pkbd(PkbdComponent(q @ mu, rho), 20_000, rng).points
    probe = random_unit(rng, d)
    assert stats.ks_2samp(a @ probe, b @ probe).pvalue > 1e-3


@pytest.mark.parametrize("d, rho, envelope", [(3, 0.1, "vmf"), (10, 0.3, "uniform"), (5, 0.3, "vmf")])
def test_acceptance_rate_close_to_efficiency(d, rho, envelope, rng):
    k = 100_000
    eff = predicted_efficiency(rho, d, envelope)
    _, accepted = rejection_trial(PkbdComponent(np.eye(d)[0], rho), k, envelope, rng)
    assert abs(accepted / k - eff) < 3 * math.sqrt(eff * (1 - eff) / k)


def test_proposals_used_counts_sequential_draws(rng):
    b = sample_pkbd_rejection(PkbdComponent(np.eye(5)[0], 0.3), 1000, "uniform", rng)
    assert b.n == 1000
    assert b.proposals_used >= b.n
    eff = predicted_efficiency(0.3, 5, "uniform")
    # proposals_used is negative binomial; 5 SD band
    sd = math.sqrt(1000 * (1 - eff)) / eff
    assert abs(b.proposals_used - 1000 / eff) < 5 * sd


def test_efficiency_too_low():
    with pytest.raises(EfficiencyTooLow):
        sample_pkbd(PkbdComponent(np.eye(100)[0], 0.9), 5, 1, method="reject-uniform")


def test_seeded_sampling_is_reproducible():
    c = PkbdComponent(np.eye(4)[0], 0.4)
    a = sample_pkbd(c, 300, 11)
    b = sample_pkbd(c, 300, 11)
    assert a.seed == 11
    np.testing.assert_array_equal(a.points, b.points)
    assert a.proposals_used == b.proposals_used
