import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from halfline_ldp.cramer import (CenteredBernoulli, DeviationFunction, Gaussian, Poisson, Rademacher,
                                 TableEmpirical, check_superlinearity, d2log_mgf, dlog_mgf, legendre,
                                 legendre_argmax, log_mgf, mean, model_from_dict, variance)

import oracles

MODELS = [Gaussian(0.3, 2.0), Rademacher(), CenteredBernoulli(0.2), Poisson(1.5), Poisson(1.0, True),
          TableEmpirical(((-1.0, 0.25), (0.5, 0.5), (2.0, 0.25)))]


def inner_alphas(m, k=7):
    lo, hi = m.support
    mu, sd = mean(m), math.sqrt(variance(m))
    a, b = max(lo, mu - 3 * sd), min(hi, mu + 3 * sd)
    pad = 1e-3 * (b - a)
    return np.linspace(a + pad, b - pad, k)


class TestExamples:
    def test_gaussian(self):
        assert legendre(Gaussian(), 1.0) == pytest.approx(0.5, abs=1e-14)
        assert legendre(Gaussian(), 0.0) == 0.0

    def test_rademacher(self):
        assert legendre(Rademacher(), 0.5) == pytest.approx(0.130812035941137, abs=1e-13)
        assert legendre(Rademacher(), 1.0) == pytest.approx(math.log(2.0), abs=1e-15)
        assert legendre(Rademacher(), -1.0) == pytest.approx(math.log(2.0), abs=1e-15)
        assert math.isinf(legendre(Rademacher(), 1.5))

    def test_poisson_centered(self):
        for a in (-0.5, 0.5, 3.0):
            assert legendre(Poisson(1.0, True), a) == pytest.approx((1 + a) * math.log1p(a) - a, abs=1e-12)
        assert legendre(Poisson(1.0, True), -1.0) == pytest.approx(1.0)  # -ln P(N = 0)
        assert math.isinf(legendre(Poisson(1.0, True), -1.5))

    def test_table_endpoint(self):
        m = TableEmpirical(((0.0, 0.4), (1.0, 0.6)))
        assert legendre(m, 0.0) == pytest.approx(-math.log(0.4), abs=1e-14)
        assert math.isinf(legendre(m, 1.2))

    def test_log_mgf_values(self):
        assert log_mgf(Poisson(1.0, True), 1.0) == pytest.approx(math.e - 2.0)
        assert log_mgf(Rademacher(), 800.0) == pytest.approx(800.0 - math.log(2.0))
        assert dlog_mgf(Rademacher(), 1e4) == pytest.approx(1.0)
        assert d2log_mgf(Rademacher(), 0.0) == pytest.approx(1.0)


@pytest.mark.parametrize("m", MODELS, ids=lambda m: type(m).__name__)
def test_zero_at_mean_positive_elsewhere(m):
    d = DeviationFunction(m)
    assert legendre(d, d.mean) <= 1e-12
    for a in inner_alphas(m, 11):
        if abs(a - d.mean) >= 1e-3:
            assert legendre(d, a) > 0


@pytest.mark.parametrize("m", MODELS, ids=lambda m: type(m).__name__)
def test_argmax_inverts_derivative(m):
    for a in inner_alphas(m):
        lam = legendre_argmax(m, a)
        assert dlog_mgf(m, lam) == pytest.approx(a, abs=1e-9)


def test_table_matches_grid_oracle():
    m = MODELS[-1]
    alphas = inner_alphas(m, 200)
    ref = oracles.grid_legendre(oracles.table_log_mgf(m.values, m.probs), alphas)
    got = np.array([legendre(m, a) for a in alphas])
    assert np.max(np.abs(got - ref)) < 1e-8


def test_gaussian_shift_rule():
    for a in np.linspace(-3, 3, 25):
        assert legendre(Gaussian(0.7, 1.3), a) == pytest.approx(legendre(Gaussian(0.0, 1.3), a - 0.7), abs=1e-10)


@settings(max_examples=80, deadline=None)
@given(st.sampled_from(range(len(MODELS))), st.floats(0, 1), st.floats(0, 1), st.floats(0.01, 0.99))
def test_convexity(i, u1, u2, theta):
    m = MODELS[i]
    lo, hi = inner_alphas(m, 2)
    a1, a2 = lo + u1 * (hi - lo), lo + u2 * (hi - lo)
    mid = legendre(m, theta * a1 + (1 - theta) * a2)
    assert mid <= theta * legendre(m, a1) + (1 - theta) * legendre(m, a2) + 1e-9


@settings(max_examples=80, deadline=None)
@given(st.sampled_from(range(len(MODELS))), st.floats(-3, 3), st.floats(0, 1))
def test_fenchel_young(i, lam, u):
    m = MODELS[i]
    lo, hi = inner_alphas(m, 2)
    a = lo + u * (hi - lo)
    assert lam * a <= log_mgf(m, lam) + legendre(m, a) + 1e-9


def test_superlinearity_gaussian():
    grid = np.concatenate([-np.logspace(-2, 1, 31), np.logspace(-2, 1, 31)])
    rep = check_superlinearity(Gaussian(), grid)
    assert rep.ok and not rep.violations
    for a, r in zip(rep.abs_alpha, rep.ratio):
        assert r == pytest.approx(a / 2, rel=1e-12)


def test_superlinearity_poisson_and_rademacher():
    assert check_superlinearity(Poisson(1.0, True), np.linspace(-0.99, 10, 400)).ok
    rep = check_superlinearity(Rademacher(), np.linspace(-0.1, 0.1, 41))
    assert rep.near_zero_ok
    # series: Lambda(a) = a^2/2 + a^4/12 + ...
    for a in (1e-3, 1e-2):
        assert legendre(Rademacher(), a) == pytest.approx(a * a / 2 + a ** 4 / 12, rel=1e-8)


def test_model_validation_and_json():
    for m in MODELS:
        assert model_from_dict(m.to_dict()) == m
    with pytest.raises(ValueError):
        TableEmpirical(((0.0, 0.5), (1.0, 0.4)))
    with pytest.raises(ValueError):
        CenteredBernoulli(1.0)
    with pytest.raises(ValueError):
        model_from_dict({"kind": "gaussian", "sd": 1})
