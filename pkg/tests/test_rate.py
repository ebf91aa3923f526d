import math

import numpy as np
import pytest

from halfline_ldp.coefficients import ConstantCoef, LinearCoef, LogisticCoef
from halfline_ldp.cramer import Gaussian, Poisson, Rademacher, legendre
from halfline_ldp.path_space import Constant, ExpGrowth, LinearSlope, Path, eval_path, zero_path
from halfline_ldp.rate import (Cev, Diffusion, Quadratic, RandomWalk, extension_residual,
                               most_likely_extension, rate_finite_horizon, rate_infinite,
                               rate_model_from_dict, rate_model_to_dict, straighten, theta_absorption)
from halfline_ldp.variational import WeightedNormAtLeast, infimum_rate

EX21 = Path([0, 1], [0, 2])  # 2t up to 1, then constant


def poly(rng, max_slope=None, start=0.0, n=6, t_max=4.0):
    t = np.unique(np.concatenate([[0.0], rng.uniform(0.05, t_max, n - 1)]))
    dt = np.diff(t)
    s = rng.uniform(-max_slope, max_slope, dt.size) if max_slope else rng.normal(0, 1.5, dt.size)
    return Path(t, start + np.concatenate([[0.0], np.cumsum(s * dt)]))


class TestExamples:
    def test_example_path(self):
        assert rate_infinite(Quadratic(1.0), EX21).value == pytest.approx(2.0, abs=1e-12)
        assert rate_finite_horizon(Quadratic(1.0), EX21, 1.0).value == pytest.approx(2.0, abs=1e-12)
        assert rate_finite_horizon(Quadratic(1.0), EX21, 7.0).value == pytest.approx(2.0, abs=1e-12)

    def test_brownian_line(self):
        m = Diffusion(ConstantCoef(0.0), ConstantCoef(1.0), 0.0)
        f = Path([0, 3], [0, 6])
        assert rate_finite_horizon(m, f, 3.0).value == pytest.approx(2.0 ** 2 * 3 / 2, abs=1e-9)

    def test_wrong_origin(self):
        for m in (Quadratic(1.0), RandomWalk(Rademacher()), Cev(0.1, 1.0, 0.5)):
            rv = rate_infinite(m, Path([0, 1], [0.5, 1.0]))
            assert not rv.finite and math.isinf(rv.value)

    def test_random_walk_zero_and_drift(self):
        m = RandomWalk(Rademacher())
        assert rate_infinite(m, zero_path()).value == 0.0
        assert not rate_infinite(m, Path([0, 1], [0, 0.5], LinearSlope(1.0))).finite
        p = RandomWalk(Poisson(2.0))
        assert rate_infinite(p, Path([0.0], [0.0], LinearSlope(2.0))).value == 0.0

    def test_cev_growth_path_is_free(self):
        m = Cev(0.3, 1.0, 0.5)
        assert rate_infinite(m, Path([0.0], [1.0], ExpGrowth(0.3))).value == pytest.approx(0.0, abs=1e-12)

    def test_theta(self):
        assert theta_absorption(Path([0, 2], [1, -1])) == pytest.approx(1.0)
        assert math.isinf(theta_absorption(Path([0, 1], [1, 2])))
        assert math.isinf(theta_absorption(Path([0.0], [1.0], ExpGrowth(-0.5))))

    def test_cev_hit_zero_diverges_but_reports_truncation(self):
        rv = rate_infinite(Cev(0.0, 1.0, 0.5), Path([0, 1], [1, 0]))
        assert not rv.finite
        assert rv.truncated is not None and rv.truncated > 0

    def test_cev_decaying_tail_is_finite(self):
        rv = rate_infinite(Cev(0.0, 1.0, 0.75), Path([0.0], [1.0], ExpGrowth(-0.5)))
        assert rv.finite and rv.value > 0


class TestProperties:
    @pytest.mark.parametrize("m", [Quadratic(2.0), RandomWalk(Gaussian(0.0, 1.0)), RandomWalk(Rademacher()),
                                   Diffusion(LinearCoef(0.0, -1.0), ConstantCoef(1.0), 0.0)],
                             ids=["quad", "gauss", "rad", "ou"])
    def test_monotone_in_horizon(self, rng, m):
        for _ in range(20):
            f = poly(rng, 0.9)
            vals = [rate_finite_horizon(m, f, T).value for T in (0.5, 1.0, 2.0, 3.5, 6.0)]
            assert all(b >= a - 1e-12 for a, b in zip(vals, vals[1:]))

    @pytest.mark.parametrize("m", [Quadratic(1.0), RandomWalk(Poisson(1.0)), RandomWalk(Rademacher()),
                                   Diffusion(ConstantCoef(0.5), ConstantCoef(1.0), 0.0),
                                   Diffusion(LinearCoef(0.0, -1.0), ConstantCoef(1.0), 0.0),
                                   Diffusion(LogisticCoef(-1.0, 1.0, 2.0), LogisticCoef(0.8, 1.2), 0.0)],
                             ids=["quad", "pois", "rad", "drift", "ou", "logistic"])
    def test_extension_neutrality(self, rng, m):
        for _ in range(3):
            f = poly(rng, 0.8, t_max=2.0)
            T = 1.5
            base = rate_finite_horizon(m, f, T).value
            g = most_likely_extension(m, f, T)
            for U in (T, 2 * T, 10 * T, 40 * T):
                assert rate_finite_horizon(m, g, U).value == pytest.approx(base, abs=1e-6)
            assert extension_residual(m, g) <= 1e-12
            if not isinstance(m, Diffusion) or isinstance(m.a, ConstantCoef):
                # analytic tails are exact; ODE tails stop at a tiny residual drift
                assert rate_infinite(m, g).value == pytest.approx(base, abs=1e-6)

    def test_ou_extension_tracks_ode(self):
        m = Diffusion(LinearCoef(0.0, -1.0), ConstantCoef(1.0), 0.0)
        f = Path([0, 1], [0, 2])
        g = most_likely_extension(m, f, 1.0)
        t = np.linspace(1.0, 10.0, 200)
        assert np.max(np.abs(eval_path(g, t) - 2.0 * np.exp(-(t - 1.0)))) < 1e-4

    def test_jensen_straightening(self, rng):
        models = [RandomWalk(Rademacher()), RandomWalk(Gaussian(0.2, 1.5)), RandomWalk(Poisson(1.0, True))]
        for k in range(1000):
            m = models[k % 3]
            f = poly(rng, 0.95)
            T = float(rng.uniform(0.2, 5.0))
            lhs = rate_finite_horizon(m, f, T).value
            chord = T * legendre(m.dev, (eval_path(f, T) - 0.0) / T)
            assert lhs >= chord - 1e-10
            assert rate_finite_horizon(m, straighten(f, T), T).value <= lhs + 1e-10

    def test_quadratic_equals_gaussian_walk(self, rng):
        for var in (0.5, 1.0, 3.0):
            q, gw = Quadratic(var), RandomWalk(Gaussian(0.0, var))
            for _ in range(30):
                f = poly(rng)
                assert rate_finite_horizon(q, f, 3.0).value == pytest.approx(
                    rate_finite_horizon(gw, f, 3.0).value, abs=1e-10)
                assert rate_infinite(q, f).value == pytest.approx(rate_infinite(gw, f).value, abs=1e-10)

    def test_shift_covariance(self, rng):
        pairs = [(Gaussian(0.7, 1.2), Gaussian(0.0, 1.2), 0.7), (Poisson(1.5), Poisson(1.5, True), 1.5)]
        for raw, centered, a in pairs:
            e_a = Path([0.0], [0.0], LinearSlope(a))
            for _ in range(20):
                f = poly(rng, 1.0 if isinstance(raw, Gaussian) else None)
                if isinstance(raw, Poisson):
                    f = Path(f.times, np.concatenate([[0.0], np.cumsum(rng.uniform(0.1, 3.0, f.times.size - 1)
                                                                       * np.diff(f.times))]))
                lhs = rate_finite_horizon(RandomWalk(raw), f, 3.0).value
                rhs = rate_finite_horizon(RandomWalk(centered), f.shifted(e_a, -1.0), 3.0).value
                assert lhs == pytest.approx(rhs, abs=1e-9)

    def test_level_set_tail_bound(self):
        sigma2, tol = 1.0, 0.05
        delta = (1 - tol) / (2 * sigma2)
        m = RandomWalk(Gaussian(0.0, sigma2))
        for c in (0.5, 1.0, 2.0):
            res = infimum_rate(m, WeightedNormAtLeast(c, 0.0))
            r = res.value
            for T in (1.0, 10.0, 100.0):
                t = np.geomspace(T, T * 1e4, 400)
                sup = float(np.max(np.abs(eval_path(res.argmin, t)) / (1 + t)))
                assert sup <= math.sqrt(r / delta) / math.sqrt(T)


def test_diffusion_bounds_checked():
    with pytest.raises(ValueError):
        Diffusion(ConstantCoef(0.0), ConstantCoef(5.0), 0.0, lam_bound=2.0)
    assert Diffusion(ConstantCoef(0.0), ConstantCoef(2.0), 0.0).lam_bound == 4.0


def test_rate_model_json():
    for m in (Quadratic(2.0), RandomWalk(Rademacher()), Cev(0.1, 2.0, 0.75),
              Diffusion(LinearCoef(0.0, -1.0), ConstantCoef(1.0), 0.5)):
        back = rate_model_from_dict(rate_model_to_dict(m))
        assert rate_model_to_dict(back) == rate_model_to_dict(m)
    with pytest.raises(ValueError):
        rate_model_from_dict({"kind": "quadratic", "sigma": 1})
