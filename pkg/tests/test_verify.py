import math

import numpy as np
import pytest
from scipy import stats

from halfline_ldp.cramer import Gaussian, Poisson, Rademacher, TableEmpirical
from halfline_ldp.errors import UnsupportedError
from halfline_ldp.path_space import Constant, Path
from halfline_ldp.simulate import DiffusionSim, RandomWalkSim, sample_block
from halfline_ldp.variational import EndpointAtLeast, LevelCrossBefore, WeightedNormAtLeast, contains
from halfline_ldp.verify import (CSV_COLUMNS, estimate_prob, estimate_prob_tilted, estimates_csv,
                                 event_hits, fit_ldp_slope, kolmogorov_check, kolmogorov_grid, speed_of,
                                 synthetic_estimate, tail_sup_prob)

import oracles


class TestCrude:
    def test_brownian_example_band(self):
        est = estimate_prob(DiffusionSim(n=2, horizon=10.0, seed=1), WeightedNormAtLeast(1.0, 0.0), 100_000)
        assert 1.6 <= est.log_scaled <= 2.4
        assert est.ci_low <= est.p_hat <= est.ci_high

    def test_impossible_event(self):
        est = estimate_prob(RandomWalkSim(Rademacher(), 10, seed=1), EndpointAtLeast(1.0, 1.5), 1000)
        assert est.p_hat == 0.0 and est.ci_high == 3.0 / 1000 and math.isinf(est.log_scaled)

    def test_certain_event(self):
        est = estimate_prob(RandomWalkSim(Rademacher(), 10, seed=1), EndpointAtLeast(1.0, -1e9), 1000)
        assert est.p_hat == 1.0 and est.log_scaled == 0.0

    def test_needs_replicates(self):
        with pytest.raises(ValueError):
            estimate_prob(RandomWalkSim(Rademacher(), 10), EndpointAtLeast(1.0, 0.1), 50)

    def test_monotone_in_level(self):
        sim = RandomWalkSim(Gaussian(), 5, horizon=20.0, seed=4)
        hits = [estimate_prob(sim, WeightedNormAtLeast(c, 0.0), 20_000).hits for c in (0.2, 0.3, 0.4, 0.6)]
        assert all(b <= a for a, b in zip(hits, hits[1:]))

    def test_speed(self):
        assert speed_of(RandomWalkSim(Rademacher(), 100)) == 100
        assert speed_of(RandomWalkSim(Rademacher(), 100, x=1000.0)) == pytest.approx(10_000.0)
        from halfline_ldp.simulate import CevSim
        assert speed_of(CevSim(gamma=0.75, n=16)) == pytest.approx(4.0)


class TestTilted:
    def test_gaussian_endpoint_exact(self):
        n = 50
        est = estimate_prob_tilted(RandomWalkSim(Gaussian(), n, seed=2), EndpointAtLeast(1.0, 1.0), 100_000)
        exact = stats.norm.sf(math.sqrt(n))
        half = (est.ci_high - est.ci_low) / 2
        assert abs(est.p_hat - exact) <= 3 * half
        crude = estimate_prob(RandomWalkSim(Gaussian(), n, seed=2), EndpointAtLeast(1.0, 1.0), 100_000)
        assert est.ess > 100 * max(crude.hits, 1)

    def test_zero_tilt_is_crude(self):
        sim = RandomWalkSim(Rademacher(), 8, seed=3)
        e = EndpointAtLeast(1.0, 0.5)
        a, b = estimate_prob_tilted(sim, e, 10_000, lam=0.0), estimate_prob(sim, e, 10_000)
        assert a.hits == b.hits and a.p_hat == pytest.approx(b.p_hat, rel=1e-12)

    @pytest.mark.parametrize("model,event", [
        (Rademacher(), WeightedNormAtLeast(0.3, 0.0)),
        (Poisson(1.0, True), WeightedNormAtLeast(0.3, 0.0)),
        (Gaussian(), WeightedNormAtLeast(0.25, 0.5)),
        (Rademacher(), LevelCrossBefore(0.4, 2.0)),
        (TableEmpirical(((-1.0, 0.3), (0.0, 0.3), (2.0, 0.4))), LevelCrossBefore(-0.4, 2.0)),
        (Gaussian(), EndpointAtLeast(1.0, 0.6)),
    ], ids=["rad-norm", "pois-norm", "gauss-kappa", "rad-cross", "table-down", "gauss-end"])
    def test_unbiasedness_bridge(self, model, event):
        sim = RandomWalkSim(model, 12, horizon=12.0, seed=5)
        a = estimate_prob_tilted(sim, event, 20_000)
        b = estimate_prob(sim, event, 20_000)
        assert a.ess >= 50 and b.hits >= 50
        assert a.ci_low <= b.ci_high and b.ci_low <= a.ci_high

    def test_rejects_diffusions(self):
        with pytest.raises(UnsupportedError):
            estimate_prob_tilted(DiffusionSim(n=1), EndpointAtLeast(1.0, 1.0), 1000)


class TestSlopeFit:
    def test_exact_exponential(self):
        fit = fit_ldp_slope([synthetic_estimate(n, math.exp(-2 * n)) for n in (2, 4, 6)], 2.0)
        assert fit.slope == pytest.approx(-2.0, abs=1e-12) and fit.passed

    def test_polynomial_prefactor(self):
        fit = fit_ldp_slope([synthetic_estimate(n, n * math.exp(-2 * n)) for n in (2, 4, 6)], 2.0)
        assert fit.residual > 0 and fit.passed

    def test_fails_outside_band(self):
        assert not fit_ldp_slope([synthetic_estimate(n, math.exp(-3 * n)) for n in (2, 4, 6)], 2.0).passed

    def test_errors(self):
        pts = [synthetic_estimate(n, math.exp(-2 * n)) for n in (2, 4, 6)]
        with pytest.raises(ValueError):
            fit_ldp_slope(pts[::-1], 2.0)
        with pytest.raises(ValueError):
            fit_ldp_slope(pts[:2], 2.0)
        with pytest.raises(ValueError):
            fit_ldp_slope(pts[:2] + [synthetic_estimate(8, 0.0)], 2.0)

    def test_zero_points_dropped(self):
        pts = [synthetic_estimate(n, math.exp(-2 * n)) for n in (2, 4, 6)] + [synthetic_estimate(8, 0.0)]
        assert fit_ldp_slope(pts, 2.0).dropped == 1


class TestTailSup:
    def test_example_below_bound(self):
        res = tail_sup_prob(DiffusionSim(n=4, horizon=64.0, seed=6), 8.0, 0.5, 0.0, 100_000)
        assert res.bound == pytest.approx(4 * math.exp(-8 * 4 * 0.25 / 16))
        assert res.estimate.p_hat < res.bound and res.consistent

    def test_huge_eps_and_whole_line(self):
        sim = DiffusionSim(n=4, horizon=8.0, seed=6)
        assert tail_sup_prob(sim, 1.0, 50.0, 0.0, 1000).estimate.p_hat == 0.0
        r0 = tail_sup_prob(sim, 0.0, 0.5, 0.0, 1000)
        assert r0.bound is None

    def test_horizon_guard(self):
        with pytest.raises(ValueError):
            tail_sup_prob(DiffusionSim(n=4, horizon=10.0), 8.0, 0.5, 0.0, 1000)

    def test_decreasing_in_T(self):
        logs = []
        for T in (1.0, 2.0, 4.0):
            res = tail_sup_prob(DiffusionSim(n=2, horizon=32.0, seed=7), T, 0.3, 0.0, 20_000)
            assert res.consistent
            logs.append(math.log(res.estimate.p_hat))
        assert logs[0] > logs[1] > logs[2]


class TestKolmogorov:
    def test_example_cell(self):
        r = kolmogorov_check(Rademacher(), 3, 1.0, 1.0)
        assert (r.lhs, r.rhs, r.passed) == (0.5, 2.0, True)

    def test_classical_and_trivial_cases(self):
        r = kolmogorov_check(Rademacher(), 6, 2.0, 100.0)
        assert r.rhs == pytest.approx(kolmogorov_check(Rademacher(), 6, 2.0, 100.0).rhs)
        big = kolmogorov_check(Rademacher(), 6, 1.0, 10.0)
        assert big.lhs == 0.0 and big.passed
        z = kolmogorov_check(Rademacher(), 5, 0.0, 1.0)
        assert z.lhs <= 1.0 <= z.rhs and z.passed

    @pytest.mark.parametrize("model", [Rademacher(), TableEmpirical(((-1.0, 0.3), (0.5, 0.5), (2.0, 0.2)))],
                             ids=["rad", "table"])
    def test_matches_enumeration(self, model):
        vals = [-1.0, 1.0] if isinstance(model, Rademacher) else list(model.values)
        probs = [0.5, 0.5] if isinstance(model, Rademacher) else list(model.probs)
        for n in (1, 3, 6):
            for x, y in ((0.5, 1.0), (1.0, 1.0), (2.0, 0.5), (0.0, 3.0)):
                r = kolmogorov_check(model, n, x, y)
                lhs, rhs = oracles.kolmogorov_brute(vals, probs, n, x, y)
                assert r.lhs == pytest.approx(lhs, abs=1e-14)
                assert r.rhs == pytest.approx(rhs, rel=1e-12) or (math.isinf(r.rhs) and math.isinf(rhs))

    def test_errors(self):
        with pytest.raises(UnsupportedError):
            kolmogorov_check(Gaussian(), 3, 1.0, 1.0)
        with pytest.raises(UnsupportedError):
            kolmogorov_check(TableEmpirical(((0, .25), (1, .25), (2, .25), (3, .25))), 3, 1.0, 1.0)
        with pytest.raises(ValueError):
            kolmogorov_check(Rademacher(), 21, 1.0, 1.0)


@pytest.mark.parametrize("event", [WeightedNormAtLeast(0.4, 0.0), WeightedNormAtLeast(0.3, 0.5),
                                   WeightedNormAtLeast(0.25, 1.0, strict=True), EndpointAtLeast(1.3, 0.3),
                                   LevelCrossBefore(0.5, 2.5), LevelCrossBefore(-0.5, 1.7)],
                         ids=["norm0", "norm05", "norm1", "end", "up", "down"])
def test_batch_predicate_matches_single_path(event):
    sim = RandomWalkSim(Gaussian(), 6, horizon=6.0, seed=8)
    times, V = sample_block(sim, 0, 400)
    got = event_hits(event, times, V)
    want = np.array([contains(event, Path(times, v, Constant())) for v in V])
    assert np.array_equal(got, want)


def test_csv_format():
    est = synthetic_estimate(3, 1.0 / 3.0)
    text = estimates_csv([(est, 2.0, "PASS"), (synthetic_estimate(4, 0.0), 2.0, "")], "# h\n")
    lines = text.splitlines()
    assert lines[0] == "# h" and lines[1] == ",".join(CSV_COLUMNS)
    assert "0.33333333333333331" in lines[2]
    assert lines[3].split(",")[7] == "inf"
