"""Monte Carlo probability estimates, LDP slope fits and exact inequality checks."""

from __future__ import annotations

import csv
import io
import itertools
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy import stats
from scipy.special import logsumexp

from .coefficients import constant_value, is_zero
from .cramer import (CenteredBernoulli, DeviationFunction, MgfModel, Rademacher, TableEmpirical,
                     legendre_argmax, variance)
from .errors import UnsupportedError
from .rate import Quadratic, RandomWalk
from .simulate import (CevSim, DiffusionSim, RandomWalkSim, SimSpec, block_layout, sample_block,
                       sample_block_tilted, sample_endpoint_sums)
from .variational import (EndpointAtLeast, EventSpec, LevelCrossBefore, WeightedNormAtLeast,
                          infimum_rate)

__all__ = [
    "LdpEstimate", "SlopeFit", "TailSupResult", "KolmogorovResult",
    "speed_of", "estimate_prob", "estimate_prob_tilted", "fit_ldp_slope",
    "tail_sup_prob", "kolmogorov_check", "kolmogorov_grid", "synthetic_estimate",
    "event_hits", "estimates_csv", "CSV_COLUMNS", "MIN_REPLICATES",
]

Z95 = float(stats.norm.ppf(0.975))
MIN_REPLICATES = 100
CSV_COLUMNS = ("kind", "n", "speed", "replicates", "p_hat", "ci_low", "ci_high",
               "log_scaled", "target", "verdict")


@dataclass
class LdpEstimate:
    n: int
    speed: float
    replicates: int
    p_hat: float
    ci_low: float
    ci_high: float
    log_p: float
    hits: int
    kind: str = "crude"
    ess: float | None = None

    @property
    def log_scaled(self) -> float:
        """``-(1/speed) ln p_hat``; ``inf`` when nothing was hit."""
        return -self.log_p / self.speed if math.isfinite(self.log_p) else math.inf


@dataclass
class SlopeFit:
    points: list[tuple[float, float]]
    slope: float
    intercept: float
    residual: float
    target: float
    band: float
    dropped: int = 0
    passed: bool = False

    @property
    def verdict(self) -> str:
        return "PASS" if self.passed else "FAIL"


@dataclass
class TailSupResult:
    estimate: LdpEstimate
    bound: float | None
    T: float
    eps: float

    @property
    def consistent(self) -> bool:
        """``ci_low <= bound`` (vacuous without a bound)."""
        return self.bound is None or self.estimate.ci_low <= self.bound


@dataclass
class KolmogorovResult:
    lhs: float
    rhs: float
    passed: bool
    n: int = 0
    x: float = 0.0
    y: float = 0.0


def speed_of(sim: SimSpec) -> float:
    if isinstance(sim, RandomWalkSim):
        return float(sim.n) if sim.x is None or sim.x == sim.n else sim.scale ** 2 / sim.n
    if isinstance(sim, CevSim):
        return float(sim.n) ** (2.0 * (1.0 - sim.gamma))
    return float(sim.n)


# --------------------------------------------------------------------------
# batch event predicates on a shared time grid (Constant tails)

def _at(times: np.ndarray, V: np.ndarray, t: float) -> np.ndarray:
    if t >= times[-1]:
        return V[:, -1].copy()
    j = int(np.searchsorted(times, t, side="right"))
    t0, t1 = times[j - 1], times[j]
    if t == t0:
        return V[:, j - 1].copy()
    w = (t - t0) / (t1 - t0)
    return V[:, j - 1] + w * (V[:, j] - V[:, j - 1])


def _restrict(times: np.ndarray, V: np.ndarray, lo: float = 0.0,
              hi: float = math.inf) -> tuple[np.ndarray, np.ndarray]:
    """Grid and values on ``[lo, hi]`` with interpolated end columns."""
    keep = (times > lo) & (times < hi)
    ts, cols = [times[keep]], [V[:, keep]]
    if lo > times[0]:
        ts.insert(0, np.array([lo]))
        cols.insert(0, _at(times, V, lo)[:, None])
    else:
        ts.insert(0, times[:1])
        cols.insert(0, V[:, :1])
    if hi < times[-1]:
        ts.append(np.array([hi]))
        cols.append(_at(times, V, hi)[:, None])
    elif math.isinf(hi) or hi >= times[-1]:
        if times[-1] > lo:
            ts.append(times[-1:])
            cols.append(V[:, -1:])
    return np.concatenate(ts), np.concatenate(cols, axis=1)


def _weighted_exceeds(times: np.ndarray, V: np.ndarray, c: float, kappa: float,
                      strict: bool) -> np.ndarray:
    """Rows with ``sup_t |v(t)| / (1 + t^{1+kappa}) >= c`` (``>`` when strict).

    On each segment ``max_s max_t (s v(t) - c w(t))`` is a concave problem with
    a closed-form maximiser; for ``kappa = 0`` the ratio is monotone on
    segments, so knots suffice.  The Constant tail only lowers the ratio.
    """
    cmp = np.greater if strict else np.greater_equal
    w = 1.0 + times ** (1.0 + kappa)
    hit = cmp((np.abs(V) - c * w).max(axis=1), 0.0)
    if kappa == 0.0 or V.shape[1] < 2:
        return hit
    t0, t1 = times[:-1], times[1:]
    v0, v1 = V[:, :-1], V[:, 1:]
    bound = np.maximum(np.abs(v0), np.abs(v1)) - c * w[:-1]
    r, s = np.nonzero(cmp(bound, 0.0) & ~hit[:, None])
    if r.size == 0:
        return hit
    a0, a1, lo, hi = v0[r, s], v1[r, s], t0[s], t1[s]
    b = (a1 - a0) / (hi - lo)
    for sign in (1.0, -1.0):
        sb = sign * b
        tt = np.where(sb > 0, np.power(np.maximum(sb, 0.0) / (c * (1.0 + kappa)), 1.0 / kappa), lo)
        tt = np.clip(tt, lo, hi)
        h = sign * (a0 + b * (tt - lo)) - c * (1.0 + tt ** (1.0 + kappa))
        np.logical_or.at(hit, r, cmp(h, 0.0))
    return hit


def event_hits(e: EventSpec, times: np.ndarray, V: np.ndarray) -> np.ndarray:
    """Membership of each row (a polygon with Constant tail) in the event."""
    if isinstance(e, WeightedNormAtLeast):
        return _weighted_exceeds(times, V, e.c, e.kappa, e.strict)
    if isinstance(e, EndpointAtLeast):
        v = _at(times, V, e.T)
        return v > e.b if e.strict else v >= e.b
    ts, W = _restrict(times, V, 0.0, e.T)
    if e.b >= 0:
        m = W.max(axis=1)
        return m > e.b if e.strict else m >= e.b
    m = W.min(axis=1)
    return m < e.b if e.strict else m <= e.b


def _tail_event_hits(times: np.ndarray, V: np.ndarray, T: float, eps: float, kappa: float) -> np.ndarray:
    ts, W = _restrict(times, V, T)
    return _weighted_exceeds(ts, W, eps, kappa, strict=True)


# --------------------------------------------------------------------------
# block runners

def _map_blocks(fn: Callable, tasks: list, workers: int) -> list:
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, tasks, chunksize=max(1, len(tasks) // (4 * workers))))


def _endpoint_index(sim: SimSpec, e: EventSpec) -> int | None:
    """Step index ``k = nT`` when the event only needs ``S_k``."""
    if not (isinstance(sim, RandomWalkSim) and isinstance(e, EndpointAtLeast)):
        return None
    k = e.T * sim.n
    if abs(k - round(k)) > 1e-9 or round(k) > sim.steps or round(k) < 1:
        return None
    return int(round(k))


def _crude_block(task) -> int:
    sim, e, block, rows, kend = task
    if kend is not None:
        v, _ = sample_endpoint_sums(sim, block, rows, kend)
        return int(np.count_nonzero(v > e.b if e.strict else v >= e.b))
    times, V = sample_block(sim, block, rows)
    return int(np.count_nonzero(event_hits(e, times, V)))


def _tail_block(task) -> int:
    sim, T, eps, kappa, block, rows = task
    times, V = sample_block(sim, block, rows)
    return int(np.count_nonzero(_tail_event_hits(times, V, T, eps, kappa)))


def _tilted_block(task) -> tuple[float, float, int]:
    sim, e, block, rows, lams, k_tilt, kend = task
    if kend is not None:
        v, logw = sample_endpoint_sums(sim, block, rows, kend, lams)
        hit = v > e.b if e.strict else v >= e.b
    else:
        times, V, logw = sample_block_tilted(sim, block, rows, lams, k_tilt)
        hit = event_hits(e, times, V)
    lw = logw[hit]
    if lw.size == 0:
        return -math.inf, -math.inf, 0
    return float(logsumexp(lw)), float(logsumexp(2.0 * lw)), int(lw.size)


# --------------------------------------------------------------------------
# estimators

def _wilson(hits: int, n: int) -> tuple[float, float]:
    ci = stats.binomtest(hits, n).proportion_ci(0.95, method="wilson")
    return float(ci.low), float(ci.high)


def _crude_estimate(sim_n: int, speed: float, replicates: int, hits: int, kind: str) -> LdpEstimate:
    p = hits / replicates
    lo, hi = _wilson(hits, replicates)
    if hits == 0:
        lo, hi = 0.0, 3.0 / replicates
    return LdpEstimate(sim_n, speed, replicates, p, min(lo, p), max(hi, p),
                       math.log(p) if hits else -math.inf, hits, kind)


def estimate_prob(sim: SimSpec, e: EventSpec, replicates: int, workers: int = 1) -> LdpEstimate:
    """Crude Monte Carlo estimate with a Wilson 95% interval."""
    if replicates < MIN_REPLICATES:
        raise ValueError(f"need at least {MIN_REPLICATES} replicates")
    kend = _endpoint_index(sim, e)
    tasks = [(sim, e, b, r, kend) for b, r in block_layout(sim, replicates)]
    hits = sum(_map_blocks(_crude_block, tasks, workers))
    return _crude_estimate(sim.n, speed_of(sim), replicates, hits, "crude")


def _tilt_target(sim: RandomWalkSim):
    if sim.x is None or sim.x == sim.n:
        return RandomWalk(sim.model)
    return Quadratic(variance(sim.model))


def tilt_parameters(sim: RandomWalkSim, e: EventSpec) -> tuple[tuple[float, ...], int]:
    """Tilts and the number of tilted steps, from the variational anchor of the event.

    Two-sided weighted-norm events get the mixture of the tilts aimed at
    ``+Y`` and ``-Y``; a single tilt would leave one side unsampled.
    """
    res = infimum_rate(_tilt_target(sim), e)
    if not res.finite:
        return (0.0,), 0
    dev = DeviationFunction(sim.model)
    k_tilt = min(int(round(res.anchor * sim.n)), sim.steps)
    slopes = [res.slope]
    if isinstance(e, WeightedNormAtLeast):
        y = e.c * (1.0 + res.anchor ** (1.0 + e.kappa)) / res.anchor
        slopes = [y, -y]
    lams = []
    for s in slopes:
        lam = legendre_argmax(dev, s * sim.scale / sim.n)
        if math.isfinite(lam):
            lams.append(float(lam))
    if not lams:
        raise UnsupportedError("the tilt for this event lies outside the MGF domain")
    return tuple(lams), k_tilt


def estimate_prob_tilted(sim: RandomWalkSim, e: EventSpec, replicates: int, workers: int = 1,
                         lam: float | None = None) -> LdpEstimate:
    """Importance-sampling estimate under exponentially tilted step laws.

    Steps up to the variational anchor time are tilted; later steps use the
    original law.  ``lam`` overrides the tilt with a single fixed value.  The
    interval is the normal interval of the weighted mean.
    """
    if not isinstance(sim, RandomWalkSim):
        raise UnsupportedError("tilting is implemented for random walks only")
    if replicates < MIN_REPLICATES:
        raise ValueError(f"need at least {MIN_REPLICATES} replicates")
    lams, k_tilt = tilt_parameters(sim, e)
    if lam is not None:
        lams = (float(lam),)
        if k_tilt == 0:
            k_tilt = sim.steps
    kend = _endpoint_index(sim, e)
    if kend is not None:
        k_tilt = kend
    tasks = [(sim, e, b, r, lams, k_tilt, kend) for b, r in block_layout(sim, replicates)]
    s1 = s2 = -math.inf
    hits = 0
    for a, b, h in _map_blocks(_tilted_block, tasks, workers):
        s1, s2, hits = float(np.logaddexp(s1, a)), float(np.logaddexp(s2, b)), hits + h
    N = replicates
    speed = speed_of(sim)
    if hits == 0:
        return LdpEstimate(sim.n, speed, N, 0.0, 0.0, 3.0 / N, -math.inf, 0, "tilted", 0.0)
    log_p = s1 - math.log(N)
    p = math.exp(log_p)
    # unbiased sample variance of the weights, in relative form
    rel = math.exp(s2 - 2.0 * s1) * N
    var_rel = max(rel - 1.0, 0.0) * N / (N - 1)
    se = p * math.sqrt(var_rel / N)
    ess = math.exp(2.0 * s1 - s2)
    return LdpEstimate(sim.n, speed, N, p, max(p - Z95 * se, 0.0), p + Z95 * se, log_p, hits,
                       "tilted", ess)


def synthetic_estimate(n: int, p: float, speed: float | None = None) -> LdpEstimate:
    """An estimate carrying a supplied probability exactly."""
    if not 0.0 <= p <= 1.0:
        raise ValueError("probability must lie in [0, 1]")
    s = float(n) if speed is None else float(speed)
    return LdpEstimate(int(n), s, 0, p, p, p, math.log(p) if p > 0 else -math.inf,
                       0, "synthetic")


def fit_ldp_slope(estimates: Sequence[LdpEstimate], target: float) -> SlopeFit:
    """Least-squares slope of ``ln p_hat`` against speed and the band verdict."""
    speeds = [e.speed for e in estimates]
    if any(b <= a for a, b in zip(speeds, speeds[1:])):
        raise ValueError("estimates must be sorted by strictly increasing speed")
    usable = [e for e in estimates if math.isfinite(e.log_p)]
    if len(usable) < 3:
        raise ValueError(f"need at least 3 estimates with p_hat > 0, got {len(usable)}")
    x = np.array([e.speed for e in usable])
    y = np.array([e.log_p for e in usable])
    slope, intercept = np.polyfit(x, y, 1)
    resid = float(np.sum((y - (slope * x + intercept)) ** 2))
    band = max(0.15 * target, 0.1)
    ok = abs(-slope - target) <= band and abs(usable[-1].log_scaled - target) <= band
    return SlopeFit([(float(a), float(b)) for a, b in zip(x, y)], float(slope), float(intercept),
                    resid, float(target), band, len(estimates) - len(usable), bool(ok))


def doob_bound(sim: SimSpec, T: float, eps: float) -> float | None:
    """``4 exp(-T n eps^2 / (16 lam))`` for zero-drift, constant-sigma diffusions."""
    if not isinstance(sim, DiffusionSim) or T <= 0 or not is_zero(sim.a):
        return None
    s = constant_value(sim.sigma)
    if s is None or s == 0:
        return None
    lam = max(1.0, s * s, 1.0 / (s * s))
    return 4.0 * math.exp(-T * sim.n * eps * eps / (16.0 * lam))


def tail_sup_prob(sim: SimSpec, T: float, eps: float, kappa: float, replicates: int,
                  workers: int = 1, horizon_multiple: float = 8.0) -> TailSupResult:
    """Estimate ``P(sup_{t>=T} |X(t)| / (1 + t^{1+kappa}) > eps)``."""
    if T < 0 or not eps > 0 or kappa < 0:
        raise ValueError("need T >= 0, eps > 0, kappa >= 0")
    if replicates < MIN_REPLICATES:
        raise ValueError(f"need at least {MIN_REPLICATES} replicates")
    if T > 0 and sim.horizon < horizon_multiple * T * (1 - 1e-12):
        raise ValueError(f"simulation horizon {sim.horizon} is below {horizon_multiple} x T")
    tasks = [(sim, T, eps, kappa, b, r) for b, r in block_layout(sim, replicates)]
    hits = sum(_map_blocks(_tail_block, tasks, workers))
    est = _crude_estimate(sim.n, speed_of(sim), replicates, hits, "tail_sup")
    return TailSupResult(est, doob_bound(sim, T, eps), T, eps)


# --------------------------------------------------------------------------
# maximal inequality, exactly

_SLACK = 1e-12


def _atoms(model: MgfModel) -> tuple[list[float], list[float]]:
    if isinstance(model, Rademacher):
        return [-1.0, 1.0], [0.5, 0.5]
    if isinstance(model, CenteredBernoulli):
        return [-model.p, 1.0 - model.p], [1.0 - model.p, model.p]
    if isinstance(model, TableEmpirical):
        if model.values.size > 3:
            raise UnsupportedError("table laws are limited to 3 atoms")
        return [float(v) for v in model.values], [float(p) for p in model.probs]
    raise UnsupportedError(f"{type(model).__name__} is not a bounded finite law")


def _sum_of(counts: tuple[int, ...], vals: list[float]) -> float:
    return math.fsum(c * v for c, v in zip(counts, vals))


def kolmogorov_check(model: MgfModel, n: int, x: float, y: float) -> KolmogorovResult:
    """``P(max_m |S_m| >= x + y)`` versus ``P(|S_n| >= x) / min_m P(|S_m| <= y)``.

    Exact dynamic programme over step-count vectors; paths that reach the
    level are removed from the running mass.
    """
    if not 1 <= n <= 20:
        raise ValueError("n must lie in 1..20")
    if x < 0 or y < 0:
        raise ValueError("x and y must be nonnegative")
    vals, probs = _atoms(model)
    k = len(vals)
    unit = [tuple(int(i == j) for j in range(k)) for i in range(k)]
    full = {(0,) * k: 1.0}
    alive = {(0,) * k: 1.0}
    crossed = 0.0
    min_inside = math.inf
    level = x + y
    for _ in range(n):
        nf: dict = {}
        na: dict = {}
        for src, dst in ((full, nf), (alive, na)):
            for c, p in src.items():
                for i in range(k):
                    key = tuple(a + b for a, b in zip(c, unit[i]))
                    dst[key] = dst.get(key, 0.0) + p * probs[i]
        full = nf
        alive = {}
        for c, p in na.items():
            if abs(_sum_of(c, vals)) >= level - _SLACK:
                crossed += p
            else:
                alive[c] = p
        inside = math.fsum(p for c, p in full.items() if abs(_sum_of(c, vals)) <= y + _SLACK)
        min_inside = min(min_inside, inside)
    num = math.fsum(p for c, p in full.items() if abs(_sum_of(c, vals)) >= x - _SLACK)
    rhs = num / min_inside if min_inside > 0 else math.inf
    return KolmogorovResult(crossed, rhs, crossed <= rhs + 1e-12, n, x, y)


def kolmogorov_grid(model: MgfModel, ns: Iterable[int], xs: Iterable[float],
                    ys: Iterable[float]) -> list[KolmogorovResult]:
    return [kolmogorov_check(model, n, x, y) for n, x, y in itertools.product(ns, xs, ys)]


# --------------------------------------------------------------------------
# CSV

def fmt(v) -> str:
    if isinstance(v, float):
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return format(v, ".17g")
    return str(v)


def estimates_csv(rows: Iterable[tuple[LdpEstimate, float | str, str]], header: str = "") -> str:
    """CSV text; each row is ``(estimate, target, verdict)``."""
    buf = io.StringIO()
    if header:
        buf.write(header)
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for est, target, verdict in rows:
        w.writerow([est.kind, est.n, fmt(float(est.speed)), est.replicates, fmt(float(est.p_hat)),
                    fmt(float(est.ci_low)), fmt(float(est.ci_high)), fmt(float(est.log_scaled)),
                    fmt(target) if isinstance(target, float) else target, verdict])
    return buf.getvalue()
