"""Log-moment generating functions and their Legendre transforms.

Every model here has a finite MGF on the whole real line, so the deviation
function ``Lambda(alpha) = sup_l {l*alpha - A(l)}`` is computed by solving
``A'(l) = alpha`` for the increasing function ``A'``.  Models with bounded
support return the finite endpoint value at the edge of the support and
``inf`` outside it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np
from scipy.special import expit, logsumexp

__all__ = [
    "Gaussian", "Rademacher", "CenteredBernoulli", "Poisson", "TableEmpirical",
    "MgfModel", "DeviationFunction", "SuperlinearityReport",
    "log_mgf", "dlog_mgf", "d2log_mgf", "legendre", "legendre_argmax",
    "check_superlinearity", "model_from_dict",
]

LAMBDA_CAP = 700.0


@dataclass(frozen=True)
class Gaussian:
    mean: float = 0.0
    var: float = 1.0

    def __post_init__(self):
        if not self.var > 0:
            raise ValueError("Gaussian variance must be positive")

    @property
    def support(self) -> tuple[float, float]:
        return (-math.inf, math.inf)

    def to_dict(self) -> dict:
        return {"kind": "gaussian", "mean": self.mean, "var": self.var}


@dataclass(frozen=True)
class Rademacher:
    """Uniform on {-1, +1}."""

    @property
    def support(self) -> tuple[float, float]:
        return (-1.0, 1.0)

    def to_dict(self) -> dict:
        return {"kind": "rademacher"}


@dataclass(frozen=True)
class CenteredBernoulli:
    """``B - p`` with ``B ~ Bernoulli(p)``; takes values ``-p`` and ``1-p``."""
    p: float

    def __post_init__(self):
        if not 0.0 < self.p < 1.0:
            raise ValueError("p must lie in (0, 1)")

    @property
    def support(self) -> tuple[float, float]:
        return (-self.p, 1.0 - self.p)

    def to_dict(self) -> dict:
        return {"kind": "bernoulli", "p": self.p}


@dataclass(frozen=True)
class Poisson:
    rate: float
    centered: bool = False

    def __post_init__(self):
        if not self.rate > 0:
            raise ValueError("Poisson rate must be positive")

    @property
    def offset(self) -> float:
        return self.rate if self.centered else 0.0

    @property
    def support(self) -> tuple[float, float]:
        return (-self.offset, math.inf)

    def to_dict(self) -> dict:
        return {"kind": "poisson", "rate": self.rate, "centered": self.centered}


@dataclass(frozen=True)
class TableEmpirical:
    """Finite discrete law given as ``[(value, prob), ...]``."""
    atoms: tuple[tuple[float, float], ...]
    values: np.ndarray = field(init=False, repr=False, compare=False)
    probs: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        atoms = tuple((float(v), float(p)) for v, p in self.atoms)
        object.__setattr__(self, "atoms", atoms)
        vals = np.array([a[0] for a in atoms])
        probs = np.array([a[1] for a in atoms])
        if np.any(probs <= 0):
            raise ValueError("table probabilities must be positive")
        if abs(probs.sum() - 1.0) > 1e-12:
            raise ValueError("table probabilities must sum to 1")
        if np.unique(vals).size < 2:
            raise ValueError("table needs at least two distinct atoms")
        order = np.argsort(vals, kind="stable")
        object.__setattr__(self, "values", vals[order])
        object.__setattr__(self, "probs", probs[order])

    @property
    def support(self) -> tuple[float, float]:
        return (float(self.values[0]), float(self.values[-1]))

    def to_dict(self) -> dict:
        return {"kind": "table", "atoms": [list(a) for a in self.atoms]}


MgfModel = Union[Gaussian, Rademacher, CenteredBernoulli, Poisson, TableEmpirical]


def model_from_dict(d: dict) -> MgfModel:
    kind = d.get("kind")
    allowed = {
        "gaussian": {"mean", "var"}, "rademacher": set(), "bernoulli": {"p"},
        "poisson": {"rate", "centered"}, "table": {"atoms"},
    }
    if kind not in allowed:
        raise ValueError(f"unknown model kind {kind!r}")
    unknown = set(d) - allowed[kind] - {"kind"}
    if unknown:
        raise ValueError(f"unknown fields for {kind}: {sorted(unknown)}")
    if kind == "gaussian":
        return Gaussian(float(d.get("mean", 0.0)), float(d.get("var", 1.0)))
    if kind == "rademacher":
        return Rademacher()
    if kind == "bernoulli":
        return CenteredBernoulli(float(d["p"]))
    if kind == "poisson":
        return Poisson(float(d["rate"]), bool(d.get("centered", False)))
    return TableEmpirical(tuple(tuple(a) for a in d["atoms"]))


def _bernoulli_two_point(m: MgfModel) -> tuple[float, float, float] | None:
    """(low value, high value, P(high)) for the two-point kinds."""
    if isinstance(m, Rademacher):
        return -1.0, 1.0, 0.5
    if isinstance(m, CenteredBernoulli):
        return -m.p, 1.0 - m.p, m.p
    return None


def mean(m: MgfModel) -> float:
    if isinstance(m, Gaussian):
        return m.mean
    if isinstance(m, (Rademacher, CenteredBernoulli)):
        return 0.0
    if isinstance(m, Poisson):
        return m.rate - m.offset
    return float(np.dot(m.values, m.probs))


def variance(m: MgfModel) -> float:
    if isinstance(m, Gaussian):
        return m.var
    if isinstance(m, Rademacher):
        return 1.0
    if isinstance(m, CenteredBernoulli):
        return m.p * (1.0 - m.p)
    if isinstance(m, Poisson):
        return m.rate
    mu = mean(m)
    return float(np.dot((m.values - mu) ** 2, m.probs))


def _log1pexp(x: float) -> float:
    return x + math.log1p(math.exp(-x)) if x > 0 else math.log1p(math.exp(x))


def log_mgf(m: MgfModel, lam: float) -> float:
    """``A(lam) = ln E exp(lam * xi)`` in closed form."""
    lam = float(lam)
    if isinstance(m, Gaussian):
        return m.mean * lam + 0.5 * m.var * lam * lam
    if isinstance(m, Rademacher):
        a = abs(lam)
        return a + math.log1p(math.exp(-2.0 * a)) - math.log(2.0)
    if isinstance(m, CenteredBernoulli):
        # ln(1 - p + p e^lam) - p lam
        return _log1pexp(lam + math.log(m.p) - math.log1p(-m.p)) + math.log1p(-m.p) - m.p * lam
    if isinstance(m, Poisson):
        return m.rate * math.expm1(lam) - m.offset * lam
    return float(logsumexp(lam * m.values, b=m.probs))


def _tilted_probs(m: TableEmpirical, lam: float) -> np.ndarray:
    z = lam * m.values + np.log(m.probs)
    return np.exp(z - logsumexp(z))


def dlog_mgf(m: MgfModel, lam: float) -> float:
    """``A'(lam)``: mean of the exponentially tilted law."""
    lam = float(lam)
    if isinstance(m, Gaussian):
        return m.mean + m.var * lam
    two = _bernoulli_two_point(m)
    if two is not None:
        lo, hi, p = two
        q = float(expit(lam * (hi - lo) + math.log(p) - math.log1p(-p)))
        return lo + (hi - lo) * q
    if isinstance(m, Poisson):
        return m.rate * math.exp(lam) - m.offset
    return float(np.dot(_tilted_probs(m, lam), m.values))


def d2log_mgf(m: MgfModel, lam: float) -> float:
    """``A''(lam)``: variance of the tilted law."""
    lam = float(lam)
    if isinstance(m, Gaussian):
        return m.var
    two = _bernoulli_two_point(m)
    if two is not None:
        lo, hi, p = two
        q = float(expit(lam * (hi - lo) + math.log(p) - math.log1p(-p)))
        return (hi - lo) ** 2 * q * (1.0 - q)
    if isinstance(m, Poisson):
        return m.rate * math.exp(lam)
    w = _tilted_probs(m, lam)
    mu = float(np.dot(w, m.values))
    return float(np.dot(w, (m.values - mu) ** 2))


def _endpoint_mass(m: MgfModel, side: int) -> float:
    """Probability of the support endpoint (side -1 low, +1 high)."""
    two = _bernoulli_two_point(m)
    if two is not None:
        return two[2] if side > 0 else 1.0 - two[2]
    if isinstance(m, Poisson):
        return math.exp(-m.rate)
    if isinstance(m, TableEmpirical):
        return float(m.probs[-1] if side > 0 else m.probs[0])
    return 0.0


class DeviationFunction:
    """The Legendre transform ``Lambda`` of a model's log-MGF.

    Root brackets start at ``[-1, 1]`` and double until they contain the
    tilt, capped at ``|lambda| = 700``.
    """

    def __init__(self, model: MgfModel, rtol: float = 1e-10):
        self.model = model
        self.rtol = rtol
        self.mean = mean(model)
        self.variance = variance(model)

    def __repr__(self) -> str:
        return f"DeviationFunction({self.model!r})"

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, DeviationFunction):
            return NotImplemented
        return self.model == other.model and self.rtol == other.rtol

    def __hash__(self) -> int:
        return hash((type(self.model).__name__, self.rtol))

    def __call__(self, alpha):
        if np.ndim(alpha) == 0:
            return legendre(self, float(alpha))
        return np.array([legendre(self, float(a)) for a in np.asarray(alpha).ravel()]).reshape(np.shape(alpha))

    def argmax(self, alpha: float) -> float:
        return legendre_argmax(self, alpha)


def _as_dev(d) -> DeviationFunction:
    return d if isinstance(d, DeviationFunction) else DeviationFunction(d)


def legendre_argmax(d, alpha: float) -> float:
    """The tilt ``lambda*`` with ``A'(lambda*) = alpha``.

    Returns ``+-inf`` at or beyond the support boundary.
    """
    d = _as_dev(d)
    m = d.model
    alpha = float(alpha)
    lo_s, hi_s = m.support
    if alpha >= hi_s:
        return math.inf
    if alpha <= lo_s:
        return -math.inf
    if alpha == d.mean:
        return 0.0
    if isinstance(m, Gaussian):
        return (alpha - m.mean) / m.var
    if isinstance(m, Poisson):
        return math.log((alpha + m.offset) / m.rate)

    sign = 1.0 if alpha > d.mean else -1.0
    lo, hi = (0.0, 1.0) if sign > 0 else (-1.0, 0.0)
    while (dlog_mgf(m, hi) < alpha if sign > 0 else dlog_mgf(m, lo) > alpha):
        if sign > 0:
            lo, hi = hi, min(2.0 * hi, LAMBDA_CAP)
        else:
            lo, hi = max(2.0 * lo, -LAMBDA_CAP), lo
        if abs(hi if sign > 0 else lo) >= LAMBDA_CAP:
            break
    lam = 0.5 * (lo + hi)
    for _ in range(200):
        g = dlog_mgf(m, lam) - alpha
        if g > 0:
            hi = lam
        else:
            lo = lam
        h = d2log_mgf(m, lam)
        step = lam - g / h if h > 0 else math.nan
        new = step if lo < step < hi else 0.5 * (lo + hi)
        if abs(new - lam) <= 1e-15 * max(1.0, abs(lam)) or hi - lo <= 1e-15 * max(1.0, abs(lam)):
            lam = new
            break
        lam = new
    return lam


def legendre(d, alpha: float) -> float:
    """``Lambda(alpha) = sup_l {l*alpha - A(l)}``; ``inf`` when unattainable."""
    d = _as_dev(d)
    m = d.model
    alpha = float(alpha)
    lo_s, hi_s = m.support
    if alpha > hi_s or alpha < lo_s:
        return math.inf
    if alpha == hi_s or alpha == lo_s:
        return -math.log(_endpoint_mass(m, 1 if alpha == hi_s else -1))
    if alpha == d.mean:
        return 0.0
    if isinstance(m, Gaussian):
        return (alpha - m.mean) ** 2 / (2.0 * m.var)
    lam = legendre_argmax(d, alpha)
    return max(lam * alpha - log_mgf(m, lam), 0.0)


@dataclass
class SuperlinearityReport:
    abs_alpha: list[float]
    ratio: list[float]
    threshold: float
    nondecreasing: bool
    near_zero_ok: bool
    near_zero_ratios: list[float]
    violations: list[float]

    @property
    def ok(self) -> bool:
        return self.nondecreasing and self.near_zero_ok


def check_superlinearity(d, alpha_grid: Sequence[float], near_zero_tol: float = 0.05) -> SuperlinearityReport:
    """Empirical check of ``Lambda(alpha)/|alpha| -> inf`` and of the quadratic
    behaviour ``Lambda(alpha) ~ alpha^2 / (2 sigma^2)`` near the mean.

    On each side of the mean the ratio must be non-decreasing in ``|alpha|``
    from the grid point with the smallest ratio onwards (the threshold).  Grid
    points with ``|alpha - mean| <= sigma/10`` feed the near-zero check.
    """
    d = _as_dev(d)
    sig2 = d.variance
    sig = math.sqrt(sig2)
    pts = sorted({float(a) for a in alpha_grid if a != d.mean})
    violations: list[float] = []
    abs_a: list[float] = []
    ratios: list[float] = []
    threshold = 0.0
    for side in (1.0, -1.0):
        xs = sorted([a for a in pts if (a - d.mean) * side > 0], key=lambda a: abs(a - d.mean))
        rs = [legendre(d, a) / abs(a - d.mean) for a in xs]
        finite = [(a, r) for a, r in zip(xs, rs) if math.isfinite(r)]
        if not finite:
            continue
        i0 = int(np.argmin([r for _, r in finite]))
        threshold = max(threshold, abs(finite[i0][0] - d.mean))
        for (a0, r0), (a1, r1) in zip(finite[i0:], finite[i0 + 1:]):
            if r1 < r0 - 1e-12 * max(1.0, abs(r0)):
                violations.append(a1)
        abs_a.extend(abs(a - d.mean) for a, _ in finite)
        ratios.extend(r for _, r in finite)
    near = [a for a in pts if abs(a - d.mean) <= sig / 10.0]
    near_ratios = [legendre(d, a) * 2.0 * sig2 / (a - d.mean) ** 2 for a in near]
    near_ok = all(abs(r - 1.0) <= near_zero_tol for r in near_ratios)
    return SuperlinearityReport(abs_a, ratios, threshold, not violations, near_ok,
                                near_ratios, violations)
