"""Rate infima ``I(B) = inf_{f in B} I(f)`` over structured event sets.

Each supported event is a union over an anchor time ``t*`` of single-time
constraints.  For a convex per-unit cost the cheapest path meeting a
single-time constraint is the chord to the constraint point, followed by the
zero-cost most likely extension, so the infimum reduces to a 1-D
minimisation over anchors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from ._search import golden_min
from .cramer import legendre
from .errors import UnsupportedError
from .path_space import Path, eval_path, rho_weighted_sup, zero_path
from .rate import Quadratic, RandomWalk, RateModel, most_likely_extension

__all__ = [
    "WeightedNormAtLeast", "EndpointAtLeast", "LevelCrossBefore", "EventSpec",
    "InfimumResult", "GridOptions", "infimum_rate", "lower_bound_cauchy",
    "contains", "event_from_dict",
]


@dataclass(frozen=True)
class WeightedNormAtLeast:
    """``sup_t |f(t)| / (1 + t^{1+kappa}) >= c``."""
    c: float
    kappa: float = 0.0
    strict: bool = False

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError("c must be positive")
        if not self.kappa >= 0:
            raise ValueError("kappa must be >= 0")

    def to_dict(self) -> dict:
        return {"kind": "weighted_norm", "c": self.c, "kappa": self.kappa, "strict": self.strict}


@dataclass(frozen=True)
class EndpointAtLeast:
    """``f(T) >= b``."""
    T: float
    b: float
    strict: bool = False

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError("T must be positive")

    def to_dict(self) -> dict:
        return {"kind": "endpoint", "T": self.T, "b": self.b, "strict": self.strict}


@dataclass(frozen=True)
class LevelCrossBefore:
    """``max_{t<=T} f(t) >= b`` for ``b >= 0``, ``min_{t<=T} f(t) <= b`` for ``b < 0``."""
    b: float
    T: float
    strict: bool = False

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError("T must be positive")

    def to_dict(self) -> dict:
        return {"kind": "level_cross", "b": self.b, "T": self.T, "strict": self.strict}


EventSpec = Union[WeightedNormAtLeast, EndpointAtLeast, LevelCrossBefore]


def event_from_dict(d: dict) -> EventSpec:
    kind = d.get("kind")
    spec = {
        "weighted_norm": (WeightedNormAtLeast, {"c"}, {"kappa", "strict"}),
        "endpoint": (EndpointAtLeast, {"T", "b"}, {"strict"}),
        "level_cross": (LevelCrossBefore, {"b", "T"}, {"strict"}),
    }
    if kind not in spec:
        raise ValueError(f"unknown event kind {kind!r}")
    cls, req, opt = spec[kind]
    unknown = set(d) - req - opt - {"kind"}
    if unknown:
        raise ValueError(f"unknown event fields: {sorted(unknown)}")
    missing = req - set(d)
    if missing:
        raise ValueError(f"missing event fields: {sorted(missing)}")
    kw = {k: (bool(v) if k == "strict" else float(v)) for k, v in d.items() if k != "kind"}
    return cls(**kw)


def contains(e: EventSpec, f: Path) -> bool:
    """Membership of a single path in the (closed) event."""
    if isinstance(e, WeightedNormAtLeast):
        r = rho_weighted_sup(f, zero_path(), e.kappa)
        return r > e.c if e.strict else r >= e.c
    if isinstance(e, EndpointAtLeast):
        v = eval_path(f, e.T)
        return v > e.b if e.strict else v >= e.b
    t = np.append(f.times[f.times < e.T], e.T)
    v = eval_path(f, t)
    if e.b >= 0:
        return bool(v.max() > e.b if e.strict else v.max() >= e.b)
    return bool(v.min() < e.b if e.strict else v.min() <= e.b)


@dataclass
class GridOptions:
    n_anchors: int = 200
    t_min: float = 1e-3
    t_max: float = 1e3
    tol: float = 1e-10


@dataclass
class InfimumResult:
    value: float
    argmin: Path | None
    anchor: float
    slope: float
    diagnostics: list[tuple[float, float]] = field(default_factory=list)
    gap: float = 0.0
    strict: bool = False

    @property
    def finite(self) -> bool:
        return math.isfinite(self.value)

    def to_dict(self) -> dict:
        return {
            "value": self.value if self.finite else "inf",
            "anchor": self.anchor,
            "slope": self.slope,
            "gap": self.gap,
            "strict": self.strict,
            "argmin": None if self.argmin is None else self.argmin.to_dict(),
            "diagnostics": [[t, v if math.isfinite(v) else "inf"] for t, v in self.diagnostics],
        }


def _cost(m: RateModel):
    """Per-unit-time cost of slope ``s`` and the zero-cost slope."""
    if isinstance(m, Quadratic):
        return (lambda s: s * s / (2.0 * m.var)), 0.0
    if isinstance(m, RandomWalk):
        return (lambda s: legendre(m.dev, s)), m.dev.mean
    raise UnsupportedError(f"no variational solver for {type(m).__name__}; "
                           "only RandomWalk and Quadratic models have convex segment costs")


def _anchor_fn(e: EventSpec, cost, mean: float):
    """``t -> (value, slope)`` of the cheapest chord meeting the constraint at ``t``."""
    if isinstance(e, WeightedNormAtLeast):
        def fn(t: float) -> tuple[float, float]:
            y = e.c * (1.0 + t ** (1.0 + e.kappa)) / t
            up = max(y, mean)
            dn = min(-y, mean)
            vu, vd = t * cost(up), t * cost(dn)
            return (vu, up) if vu <= vd else (vd, dn)
        return fn
    b = e.b
    # f(T) >= b always, and level crossing is downward for b < 0
    upward = isinstance(e, EndpointAtLeast) or b >= 0

    def fn(t: float) -> tuple[float, float]:
        s = max(b / t, mean) if upward else min(b / t, mean)
        return t * cost(s), s
    return fn


def infimum_rate(m: RateModel, e: EventSpec, opts: GridOptions | None = None) -> InfimumResult:
    """Minimise the rate over the event by anchor decomposition."""
    opts = opts or GridOptions()
    cost, mean = _cost(m)
    fn = _anchor_fn(e, cost, mean)
    if isinstance(e, EndpointAtLeast):
        v, s = fn(e.T)
        return _result(m, v, e.T, s, [(e.T, v)], e.strict)

    if isinstance(e, WeightedNormAtLeast):
        grid = np.geomspace(opts.t_min, opts.t_max, opts.n_anchors)
    else:
        grid = np.geomspace(e.T * 1e-6, e.T, opts.n_anchors)
    table = [(float(t), fn(float(t))[0]) for t in grid]
    vals = np.array([v for _, v in table])
    if not np.any(np.isfinite(vals)):
        return InfimumResult(math.inf, None, math.nan, math.nan, table, 0.0, e.strict)
    i = int(np.argmin(vals))  # first minimum: ties go to the smaller anchor
    lo = float(grid[max(i - 1, 0)])
    hi = float(grid[min(i + 1, len(grid) - 1)])
    t_star, v_star = golden_min(lambda t: fn(t)[0], lo, hi, opts.tol)
    if not v_star <= vals[i]:
        t_star, v_star = float(grid[i]), float(vals[i])
    _, s_star = fn(t_star)
    return _result(m, v_star, t_star, s_star, table, e.strict)


def _result(m: RateModel, value: float, t_star: float, slope: float,
            table: list[tuple[float, float]], strict: bool) -> InfimumResult:
    if not math.isfinite(value):
        return InfimumResult(math.inf, None, t_star, slope, table, 0.0, strict)
    chord = Path([0.0, t_star], [0.0, slope * t_star])
    argmin = most_likely_extension(m, chord, t_star)
    return InfimumResult(float(value), argmin, float(t_star), float(slope), table, 0.0, strict)


def lower_bound_cauchy(m: RateModel, e: EventSpec) -> float:
    """Cauchy-Schwarz lower bound ``2 c^2 / var`` for the weighted-norm event.

    From ``|g(t)| <= sqrt(t) * sqrt(2 var I(g))`` and
    ``sup_t sqrt(t)/(1+t) = 1/2``.
    """
    if not (isinstance(m, Quadratic) and isinstance(e, WeightedNormAtLeast) and e.kappa == 0.0):
        raise UnsupportedError("the Cauchy bound needs a Quadratic model and a kappa=0 weighted-norm event")
    return 2.0 * e.c ** 2 / m.var
