"""Piecewise-linear paths on the half-line and the path-space metrics.

A :class:`Path` is a list of knots plus an analytic tail rule for times past
the last knot.  All three metrics are computed segment by segment: the
difference of two paths is linear between the merged knots (unless an
exponential tail is active), so maxima of weighted ratios can be located
exactly instead of by sampling a grid over ``[0, inf)``.

Divergent distances are returned as ``math.inf``; they are detected from the
tail rules, never produced by floating-point overflow.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Callable, Iterable, Sequence, Union

import numpy as np

from ._search import golden_max, scan_then_golden_max

__all__ = [
    "Constant", "LinearSlope", "ExpGrowth", "Extension", "Path",
    "WeightedSup", "Puhalskii", "CevWeighted", "MetricSpec",
    "eval_path", "rho_weighted_sup", "rho_puhalskii", "rho_cev", "distance",
    "project", "extend_constant", "chord_path", "zero_path",
]

DEFAULT_K_MAX = 40


# --------------------------------------------------------------------------
# tail rules
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Constant:
    """Hold the last knot value forever."""

    def to_dict(self) -> dict:
        return {"kind": "constant", "param": 0.0}


@dataclass(frozen=True)
class LinearSlope:
    """Continue linearly with the given slope."""
    slope: float

    def to_dict(self) -> dict:
        return {"kind": "linear", "param": float(self.slope)}


@dataclass(frozen=True)
class ExpGrowth:
    """Continue as ``v_last * exp(rate * (t - t_last))``."""
    rate: float

    def to_dict(self) -> dict:
        return {"kind": "exp", "param": float(self.rate)}


Extension = Union[Constant, LinearSlope, ExpGrowth]


def extension_from_dict(d: dict) -> Extension:
    unknown = set(d) - {"kind", "param"}
    if unknown:
        raise ValueError(f"unknown extension fields: {sorted(unknown)}")
    kind = d.get("kind")
    param = float(d.get("param", 0.0))
    if kind == "constant":
        return Constant()
    if kind == "linear":
        return LinearSlope(param)
    if kind == "exp":
        return ExpGrowth(param)
    raise ValueError(f"unknown extension kind {kind!r}")


def _is_linear_tail(ext: Extension) -> bool:
    return not isinstance(ext, ExpGrowth) or ext.rate == 0.0


# --------------------------------------------------------------------------
# Path
# --------------------------------------------------------------------------

class Path:
    """Immutable piecewise-linear function on ``[0, inf)``.

    ``times`` must start at 0 and be strictly increasing.  Between knots the
    path is the linear interpolant; past the last knot it follows
    ``extension``.
    """

    __slots__ = ("times", "values", "extension")

    def __init__(self, times: Iterable[float], values: Iterable[float],
                 extension: Extension = Constant()):
        t = np.array(times, dtype=float).reshape(-1)
        v = np.array(values, dtype=float).reshape(-1)
        if t.size == 0:
            raise ValueError("a path needs at least one knot")
        if t.shape != v.shape:
            raise ValueError("times and values must have the same length")
        if t[0] != 0.0:
            raise ValueError("the first knot time must be 0")
        if t.size > 1 and not np.all(np.diff(t) > 0):
            raise ValueError("knot times must be strictly increasing")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(v))):
            raise ValueError("knots must be finite")
        if not isinstance(extension, (Constant, LinearSlope, ExpGrowth)):
            raise TypeError(f"bad extension {extension!r}")
        t.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "extension", extension)

    def __setattr__(self, name, value):
        raise AttributeError("Path is immutable")

    @classmethod
    def from_knots(cls, knots: Sequence[Sequence[float]],
                   extension: Extension = Constant()) -> "Path":
        arr = np.asarray(knots, dtype=float).reshape(-1, 2)
        return cls(arr[:, 0], arr[:, 1], extension)

    @property
    def t_last(self) -> float:
        return float(self.times[-1])

    @property
    def v_last(self) -> float:
        return float(self.values[-1])

    @property
    def knots(self) -> list[tuple[float, float]]:
        return [(float(a), float(b)) for a, b in zip(self.times, self.values)]

    def slopes(self) -> np.ndarray:
        return np.diff(self.values) / np.diff(self.times)

    def __call__(self, t):
        return eval_path(self, t)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Path):
            return NotImplemented
        return (self.extension == other.extension
                and np.array_equal(self.times, other.times)
                and np.array_equal(self.values, other.values))

    __hash__ = None  # type: ignore[assignment]

    def __repr__(self) -> str:
        return f"Path(knots={len(self.times)}, t_last={self.t_last:g}, extension={self.extension})"

    def to_dict(self) -> dict:
        return {"knots": [[float(a), float(b)] for a, b in zip(self.times, self.values)],
                "extension": self.extension.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "Path":
        unknown = set(d) - {"knots", "extension"}
        if unknown:
            raise ValueError(f"unknown path fields: {sorted(unknown)}")
        ext = extension_from_dict(d.get("extension", {"kind": "constant"}))
        return cls.from_knots(d["knots"], ext)

    def shifted(self, other: "Path", sign: float = 1.0) -> "Path":
        """Pointwise ``self + sign * other`` on merged knots.

        Only defined when both tails are linear, so the result is again a
        piecewise-linear path with a linear tail.
        """
        if not (_is_linear_tail(self.extension) and _is_linear_tail(other.extension)):
            raise ValueError("shifted() needs linear tails")
        t = np.union1d(self.times, other.times)
        v = eval_path(self, t) + sign * eval_path(other, t)
        slope = _tail_slope(self.extension) + sign * _tail_slope(other.extension)
        ext: Extension = Constant() if slope == 0.0 else LinearSlope(slope)
        return Path(t, v, ext)


def _tail_slope(ext: Extension) -> float:
    if isinstance(ext, LinearSlope):
        return float(ext.slope)
    return 0.0


def zero_path() -> Path:
    return Path([0.0], [0.0], Constant())


def chord_path(fn: Callable[[np.ndarray], np.ndarray], times: Iterable[float],
               extension: Extension = Constant()) -> Path:
    """Piecewise-linear interpolant of ``fn`` through the given knot times."""
    t = np.asarray(list(times), dtype=float)
    return Path(t, np.asarray(fn(t), dtype=float), extension)


def eval_path(f: Path, t):
    """Evaluate ``f`` at ``t`` (scalar or array); exact at every knot."""
    scalar = np.ndim(t) == 0
    tt = np.asarray(t, dtype=float).reshape(-1)
    if np.any(tt < 0):
        raise ValueError("paths live on t >= 0")
    times, vals = f.times, f.values
    out = np.empty_like(tt)
    inside = tt <= times[-1]
    if np.any(inside):
        ti = tt[inside]
        idx = np.searchsorted(times, ti, side="right") - 1
        idx = np.clip(idx, 0, len(times) - 1)
        nxt = np.minimum(idx + 1, len(times) - 1)
        dt = times[nxt] - times[idx]
        with np.errstate(invalid="ignore", divide="ignore"):
            slope = np.where(dt > 0, (vals[nxt] - vals[idx]) / np.where(dt > 0, dt, 1.0), 0.0)
        out[inside] = vals[idx] + slope * (ti - times[idx])
    if np.any(~inside):
        s = tt[~inside] - times[-1]
        ext = f.extension
        if isinstance(ext, LinearSlope):
            out[~inside] = vals[-1] + ext.slope * s
        elif isinstance(ext, ExpGrowth):
            out[~inside] = vals[-1] * np.exp(ext.rate * s)
        else:
            out[~inside] = vals[-1]
    return float(out[0]) if scalar else out


# --------------------------------------------------------------------------
# projection operators
# --------------------------------------------------------------------------

def project(f: Path, T: float) -> Path:
    """Restriction of ``f`` to ``[0, T]`` with a knot inserted at ``T``."""
    if not T > 0:
        raise ValueError("T must be positive")
    keep = f.times < T
    t = np.append(f.times[keep], T)
    v = np.append(f.values[keep], eval_path(f, T))
    return Path(t, v, Constant())


def extend_constant(f: Path, T: float) -> Path:
    """``f`` on ``[0, T]`` frozen at ``f(T)`` afterwards."""
    return project(f, T)


# --------------------------------------------------------------------------
# metrics
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class WeightedSup:
    kappa: float = 0.0

    def __post_init__(self):
        if not self.kappa >= 0:
            raise ValueError("kappa must be >= 0")


@dataclass(frozen=True)
class Puhalskii:
    k_max: int = DEFAULT_K_MAX

    def __post_init__(self):
        if int(self.k_max) != self.k_max or self.k_max < 1:
            raise ValueError("k_max must be a positive integer")


@dataclass(frozen=True)
class CevWeighted:
    mu: float
    gamma: float

    def __post_init__(self):
        if not 0.5 <= self.gamma < 1.0:
            raise ValueError("gamma must lie in [1/2, 1)")


MetricSpec = Union[WeightedSup, Puhalskii, CevWeighted]


def metric_from_dict(d: dict) -> MetricSpec:
    kind = d.get("kind")
    fields = {"weighted_sup": {"kappa"}, "puhalskii": {"k_max"}, "cev": {"mu", "gamma"}}
    if kind not in fields:
        raise ValueError(f"unknown metric kind {kind!r}")
    unknown = set(d) - fields[kind] - {"kind"}
    if unknown:
        raise ValueError(f"unknown metric fields: {sorted(unknown)}")
    if kind == "weighted_sup":
        return WeightedSup(float(d.get("kappa", 0.0)))
    if kind == "puhalskii":
        return Puhalskii(int(d.get("k_max", DEFAULT_K_MAX)))
    return CevWeighted(float(d["mu"]), float(d["gamma"]))


class _Weight:
    """A positive weight ``w(t)`` with its log and growth key at infinity.

    ``key = (exp_rate, power)``: ``w(t) ~ e^{rate t} t^{power}``.
    ``convex`` marks weights for which |linear|/w is unimodal on each
    sign-constant piece; ``monotone_linear`` marks weights where that ratio is
    monotone, so segment endpoints suffice.
    """

    def __init__(self, log_w: Callable[[np.ndarray], np.ndarray], log_w1: Callable[[float], float],
                 key: tuple[float, float], convex: bool, monotone_linear: bool):
        self.log_w = log_w
        self.log_w1 = log_w1
        self.key = key
        self.convex = convex
        self.monotone_linear = monotone_linear


def _poly_weight(kappa: float) -> _Weight:
    p = 1.0 + kappa
    def log_w1(t: float) -> float:
        return math.log1p(t ** p) if t <= 1.0 else p * math.log(t) + math.log1p(t ** -p)
    return _Weight(lambda t: np.log1p(np.power(t, p)), log_w1, (0.0, p),
                   convex=True, monotone_linear=(kappa == 0.0))


def _cev_weight(mu: float, gamma: float) -> _Weight:
    q = 1.0 / (1.0 - gamma)
    return _Weight(lambda t: mu * t + q * np.log1p(t), lambda t: mu * t + q * math.log1p(t), (mu, q),
                   convex=(mu >= 0.0), monotone_linear=False)


_UNIT_WEIGHT = _Weight(lambda t: np.zeros_like(t), lambda t: 0.0, (0.0, 0.0),
                       convex=True, monotone_linear=True)


def _ratio_fn(f: Path, g: Path, w: _Weight) -> Callable[[float], float]:
    def r(t: float) -> float:
        d = abs(eval_path(f, t) - eval_path(g, t))
        if d == 0.0:
            return 0.0
        return math.exp(math.log(d) - w.log_w1(t))
    return r


def _linear_ratio_fn(a: float, da: float, slope: float, w: _Weight) -> Callable[[float], float]:
    """Ratio on a segment where ``f - g`` is ``da + slope (t - a)``."""
    def r(t: float) -> float:
        d = abs(da + slope * (t - a))
        return 0.0 if d == 0.0 else math.exp(math.log(d) - w.log_w1(t))
    return r


def _ratio_vec(f: Path, g: Path, w: _Weight, t: np.ndarray) -> np.ndarray:
    d = np.abs(eval_path(f, t) - eval_path(g, t))
    with np.errstate(divide="ignore"):
        return np.where(d == 0.0, 0.0, np.exp(np.log(np.where(d == 0.0, 1.0, d)) - w.log_w(t)))


def _segment_sup(f: Path, g: Path, w: _Weight, lo: np.ndarray, hi: np.ndarray,
                 r_lo: np.ndarray, r_hi: np.ndarray, tol: float) -> float:
    """Max of |f-g|/w over the closed segments [lo_i, hi_i]."""
    best = float(max(np.max(r_lo, initial=0.0), np.max(r_hi, initial=0.0)))
    if lo.size == 0:
        return best
    f_lin = (hi <= f.t_last) | _is_linear_tail(f.extension)
    g_lin = (hi <= g.t_last) | _is_linear_tail(g.extension)
    both_lin = f_lin & g_lin
    if w.monotone_linear and np.all(both_lin):
        return best
    ratio = _ratio_fn(f, g, w)
    vec = lambda t: _ratio_vec(f, g, w, t)  # noqa: E731
    for i in range(lo.size):
        a, b = float(lo[i]), float(hi[i])
        if both_lin[i]:
            if w.monotone_linear:
                continue
            da = eval_path(f, a) - eval_path(g, a)
            db = eval_path(f, b) - eval_path(g, b)
            lin = _linear_ratio_fn(a, float(da), float(db - da) / (b - a), w)
            pieces = [(a, b)]
            if da * db < 0:
                z = a + (b - a) * da / (da - db)
                pieces = [(a, z), (z, b)]
            for pa, pb in pieces:
                if w.convex:
                    _, v = golden_max(lin, pa, pb, tol)
                else:
                    _, v = scan_then_golden_max(lin, np.linspace(pa, pb, 33), tol, vec)
                best = max(best, v)
        else:
            _, v = scan_then_golden_max(ratio, np.linspace(a, b, 65), tol, vec)
            best = max(best, v)
    return best


def _tail_terms(p: Path, t_end: float, sign: float, terms: dict) -> None:
    """Accumulate ``sign * p(t_end + s)`` as a + b s + sum c_r e^{r s}."""
    v = eval_path(p, t_end)
    ext = p.extension
    scale = terms.setdefault("scale", {})
    if isinstance(ext, LinearSlope) and ext.slope != 0.0:
        terms["a"] = terms.get("a", 0.0) + sign * v
        terms["b"] = terms.get("b", 0.0) + sign * ext.slope
        scale["a"] = scale.get("a", 0.0) + abs(v)
        scale["b"] = scale.get("b", 0.0) + abs(ext.slope)
    elif isinstance(ext, ExpGrowth) and ext.rate != 0.0:
        r = float(ext.rate)
        terms.setdefault("exp", {})
        terms["exp"][r] = terms["exp"].get(r, 0.0) + sign * v
        scale[r] = scale.get(r, 0.0) + abs(v)
    else:
        terms["a"] = terms.get("a", 0.0) + sign * v
        scale["a"] = scale.get("a", 0.0) + abs(v)


def _tail_limit(f: Path, g: Path, t_end: float, w: _Weight) -> float:
    """lim_{t->inf} |f-g|(t)/w(t), ``inf`` when the ratio diverges."""
    terms: dict = {}
    _tail_terms(f, t_end, 1.0, terms)
    _tail_terms(g, t_end, -1.0, terms)
    scale = terms["scale"]
    cand: list[tuple[tuple[float, float], float]] = []

    def nonzero(c: float, s: float) -> bool:
        return abs(c) > 1e-13 * s

    if nonzero(terms.get("a", 0.0), scale.get("a", 0.0)):
        cand.append(((0.0, 0.0), terms["a"]))
    if nonzero(terms.get("b", 0.0), scale.get("b", 0.0)):
        cand.append(((0.0, 1.0), terms["b"]))
    for r, c in terms.get("exp", {}).items():
        if nonzero(c, scale[r]):
            cand.append(((r, 0.0), c))
    if not cand:
        return 0.0
    key, coef = max(cand, key=lambda kc: kc[0])
    if key > w.key:
        return math.inf
    if key == w.key:
        return abs(coef)
    return 0.0


def _tail_sup(f: Path, g: Path, t_end: float, w: _Weight, tol: float) -> float:
    lim = _tail_limit(f, g, t_end, w)
    if math.isinf(lim):
        return math.inf
    rates = [abs(e.rate) for e in (f.extension, g.extension) if isinstance(e, ExpGrowth)]
    rates.append(abs(w.key[0]))
    scale = max(rates)
    s_max = 1e8 if scale == 0.0 else min(1e8, 600.0 / scale)
    if w.monotone_linear and _is_linear_tail(f.extension) and _is_linear_tail(g.extension):
        r_end = float(_ratio_vec(f, g, w, np.array([t_end]))[0])
        return max(r_end, lim)
    grid = t_end + np.concatenate(([0.0], np.geomspace(1e-6 * (1.0 + t_end), s_max, 240)))
    _, v = scan_then_golden_max(_ratio_fn(f, g, w), grid, tol, lambda t: _ratio_vec(f, g, w, t))
    return max(v, lim)


def _weighted_sup(f: Path, g: Path, w: _Weight, tol: float = 1e-12,
                  t_hi: float | None = None) -> float:
    t = np.union1d(f.times, g.times)
    if t_hi is not None:
        t = np.union1d(t[t < t_hi], [t_hi])
    r = _ratio_vec(f, g, w, t)
    best = _segment_sup(f, g, w, t[:-1], t[1:], r[:-1], r[1:], tol)
    if t_hi is None:
        best = max(best, _tail_sup(f, g, float(t[-1]), w, tol))
    return best


def rho_weighted_sup(f: Path, g: Path, kappa: float = 0.0) -> float:
    """``sup_t |f-g|(t) / (1 + t^{1+kappa})``; ``inf`` when it diverges."""
    if kappa < 0:
        raise ValueError("kappa must be >= 0")
    return _weighted_sup(f, g, _poly_weight(float(kappa)))


def rho_cev(f: Path, g: Path, mu: float, gamma: float) -> float:
    """``sup_t |f-g|(t) / (e^{mu t} (1+t)^{1/(1-gamma)})``."""
    if not 0.5 <= gamma < 1.0:
        raise ValueError("gamma must lie in [1/2, 1)")
    return _weighted_sup(f, g, _cev_weight(float(mu), float(gamma)))


def rho_puhalskii(f: Path, g: Path, k_max: int = DEFAULT_K_MAX, return_bound: bool = False):
    """Truncated compact-uniform metric ``sum_k 2^-k min(sup_[0,k] |f-g|, 1)``.

    The omitted terms ``k > k_max`` contribute at most ``2^-k_max``; pass
    ``return_bound=True`` to get ``(value, bound)``.
    """
    if int(k_max) != k_max or k_max < 1:
        raise ValueError("k_max must be a positive integer")
    total = 0.0
    running = 0.0
    for k in range(1, int(k_max) + 1):
        # sup over [k-1, k] only; the running max carries [0, k-1]
        ff = _window(f, k - 1.0)
        gg = _window(g, k - 1.0)
        running = max(running, _weighted_sup(ff, gg, _UNIT_WEIGHT, t_hi=1.0))
        total += 2.0 ** (-k) * min(running, 1.0)
    if return_bound:
        return total, 2.0 ** (-int(k_max))
    return total


def _window(f: Path, t0: float) -> Path:
    """``s -> f(t0 + s)`` as a path (knots re-based at ``t0``)."""
    if t0 == 0.0:
        return f
    keep = f.times > t0
    t = np.concatenate(([0.0], f.times[keep] - t0))
    v = np.concatenate(([eval_path(f, t0)], f.values[keep]))
    return Path(t, v, f.extension)


def distance(f: Path, g: Path, spec: MetricSpec) -> float:
    if isinstance(spec, WeightedSup):
        return rho_weighted_sup(f, g, spec.kappa)
    if isinstance(spec, Puhalskii):
        return rho_puhalskii(f, g, spec.k_max)
    if isinstance(spec, CevWeighted):
        return rho_cev(f, g, spec.mu, spec.gamma)
    raise TypeError(f"unknown metric spec {spec!r}")


def to_jsonable(x: Any) -> Any:
    """Floats with inf mapped to the string ``"inf"`` for strict JSON."""
    if isinstance(x, float) and math.isinf(x):
        return "inf" if x > 0 else "-inf"
    if isinstance(x, dict):
        return {k: to_jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [to_jsonable(v) for v in x]
    return x
