"""Action functionals on half-line paths.

Four models are supported:

* ``RandomWalk``  -- ``int Lambda(f'(t)) dt`` with ``Lambda`` a Cramer deviation function
* ``Quadratic``   -- ``int f'(t)^2 / (2 var) dt``
* ``Diffusion``   -- ``int (f' - a(f))^2 / (2 sigma^2(f)) dt``
* ``Cev``         -- ``int_0^Theta (f' - mu f)^2 / (2 sigma^2 f^{2 gamma}) dt``

Paths that start at the wrong point (0, 0, ``x0`` and 1 respectively) have
infinite rate.  The infinite-horizon rate is the knot-range integral plus the
analytic contribution of the path's tail rule.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Union

import numpy as np
from scipy import integrate

from .coefficients import ConstantCoef, constant_value
from .cramer import DeviationFunction, MgfModel, legendre
from .path_space import (Constant, ExpGrowth, LinearSlope, Path, eval_path, project)

__all__ = [
    "RandomWalk", "Quadratic", "Diffusion", "Cev", "RateModel", "RateValue",
    "rate_finite_horizon", "rate_infinite", "most_likely_extension",
    "straighten", "theta_absorption", "origin", "extension_residual",
    "rate_model_from_dict", "rate_model_to_dict",
]

QUAD_TOL = 1e-9
ODE_TOL = 1e-8
ORIGIN_TOL = 1e-12


@dataclass(frozen=True)
class RandomWalk:
    dev: DeviationFunction

    def __init__(self, dev):
        object.__setattr__(self, "dev", dev if isinstance(dev, DeviationFunction) else DeviationFunction(dev))

    @property
    def model(self) -> MgfModel:
        return self.dev.model


@dataclass(frozen=True)
class Quadratic:
    var: float = 1.0

    def __post_init__(self):
        if not self.var > 0:
            raise ValueError("variance must be positive")


@dataclass(frozen=True)
class Diffusion:
    """SDE ``dX = a(X) dt + n^{-1/2} sigma(X) dW`` started at ``x0``.

    The bounds ``1/lam <= sigma^2 <= lam`` and ``|a| <= lam`` are checked on
    a sample of ``check_range``; ``lam_bound=None`` infers the smallest
    admissible value from the same sample.
    """
    a: Callable = field(default_factory=lambda: ConstantCoef(0.0))
    sigma: Callable = field(default_factory=lambda: ConstantCoef(1.0))
    x0: float = 0.0
    lam_bound: float | None = None
    check_range: tuple[float, float] = (-10.0, 10.0)

    def __post_init__(self):
        xs = np.linspace(self.check_range[0], self.check_range[1], 2001)
        s2 = np.asarray(self.sigma(xs), dtype=float) ** 2
        av = np.abs(np.asarray(self.a(xs), dtype=float))
        if np.any(s2 <= 0):
            raise ValueError("sigma must not vanish on the checked range")
        needed = max(1.0, float(s2.max()), float(1.0 / s2.min()), float(av.max()))
        if self.lam_bound is None:
            object.__setattr__(self, "lam_bound", needed)
        elif self.lam_bound < 1.0 or needed > self.lam_bound * (1 + 1e-12):
            raise ValueError(f"coefficients violate the bound lam={self.lam_bound} (need {needed:g})")


@dataclass(frozen=True)
class Cev:
    mu: float = 0.0
    sigma: float = 1.0
    gamma: float = 0.5

    def __post_init__(self):
        if self.sigma == 0:
            raise ValueError("sigma must be nonzero")
        if not 0.5 <= self.gamma < 1.0:
            raise ValueError("gamma must lie in [1/2, 1)")


RateModel = Union[RandomWalk, Quadratic, Diffusion, Cev]


@dataclass
class RateValue:
    finite: bool
    value: float
    horizon_profile: list[tuple[float, float]] = field(default_factory=list)
    truncated: float | None = None
    note: str = ""

    @classmethod
    def divergent(cls, note: str = "", truncated: float | None = None) -> "RateValue":
        return cls(False, math.inf, [], truncated, note)

    def to_dict(self) -> dict:
        out: dict = {"finite": self.finite, "value": self.value if self.finite else "inf",
                     "horizon_profile": [[t, v if math.isfinite(v) else "inf"] for t, v in self.horizon_profile]}
        if self.truncated is not None:
            out["truncated"] = self.truncated
        if self.note:
            out["note"] = self.note
        return out


def origin(m: RateModel) -> float:
    if isinstance(m, Diffusion):
        return float(m.x0)
    if isinstance(m, Cev):
        return 1.0
    return 0.0


# --------------------------------------------------------------------------
# pieces of a path on [0, T]
# --------------------------------------------------------------------------

@dataclass
class _Pieces:
    """Linear segments plus at most one exponential tail piece."""
    a: np.ndarray
    b: np.ndarray
    v: np.ndarray          # value at a
    s: np.ndarray          # slope
    exp: tuple[float, float, float, float] | None = None  # (a, b, v_a, rate)


def _pieces(f: Path, T: float) -> _Pieces:
    t, v = f.times, f.values
    inside = t < T
    tk = t[inside]
    vk = v[inside]
    if T <= f.t_last:
        tk = np.append(tk, T)
        vk = np.append(vk, eval_path(f, T))
        return _Pieces(tk[:-1], tk[1:], vk[:-1], np.diff(vk) / np.diff(tk))
    a, b = tk[:-1], tk[1:]
    base_v, base_s = vk[:-1], np.diff(vk) / np.diff(tk) if tk.size > 1 else np.array([])
    ext = f.extension
    if isinstance(ext, ExpGrowth) and ext.rate != 0.0:
        return _Pieces(a, b, base_v, base_s, (f.t_last, T, f.v_last, float(ext.rate)))
    slope = ext.slope if isinstance(ext, LinearSlope) else 0.0
    return _Pieces(np.append(a, f.t_last), np.append(b, T), np.append(base_v, f.v_last),
                   np.append(base_s, slope))


@lru_cache(maxsize=None)
def _gl(n: int) -> tuple[np.ndarray, np.ndarray]:
    return np.polynomial.legendre.leggauss(n)


def _gauss_legendre(F: Callable[[np.ndarray], np.ndarray], a: np.ndarray, b: np.ndarray,
                    n0: int = 16, n_max: int = 1024) -> float:
    """Sum over segments of ``int_a^b F(t) dt``; ``F`` is vectorised over a
    (segments, nodes) array.  Node count doubles until two successive
    totals agree to ``QUAD_TOL``."""
    if a.size == 0:
        return 0.0
    a = a[:, None]
    b = b[:, None]
    prev = None
    n = n0
    while True:
        x, w = _gl(n)
        tt = 0.5 * (b - a) * x[None, :] + 0.5 * (b + a)
        vals = F(tt)
        total = float(np.sum(0.5 * (b - a) * vals * w[None, :]))
        if not math.isfinite(total):
            return math.inf
        if prev is not None and abs(total - prev) <= QUAD_TOL * max(1.0, abs(total)):
            return total
        if n >= n_max:
            return total
        prev = total
        n *= 2


def _integrand_state(m: RateModel) -> Callable[[np.ndarray, np.ndarray], np.ndarray]:
    """Lagrangian L(f, f') for the state-dependent models."""
    if isinstance(m, Diffusion):
        def L(x, dx):
            return (dx - np.asarray(m.a(x), dtype=float)) ** 2 / (2.0 * np.asarray(m.sigma(x), dtype=float) ** 2)
        return L
    if isinstance(m, Cev):
        def L(x, dx):
            with np.errstate(divide="ignore", invalid="ignore"):
                return (dx - m.mu * x) ** 2 / (2.0 * m.sigma ** 2 * np.power(x, 2.0 * m.gamma))
        return L
    if isinstance(m, Quadratic):
        return lambda x, dx: dx * dx / (2.0 * m.var)
    dev = m.dev
    return lambda x, dx: np.vectorize(lambda s: legendre(dev, s), otypes=[float])(dx)


def _integrate_pieces(m: RateModel, pc: _Pieces) -> float:
    total = 0.0
    if pc.a.size:
        if isinstance(m, RandomWalk):
            for dt, s in zip(pc.b - pc.a, pc.s):
                c = legendre(m.dev, float(s))
                if math.isinf(c):
                    return math.inf
                total += float(dt) * c
        elif isinstance(m, Quadratic):
            total += float(np.sum((pc.b - pc.a) * pc.s ** 2)) / (2.0 * m.var)
        else:
            L = _integrand_state(m)
            a0, v0, s0 = pc.a[:, None], pc.v[:, None], pc.s[:, None]
            total += _gauss_legendre(lambda tt: L(v0 + s0 * (tt - a0), np.broadcast_to(s0, tt.shape)),
                                     pc.a, pc.b)
    if pc.exp is not None:
        ea, eb, ev, r = pc.exp
        L = _integrand_state(m)

        def F(tt):
            x = ev * np.exp(r * (tt - ea))
            return L(x, r * x)
        total += _exp_piece_integral(F, ea, eb, r)
    return total


def _exp_piece_integral(F, a: float, b: float, r: float) -> float:
    # split long exponential pieces so each sub-interval spans O(1) e-folds
    n = max(1, min(4096, int(math.ceil(abs(r) * (b - a)))))
    edges = np.linspace(a, b, n + 1)
    return _gauss_legendre(F, edges[:-1], edges[1:])


# --------------------------------------------------------------------------
# public operations
# --------------------------------------------------------------------------

def theta_absorption(f: Path) -> float:
    """First time ``f`` hits zero; ``inf`` when it never does."""
    v = f.values
    t = f.times
    hit = np.nonzero(v == 0.0)[0]
    first_knot = t[hit[0]] if hit.size else math.inf
    cross = np.nonzero(v[:-1] * v[1:] < 0)[0]
    if cross.size:
        i = cross[0]
        tc = t[i] + (t[i + 1] - t[i]) * v[i] / (v[i] - v[i + 1])
        first_knot = min(first_knot, float(tc))
    if math.isfinite(first_knot):
        return float(first_knot)
    ext = f.extension
    if isinstance(ext, LinearSlope) and ext.slope != 0.0 and f.v_last * ext.slope < 0:
        return f.t_last - f.v_last / ext.slope
    return math.inf


def _cev_rate(m: Cev, f: Path, T: float) -> RateValue:
    probe = np.append(f.times[f.times <= T], T)
    if np.any(eval_path(f, probe) < 0):
        return RateValue.divergent("path leaves the non-negative half-line")
    theta = theta_absorption(f)
    if theta > T:
        return RateValue(True, _integrate_pieces(m, _pieces(f, T)))
    if theta == 0.0:
        return RateValue(True, 0.0)
    # integrable singularity test at Theta: fit L ~ C (Theta - t)^-beta
    eps_cut = 1e-6 * theta
    pc = _pieces(f, theta)
    # geometric refinement of the last segment towards Theta
    last_a = float(pc.a[-1])
    k = int(math.ceil(math.log2(max((theta - last_a) / eps_cut, 2.0))))
    edges = theta - (theta - last_a) * 2.0 ** (-np.arange(k + 1, dtype=float))
    a = np.concatenate((pc.a[:-1], edges[:-1]))
    b = np.concatenate((pc.b[:-1], edges[1:]))
    v = np.concatenate((pc.v[:-1], pc.v[-1] + pc.s[-1] * (edges[:-1] - last_a)))
    s = np.concatenate((pc.s[:-1], np.full(k, pc.s[-1])))
    truncated = _integrate_pieces(m, _Pieces(a, b, v, s))
    L = _integrand_state(m)
    eps = eps_cut * 2.0 ** (-np.arange(4, dtype=float))
    x = pc.v[-1] + pc.s[-1] * (theta - eps - last_a)
    vals = L(x, np.full_like(x, pc.s[-1]))
    beta = -np.polyfit(np.log(eps), np.log(vals), 1)[0]
    if beta >= 1.0 - 1e-6:
        return RateValue.divergent(
            f"integrand ~ (Theta - t)^-{beta:.4g} at Theta={theta:.6g} is not integrable",
            truncated=truncated)
    C = vals[0] * eps[0] ** beta
    return RateValue(True, truncated + C * eps_cut ** (1.0 - beta) / (1.0 - beta),
                     truncated=truncated)


def rate_finite_horizon(m: RateModel, f: Path, T: float) -> RateValue:
    """``I_0^T`` of ``f`` restricted to ``[0, T]``."""
    if not T > 0:
        raise ValueError("T must be positive")
    if abs(float(f.values[0]) - origin(m)) > ORIGIN_TOL:
        return RateValue.divergent(f"path must start at {origin(m):g}")
    if isinstance(m, Cev):
        return _cev_rate(m, f, T)
    val = _integrate_pieces(m, _pieces(f, T))
    if math.isinf(val):
        return RateValue.divergent("slope outside the attainable range")
    return RateValue(True, val)


def _quad_tail(F: Callable[[float], float]) -> float:
    """``int_0^inf F(u) du`` with a divergence guard on the far integrand."""
    far = [F(u) for u in (1e4, 1e6)]
    if any(not math.isfinite(x) or x > 1e-12 for x in far):
        return math.inf
    val, _ = integrate.quad(F, 0.0, math.inf, limit=400, epsabs=1e-12, epsrel=1e-10)
    return val if math.isfinite(val) else math.inf


def _tail_cost(m: RateModel, f: Path) -> float:
    """Rate accumulated by the tail rule on ``[t_last, inf)``."""
    ext = f.extension
    v = f.v_last
    if isinstance(ext, ExpGrowth) and ext.rate != 0.0 and v != 0.0:
        r = float(ext.rate)
        if isinstance(m, Cev):
            if r == m.mu:
                return 0.0
            if r > 0:
                return math.inf
            return (r - m.mu) ** 2 * v ** (2 - 2 * m.gamma) / (2 * m.sigma ** 2 * 2 * abs(r) * (1 - m.gamma))
        if r > 0:
            return math.inf
        if isinstance(m, Quadratic):
            return abs(r) * v * v / (4.0 * m.var)
        L = _integrand_state(m)
        return _quad_tail(lambda u: float(L(np.array([v * math.exp(r * u)]),
                                             np.array([r * v * math.exp(r * u)]))[0]))
    s = ext.slope if isinstance(ext, LinearSlope) else 0.0
    if isinstance(m, RandomWalk):
        return 0.0 if legendre(m.dev, s) == 0.0 else math.inf
    if isinstance(m, Quadratic):
        return 0.0 if s == 0.0 else math.inf
    if isinstance(m, Cev):
        if v == 0.0:
            return 0.0
        if s == 0.0:
            return 0.0 if m.mu == 0.0 else math.inf
        if m.mu == 0.0 and s > 0 and m.gamma > 0.5:
            return s * v ** (1 - 2 * m.gamma) / (2 * m.sigma ** 2 * (2 * m.gamma - 1))
        return math.inf
    if s == 0.0:
        return 0.0 if float(m.a(v)) == 0.0 else math.inf
    L = _integrand_state(m)
    return _quad_tail(lambda u: float(L(np.array([v + s * u]), np.array([s]))[0]))


def rate_infinite(m: RateModel, f: Path) -> RateValue:
    """``I(f) = lim_T I_0^T(f^(T))`` using the analytic tail contribution."""
    if abs(float(f.values[0]) - origin(m)) > ORIGIN_TOL:
        return RateValue.divergent(f"path must start at {origin(m):g}")
    t_end = f.t_last
    if isinstance(m, Cev):
        theta = theta_absorption(f)
        if math.isfinite(theta):
            rv = _cev_rate(m, f, max(theta, t_end) + 1.0)
            rv.horizon_profile = _profile(m, f, max(theta, t_end, 1e-3))
            return rv
        if np.any(f.values < 0):
            return RateValue.divergent("path leaves the non-negative half-line")
    base = rate_finite_horizon(m, f, t_end).value if t_end > 0 else 0.0
    tail = _tail_cost(m, f)
    profile = _profile(m, f, t_end if t_end > 0 else 1.0)
    if math.isinf(base) or math.isinf(tail):
        rv = RateValue.divergent("tail accumulates rate at a positive rate" if math.isinf(tail)
                                 else "knot range already infinite")
        rv.horizon_profile = profile
        return rv
    return RateValue(True, base + tail, profile)


def _profile(m: RateModel, f: Path, t0: float) -> list[tuple[float, float]]:
    return [(t0 * k, rate_finite_horizon(m, f, t0 * k).value) for k in (1, 2, 4, 8)]


def straighten(f: Path, T: float) -> Path:
    """Chord of ``f`` on ``[0, T]`` from ``(0, f(0))`` to ``(T, f(T))``."""
    if not T > 0:
        raise ValueError("T must be positive")
    return Path([0.0, T], [float(f.values[0]), eval_path(f, T)], Constant())


def extension_residual(m: RateModel, g: Path) -> float:
    """Per-unit-time rate of ``g``'s tail rule beyond its last knot."""
    ext = g.extension
    v = g.v_last
    if isinstance(m, Diffusion):
        s = ext.slope if isinstance(ext, LinearSlope) else 0.0
        return float((s - m.a(v)) ** 2 / (2.0 * m.sigma(v) ** 2))
    if isinstance(m, RandomWalk):
        s = ext.slope if isinstance(ext, LinearSlope) else 0.0
        return legendre(m.dev, s)
    if isinstance(m, Quadratic):
        s = ext.slope if isinstance(ext, LinearSlope) else 0.0
        return s * s / (2.0 * m.var)
    return 0.0


def _rk4(a: Callable, y: float, h: float) -> float:
    k1 = float(a(y))
    k2 = float(a(y + 0.5 * h * k1))
    k3 = float(a(y + 0.5 * h * k2))
    k4 = float(a(y + h * k3))
    return y + h * (k1 + 2 * k2 + 2 * k3 + k4) / 6.0


def _ode_tail(m: Diffusion, T: float, y0: float) -> tuple[np.ndarray, np.ndarray]:
    """Knots of ``g' = a(g)`` from ``(T, y0)``.

    Steps are accepted when the RK4 step-doubling error is below
    ``ODE_TOL * h`` and the chord of the step costs at most ``ODE_TOL * h``
    of rate (``|delta a| <= sqrt(24 sigma^2 ODE_TOL)``).  Integration runs to
    ``10 T`` and then on, up to ``100 T``, until the equilibrium residual is
    negligible.
    """
    U_min, U_max = 10.0 * T, 100.0 * T
    h_max = max(T, 1.0)
    ts, ys = [T], [y0]
    t, y, h = T, y0, min(0.1, T)
    while True:
        if t >= U_min and float(m.a(y)) ** 2 / (2.0 * float(m.sigma(y)) ** 2) <= 1e-15:
            break
        if t >= U_max:
            break
        h = min(h, U_max - t)
        full = _rk4(m.a, y, h)
        half = _rk4(m.a, _rk4(m.a, y, 0.5 * h), 0.5 * h)
        err = abs(full - half) / 15.0
        chord_ok = abs(float(m.a(half)) - float(m.a(y))) <= math.sqrt(24.0 * float(m.sigma(y)) ** 2 * ODE_TOL)
        if (err <= ODE_TOL * h and chord_ok) or h < 1e-10:
            t, y = t + h, half
            ts.append(t)
            ys.append(y)
            h = min(1.5 * h, h_max)
        else:
            h *= 0.5
    return np.array(ts), np.array(ys)


def most_likely_extension(m: RateModel, f: Path, T: float) -> Path:
    """Continuation of ``f^(T)`` beyond ``T`` that adds no rate.

    Diffusions with non-constant drift follow ``g' = a(g)`` numerically; the
    knots end in a Constant tail at an equilibrium, or a LinearSlope tail at
    the final drift when the solution runs away.
    """
    base = project(f, T)
    y = base.v_last
    if isinstance(m, RandomWalk):
        a = m.dev.mean
        return Path(base.times, base.values, Constant() if a == 0.0 else LinearSlope(a))
    if isinstance(m, Quadratic):
        return base
    if isinstance(m, Cev):
        if m.mu == 0.0 or y == 0.0:
            return base
        return Path(base.times, base.values, ExpGrowth(m.mu))
    c = constant_value(m.a)
    if c is not None:
        return Path(base.times, base.values, Constant() if c == 0.0 else LinearSlope(c))
    ts, ys = _ode_tail(m, T, y)
    # runaway solutions (no equilibrium reached) continue at the final drift
    a_end = float(m.a(ys[-1]))
    tail = Constant() if a_end ** 2 / (2.0 * float(m.sigma(ys[-1])) ** 2) <= 1e-15 else LinearSlope(a_end)
    return Path(np.concatenate((base.times, ts[1:])), np.concatenate((base.values, ys[1:])), tail)


# --------------------------------------------------------------------------
# JSON form

_RATE_FIELDS = {
    "random_walk": ({"step"}, set()),
    "quadratic": (set(), {"var"}),
    "diffusion": (set(), {"a", "sigma", "x0", "lam_bound"}),
    "cev": (set(), {"mu", "sigma", "gamma"}),
}


def rate_model_from_dict(d: dict) -> RateModel:
    """Inverse of :func:`rate_model_to_dict`; unknown fields are rejected."""
    from .coefficients import coef_from_dict
    from .cramer import model_from_dict

    kind = d.get("kind")
    if kind not in _RATE_FIELDS:
        raise ValueError(f"unknown rate model kind {kind!r}")
    required, optional = _RATE_FIELDS[kind]
    unknown = set(d) - required - optional - {"kind"}
    if unknown:
        raise ValueError(f"unknown rate model fields: {sorted(unknown)}")
    missing = required - set(d)
    if missing:
        raise ValueError(f"missing rate model fields: {sorted(missing)}")
    if kind == "random_walk":
        return RandomWalk(model_from_dict(d["step"]))
    if kind == "quadratic":
        return Quadratic(float(d.get("var", 1.0)))
    if kind == "diffusion":
        lam = d.get("lam_bound")
        return Diffusion(coef_from_dict(d.get("a", 0.0)), coef_from_dict(d.get("sigma", 1.0)),
                         float(d.get("x0", 0.0)), None if lam is None else float(lam))
    return Cev(float(d.get("mu", 0.0)), float(d.get("sigma", 1.0)), float(d.get("gamma", 0.5)))


def rate_model_to_dict(m: RateModel) -> dict:
    if isinstance(m, RandomWalk):
        return {"kind": "random_walk", "step": m.model.to_dict()}
    if isinstance(m, Quadratic):
        return {"kind": "quadratic", "var": m.var}
    if isinstance(m, Diffusion):
        return {"kind": "diffusion", "a": m.a.to_dict(), "sigma": m.sigma.to_dict(),
                "x0": m.x0, "lam_bound": m.lam_bound}
    return {"kind": "cev", "mu": m.mu, "sigma": m.sigma, "gamma": m.gamma}
