"""Derivative-free 1-D searches shared by the metric and variational code."""

from __future__ import annotations

import math
from typing import Callable

import numpy as np

_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


def golden_min(fn: Callable[[float], float], a: float, b: float, tol: float = 1e-12,
               max_iter: int = 500) -> tuple[float, float]:
    """Golden-section minimisation of a unimodal ``fn`` on ``[a, b]``.

    Returns ``(x, fn(x))``. The endpoints are also compared so that a
    monotone function reports its boundary minimum exactly.
    """
    if b < a:
        a, b = b, a
    fa, fb = fn(a), fn(b)
    lo, hi = a, b
    c = hi - _INVPHI * (hi - lo)
    d = lo + _INVPHI * (hi - lo)
    fc, fd = fn(c), fn(d)
    it = 0
    while hi - lo > tol * max(1.0, abs(lo) + abs(hi)) * 0.5 and it < max_iter:
        if fc <= fd:
            hi, d, fd = d, c, fc
            c = hi - _INVPHI * (hi - lo)
            fc = fn(c)
        else:
            lo, c, fc = c, d, fd
            d = lo + _INVPHI * (hi - lo)
            fd = fn(d)
        it += 1
    best = min(((fa, a), (fb, b), (fc, c), (fd, d)), key=lambda p: (p[0], p[1]))
    return best[1], best[0]


def golden_max(fn: Callable[[float], float], a: float, b: float,
               tol: float = 1e-12) -> tuple[float, float]:
    x, v = golden_min(lambda s: -fn(s), a, b, tol)
    return x, -v


def scan_then_golden_max(fn: Callable[[float], float], grid: np.ndarray, tol: float = 1e-12,
                         vec: Callable[[np.ndarray], np.ndarray] | None = None) -> tuple[float, float]:
    """Maximise ``fn`` by a grid prescan followed by golden refinement.

    The bracket is the pair of grid cells around the best grid point, so the
    result is exact for unimodal functions and robust otherwise.  ``vec``,
    when given, evaluates ``fn`` on the whole grid at once.
    """
    vals = np.asarray(vec(grid), dtype=float) if vec is not None else np.array([fn(float(t)) for t in grid])
    vals = np.where(np.isnan(vals), -np.inf, vals)
    i = int(np.argmax(vals))
    lo = float(grid[max(i - 1, 0)])
    hi = float(grid[min(i + 1, len(grid) - 1)])
    best_t, best_v = float(grid[i]), float(vals[i])
    if hi > lo:
        t, v = golden_max(fn, lo, hi, tol)
        if v > best_v:
            best_t, best_v = t, v
    return best_t, best_v
