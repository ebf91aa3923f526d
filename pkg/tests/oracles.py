"""Independent reference computations used by the tests."""

import itertools
import math

import numpy as np
import sympy as sp
from scipy.special import logsumexp


def grid_legendre(log_mgf_vec, alphas, lam_lo=-20.0, lam_hi=20.0, num=10 ** 6):
    """Exact maximum of ``lam * alpha - A(lam)`` over a uniform lambda grid.

    ``A`` is convex, so the discrete maximiser is the first grid index whose
    forward difference reaches ``alpha``.
    """
    lam = np.linspace(lam_lo, lam_hi, num)
    A = log_mgf_vec(lam)
    slopes = np.diff(A) / np.diff(lam)
    a = np.asarray(alphas, dtype=float)
    idx = np.clip(np.searchsorted(slopes, a), 0, num - 1)
    return lam[idx] * a - A[idx]


LOG_MGF = {
    "gaussian": lambda lam, m=0.0, v=1.0: m * lam + 0.5 * v * lam ** 2,
    "rademacher": lambda lam: np.logaddexp(lam, -lam) - math.log(2.0),
    "poisson_centered": lambda lam, r=1.0: r * (np.exp(lam) - 1.0) - r * lam,
}


def table_log_mgf(values, probs):
    v, p = np.asarray(values, float), np.asarray(probs, float)
    return lambda lam: logsumexp(np.outer(lam, v), b=p, axis=1)


def gaussian_closed(alpha, m=0.0, v=1.0):
    return (np.asarray(alpha) - m) ** 2 / (2 * v)


def rademacher_closed(alpha):
    a = np.asarray(alpha, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(np.abs(a) < 1,
                        0.5 * (1 + a) * np.log1p(a) + 0.5 * (1 - a) * np.log1p(-a),
                        np.where(np.abs(a) == 1, math.log(2.0), np.inf))


def poisson_centered_symbolic():
    """Legendre transform of ``e^lam - 1 - lam`` derived with sympy."""
    lam, alpha = sp.symbols("lam alpha", real=True)
    A = sp.exp(lam) - 1 - lam
    (root,) = sp.solve(sp.Eq(sp.diff(lam * alpha - A, lam), 0), lam)
    expr = sp.simplify((lam * alpha - A).subs(lam, root))
    return sp.lambdify(alpha, expr, "numpy"), expr


def kolmogorov_brute(values, probs, n, x, y, slack=1e-12):
    """Enumerate all step sequences for the maximal inequality."""
    lhs = num = 0.0
    inside = [0.0] * n
    for seq in itertools.product(range(len(values)), repeat=n):
        p = math.prod(probs[i] for i in seq)
        s, hit = 0.0, False
        partial = []
        for i in seq:
            s = s + values[i]
            partial.append(s)
        for m, s_m in enumerate(partial):
            if abs(s_m) >= x + y - slack:
                hit = True
            if abs(s_m) <= y + slack:
                inside[m] += p
        lhs += p if hit else 0.0
        num += p if abs(partial[-1]) >= x - slack else 0.0
    lo = min(inside)
    return lhs, (num / lo if lo > 0 else math.inf)
