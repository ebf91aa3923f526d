"""Sample paths of scaled random walks, small-noise diffusions and CEV processes.

Randomness is organised in blocks.  Replicate ``i`` of a spec is row
``i % B`` of block ``i // B``, where ``B = rows_per_block(steps)`` depends only
on the time grid.  Block ``b`` draws from ``stream(seed, b)``, and every
sampler fills its arrays row by row, so the first ``r`` rows of a block do
not depend on how many rows are drawn.  This makes a single replicate, a
batch, and any split of blocks across workers agree bit for bit.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import IO, Callable, Iterable, Iterator, Union

import numpy as np
from scipy import stats
from scipy.special import expit, logit, logsumexp

from .coefficients import ConstantCoef, coef_from_dict, constant_value, is_zero
from .cramer import (CenteredBernoulli, Gaussian, MgfModel, Poisson, Rademacher, TableEmpirical,
                     log_mgf, model_from_dict)
from .path_space import Constant, Path

__all__ = [
    "RandomWalkSim", "DiffusionSim", "CevSim", "SimSpec", "sim_from_dict",
    "stream", "rows_per_block", "block_layout", "grid_times",
    "sample_block", "sample_block_tilted", "sample_endpoint_sums",
    "simulate", "simulate_rw", "simulate_diffusion", "simulate_cev",
    "simulate_paths", "write_jsonl", "AliasTable",
]

MAX_BLOCK_ROWS = 1024
BLOCK_CELLS = 1 << 22


@dataclass(frozen=True)
class RandomWalkSim:
    """Polygon through ``(k/n, S_k / x)``; ``x`` defaults to ``n``."""
    model: MgfModel
    n: int
    x: float | None = None
    horizon: float = 1.0
    seed: int = 0

    def __post_init__(self):
        _check_common(self)
        if self.x is not None and not self.x > 0:
            raise ValueError("x must be positive")

    @property
    def scale(self) -> float:
        return float(self.n if self.x is None else self.x)

    @property
    def steps(self) -> int:
        return int(math.ceil(self.n * self.horizon - 1e-9))

    def to_dict(self) -> dict:
        return {"kind": "random_walk", "model": self.model.to_dict(), "n": self.n,
                "x": self.x, "horizon": self.horizon, "seed": self.seed}


@dataclass(frozen=True)
class DiffusionSim:
    """Euler scheme for ``dX = a(X) dt + n^{-1/2} sigma(X) dW``."""
    a: Callable = field(default_factory=lambda: ConstantCoef(0.0))
    sigma: Callable = field(default_factory=lambda: ConstantCoef(1.0))
    x0: float = 0.0
    n: int = 1
    dt: float | None = None
    horizon: float = 1.0
    seed: int = 0

    def __post_init__(self):
        _check_common(self)
        _check_dt(self)

    @property
    def steps(self) -> int:
        return _grid_steps(self)

    def to_dict(self) -> dict:
        return {"kind": "diffusion", "a": self.a.to_dict(), "sigma": self.sigma.to_dict(),
                "x0": self.x0, "n": self.n, "dt": self.dt, "horizon": self.horizon, "seed": self.seed}


@dataclass(frozen=True)
class CevSim:
    """Euler scheme for ``dX = mu X dt + sigma n^{gamma-1} X^gamma dW``, ``X(0) = 1``, absorbed at 0."""
    mu: float = 0.0
    sigma: float = 1.0
    gamma: float = 0.5
    n: int = 1
    dt: float | None = None
    horizon: float = 1.0
    seed: int = 0

    def __post_init__(self):
        _check_common(self)
        _check_dt(self)
        if not 0.5 <= self.gamma < 1.0:
            raise ValueError("gamma must lie in [1/2, 1)")

    @property
    def steps(self) -> int:
        return _grid_steps(self)

    def to_dict(self) -> dict:
        return {"kind": "cev", "mu": self.mu, "sigma": self.sigma, "gamma": self.gamma,
                "n": self.n, "dt": self.dt, "horizon": self.horizon, "seed": self.seed}


SimSpec = Union[RandomWalkSim, DiffusionSim, CevSim]


def _check_common(s) -> None:
    if int(s.n) != s.n or s.n < 1:
        raise ValueError("n must be a positive integer")
    if not s.horizon > 0:
        raise ValueError("horizon must be positive")
    if not 0 <= int(s.seed) < 2 ** 64:
        raise ValueError("seed must be an unsigned 64-bit integer")


def _check_dt(s) -> None:
    if s.dt is not None and not 0 < s.dt <= 1.0 / s.n:
        raise ValueError("dt must lie in (0, 1/n]")


def _grid_steps(s) -> int:
    dt = s.dt if s.dt is not None else min(min(1.0 / s.n, 1e-3) * s.horizon, 1.0 / s.n)
    return int(math.ceil(s.horizon / dt - 1e-9))


_SIM_FIELDS = {
    "random_walk": ({"model", "n"}, {"x", "horizon", "seed"}),
    "diffusion": ({"n"}, {"a", "sigma", "x0", "dt", "horizon", "seed"}),
    "cev": ({"n"}, {"mu", "sigma", "gamma", "dt", "horizon", "seed"}),
}


def sim_from_dict(d: dict) -> SimSpec:
    kind = d.get("kind")
    if kind not in _SIM_FIELDS:
        raise ValueError(f"unknown simulation kind {kind!r}")
    required, optional = _SIM_FIELDS[kind]
    unknown = set(d) - required - optional - {"kind"}
    if unknown:
        raise ValueError(f"unknown simulation fields: {sorted(unknown)}")
    missing = required - set(d)
    if missing:
        raise ValueError(f"missing simulation fields: {sorted(missing)}")
    common = {"n": int(d["n"]), "horizon": float(d.get("horizon", 1.0)), "seed": int(d.get("seed", 0))}
    dt = None if d.get("dt") is None else float(d["dt"])
    if kind == "random_walk":
        x = None if d.get("x") is None else float(d["x"])
        return RandomWalkSim(model_from_dict(d["model"]), x=x, **common)
    if kind == "diffusion":
        return DiffusionSim(coef_from_dict(d.get("a", 0.0)), coef_from_dict(d.get("sigma", 1.0)),
                            float(d.get("x0", 0.0)), dt=dt, **common)
    return CevSim(float(d.get("mu", 0.0)), float(d.get("sigma", 1.0)), float(d.get("gamma", 0.5)),
                  dt=dt, **common)


# --------------------------------------------------------------------------
# streams and blocks

def stream(seed: int, index: int) -> np.random.Generator:
    """Independent generator for ``(seed, index)``."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=(int(index),))))


def rows_per_block(steps: int) -> int:
    return max(1, min(MAX_BLOCK_ROWS, BLOCK_CELLS // max(int(steps), 1)))


def block_layout(spec: SimSpec, replicates: int) -> list[tuple[int, int]]:
    """``(block index, rows)`` covering ``replicates`` rows in order."""
    b = rows_per_block(spec.steps)
    full, rest = divmod(int(replicates), b)
    out = [(k, b) for k in range(full)]
    if rest:
        out.append((full, rest))
    return out


def grid_times(spec: SimSpec) -> np.ndarray:
    if isinstance(spec, RandomWalkSim):
        return np.arange(spec.steps + 1, dtype=float) / spec.n
    return np.linspace(0.0, spec.horizon, spec.steps + 1)


# --------------------------------------------------------------------------
# step samplers

class AliasTable:
    """Walker/Vose alias table; one uniform per draw."""

    def __init__(self, probs: np.ndarray):
        p = np.asarray(probs, dtype=float)
        k = p.size
        scaled = p * k / p.sum()
        self.prob = np.ones(k)
        self.alias = np.arange(k)
        small = [i for i in range(k) if scaled[i] < 1.0]
        large = [i for i in range(k) if scaled[i] >= 1.0]
        while small and large:
            s, g = small.pop(), large.pop()
            self.prob[s] = scaled[s]
            self.alias[s] = g
            scaled[g] -= 1.0 - scaled[s]
            (small if scaled[g] < 1.0 else large).append(g)
        self.k = k

    def index(self, u: np.ndarray) -> np.ndarray:
        v = u * self.k
        j = np.minimum(v.astype(np.int64), self.k - 1)
        return np.where(v - j < self.prob[j], j, self.alias[j])


def _poisson_cdf_table(rate: float) -> np.ndarray:
    hi = int(rate + 40.0 * math.sqrt(rate)) + 40
    while stats.poisson.sf(hi, rate) > 0.0:
        hi *= 2
    return stats.poisson.cdf(np.arange(hi + 1), rate)


def _rademacher_bits(gen: np.random.Generator, rows: int, steps: int) -> np.ndarray:
    words = -(-steps // 64)
    raw = gen.bit_generator.random_raw(rows * words).astype("<u8").reshape(rows, words)
    bits = np.unpackbits(raw.view(np.uint8), axis=1, bitorder="little")[:, :steps]
    return 2.0 * bits - 1.0


def _draw_steps(model: MgfModel, gen: np.random.Generator, rows: int, steps: int,
                lam: float = 0.0) -> np.ndarray:
    """``(rows, steps)`` i.i.d. steps from the law tilted by ``exp(lam xi - A(lam))``."""
    if steps == 0:
        return np.zeros((rows, 0))
    if isinstance(model, Gaussian):
        return model.mean + lam * model.var + math.sqrt(model.var) * gen.standard_normal((rows, steps))
    if isinstance(model, Rademacher) and lam == 0.0:
        return _rademacher_bits(gen, rows, steps)
    if isinstance(model, (Rademacher, CenteredBernoulli)):
        lo, hi, p = (-1.0, 1.0, 0.5) if isinstance(model, Rademacher) else (-model.p, 1 - model.p, model.p)
        pt = float(expit(logit(p) + lam * (hi - lo)))
        return np.where(gen.random((rows, steps)) < pt, hi, lo)
    if isinstance(model, Poisson):
        cdf = _poisson_cdf_table(model.rate * math.exp(lam))
        u = gen.random((rows, steps))
        return np.searchsorted(cdf, u, side="right").astype(float) - model.offset
    if isinstance(model, TableEmpirical):
        z = lam * model.values + np.log(model.probs)
        alias = AliasTable(np.exp(z - z.max()))
        return model.values[alias.index(gen.random((rows, steps)))]
    raise TypeError(f"no sampler for {type(model).__name__}")


def _draw_sums(model: MgfModel, gen: np.random.Generator, rows: int, k: int,
               lam: float = 0.0) -> np.ndarray:
    """Exact draws of ``xi_1 + ... + xi_k`` under the tilted law."""
    if isinstance(model, Gaussian):
        return gen.normal(k * (model.mean + lam * model.var), math.sqrt(k * model.var), rows)
    if isinstance(model, (Rademacher, CenteredBernoulli)):
        lo, hi, p = (-1.0, 1.0, 0.5) if isinstance(model, Rademacher) else (-model.p, 1 - model.p, model.p)
        pt = float(expit(logit(p) + lam * (hi - lo)))
        return k * lo + (hi - lo) * gen.binomial(k, pt, rows).astype(float)
    if isinstance(model, Poisson):
        return gen.poisson(k * model.rate * math.exp(lam), rows).astype(float) - k * model.offset
    if isinstance(model, TableEmpirical):
        z = lam * model.values + np.log(model.probs)
        pt = np.exp(z - z.max())
        counts = gen.multinomial(k, pt / pt.sum(), rows)
        return counts @ model.values
    raise TypeError(f"no sampler for {type(model).__name__}")


# --------------------------------------------------------------------------
# block samplers

def _walk_values(steps: np.ndarray, scale: float) -> np.ndarray:
    s = np.zeros((steps.shape[0], steps.shape[1] + 1))
    np.cumsum(steps, axis=1, out=s[:, 1:])
    return s / scale


def _diffusion_values(spec: DiffusionSim, gen: np.random.Generator, rows: int) -> np.ndarray:
    steps = spec.steps
    dt = spec.horizon / steps
    z = gen.standard_normal((rows, steps))
    noise = math.sqrt(dt / spec.n)
    s_const = constant_value(spec.sigma)
    if is_zero(spec.a) and s_const is not None:
        x = np.empty((rows, steps + 1))
        x[:, 0] = spec.x0
        np.cumsum(z * (s_const * noise), axis=1, out=x[:, 1:])
        x[:, 1:] += spec.x0
        return x
    x = np.empty((rows, steps + 1))
    x[:, 0] = spec.x0
    for k in range(steps):
        xk = x[:, k]
        x[:, k + 1] = xk + np.asarray(spec.a(xk)) * dt + noise * np.asarray(spec.sigma(xk)) * z[:, k]
    return x


def _cev_values(spec: CevSim, gen: np.random.Generator, rows: int) -> np.ndarray:
    steps = spec.steps
    dt = spec.horizon / steps
    z = gen.standard_normal((rows, steps))
    noise = spec.sigma * spec.n ** (spec.gamma - 1.0) * math.sqrt(dt)
    x = np.empty((rows, steps + 1))
    x[:, 0] = 1.0
    alive = np.ones(rows, dtype=bool)
    for k in range(steps):
        xk = x[:, k]
        nxt = xk + spec.mu * xk * dt + noise * np.power(xk, spec.gamma) * z[:, k]
        alive &= nxt > 0.0
        x[:, k + 1] = np.where(alive, nxt, 0.0)
    return x


def sample_block(spec: SimSpec, block: int, rows: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Times and the ``(rows, steps+1)`` value matrix of one block."""
    steps = spec.steps
    rows = rows_per_block(steps) if rows is None else int(rows)
    gen = stream(spec.seed, block)
    if isinstance(spec, RandomWalkSim):
        vals = _walk_values(_draw_steps(spec.model, gen, rows, steps), spec.scale)
    elif isinstance(spec, DiffusionSim):
        vals = _diffusion_values(spec, gen, rows)
    else:
        vals = _cev_values(spec, gen, rows)
    return grid_times(spec), vals


def _mixture_logw(s: np.ndarray, model: MgfModel, lams: tuple[float, ...], k: int) -> np.ndarray:
    """``ln dP/dQ`` for ``Q`` the equal mixture of the tilts in ``lams``, given ``S_k = s``."""
    if len(lams) == 1 and lams[0] == 0.0:
        return np.zeros_like(s)
    terms = np.stack([lam * s - k * log_mgf(model, lam) for lam in lams])
    return math.log(len(lams)) - logsumexp(terms, axis=0)


def _component_rows(gen: np.random.Generator, rows: int, m: int) -> np.ndarray:
    return np.zeros(rows, dtype=np.int64) if m == 1 else gen.integers(0, m, rows)


def sample_block_tilted(spec: RandomWalkSim, block: int, rows: int, lams: tuple[float, ...],
                        k_tilt: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Walk block whose first ``k_tilt`` steps come from an equal mixture of tilts.

    Each row picks one tilt ``lam`` from ``lams`` and draws its first
    ``k_tilt`` steps from ``exp(lam xi - A(lam)) P(d xi)``.  Returns times,
    values and the log likelihood ratio of each row.
    """
    steps = spec.steps
    k_tilt = min(int(k_tilt), steps)
    gen = stream(spec.seed, block)
    comp = _component_rows(gen, rows, len(lams))
    head = np.empty((rows, k_tilt))
    for j, lam in enumerate(lams):
        idx = np.flatnonzero(comp == j)
        head[idx] = _draw_steps(spec.model, gen, idx.size, k_tilt, lam)
    tail = _draw_steps(spec.model, gen, rows, steps - k_tilt)
    logw = _mixture_logw(head.sum(axis=1), spec.model, lams, k_tilt)
    return grid_times(spec), _walk_values(np.concatenate([head, tail], axis=1), spec.scale), logw


def sample_endpoint_sums(spec: RandomWalkSim, block: int, rows: int, k: int,
                         lams: tuple[float, ...] = (0.0,)) -> tuple[np.ndarray, np.ndarray]:
    """``S_k / x`` drawn directly from its (mixture-tilted) law, and the log likelihood ratios.

    Equal in law to column ``k`` of :func:`sample_block_tilted` with ``k_tilt = k``.
    """
    gen = stream(spec.seed, block)
    comp = _component_rows(gen, rows, len(lams))
    s = np.empty(rows)
    for j, lam in enumerate(lams):
        idx = np.flatnonzero(comp == j)
        s[idx] = _draw_sums(spec.model, gen, idx.size, int(k), lam)
    return s / spec.scale, _mixture_logw(s, spec.model, lams, int(k))


# --------------------------------------------------------------------------
# single paths

def simulate(spec: SimSpec, replicate: int = 0) -> Path:
    """Replicate ``replicate`` of ``spec`` as a polygon with a Constant tail."""
    b = rows_per_block(spec.steps)
    block, row = divmod(int(replicate), b)
    times, vals = sample_block(spec, block, row + 1)
    return Path(times, vals[row], Constant())


def simulate_rw(spec: RandomWalkSim, replicate: int = 0) -> Path:
    if not isinstance(spec, RandomWalkSim):
        raise TypeError("expected a RandomWalkSim")
    return simulate(spec, replicate)


def simulate_diffusion(spec: DiffusionSim, replicate: int = 0) -> Path:
    if not isinstance(spec, DiffusionSim):
        raise TypeError("expected a DiffusionSim")
    return simulate(spec, replicate)


def simulate_cev(spec: CevSim, replicate: int = 0) -> Path:
    if not isinstance(spec, CevSim):
        raise TypeError("expected a CevSim")
    return simulate(spec, replicate)


def simulate_paths(spec: SimSpec, replicates: int) -> Iterator[Path]:
    for block, rows in block_layout(spec, replicates):
        times, vals = sample_block(spec, block, rows)
        for r in range(rows):
            yield Path(times, vals[r], Constant())


def write_jsonl(paths: Iterable[Path], fh: IO[str]) -> int:
    count = 0
    for p in paths:
        fh.write(json.dumps(p.to_dict(), separators=(",", ":")) + "\n")
        count += 1
    return count


def with_n(spec: SimSpec, n: int, **changes) -> SimSpec:
    return replace(spec, n=int(n), **changes)
