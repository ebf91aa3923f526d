"""Named drift/diffusion coefficient functions with a JSON form."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

__all__ = ["ConstantCoef", "LinearCoef", "LogisticCoef", "ClippedPolynomial",
           "Coefficient", "coef_from_dict", "is_zero"]


@dataclass(frozen=True)
class ConstantCoef:
    value: float

    def __call__(self, x):
        return np.full_like(np.asarray(x, dtype=float), self.value) if np.ndim(x) else float(self.value)

    def to_dict(self) -> dict:
        return {"kind": "constant", "value": self.value}


@dataclass(frozen=True)
class LinearCoef:
    """``intercept + slope * x``."""
    intercept: float
    slope: float

    def __call__(self, x):
        return self.intercept + self.slope * np.asarray(x, dtype=float) if np.ndim(x) \
            else float(self.intercept + self.slope * x)

    def to_dict(self) -> dict:
        return {"kind": "linear", "intercept": self.intercept, "slope": self.slope}


@dataclass(frozen=True)
class LogisticCoef:
    """``low + (high - low) / (1 + exp(-rate * (x - center)))``."""
    low: float
    high: float
    rate: float = 1.0
    center: float = 0.0

    def __call__(self, x):
        z = np.asarray(x, dtype=float)
        out = self.low + (self.high - self.low) / (1.0 + np.exp(-self.rate * (z - self.center)))
        return out if np.ndim(x) else float(out)

    def to_dict(self) -> dict:
        return {"kind": "logistic", "low": self.low, "high": self.high,
                "rate": self.rate, "center": self.center}


@dataclass(frozen=True)
class ClippedPolynomial:
    """``clip(sum_k coeffs[k] x^k, low, high)``."""
    coeffs: tuple[float, ...]
    low: float = -np.inf
    high: float = np.inf

    def __post_init__(self):
        object.__setattr__(self, "coeffs", tuple(float(c) for c in self.coeffs))

    def __call__(self, x):
        z = np.asarray(x, dtype=float)
        out = np.clip(np.polynomial.polynomial.polyval(z, self.coeffs), self.low, self.high)
        return out if np.ndim(x) else float(out)

    def to_dict(self) -> dict:
        return {"kind": "clipped_polynomial", "coeffs": list(self.coeffs),
                "low": self.low, "high": self.high}


Coefficient = Union[ConstantCoef, LinearCoef, LogisticCoef, ClippedPolynomial]

_FIELDS = {
    "constant": ({"value"}, set()),
    "linear": ({"intercept", "slope"}, set()),
    "logistic": ({"low", "high"}, {"rate", "center"}),
    "clipped_polynomial": ({"coeffs"}, {"low", "high"}),
}


def coef_from_dict(d) -> Coefficient:
    if isinstance(d, (int, float)):
        return ConstantCoef(float(d))
    kind = d.get("kind")
    if kind not in _FIELDS:
        raise ValueError(f"unknown coefficient kind {kind!r}")
    required, optional = _FIELDS[kind]
    unknown = set(d) - required - optional - {"kind"}
    if unknown:
        raise ValueError(f"unknown coefficient fields: {sorted(unknown)}")
    missing = required - set(d)
    if missing:
        raise ValueError(f"missing coefficient fields: {sorted(missing)}")
    if kind == "constant":
        return ConstantCoef(float(d["value"]))
    if kind == "linear":
        return LinearCoef(float(d["intercept"]), float(d["slope"]))
    if kind == "logistic":
        return LogisticCoef(float(d["low"]), float(d["high"]), float(d.get("rate", 1.0)),
                            float(d.get("center", 0.0)))
    coeffs: Sequence[float] = d["coeffs"]
    return ClippedPolynomial(tuple(coeffs), float(d.get("low", -np.inf)), float(d.get("high", np.inf)))


def is_zero(c) -> bool:
    """True for coefficients that are identically zero by construction."""
    if isinstance(c, ConstantCoef):
        return c.value == 0.0
    if isinstance(c, LinearCoef):
        return c.intercept == 0.0 and c.slope == 0.0
    if isinstance(c, ClippedPolynomial):
        return all(v == 0.0 for v in c.coeffs) or c.low == c.high == 0.0
    return False


def constant_value(c) -> float | None:
    if isinstance(c, ConstantCoef):
        return c.value
    if isinstance(c, LinearCoef) and c.slope == 0.0:
        return c.intercept
    return None
