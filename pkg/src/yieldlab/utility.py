"""Concave increasing utilities and the monotone root solver built on them."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .exceptions import BracketError, DistributionError

FAMILIES = ("cara", "crra", "risk_neutral")


@dataclass(frozen=True)
class UtilitySpec:
    """Utility over terminal wealth.

    ``family`` is ``"cara"`` (``-exp(-a w)/a``), ``"crra"``
    (``((w + offset)^(1-eta) - 1)/(1-eta)``, log at ``eta = 1``) or
    ``"risk_neutral"``. ``offset`` is a background endowment added to wealth
    before evaluation; CRRA needs it whenever the position itself can be
    negative (borrowers).
    """

    family: str = "risk_neutral"
    param: float = 0.0
    offset: float = 0.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown utility family {self.family!r}; expected one of {FAMILIES}")
        if self.family != "risk_neutral" and not self.param > 0:
            raise ValueError(f"{self.family} utility needs a positive parameter, got {self.param}")

    @classmethod
    def cara(cls, a: float, offset: float = 0.0) -> "UtilitySpec":
        return cls("cara", a, offset)

    @classmethod
    def crra(cls, eta: float, offset: float = 0.0) -> "UtilitySpec":
        return cls("crra", eta, offset)

    @classmethod
    def risk_neutral(cls) -> "UtilitySpec":
        return cls("risk_neutral")

    @property
    def is_risk_neutral(self) -> bool:
        return self.family == "risk_neutral"

    def __call__(self, w):
        w = np.asarray(w, dtype=float) + self.offset
        if self.family == "risk_neutral":
            return w
        if self.family == "cara":
            return -np.exp(-self.param * w) / self.param
        if np.any(w <= 0):
            raise DistributionError(
                f"CRRA utility undefined for nonpositive wealth (min {float(np.min(w)):.6g}); raise the offset"
            )
        if self.param == 1.0:
            return np.log(w)
        return (w ** (1.0 - self.param) - 1.0) / (1.0 - self.param)

    def inverse(self, u):
        u = np.asarray(u, dtype=float)
        if self.family == "risk_neutral":
            w = u
        elif self.family == "cara":
            w = -np.log(-self.param * u) / self.param
        elif self.param == 1.0:
            w = np.exp(u)
        else:
            w = (1.0 + (1.0 - self.param) * u) ** (1.0 / (1.0 - self.param))
        return w - self.offset

    def expected(self, values: np.ndarray, weights: np.ndarray) -> float:
        return float(np.dot(weights, self(values)))

    def certainty_equivalent(self, values: np.ndarray, weights: np.ndarray) -> float:
        return float(self.inverse(self.expected(values, weights)))

    def to_dict(self) -> dict:
        return {"family": self.family, "param": self.param, "offset": self.offset}

    @classmethod
    def from_dict(cls, d: dict) -> "UtilitySpec":
        return cls(d.get("family", "risk_neutral"), float(d.get("param", 0.0)), float(d.get("offset", 0.0)))


def bisect_root(
    f: Callable[[float], float],
    lo: float,
    hi: float,
    *,
    xtol: float = 1e-13,
    max_expand: int = 80,
    max_iter: int = 400,
) -> float:
    """Root of a monotone ``f`` on ``[lo, hi]`` by bisection.

    If ``f(lo)`` and ``f(hi)`` share a sign, ``hi`` is pushed away from ``lo``
    by doubling the bracket width until the sign changes.
    """
    flo = f(lo)
    if flo == 0:
        return lo
    fhi = f(hi)
    width = hi - lo
    expansions = 0
    while np.sign(fhi) == np.sign(flo):
        if expansions >= max_expand:
            raise BracketError(f"no sign change on [{lo}, {hi}] after {max_expand} expansions")
        width *= 2.0
        hi = lo + width
        fhi = f(hi)
        expansions += 1
    if fhi == 0:
        return hi
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi) or abs(hi - lo) <= xtol:
            break
        fmid = f(mid)
        if fmid == 0:
            return mid
        if np.sign(fmid) == np.sign(flo):
            lo, flo = mid, fmid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def solve_increasing(
    f: Callable[[float], float],
    lo: float,
    hi: float,
    *,
    xtol: float = 1e-13,
    max_expand: int = 80,
) -> float:
    """Root of a nondecreasing ``f``; the bracket is widened on whichever side lacks the sign change."""
    width = max(hi - lo, 1e-12)
    flo, fhi = f(lo), f(hi)
    n = 0
    while flo > 0:
        if n >= max_expand:
            raise BracketError(f"f stays positive down to {lo}")
        lo -= width
        width *= 2.0
        flo = f(lo)
        n += 1
    while fhi < 0:
        if n >= max_expand:
            raise BracketError(f"f stays negative up to {hi}")
        hi += width
        width *= 2.0
        fhi = f(hi)
        n += 1
    return bisect_root(f, lo, hi, xtol=xtol, max_expand=0)


def default_upper(mean: float, std: float) -> float:
    """Initial upper bracket: expectation plus ten standard deviations."""
    return abs(mean) + 10.0 * std + 1e-12
