"""Yield payment distributions with quadrature access.

Every single-payment law exposes a quadrature rule ``nodes()`` returning
``(values, weights)`` so that expectations of smooth functions are computed
without sampling noise: 64-node Gauss-Hermite for Gaussians, exact support for
discrete laws. Sums of independent payments stay closed (Gaussian + Gaussian is
Gaussian, anything else is convolved on its nodes).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from typing import Callable, Sequence

import numpy as np
from scipy import stats

from .exceptions import DistributionError

GAUSS_HERMITE_NODES = 64
MAX_CONVOLUTION_NODES = 200_000


@dataclass(frozen=True)
class Payment:
    """Base class for the law of one yield payment."""

    @property
    def mean(self) -> float:
        raise NotImplementedError

    @property
    def std(self) -> float:
        raise NotImplementedError

    def nodes(self) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        raise NotImplementedError

    def expect(self, f: Callable[[np.ndarray], np.ndarray]) -> float:
        values, weights = self.nodes()
        out = np.asarray(f(values), dtype=float)
        if not np.all(np.isfinite(out)):
            raise DistributionError(f"integrand not finite on the support of {self!r}")
        return float(np.dot(weights, out))

    @property
    def is_degenerate(self) -> bool:
        return self.std == 0.0


@dataclass(frozen=True)
class Degenerate(Payment):
    value: float

    @property
    def mean(self) -> float:
        return float(self.value)

    @property
    def std(self) -> float:
        return 0.0

    def nodes(self):
        return np.array([float(self.value)]), np.array([1.0])

    def sample(self, rng, size):
        return np.full(size, float(self.value))


@dataclass(frozen=True)
class Gaussian(Payment):
    loc: float
    scale: float

    def __post_init__(self):
        if not (self.scale >= 0 and math.isfinite(self.scale) and math.isfinite(self.loc)):
            raise DistributionError(f"invalid Gaussian parameters loc={self.loc}, scale={self.scale}")

    @property
    def mean(self) -> float:
        return float(self.loc)

    @property
    def std(self) -> float:
        return float(self.scale)

    def nodes(self):
        if self.scale == 0:
            return np.array([float(self.loc)]), np.array([1.0])
        x, w = _hermite_rule()
        return self.loc + math.sqrt(2.0) * self.scale * x, w

    def sample(self, rng, size):
        return rng.normal(self.loc, self.scale, size)


@dataclass(frozen=True)
class TruncatedGaussian(Payment):
    """Gaussian conditioned on ``value > lower`` (positive staking rewards)."""

    loc: float
    scale: float
    lower: float = 0.0

    def __post_init__(self):
        if not self.scale > 0:
            raise DistributionError("truncated Gaussian needs a positive scale")

    @cached_property
    def _frozen(self):
        a = (self.lower - self.loc) / self.scale
        return stats.truncnorm(a, np.inf, loc=self.loc, scale=self.scale)

    @property
    def mean(self) -> float:
        return float(self._frozen.mean())

    @property
    def std(self) -> float:
        return float(self._frozen.std())

    def nodes(self):
        hi = max(self.loc, self.lower) + 14.0 * self.scale
        x, w = np.polynomial.legendre.leggauss(128)
        half = 0.5 * (hi - self.lower)
        values = self.lower + half * (x + 1.0)
        weights = half * w * self._frozen.pdf(values)
        return values, weights / weights.sum()

    def sample(self, rng, size):
        return self._frozen.rvs(size=size, random_state=rng)


@dataclass(frozen=True)
class Discrete(Payment):
    values: tuple[float, ...]
    probs: tuple[float, ...]

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        p = np.asarray(self.probs, dtype=float)
        if v.shape != p.shape or v.ndim != 1 or v.size == 0:
            raise DistributionError("values and probs must be nonempty 1-d sequences of equal length")
        if np.any(p < 0) or not math.isclose(p.sum(), 1.0, rel_tol=0, abs_tol=1e-12):
            raise DistributionError("probabilities must be nonnegative and sum to 1")
        if not np.all(np.isfinite(v)):
            raise DistributionError("discrete support must be finite")
        object.__setattr__(self, "values", tuple(float(x) for x in v))
        object.__setattr__(self, "probs", tuple(float(x) for x in p))

    @property
    def mean(self) -> float:
        return math.fsum(v * p for v, p in zip(self.values, self.probs))

    @property
    def std(self) -> float:
        m = self.mean
        var = math.fsum(p * (v - m) ** 2 for v, p in zip(self.values, self.probs))
        return math.sqrt(max(var, 0.0))

    @property
    def is_degenerate(self) -> bool:
        support = [v for v, p in zip(self.values, self.probs) if p > 0]
        return len(set(support)) == 1

    def nodes(self):
        return np.asarray(self.values), np.asarray(self.probs)

    def sample(self, rng, size):
        return rng.choice(np.asarray(self.values), size=size, p=np.asarray(self.probs))


@lru_cache(maxsize=8)
def _hermite_rule(n: int = GAUSS_HERMITE_NODES) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.hermite.hermgauss(n)
    x.setflags(write=False)
    w = w / math.sqrt(math.pi)
    w.setflags(write=False)
    return x, w


def as_payment(obj) -> Payment:
    if isinstance(obj, Payment):
        return obj
    if isinstance(obj, YieldDistribution):
        return obj.total()
    if isinstance(obj, (int, float, np.floating)):
        return Degenerate(float(obj))
    raise DistributionError(f"cannot interpret {obj!r} as a payment distribution")


def add_independent(a: Payment, b: Payment) -> Payment:
    """Law of ``a + b`` for independent payments."""
    if isinstance(a, Degenerate) and isinstance(b, Degenerate):
        return Degenerate(a.value + b.value)
    if isinstance(a, Gaussian) and isinstance(b, Gaussian):
        return Gaussian(a.loc + b.loc, math.hypot(a.scale, b.scale))
    if isinstance(a, Gaussian) and isinstance(b, Degenerate):
        return Gaussian(a.loc + b.value, a.scale)
    if isinstance(b, Gaussian) and isinstance(a, Degenerate):
        return Gaussian(b.loc + a.value, b.scale)
    va, wa = a.nodes()
    vb, wb = b.nodes()
    if va.size * vb.size > MAX_CONVOLUTION_NODES:
        raise DistributionError("convolution support too large for exact quadrature")
    values = (va[:, None] + vb[None, :]).ravel()
    weights = (wa[:, None] * wb[None, :]).ravel()
    keep = weights > 0
    uniq, inverse = np.unique(values[keep], return_inverse=True)
    merged = np.zeros(uniq.size)
    np.add.at(merged, inverse, weights[keep])
    return Discrete(tuple(uniq), tuple(merged / merged.sum()))


@dataclass(frozen=True)
class YieldDistribution:
    """Outstanding yield payments ``Y_1..Y_n``, independent unless a joint sampler is given.

    ``joint_sampler(rng, size)`` must return an array of shape ``(size, n)``;
    it is only used by sampling-based estimators, quadrature always assumes
    independence.
    """

    payments: tuple[Payment, ...]
    joint_sampler: Callable[[np.random.Generator, int], np.ndarray] | None = field(
        default=None, compare=False
    )

    def __post_init__(self):
        pays = tuple(as_payment(p) for p in self.payments)
        if not pays:
            raise DistributionError("at least one payment is required")
        object.__setattr__(self, "payments", pays)

    @classmethod
    def iid(cls, payment: Payment, n: int) -> "YieldDistribution":
        return cls(tuple([payment] * n))

    @property
    def n(self) -> int:
        return len(self.payments)

    @property
    def means(self) -> np.ndarray:
        return np.array([p.mean for p in self.payments])

    @property
    def mean(self) -> float:
        return math.fsum(p.mean for p in self.payments)

    def partial_sum(self, lo: int, hi: int) -> Payment:
        """Law of ``Y_lo + ... + Y_hi`` (1-based, inclusive). Empty range is 0."""
        if lo > hi:
            return Degenerate(0.0)
        if lo < 1 or hi > self.n:
            raise IndexError(f"payment range [{lo}, {hi}] outside 1..{self.n}")
        acc = self.payments[lo - 1]
        for p in self.payments[lo:hi]:
            acc = add_independent(acc, p)
        return acc

    def tail(self, j: int) -> Payment:
        return self.partial_sum(j, self.n)

    def total(self) -> Payment:
        return self.partial_sum(1, self.n)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        if self.joint_sampler is not None:
            out = np.asarray(self.joint_sampler(rng, size), dtype=float)
            if out.shape != (size, self.n):
                raise DistributionError(f"joint sampler returned shape {out.shape}, expected {(size, self.n)}")
            return out
        return np.column_stack([p.sample(rng, size) for p in self.payments])


def expect_pair(
    a: Payment, b: Payment, f: Callable[[np.ndarray, np.ndarray], np.ndarray]
) -> float:
    """``E[f(A, B)]`` for independent ``A`` and ``B`` by tensor quadrature."""
    va, wa = a.nodes()
    vb, wb = b.nodes()
    vals = np.asarray(f(va[:, None], vb[None, :]), dtype=float)
    if not np.all(np.isfinite(vals)):
        raise DistributionError("integrand not finite on the joint support")
    return float(wa @ vals @ wb)


def payment_from_config(spec: dict) -> Payment:
    kind = spec.get("kind")
    if kind == "gaussian":
        return Gaussian(float(spec["mean"]), float(spec["std"]))
    if kind == "truncated_gaussian":
        return TruncatedGaussian(float(spec["loc"]), float(spec["scale"]), float(spec.get("lower", 0.0)))
    if kind == "discrete":
        return Discrete(tuple(spec["values"]), tuple(spec["probs"]))
    if kind == "degenerate":
        return Degenerate(float(spec["value"]))
    raise DistributionError(f"unknown payment kind {kind!r}")


def distribution_from_config(specs: Sequence[dict]) -> YieldDistribution:
    return YieldDistribution(tuple(payment_from_config(s) for s in specs))
