"""Bonding, demand and liquidity curves; concentrated-liquidity approximation; order-book view.

Sign conventions: "asset" is the traded token (``x``), "numeraire" is cash
(``y``). A liquidity curve ``L(p) = -x'(p)`` is the token quantity offered per
unit price move. In a book, liquidity above the reference price is ask depth
(the LP sells tokens as the price rises), liquidity below it is bid depth.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy import integrate, optimize

from .exceptions import AlignmentError, DepthError, DomainError, IncentiveCompatibilityError

P_MIN = 1e-6
KINDS = ("constant", "power", "linear", "callable")


@dataclass(frozen=True)
class Piece:
    """``L`` on ``[lo, hi)``: constant ``c``, power ``k p^{-3/2}``, linear ``a + b p`` or a callable."""

    lo: float
    hi: float
    kind: str
    params: tuple = ()
    fn: Callable | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown piece kind {self.kind!r}")
        if not self.hi > self.lo:
            raise ValueError(f"empty piece [{self.lo}, {self.hi})")

    def level(self, p):
        p = np.asarray(p, dtype=float)
        inside = (p >= self.lo) & (p < self.hi)
        if self.kind == "constant":
            v = np.full_like(p, self.params[0])
        elif self.kind == "power":
            with np.errstate(divide="ignore", invalid="ignore"):
                v = self.params[0] * np.where(p > 0, p, 1.0) ** -1.5
        elif self.kind == "linear":
            v = self.params[0] + self.params[1] * p
        else:
            v = np.vectorize(self.fn, otypes=[float])(p) if p.ndim else np.asarray(float(self.fn(float(p))))
        return np.where(inside, v, 0.0)

    def _clip(self, a, b):
        return max(a, self.lo), min(b, self.hi)

    def mass(self, a: float, b: float) -> float:
        a, b = self._clip(a, b)
        if b <= a:
            return 0.0
        if self.kind == "constant":
            return self.params[0] * (b - a)
        if self.kind == "power":
            return 2.0 * self.params[0] * (a ** -0.5 - b ** -0.5)
        if self.kind == "linear":
            c0, c1 = self.params
            return c0 * (b - a) + 0.5 * c1 * (b * b - a * a)
        return integrate.quad(self.fn, a, b, epsabs=1e-14, epsrel=1e-13, limit=200)[0]

    def value(self, a: float, b: float) -> float:
        """``int p L(p) dp`` over ``[a, b]`` (numeraire)."""
        a, b = self._clip(a, b)
        if b <= a:
            return 0.0
        if self.kind == "constant":
            return 0.5 * self.params[0] * (b * b - a * a)
        if self.kind == "power":
            return 2.0 * self.params[0] * (math.sqrt(b) - math.sqrt(a))
        if self.kind == "linear":
            c0, c1 = self.params
            return 0.5 * c0 * (b * b - a * a) + c1 * (b ** 3 - a ** 3) / 3.0
        return integrate.quad(lambda p: p * self.fn(p), a, b, epsabs=1e-14, epsrel=1e-13, limit=200)[0]

    def scaled_level(self, p: float) -> float:
        """``2 L(p) p^{3/2}``, exact for power pieces."""
        if not (self.lo <= p < self.hi):
            return 0.0
        if self.kind == "power":
            return 2.0 * self.params[0]
        return 2.0 * float(self.level(p)) * p ** 1.5

    def minimum(self) -> float:
        if self.kind == "constant":
            return self.params[0]
        if self.kind == "power":
            return self.params[0] * self.hi ** -1.5
        if self.kind == "linear":
            c0, c1 = self.params
            return min(c0 + c1 * self.lo, c0 + c1 * self.hi)
        xs = np.linspace(self.lo, self.hi, 257)[:-1]
        return float(np.min(self.level(xs)))

    def cut(self, a: float, b: float) -> list["Piece"]:
        """This piece with ``(a, b)`` removed."""
        out = []
        if self.lo < a:
            out.append(replace(self, hi=min(self.hi, a)))
        if self.hi > b:
            out.append(replace(self, lo=max(self.lo, b)))
        return [p for p in out if p.hi > p.lo]


@dataclass(frozen=True)
class LiquidityCurve:
    pieces: tuple[Piece, ...] = ()
    atoms: tuple[tuple[float, float], ...] = ()  # (price, token mass)

    def __post_init__(self):
        pieces = tuple(p for p in self.pieces if not (p.kind in ("constant", "power") and p.params[0] == 0))
        for p in pieces:
            if p.minimum() < -1e-15:
                raise IncentiveCompatibilityError(f"negative liquidity on [{p.lo}, {p.hi})")
        merged: dict[float, float] = {}
        for price, m in self.atoms:
            if m < 0:
                raise IncentiveCompatibilityError(f"negative point mass at {price}")
            if m > 0:
                merged[float(price)] = merged.get(float(price), 0.0) + float(m)
        object.__setattr__(self, "pieces", pieces)
        object.__setattr__(self, "atoms", tuple(sorted(merged.items())))

    @classmethod
    def constant(cls, level: float, lo: float, hi: float) -> "LiquidityCurve":
        return cls((Piece(lo, hi, "constant", (float(level),)),))

    @classmethod
    def power(cls, k: float, lo: float, hi: float) -> "LiquidityCurve":
        return cls((Piece(lo, hi, "power", (float(k),)),))

    @classmethod
    def linear(cls, a: float, b: float, lo: float, hi: float) -> "LiquidityCurve":
        return cls((Piece(lo, hi, "linear", (float(a), float(b))),))

    @classmethod
    def function(cls, fn: Callable[[float], float], lo: float, hi: float) -> "LiquidityCurve":
        return cls((Piece(lo, hi, "callable", (), fn),))

    @classmethod
    def tabulated(cls, prices: Sequence[float], levels: Sequence[float]) -> "LiquidityCurve":
        """Piecewise-linear interpolation of ``levels`` between ascending ``prices``."""
        p = np.asarray(prices, dtype=float)
        v = np.asarray(levels, dtype=float)
        pieces = []
        for i in range(p.size - 1):
            b = (v[i + 1] - v[i]) / (p[i + 1] - p[i])
            pieces.append(Piece(p[i], p[i + 1], "linear", (float(v[i] - b * p[i]), float(b))))
        return cls(tuple(pieces))

    @property
    def is_empty(self) -> bool:
        return not self.pieces and not self.atoms

    def __call__(self, p):
        p = np.asarray(p, dtype=float)
        out = np.zeros_like(p)
        for pc in self.pieces:
            out = out + pc.level(p)
        return float(out) if out.ndim == 0 else out

    def __add__(self, other: "LiquidityCurve") -> "LiquidityCurve":
        return LiquidityCurve(self.pieces + other.pieces, self.atoms + other.atoms)

    def support(self) -> tuple[float, float] | None:
        los = [p.lo for p in self.pieces] + [a for a, _ in self.atoms]
        his = [p.hi for p in self.pieces] + [a for a, _ in self.atoms]
        if not los:
            return None
        return min(los), max(his)

    def breakpoints(self) -> list[float]:
        pts = {p.lo for p in self.pieces} | {p.hi for p in self.pieces} | {a for a, _ in self.atoms}
        return sorted(pts)

    def continuous_mass(self, a: float, b: float) -> float:
        return math.fsum(p.mass(a, b) for p in self.pieces)

    def continuous_value(self, a: float, b: float) -> float:
        return math.fsum(p.value(a, b) for p in self.pieces)

    def atom_mass(self, a: float, b: float) -> float:
        return math.fsum(m for price, m in self.atoms if a <= price <= b)

    def mass(self, a: float, b: float) -> float:
        """Token quantity offered on ``[a, b]``, point masses included."""
        return math.fsum([self.continuous_mass(a, b), self.atom_mass(a, b)])

    def value(self, a: float, b: float) -> float:
        return math.fsum([self.continuous_value(a, b)] + [price * m for price, m in self.atoms if a <= price <= b])

    def mass_at(self, price: float) -> float:
        return math.fsum(m for p, m in self.atoms if p == price)

    def scaled(self, factor: float) -> "LiquidityCurve":
        out = []
        for p in self.pieces:
            if p.kind == "callable":
                fn = p.fn
                out.append(replace(p, fn=lambda x, fn=fn: factor * fn(x)))
            else:
                out.append(replace(p, params=tuple(factor * c for c in p.params)))
        return LiquidityCurve(tuple(out), tuple((a, factor * m) for a, m in self.atoms))

    def cut(self, a: float, b: float, atom_fractions: dict[float, float]) -> "LiquidityCurve":
        """Remove continuous liquidity on ``(a, b)`` and scale atoms by the surviving fraction."""
        pieces = [q for p in self.pieces for q in p.cut(a, b)]
        atoms = [(price, m * atom_fractions.get(price, 1.0)) for price, m in self.atoms]
        return LiquidityCurve(tuple(pieces), tuple(atoms))


# ---------------------------------------------------------------------------
# demand curves


@dataclass(frozen=True)
class DemandCurve:
    """Token holding ``x(p)``, nonincreasing in price.

    Either tabulated (linear between ascending price nodes, with repeated
    prices becoming point masses) or a function on ``[lo, hi]``.
    """

    lo: float
    hi: float
    prices: np.ndarray | None = None
    quantities: np.ndarray | None = None
    fn: Callable | None = field(default=None, compare=False)
    atoms: tuple[tuple[float, float], ...] = ()
    liquidity: LiquidityCurve | None = field(default=None, compare=False)
    left: np.ndarray | None = None  # tabulated level just below each node (differs at atoms)

    @property
    def degenerate(self) -> bool:
        """True when a flat bonding segment put all of some quantity at a single price."""
        return bool(self.atoms)

    @classmethod
    def tabulated(cls, prices, quantities, tol: float = 1e-12) -> "DemandCurve":
        p = np.asarray(prices, dtype=float)
        x = np.asarray(quantities, dtype=float)
        if p.shape != x.shape or p.ndim != 1 or p.size < 2:
            raise ValueError("need matching 1-d price and quantity arrays of length >= 2")
        order = np.argsort(p, kind="stable")
        p, x = p[order], x[order]
        # prices equal up to rounding form one flat segment
        for i in range(1, p.size):
            if p[i] - p[i - 1] <= tol * max(1.0, abs(p[i])):
                p[i] = p[i - 1]
        order = np.lexsort((-x, p))
        p, x = p[order], x[order]
        scale = max(1.0, float(np.max(np.abs(x))))
        if np.any(np.diff(x) > tol * scale):
            i = int(np.argmax(np.diff(x)))
            raise IncentiveCompatibilityError(f"demand increases between prices {p[i]:.6g} and {p[i + 1]:.6g}")
        x = np.minimum.accumulate(x)
        atoms, keep_p, left, right = [], [p[0]], [x[0]], [x[0]]
        for i in range(1, p.size):
            if p[i] - keep_p[-1] <= tol * max(1.0, abs(p[i])):
                right[-1] = x[i]
            else:
                keep_p.append(p[i])
                left.append(x[i])
                right.append(x[i])
        for price, a, b in zip(keep_p, left, right):
            if a - b > tol * scale:
                atoms.append((float(price), float(a - b)))
        return cls(
            float(p[0]), float(p[-1]), np.asarray(keep_p), np.asarray(right), atoms=tuple(atoms), left=np.asarray(left)
        )

    @classmethod
    def functional(cls, fn, lo: float, hi: float, liquidity: LiquidityCurve | None = None, check: bool = True):
        if check:
            grid = np.linspace(lo, hi, 257)
            vals = np.array([fn(g) for g in grid])
            if np.any(np.diff(vals) > 1e-12 * max(1.0, float(np.max(np.abs(vals))))):
                raise IncentiveCompatibilityError("demand function is not nonincreasing")
        return cls(float(lo), float(hi), fn=fn, liquidity=liquidity)

    @classmethod
    def constant_product(cls, k: float, lo: float, hi: float) -> "DemandCurve":
        """``x(p) = sqrt(k / p)``, the demand of reserves with ``x y = k``."""
        return cls.functional(
            lambda p: math.sqrt(k / p), lo, hi, liquidity=LiquidityCurve.power(0.5 * math.sqrt(k), lo, hi)
        )

    def __call__(self, p):
        if self.fn is not None:
            out = np.vectorize(self.fn, otypes=[float])(p)
        else:
            out = self._tabulated_eval(np.asarray(p, dtype=float))
        return float(out) if np.ndim(out) == 0 else out

    def _tabulated_eval(self, p):
        # right-continuous: at an atom price the post-jump level applies
        ps, xr, xl = self.prices, self.quantities, self.left
        if ps.size == 1:
            return np.where(p < ps[0], xl[0], xr[0])
        i = np.clip(np.searchsorted(ps, p, side="right") - 1, 0, ps.size - 2)
        a, b = ps[i], ps[i + 1]
        w = np.clip((p - a) / (b - a), 0.0, 1.0)
        out = xr[i] + w * (xl[i + 1] - xr[i])
        out = np.where(p >= ps[-1], xr[-1], out)
        return np.where(p < ps[0], xl[0], out)

    def reserves(self, prices) -> tuple[np.ndarray, np.ndarray]:
        """``(x(p), y(p))`` with the numeraire ``y(p) = int_lo^p pi L(pi) d pi``."""
        lc = demand_to_liquidity(self)
        ps = np.atleast_1d(np.asarray(prices, dtype=float))
        ys = np.array([lc.value(self.lo, p) for p in ps])
        return np.atleast_1d(self(ps)), ys


def demand_to_liquidity(d: DemandCurve) -> LiquidityCurve:
    if d.liquidity is not None:
        return d.liquidity
    atoms = tuple(d.atoms)
    if d.fn is None:
        pieces = []
        for i in range(d.prices.size - 1):
            a, b = float(d.prices[i]), float(d.prices[i + 1])
            level = -(d.left[i + 1] - d.quantities[i]) / (b - a)
            if level > 0:
                pieces.append(Piece(a, b, "constant", (float(level),)))
        return LiquidityCurve(tuple(pieces), atoms)
    fn = d.fn

    def minus_derivative(p, h=1e-6):
        step = h * max(1.0, abs(p))
        a, b = max(d.lo, p - step), min(d.hi, p + step)
        return max(0.0, -(fn(b) - fn(a)) / (b - a))

    return LiquidityCurve((Piece(d.lo, d.hi, "callable", (), minus_derivative),), atoms)


def liquidity_to_demand(lc: LiquidityCurve, floor: float = 0.0) -> DemandCurve:
    """``x(p) = floor + (mass offered above p)``."""
    sup = lc.support()
    if sup is None:
        return DemandCurve.tabulated([P_MIN, 1.0], [floor, floor])
    lo, hi = sup
    return DemandCurve.functional(
        lambda p: floor + lc.continuous_mass(p, hi) + math.fsum(m for a, m in lc.atoms if a > p),
        lo,
        hi,
        liquidity=lc,
        check=False,
    )


@dataclass(frozen=True)
class ReserveCurve:
    """Points ``(x_i, y_i)`` along a bonding curve: token reserve and numeraire reserve."""

    x: np.ndarray
    y: np.ndarray


def marginal_prices(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """``-dy/dx`` along the reserve path (second-order differences)."""
    order = np.argsort(x)
    xs, ys = np.asarray(x, dtype=float)[order], np.asarray(y, dtype=float)[order]
    p = -np.gradient(ys, xs, edge_order=2)
    out = np.empty_like(p)
    out[order] = p
    return out


def bonding_to_demand(curve) -> DemandCurve:
    """Demand curve implied by a bonding curve.

    ``curve`` is an ``amm.BondingCurve`` (both branches, marginal prices from the
    tabulated average prices) or a ``ReserveCurve``.
    """
    if isinstance(curve, ReserveCurve):
        p = marginal_prices(curve.x, curve.y)
        x = np.asarray(curve.x, dtype=float)
        _check_path_monotone(x, p)
        return DemandCurve.tabulated(p, x)
    prices, holdings = [], []
    for sign, branch in ((+1, curve.p_sell), (-1, curve.p_buy)):
        if len(branch) == 0:
            continue
        d = np.concatenate([[0.0], curve.deltas[: len(branch)]])
        avg = np.concatenate([[branch[0]], branch])
        cost = d * avg
        marg = np.gradient(cost, d, edge_order=2 if d.size > 2 else 1)
        steps = np.diff(marg)
        if np.any(sign * steps > 1e-12):
            raise IncentiveCompatibilityError("marginal price not monotone along the bonding curve")
        prices.extend(marg.tolist())
        holdings.extend((curve.y0 + sign * d).tolist())
    return DemandCurve.tabulated(prices, holdings)


def _check_path_monotone(x, p):
    order = np.argsort(x)
    dp = np.diff(p[order])
    if np.any(dp > 1e-12 * max(1.0, float(np.max(np.abs(p))))):
        raise IncentiveCompatibilityError("marginal price rises with the token reserve")


# ---------------------------------------------------------------------------
# concentrated liquidity


@dataclass(frozen=True)
class ConcLiqPosition:
    level: float
    p_l: float
    p_u: float
    owner: str = ""

    def __post_init__(self):
        if not (0 < self.p_l < self.p_u):
            raise DomainError(f"range must satisfy 0 < p_l < p_u, got [{self.p_l}, {self.p_u}]")
        if not self.level > 0:
            raise ValueError("position level must be positive")

    def liquidity(self, p):
        p = np.asarray(p, dtype=float)
        out = np.where((p >= self.p_l) & (p < self.p_u), self.level / (2.0 * np.maximum(p, 1e-300) ** 1.5), 0.0)
        return float(out) if out.ndim == 0 else out

    def reserves(self, p: float) -> tuple[float, float]:
        """Virtual reserves ``(x, y)`` of the equal-weight position at price ``p`` inside the range."""
        p = min(max(p, self.p_l), self.p_u)
        return self.level * (p ** -0.5 - self.p_u ** -0.5), self.level * (p ** 0.5 - self.p_l ** 0.5)

    def as_curve(self) -> LiquidityCurve:
        return LiquidityCurve.power(0.5 * self.level, self.p_l, self.p_u)


@dataclass(frozen=True)
class Approximation:
    positions: tuple[ConcLiqPosition, ...]
    sup_error: float

    def curve(self) -> LiquidityCurve:
        return positions_to_liquidity(self.positions)


def positions_to_liquidity(positions: Iterable[ConcLiqPosition]) -> LiquidityCurve:
    return LiquidityCurve(tuple(pc for pos in positions for pc in pos.as_curve().pieces))


def approximate_concentrated(
    lc: LiquidityCurve, delta: float, owner: str = "", samples_per_bin: int = 65
) -> Approximation:
    """Bin ``lc`` with step ``delta`` from its lower support end; each bin gets level ``2 L(p_i) p_i^{3/2}``."""
    if not delta > 0:
        raise ValueError("price step must be positive")
    sup = lc.support()
    if sup is None:
        return Approximation((), 0.0)
    if lc.atoms:
        raise DomainError("point masses cannot be represented by concentrated positions")
    lo, hi = sup
    if lo <= 0:
        raise DomainError("liquidity support must lie on strictly positive prices")
    nbins = int(math.ceil((hi - lo) / delta - 1e-9))
    edges = np.minimum(lo + delta * np.arange(nbins + 1), hi)
    edges[-1] = hi
    positions: list[ConcLiqPosition] = []
    err = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        level = math.fsum(pc.scaled_level(a) for pc in lc.pieces)
        xs = np.linspace(a, b, samples_per_bin, endpoint=False)
        approx = level / (2.0 * xs ** 1.5)
        err = max(err, float(np.max(np.abs(np.asarray(lc(xs)) - approx))))
        if level <= 0:
            continue
        if positions and positions[-1].p_u == a and math.isclose(positions[-1].level, level, rel_tol=1e-12, abs_tol=0):
            positions[-1] = replace(positions[-1], p_u=float(b))
        else:
            positions.append(ConcLiqPosition(level, float(a), float(b), owner))
    return Approximation(tuple(positions), err)


# ---------------------------------------------------------------------------
# order book


@dataclass(frozen=True)
class Fill:
    side: str  # "buy": taker buys tokens walking asks up; "sell": taker sells into bids
    quantity: float
    cost: float  # numeraire paid (buy) or received (sell)
    start: float
    end: float
    atoms_taken: tuple[tuple[float, float], ...] = ()

    @property
    def average_price(self) -> float:
        return self.cost / self.quantity if self.quantity else float("nan")

    @property
    def lo(self) -> float:
        return min(self.start, self.end)

    @property
    def hi(self) -> float:
        return max(self.start, self.end)


@dataclass(frozen=True)
class OrderBookView:
    owners: tuple[str, ...]
    curves: tuple[LiquidityCurve, ...]
    reference: float

    @property
    def total(self) -> LiquidityCurve:
        acc = LiquidityCurve()
        for c in self.curves:
            acc = acc + c
        return acc

    @property
    def is_empty(self) -> bool:
        return all(c.is_empty for c in self.curves)

    def fingerprint(self) -> tuple:
        return (self.owners, self.reference, tuple((c.pieces, c.atoms) for c in self.curves))

    def _bounds(self) -> tuple[float, float]:
        sup = self.total.support()
        if sup is None:
            return self.reference, self.reference
        return min(sup[0], self.reference), max(sup[1], self.reference)

    def depth_at(self, p):
        return self.total(p)

    def depth(self, side: str) -> float:
        lo, hi = self._bounds()
        if side == "buy":
            return self.total.mass(self.reference, hi)
        if side == "sell":
            return self.total.mass(lo, self.reference)
        raise ValueError("side must be 'buy' or 'sell'")

    def cumulative(self, side: str, price: float) -> float:
        if side == "buy":
            return self.total.mass(self.reference, price) if price >= self.reference else 0.0
        return self.total.mass(price, self.reference) if price <= self.reference else 0.0

    def best_ask(self) -> float | None:
        return self._best("buy")

    def best_bid(self) -> float | None:
        return self._best("sell")

    def _best(self, side: str) -> float | None:
        total = self.total
        if side == "buy":
            cands = [p.lo if p.lo >= self.reference else self.reference for p in total.pieces if p.hi > self.reference]
            cands += [a for a, _ in total.atoms if a >= self.reference]
            return min(cands) if cands else None
        cands = [p.hi if p.hi <= self.reference else self.reference for p in total.pieces if p.lo < self.reference]
        cands += [a for a, _ in total.atoms if a <= self.reference]
        return max(cands) if cands else None

    def cost_to_trade(self, quantity: float, side: str) -> float:
        return self.walk(quantity, side).cost

    def walk(self, quantity: float, side: str) -> Fill:
        """Fill ``quantity`` tokens against one side without changing the book."""
        if side not in ("buy", "sell"):
            raise ValueError("side must be 'buy' or 'sell'")
        if not quantity > 0:
            raise ValueError("quantity must be positive")
        total = self.total
        ref = self.reference
        lo, hi = self._bounds()
        if side == "buy":
            pts = [ref] + [b for b in total.breakpoints() if b > ref]
        else:
            pts = [ref] + [b for b in reversed(total.breakpoints()) if b < ref]
        remaining = quantity
        taken: list[tuple[float, float]] = []
        cost_parts: list[float] = []
        for k, p in enumerate(pts):
            m = total.mass_at(p)
            if m > 0:
                use = min(m, remaining)
                taken.append((p, use))
                cost_parts.append(p * use)
                remaining -= use
                if remaining <= 0:
                    return Fill(side, quantity, math.fsum(cost_parts), ref, p, tuple(taken))
            if k + 1 == len(pts):
                break
            a, b = (p, pts[k + 1]) if side == "buy" else (pts[k + 1], p)
            seg = total.continuous_mass(a, b)
            if seg >= remaining:
                end = self._invert(total, a, b, remaining, side)
                if side == "buy":
                    cost_parts.append(total.continuous_value(a, end))
                else:
                    cost_parts.append(total.continuous_value(end, b))
                return Fill(side, quantity, math.fsum(cost_parts), ref, end, tuple(taken))
            cost_parts.append(total.continuous_value(a, b))
            remaining -= seg
        raise DepthError(f"requested {quantity:.12g} but only {quantity - remaining:.12g} available on the {side} side")

    @staticmethod
    def _invert(total: LiquidityCurve, a: float, b: float, target: float, side: str) -> float:
        if side == "buy":
            f = lambda x: total.continuous_mass(a, x) - target
        else:
            f = lambda x: total.continuous_mass(x, b) - target
        if f(a) == 0:
            return a if side == "buy" else a
        if f(b) == 0:
            return b
        return optimize.brentq(f, a, b, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)

    def owner_values(self, fill: Fill) -> dict[str, float]:
        """Numeraire value each owner supplied to ``fill``."""
        out = {}
        totals_at = {p: self.total.mass_at(p) for p, _ in fill.atoms_taken}
        for owner, c in zip(self.owners, self.curves):
            parts = [c.continuous_value(fill.lo, fill.hi)]
            for p, used in fill.atoms_taken:
                if totals_at[p] > 0:
                    parts.append(p * used * c.mass_at(p) / totals_at[p])
            out[owner] = out.get(owner, 0.0) + math.fsum(parts)
        return out

    def execute(self, quantity: float, side: str) -> tuple[Fill, "OrderBookView"]:
        """Fill and remove the consumed liquidity; the reference moves to the last fill price."""
        fill = self.walk(quantity, side)
        totals = {p: self.total.mass_at(p) for p, _ in fill.atoms_taken}
        fractions = {p: max(0.0, 1.0 - used / totals[p]) if totals[p] > 0 else 1.0 for p, used in fill.atoms_taken}
        curves = tuple(c.cut(fill.lo, fill.hi, fractions) for c in self.curves)
        return fill, OrderBookView(self.owners, curves, fill.end)

    def to_records(self, points_per_side: int = 17) -> list[dict]:
        lo, hi = self._bounds()
        total = self.total
        rows = []
        for side, a, b in (("bid", lo, self.reference), ("ask", self.reference, hi)):
            grid = set(np.linspace(a, b, points_per_side).tolist()) | {x for x in total.breakpoints() if a <= x <= b}
            ordered = sorted(grid, reverse=(side == "bid"))
            for p in ordered:
                cum = self.cumulative("sell" if side == "bid" else "buy", p)
                rows.append({"side": side, "price": p, "depth": float(total(p)), "cumulative": cum})
        return rows


def aggregate(
    curves: Sequence,
    owners: Sequence[str] | None = None,
    reference: float | None = None,
    domain: tuple[float, float] | None = None,
) -> OrderBookView:
    """Sum liquidity (or demand) curves into one book, keeping per-owner components."""
    if owners is None:
        owners = [f"lp{i}" for i in range(len(curves))]
    if len(owners) != len(curves):
        raise AlignmentError(f"{len(curves)} curves but {len(owners)} owners")
    lcs = tuple(demand_to_liquidity(c) if isinstance(c, DemandCurve) else c for c in curves)
    for owner, c in zip(owners, lcs):
        sup = c.support()
        if sup is None:
            continue
        if sup[0] < P_MIN:
            raise AlignmentError(f"curve of {owner} reaches below the minimum price {P_MIN}")
        if domain is not None and (sup[0] < domain[0] or sup[1] > domain[1]):
            raise AlignmentError(f"curve of {owner} on [{sup[0]}, {sup[1]}] leaves the book domain {domain}")
    if reference is None:
        sups = [c.support() for c in lcs if c.support() is not None]
        reference = min(s[0] for s in sups) if sups else (domain[0] if domain else P_MIN)
    return OrderBookView(tuple(owners), lcs, float(reference))


def pro_rata_fees(fill: Fill, book: OrderBookView, fee_rate: float) -> dict[str, float]:
    """Split ``fee_rate * fill.cost`` by each owner's share of the value traded, slice by slice."""
    if not 0 <= fee_rate < 1:
        raise ValueError("fee rate must lie in [0, 1)")
    if fill.quantity > book.depth(fill.side) * (1 + 1e-12):
        raise DepthError(f"fill of {fill.quantity:.12g} exceeds {fill.side} depth {book.depth(fill.side):.12g}")
    values = book.owner_values(fill)
    total_fee = fee_rate * fill.cost
    denom = math.fsum(values.values())
    if denom <= 0:
        return {o: 0.0 for o in values}
    fees = {o: total_fee * v / denom for o, v in values.items()}
    # absorb rounding in the largest share so the split sums to the total
    top = max(fees, key=lambda o: (fees[o], o))
    fees[top] = total_fee - math.fsum(v for o, v in fees.items() if o != top)
    return fees
