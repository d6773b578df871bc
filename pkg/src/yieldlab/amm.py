"""Utility-based bonding curves, indifference menus and the LP-trader equilibrium."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np
from scipy.interpolate import PchipInterpolator

from .distributions import Payment, YieldDistribution, as_payment, expect_pair
from .exceptions import BracketError
from .utility import UtilitySpec, default_upper, solve_increasing

ROOT_XTOL = 1e-13


def _as_distribution(payments) -> YieldDistribution:
    if isinstance(payments, YieldDistribution):
        return payments
    if isinstance(payments, (list, tuple)):
        return YieldDistribution(tuple(payments))
    return YieldDistribution((as_payment(payments),))


@dataclass(frozen=True)
class BondingCurve:
    """Sell branch (trader sells ``delta`` to the LP) and buy branch, tabulated on ``deltas``.

    A branch whose root could not be bracketed stops at ``halted_sell`` /
    ``halted_buy``; its price array is then shorter than ``deltas``.
    """

    x0: float
    y0: float
    deltas: np.ndarray
    p_sell: np.ndarray
    p_buy: np.ndarray
    halted_sell: float | None = None
    halted_buy: float | None = None
    expected: float = 0.0

    def _interp(self, prices, d):
        grid = self.deltas[: len(prices)]
        if len(prices) == 0:
            raise ValueError("branch is empty")
        if len(prices) == 1:
            return np.full_like(np.asarray(d, dtype=float), prices[0])
        return PchipInterpolator(grid, prices, extrapolate=False)(d)

    def sell_price(self, delta):
        out = self._interp(self.p_sell, delta)
        return float(out) if np.ndim(out) == 0 else out

    def buy_price(self, delta):
        out = self._interp(self.p_buy, delta)
        return float(out) if np.ndim(out) == 0 else out

    def sell_reserves(self) -> tuple[np.ndarray, np.ndarray]:
        d = self.deltas[: len(self.p_sell)]
        return self.x0 - d * self.p_sell, self.y0 + d

    def buy_reserves(self) -> tuple[np.ndarray, np.ndarray]:
        d = self.deltas[: len(self.p_buy)]
        return self.x0 + d * self.p_buy, self.y0 - d

    @property
    def spread(self) -> float:
        return float(self.p_buy[0] - self.p_sell[0])

    def is_monotone(self, tol: float = 1e-12) -> bool:
        return bool(np.all(np.diff(self.p_sell) <= tol) and np.all(np.diff(self.p_buy) >= -tol))


def _bracket(m: float, s: float) -> tuple[float, float]:
    return 0.0, default_upper(m, s)


def efficient_curve(
    U_P: UtilitySpec,
    x0: float,
    y0: float,
    Y,
    delta_grid: Sequence[float],
) -> BondingCurve:
    """LP-indifferent quotes for each trade size.

    ``p_sell(delta)`` solves ``E U(x0 + y0 Y) = E U(x0 - p delta + (y0 + delta) Y)`` and
    ``p_buy(delta)`` solves ``E U(x0 + y0 Y) = E U(x0 + p delta + (y0 - delta) Y)``.
    The buy branch stops once ``delta`` exceeds ``y0``.
    """
    Y = as_payment(Y)
    deltas = np.asarray(delta_grid, dtype=float)
    if deltas.ndim != 1 or deltas.size == 0 or np.any(deltas <= 0) or np.any(np.diff(deltas) <= 0):
        raise ValueError("delta grid must be positive and strictly ascending")
    base = Y.expect(lambda v: U_P(x0 + y0 * v))
    lo, hi = _bracket(Y.mean, Y.std)
    sells, buys = [], []
    halted_sell = halted_buy = None
    for d in deltas:
        if halted_sell is None:
            try:
                sells.append(
                    solve_increasing(
                        lambda p: base - Y.expect(lambda v: U_P(x0 - p * d + (y0 + d) * v)), lo, hi, xtol=ROOT_XTOL
                    )
                )
            except BracketError:
                halted_sell = float(d)
        if halted_buy is None:
            if d > y0:
                halted_buy = float(d)
                continue
            try:
                buys.append(
                    solve_increasing(
                        lambda p: Y.expect(lambda v: U_P(x0 + p * d + (y0 - d) * v)) - base, lo, hi, xtol=ROOT_XTOL
                    )
                )
            except BracketError:
                halted_buy = float(d)
    return BondingCurve(
        float(x0), float(y0), deltas, np.asarray(sells), np.asarray(buys), halted_sell, halted_buy, Y.mean
    )


def efficient_menu(U_P: UtilitySpec, x0: float, y0: float, payments, delta_grid: Sequence[float]) -> list[BondingCurve]:
    dist = _as_distribution(payments)
    return [efficient_curve(U_P, x0, y0, dist.tail(j), delta_grid) for j in range(1, dist.n + 1)]


@dataclass(frozen=True)
class PriceMenu:
    """Prices ``p_1..p_n`` for selling ``delta`` after payments ``1..t-1``."""

    delta: float
    prices: tuple[float, ...]
    side: str = "sell"

    def __post_init__(self):
        object.__setattr__(self, "prices", tuple(float(p) for p in self.prices))
        if not all(math.isfinite(p) for p in self.prices):
            raise ValueError("menu prices must be finite")
        if self.side not in ("sell", "buy"):
            raise ValueError("side must be 'sell' or 'buy'")

    @property
    def n(self) -> int:
        return len(self.prices)

    def with_price(self, t: int, price: float) -> "PriceMenu":
        prices = list(self.prices)
        prices[t - 1] = price
        return PriceMenu(self.delta, tuple(prices), self.side)

    def to_records(self) -> list[dict]:
        return [{"action": t, "delta": self.delta, "price": p} for t, p in enumerate(self.prices, start=1)]


def _sign(side: str) -> float:
    return 1.0 if side == "sell" else -1.0


def indifference_menu(
    U_S: UtilitySpec,
    delta: float,
    payments,
    side: str = "sell",
    bracket: tuple[float, float] | None = None,
) -> PriceMenu:
    """Backward recursion making every sell timing (and holding) equally good for the trader.

    ``side="buy"`` mirrors the construction for a trader who is short the
    payments and buys the tail to hedge.
    """
    if not delta > 0:
        raise ValueError("trade size must be positive")
    dist = _as_distribution(payments)
    n = dist.n
    sg = _sign(side)
    prices = [0.0] * (n + 1)  # prices[n] is p_{n+1} = 0
    for t in range(n, 0, -1):
        head = dist.partial_sum(1, t - 1)
        nxt = prices[t] if t < n else 0.0
        Yt = dist.payments[t - 1]
        if t == n:
            target = expect_pair(head, Yt, lambda a, b: U_S(sg * (a + b) * delta))
        else:
            target = expect_pair(head, Yt, lambda a, b: U_S(sg * (a + b + nxt) * delta))
        lo, hi = bracket if bracket is not None else _bracket(Yt.mean, Yt.std)

        def gap(q, head=head, nxt=nxt, target=target):
            return sg * (head.expect(lambda a: U_S(sg * (a + q + nxt) * delta)) - target)

        prices[t - 1] = nxt + solve_increasing(gap, lo, hi, xtol=ROOT_XTOL)
    return PriceMenu(float(delta), tuple(prices[:n]), side)


def trader_utilities(U_S: UtilitySpec, delta: float, menu: PriceMenu, payments) -> np.ndarray:
    """``[U^1, ..., U^{n+1}]``: expected trader utility of each action."""
    dist = _as_distribution(payments)
    if menu.n != dist.n:
        raise ValueError(f"menu has {menu.n} prices for {dist.n} payments")
    sg = _sign(menu.side)
    out = []
    for t in range(1, dist.n + 1):
        head = dist.partial_sum(1, t - 1)
        p = menu.prices[t - 1]
        out.append(head.expect(lambda a: U_S(sg * (a + p) * delta)))
    out.append(dist.total().expect(lambda a: U_S(sg * a * delta)))
    return np.asarray(out)


def _argmax_smallest(values: np.ndarray, rel_tol: float) -> int:
    best = float(np.max(values))
    tol = rel_tol * max(abs(best), 1e-300) + 1e-15
    return int(np.flatnonzero(values >= best - tol)[0]) + 1


def trader_best_action(
    U_S: UtilitySpec, delta: float, menu: PriceMenu, payments, rel_tol: float = 1e-10
) -> int:
    """Action index in ``1..n+1`` maximising trader utility; near-ties go to the smallest index."""
    return _argmax_smallest(trader_utilities(U_S, delta, menu, payments), rel_tol)


def lp_utilities(U_P: UtilitySpec, x0: float, y0: float, delta: float, menu: PriceMenu, payments) -> np.ndarray:
    """``[V^1, ..., V^{n+1}]`` with ``V^t = E U_P(x0 - p_t delta + y0 S_n + delta T_t)``."""
    dist = _as_distribution(payments)
    out = []
    for t in range(1, dist.n + 1):
        head = dist.partial_sum(1, t - 1)
        tail = dist.tail(t)
        p = menu.prices[t - 1]
        out.append(expect_pair(head, tail, lambda a, b: U_P(x0 - p * delta + y0 * a + (y0 + delta) * b)))
    out.append(dist.total().expect(lambda a: U_P(x0 + y0 * a)))
    return np.asarray(out)


@dataclass(frozen=True)
class LPOptimum:
    menu: PriceMenu
    t_star: int
    lp_utility: float
    trader_utilities: np.ndarray = field(compare=False)


def lp_optimal_menu(
    U_P: UtilitySpec, U_S: UtilitySpec, x0: float, y0: float, delta: float, payments
) -> LPOptimum:
    menu = indifference_menu(U_S, delta, payments)
    tu = trader_utilities(U_S, delta, menu, payments)
    t_star = _argmax_smallest(tu, 1e-10)
    lp = lp_utilities(U_P, x0, y0, delta, menu, payments)
    return LPOptimum(menu, t_star, float(lp[t_star - 1]), tu)


@dataclass(frozen=True)
class LatticeResult:
    best_utility: float
    best_prices: tuple[float, float]
    best_action: int
    n_menus: int


def lattice_search(
    U_P: UtilitySpec,
    U_S: UtilitySpec,
    x0: float,
    y0: float,
    delta: float,
    payments,
    step: float = 1e-3,
    upper: float | None = None,
) -> LatticeResult:
    """Exhaustive search over two-payment menus on a price lattice.

    The trader best-responds to each lattice menu (ties to the smallest action)
    and the LP utility of that response is maximised over the lattice.
    """
    dist = _as_distribution(payments)
    if dist.n != 2:
        raise ValueError("lattice search is implemented for two payments")
    Y1, Y2 = dist.payments
    S2 = dist.total()
    if upper is None:
        upper = float(np.max(S2.nodes()[0])) + step
    grid = np.arange(0.0, upper + step / 2, step)

    u1 = np.array([U_S(p * delta) for p in grid], dtype=float)
    u2 = np.array([Y1.expect(lambda a: U_S((a + p) * delta)) for p in grid])
    u3 = S2.expect(lambda a: U_S(a * delta))
    v1 = np.array([S2.expect(lambda s: U_P(x0 - p * delta + (y0 + delta) * s)) for p in grid])
    v2 = np.array([expect_pair(Y1, Y2, lambda a, b: U_P(x0 - p * delta + y0 * a + (y0 + delta) * b)) for p in grid])
    v3 = S2.expect(lambda s: U_P(x0 + y0 * s))

    U1 = u1[:, None]
    U2 = u2[None, :]
    pick1 = (U1 >= U2) & (U1 >= u3)
    pick2 = ~pick1 & (U2 >= u3)
    value = np.where(pick1, v1[:, None], np.where(pick2, v2[None, :], v3))
    i, j = np.unravel_index(int(np.argmax(value)), value.shape)
    action = 1 if pick1[i, j] else (2 if pick2[i, j] else 3)
    return LatticeResult(float(value[i, j]), (float(grid[i]), float(grid[j])), action, grid.size ** 2)


@dataclass(frozen=True)
class FuturesMenu:
    """Per-future prices ``P_i = p_i - p_{i+1}``, held exactly as rationals of the float inputs."""

    delta: float
    exact: tuple[Fraction, ...]

    @property
    def prices(self) -> tuple[float, ...]:
        return tuple(float(x) for x in self.exact)

    def reconstruct(self) -> PriceMenu:
        tails, acc = [], Fraction(0)
        for x in reversed(self.exact):
            acc += x
            tails.append(float(acc))
        return PriceMenu(self.delta, tuple(reversed(tails)))


def futures_menu_from_token_menu(menu: PriceMenu) -> FuturesMenu:
    p = [Fraction(x) for x in menu.prices] + [Fraction(0)]
    return FuturesMenu(menu.delta, tuple(p[i] - p[i + 1] for i in range(menu.n)))


def menu_from_curves(curves: Sequence[BondingCurve], delta: float) -> PriceMenu:
    """Menu quoting each curve's sell price at ``delta`` (the efficient, trader-agnostic menu)."""
    return PriceMenu(float(delta), tuple(c.sell_price(delta) for c in curves))
