"""Fixed-term, fixed-rate quotes built by walking per-block yield-future books."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np

from .aggregation import LiquidityCurve, OrderBookView, aggregate
from .exceptions import AlignmentError, CoverageError, DepthError, PartialQuoteError, StaleQuoteError
from .lending import PoolState

SIDES = {"lend": "sell", "borrow": "buy"}


def _as_book_map(books) -> dict[int, OrderBookView]:
    if isinstance(books, Mapping):
        return {int(k): v for k, v in books.items()}
    return {i + 1: b for i, b in enumerate(books)}


def _block(t: float, interval: float) -> int:
    n = t / interval
    k = int(round(n))
    if abs(n - k) > 1e-9:
        raise AlignmentError(f"time {t} is not a multiple of the block interval {interval}")
    return k


@dataclass(frozen=True)
class FixedQuote:
    side: str
    notional: float
    T1: float
    T2: float
    n1: int
    n2: int
    total_price: float  # p_delta, per unit notional, summed over the futures
    fills: tuple[tuple[int, float, float], ...]  # (block, quantity, average price)
    block_interval: float = 1.0

    @property
    def blocks(self) -> int:
        return self.n2 - self.n1

    @property
    def per_block_rate(self) -> Fraction:
        return Fraction(self.total_price) / self.blocks

    @property
    def rate(self) -> float:
        return float(self.per_block_rate)

    def to_dict(self) -> dict:
        return {
            "side": self.side,
            "notional": self.notional,
            "T1": self.T1,
            "T2": self.T2,
            "n1": self.n1,
            "n2": self.n2,
            "total_price": self.total_price,
            "per_block_rate": self.rate,
        }


def quote_fixed(
    side: str, delta: float, T1: float, T2: float, books, block_interval: float = 1.0
) -> FixedQuote:
    """Price ``delta`` of every future in ``(n1, n2]``; lenders sell into bids, borrowers lift asks."""
    if side not in SIDES:
        raise ValueError(f"side must be one of {tuple(SIDES)}")
    if not delta > 0:
        raise ValueError("notional must be positive")
    n1, n2 = _block(T1, block_interval), _block(T2, block_interval)
    if not n2 > n1:
        raise ValueError("term must end after it starts")
    bmap = _as_book_map(books)
    missing = [k for k in range(n1 + 1, n2 + 1) if k not in bmap]
    if missing:
        raise CoverageError(f"no book for blocks {missing}")
    walk = SIDES[side]
    shortfalls = {}
    for k in range(n1 + 1, n2 + 1):
        depth = bmap[k].depth(walk)
        if depth < delta:
            shortfalls[k] = delta - depth
    if shortfalls:
        raise PartialQuoteError(shortfalls)
    fills, costs = [], []
    for k in range(n1 + 1, n2 + 1):
        f = bmap[k].walk(delta, walk)
        fills.append((k, float(delta), f.average_price))
        costs.append(f.cost)
    return FixedQuote(side, float(delta), float(T1), float(T2), n1, n2, math.fsum(costs) / delta, tuple(fills), block_interval)


@dataclass(frozen=True)
class FixedPosition:
    side: str
    notional: float
    n1: int
    n2: int
    per_block_rate: Fraction
    upfront: float
    gamma: float

    @property
    def variable_spread(self) -> float:
        """Unhedged multiple of the per-block yield left with a borrower when ``gamma > 1``."""
        return self.gamma - 1.0 if self.side == "borrow" else 0.0

    def cash_flows(self, yield_paths) -> np.ndarray:
        """Net per-block payment (borrower) or receipt (lender), ``(scenarios, blocks)``.

        ``yield_paths[s, b]`` is the realised per-unit lender yield in block ``n1 + 1 + b``.
        """
        y = np.atleast_2d(np.asarray(yield_paths, dtype=float))
        if y.shape[1] != self.n2 - self.n1:
            raise ValueError(f"need {self.n2 - self.n1} blocks of yield, got {y.shape[1]}")
        fixed = float(self.per_block_rate) * self.notional
        futures_leg = self.notional * y
        if self.side == "borrow":
            pool_leg = self.gamma * self.notional * y
            return fixed + (pool_leg - futures_leg)
        pool_leg = self.notional * y
        return fixed + (pool_leg - futures_leg)


def execute_fixed(
    quote: FixedQuote, pool: PoolState, books
) -> tuple[FixedPosition, dict[int, OrderBookView], PoolState]:
    """Re-quote, then take the futures and open the pool leg."""
    if not quote.notional > 0:
        raise ValueError("cannot execute a zero-notional quote")
    if quote.side == "borrow" and pool.borrowed + quote.notional > pool.lent * (1 + 1e-12):
        raise DepthError(f"pool has {pool.lent - pool.borrowed:.6g} left to lend, need {quote.notional:.6g}")
    bmap = _as_book_map(books)
    try:
        fresh = quote_fixed(quote.side, quote.notional, quote.T1, quote.T2, bmap, quote.block_interval)
    except (DepthError, CoverageError) as exc:
        raise StaleQuoteError(f"quote no longer fillable: {exc}") from exc
    if fresh.fills != quote.fills or fresh.total_price != quote.total_price:
        raise StaleQuoteError("books moved since the quote; requote")
    new_books = dict(bmap)
    walk = SIDES[quote.side]
    for k in range(quote.n1 + 1, quote.n2 + 1):
        _, new_books[k] = bmap[k].execute(quote.notional, walk)
    if quote.side == "lend":
        new_pool = replace(pool, lent=pool.lent + quote.notional)
    else:
        new_pool = replace(pool, borrowed=pool.borrowed + quote.notional)
    position = FixedPosition(
        quote.side,
        quote.notional,
        quote.n1,
        quote.n2,
        quote.per_block_rate,
        quote.notional * quote.total_price,
        pool.gamma,
    )
    return position, new_books, new_pool


def flat_book(price: float, depth: float, owner: str = "lp") -> OrderBookView:
    """All depth sitting at one price, available to both sides."""
    return aggregate([LiquidityCurve((), ((float(price), float(depth)),))], [owner], reference=float(price))


def maturity_orderbook(books, block_interval: float = 1.0) -> list[dict]:
    """Maturity ``M`` bundles futures ``1..M``: summed best quotes, depth of the thinnest leg."""
    bmap = _as_book_map(books)
    rows = []
    bid, ask, depth = 0.0, 0.0, math.inf
    k = 1
    while k in bmap:
        b = bmap[k]
        bb, ba = b.best_bid(), b.best_ask()
        bid = bid + bb if bb is not None and not math.isnan(bid) else math.nan
        ask = ask + ba if ba is not None and not math.isnan(ask) else math.nan
        depth = min(depth, b.depth("sell"), b.depth("buy"))
        rows.append({"maturity": k * block_interval, "bid": bid, "ask": ask, "depth": depth})
        k += 1
    return rows
