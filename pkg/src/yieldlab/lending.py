"""Lending pool: kinked rate curve, hedging premia, arbitrage, full-hedge equilibrium and welfare."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

from .distributions import Payment, as_payment
from .exceptions import ConsistencyError, DomainError
from .utility import UtilitySpec, bisect_root, default_upper

ROLES = ("lender", "borrower")
PREMIUM_XTOL = 1e-13


@dataclass(frozen=True)
class PoolState:
    lent: float
    borrowed: float
    r0: float = 0.0
    slope1: float = 0.04
    slope2: float = 0.6
    target: float = 0.8
    gamma: float = 1.0

    def __post_init__(self):
        if self.lent < 0 or self.borrowed < 0:
            raise ValueError("pool balances must be nonnegative")
        if self.borrowed > self.lent * (1 + 1e-12):
            raise ValueError(f"borrowed {self.borrowed} exceeds lent {self.lent}")
        if not 0 < self.target <= 1:
            raise ValueError("target utilization must lie in (0, 1]")
        if self.gamma < 1:
            raise ValueError("borrow multiplier gamma must be at least 1")

    @property
    def utilization(self) -> float:
        if self.lent == 0:
            raise DomainError("utilization undefined for an empty pool")
        return min(1.0, self.borrowed / self.lent)

    def to_dict(self) -> dict:
        return {
            "lent": self.lent,
            "borrowed": self.borrowed,
            "r0": self.r0,
            "slope1": self.slope1,
            "slope2": self.slope2,
            "target": self.target,
            "gamma": self.gamma,
        }


def rate_at(pool: PoolState, u: float) -> float:
    base = pool.r0 + pool.slope1 * min(u, pool.target) / pool.target
    if u > pool.target and pool.target < 1:
        base += pool.slope2 * (u - pool.target) / (1 - pool.target)
    return base


def interest_rate(pool: PoolState) -> float:
    """Lender-side rate from the kinked utilization curve."""
    return rate_at(pool, pool.utilization)


def borrow_rate(pool: PoolState) -> float:
    return pool.gamma * interest_rate(pool)


@dataclass(frozen=True)
class AgentSpec:
    role: str
    notional: float
    utility: UtilitySpec = UtilitySpec()

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"role must be one of {ROLES}")
        if not self.notional > 0:
            raise ValueError("agent notional must be positive")


def hedging_premium(agent: AgentSpec, yield_dist, u: float | None = None) -> float:
    """Largest discount (lender) or markup (borrower) to ``E[Y]`` at which hedging is still preferred.

    Lender: ``U(L + L(m - d)) = E U(L + L Y)``.
    Borrower: ``U(-B - (B/u)(m + d)) = E U(-B - B Y / u)``.
    """
    Y = as_payment(yield_dist)
    U = agent.utility
    m = Y.mean
    if U.is_risk_neutral or Y.is_degenerate:
        return 0.0
    n = agent.notional
    if agent.role == "lender":
        target = Y.expect(lambda v: U(n + n * v))
        gap = lambda d: target - U(n + n * (m - d))
    else:
        if u is None or not 0 < u <= 1:
            raise DomainError("borrower premium needs a utilization in (0, 1]")
        k = n / u
        target = Y.expect(lambda v: U(-n - k * v))
        gap = lambda d: target - U(-n - k * (m + d))
    if gap(0.0) >= 0:
        return 0.0
    return bisect_root(gap, 0.0, default_upper(0.0, Y.std), xtol=PREMIUM_XTOL)


@dataclass(frozen=True)
class ArbitrageSignal:
    kind: str  # "none" | "mint-and-sell" | "buy-and-hold"
    profit: float


def detect_arbitrage(pool: PoolState | None, token_price: float, yield_dist, tol: float = 1e-12) -> ArbitrageSignal:
    """Risk-neutral arbitrage against the pool: the token should trade at ``E[Y]``."""
    m = as_payment(yield_dist).mean
    diff = token_price - m
    if diff > tol:
        return ArbitrageSignal("mint-and-sell", diff)
    if diff < -tol:
        return ArbitrageSignal("buy-and-hold", -diff)
    return ArbitrageSignal("none", 0.0)


@dataclass(frozen=True)
class HedgeRow:
    role: str
    index: int
    notional: float
    premium: float
    threshold: float
    participates: bool
    tokens: float


@dataclass(frozen=True)
class HedgeReport:
    price: float
    expected_yield: float
    utilization: float
    offered: float
    demanded: float
    rows: tuple[HedgeRow, ...]
    fully_hedged: bool
    indifferent: bool

    @property
    def matched(self) -> float:
        return min(self.offered, self.demanded)

    @property
    def residual_side(self) -> str:
        if math.isclose(self.offered, self.demanded, rel_tol=1e-12, abs_tol=1e-12):
            return "none"
        return "lenders" if self.offered > self.demanded else "borrowers"

    @property
    def residual(self) -> float:
        return abs(self.offered - self.demanded)

    def to_records(self) -> list[dict]:
        return [
            {
                "role": r.role,
                "index": r.index,
                "notional": r.notional,
                "premium": r.premium,
                "threshold": r.threshold,
                "participates": r.participates,
                "tokens": r.tokens,
            }
            for r in self.rows
        ]


def equilibrium_hedge(
    pool: PoolState,
    lenders: Sequence[AgentSpec],
    borrowers: Sequence[AgentSpec],
    token_price: float,
    yield_dist,
    tol: float = 1e-9,
) -> HedgeReport:
    """Token supply from lenders and demand from borrowers at ``token_price``.

    Lender ``i`` sells ``L_i`` tokens when the price is at least ``E[Y] - d_L``;
    borrower ``j`` buys ``B_j / u`` when the price is at most ``E[Y] + d_B``.
    """
    Y = as_payment(yield_dist)
    m = Y.mean
    u = pool.utilization
    total_l = math.fsum(a.notional for a in lenders)
    total_b = math.fsum(a.notional for a in borrowers)
    if not math.isclose(total_b, u * total_l, rel_tol=1e-9, abs_tol=1e-12):
        raise ConsistencyError(f"borrowed total {total_b} != utilization {u} x lent total {total_l}")
    at_fair = abs(token_price - m) <= tol
    rows = []
    offered, demanded = [], []
    for i, a in enumerate(lenders):
        d = hedging_premium(a, Y, u)
        thr = m - d
        ok = at_fair or token_price >= thr
        rows.append(HedgeRow("lender", i, a.notional, d, thr, ok, a.notional if ok else 0.0))
        offered.append(rows[-1].tokens)
    for j, b in enumerate(borrowers):
        d = hedging_premium(b, Y, u)
        thr = m + d
        ok = at_fair or token_price <= thr
        tokens = b.notional / u if ok else 0.0
        rows.append(HedgeRow("borrower", j, b.notional, d, thr, ok, tokens))
        demanded.append(tokens)
    off, dem = math.fsum(offered), math.fsum(demanded)
    full = all(r.participates for r in rows) and math.isclose(off, dem, rel_tol=1e-9, abs_tol=1e-12)
    if at_fair and not full:
        raise ConsistencyError(f"at the fair price supply {off} and demand {dem} should match")
    indifferent = all(r.premium == 0.0 for r in rows)
    return HedgeReport(token_price, m, u, off, dem, tuple(rows), full, indifferent)


def _borrower_hedged_wealth(B: float, u: float, m: float, gamma: float):
    """Borrower owes ``gamma (B/u) Y``; buying ``B/u`` tokens at ``m`` covers ``min(1, 1/gamma)`` of it."""
    owed = gamma * B / u
    k = min(gamma, 1.0) * B / u
    exposure = owed - k
    return lambda y: -B - k * m - exposure * y


def _expect(U: UtilitySpec, Y: Payment, f) -> float:
    # affine utility: the mean is exact where quadrature would leave rounding noise
    if U.is_risk_neutral:
        return float(U(f(Y.mean)))
    return Y.expect(lambda v: U(f(v)))


def welfare(
    pool: PoolState,
    agents: Sequence[AgentSpec],
    yield_dist,
    tokenizer_present: bool,
    gamma: float | None = None,
) -> float:
    """Summed expected utility of pool participants with or without hedging through the tokenizer."""
    Y: Payment = as_payment(yield_dist)
    g = pool.gamma if gamma is None else float(gamma)
    if g < 1:
        raise ValueError("gamma must be at least 1")
    m = Y.mean
    borrowers = [a for a in agents if a.role == "borrower"]
    u = pool.utilization if borrowers else 1.0
    parts = []
    for a in agents:
        U, n = a.utility, a.notional
        if a.role == "lender":
            if tokenizer_present:
                parts.append(float(U(n + n * m)))
            else:
                parts.append(_expect(U, Y, lambda v: n + n * v))
        else:
            owed = g * n / u
            if tokenizer_present:
                w = _borrower_hedged_wealth(n, u, m, g)
                if g == 1.0:
                    parts.append(float(U(w(m))))
                else:
                    parts.append(_expect(U, Y, w))
            else:
                parts.append(_expect(U, Y, lambda v: -n - owed * v))
    return math.fsum(parts)


def gamma_sweep(pool, agents, yield_dist, gammas: Sequence[float], tokenizer_present: bool = True) -> list[dict]:
    return [
        {"gamma": float(g), "welfare": welfare(pool, agents, yield_dist, tokenizer_present, g)} for g in gammas
    ]


# ---------------------------------------------------------------------------
# rate manipulation


@dataclass(frozen=True)
class ScenarioStep:
    step: int
    lent: float
    utilization: float
    rate: float
    tokens_sold: float
    proceeds: float
    bid: float


@dataclass(frozen=True)
class ScenarioTrace:
    equilibrium_rate: float
    shifted_rate: float
    final_rate: float
    steps: tuple[ScenarioStep, ...]
    pnl: float
    flag: str  # "none", "converged", "no-liquidity", "bids-exhausted", "max-steps"

    def to_records(self) -> list[dict]:
        return [s.__dict__.copy() for s in self.steps]


def manipulation_scenario(
    pool: PoolState,
    adversary_shift: float,
    speculator: AgentSpec,
    book,
    tenor: float = 1.0,
    lot: float | None = None,
    max_steps: int = 10_000,
) -> ScenarioTrace:
    """Scripted speculator response to an adversarial utilization shift.

    The adversary borrows ``adversary_shift * lent`` more. The speculator, who
    values a yield token at ``r_eq * tenor``, repeatedly lends ``lot``, mints
    the matching yield tokens and sells them into the book's bids while the
    best bid is above that valuation and the pool rate is above ``r_eq``.
    """
    r_eq = interest_rate(pool)
    if adversary_shift == 0:
        return ScenarioTrace(r_eq, r_eq, r_eq, (), 0.0, "none")
    shifted = replace(pool, borrowed=min(pool.lent, pool.borrowed + adversary_shift * pool.lent))
    r_shift = interest_rate(shifted)
    valuation = r_eq * tenor
    if book is None or book.is_empty or book.best_bid() is None:
        return ScenarioTrace(r_eq, r_shift, r_shift, (), 0.0, "no-liquidity")
    lot = speculator.notional if lot is None else lot
    state, cur = shifted, book
    steps, pnl_parts = [], []
    flag = "max-steps"
    for k in range(1, max_steps + 1):
        if interest_rate(state) <= r_eq * (1 + 1e-12):
            flag = "converged"
            break
        bid = cur.best_bid()
        if bid is None or bid <= valuation or cur.depth("sell") <= 0:
            flag = "bids-exhausted"
            break
        qty = min(lot, cur.depth("sell"))
        fill, cur = cur.execute(qty, "sell")
        state = replace(state, lent=state.lent + qty)
        pnl_parts.append(fill.cost - qty * valuation)
        steps.append(ScenarioStep(k, state.lent, state.utilization, interest_rate(state), qty, fill.cost, bid))
    return ScenarioTrace(r_eq, r_shift, interest_rate(state), tuple(steps), math.fsum(pnl_parts), flag)
