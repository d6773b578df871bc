from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from yieldlab.aggregation import LiquidityCurve, aggregate
from yieldlab.distributions import Degenerate, Discrete, Gaussian
from yieldlab.exceptions import ConsistencyError, DomainError
from yieldlab.lending import (
    AgentSpec,
    PoolState,
    borrow_rate,
    detect_arbitrage,
    equilibrium_hedge,
    gamma_sweep,
    hedging_premium,
    interest_rate,
    manipulation_scenario,
    rate_at,
    welfare,
)
from yieldlab.utility import UtilitySpec

Y = Gaussian(0.05, 0.1)


def test_rate_curve_examples():
    pool = PoolState(10, 0, r0=0.01)
    assert interest_rate(pool) == 0.01
    assert interest_rate(PoolState(10, 8)) == pytest.approx(0.04, abs=1e-15)
    assert interest_rate(PoolState(10, 9)) == pytest.approx(0.34, abs=1e-15)
    assert borrow_rate(PoolState(10, 8, gamma=1.5)) == pytest.approx(0.06, abs=1e-15)


def test_rate_curve_monotone():
    pool = PoolState(1, 0)
    us = np.linspace(0, 1, 201)
    r = [rate_at(pool, u) for u in us]
    assert all(b >= a for a, b in zip(r, r[1:]))


def test_empty_pool_has_no_utilization():
    with pytest.raises(DomainError):
        interest_rate(PoolState(0, 0))


def test_lender_premium_cara_gaussian():
    d = hedging_premium(AgentSpec("lender", 1.0, UtilitySpec.cara(2.0)), Y)
    assert abs(d - 2.0 * 1.0 * 0.1 ** 2 / 2) < 1e-8


def test_borrower_premium_cara_gaussian():
    B, u, a = 8.0, 0.8, 0.5
    d = hedging_premium(AgentSpec("borrower", B, UtilitySpec.cara(a)), Y, u)
    assert abs(d - a * (B / u) * 0.1 ** 2 / 2) < 1e-8


def test_premium_zero_cases():
    assert hedging_premium(AgentSpec("lender", 3.0, UtilitySpec.risk_neutral()), Y) == 0.0
    assert hedging_premium(AgentSpec("lender", 3.0, UtilitySpec.cara(4.0)), Degenerate(0.05)) == 0.0
    assert hedging_premium(AgentSpec("borrower", 3.0, UtilitySpec.crra(2.0, 10.0)), Degenerate(0.05), 0.5) == 0.0


@given(st.floats(0.1, 5), st.floats(0.1, 5), st.floats(0.01, 0.2), st.floats(0.01, 0.2))
def test_premium_monotone_in_aversion_and_variance(a1, a2, s1, s2):
    lo_a, hi_a = sorted((a1, a2))
    lo_s, hi_s = sorted((s1, s2))
    prem = lambda a, s: hedging_premium(AgentSpec("lender", 1.0, UtilitySpec.cara(a)), Gaussian(0.05, s))
    assert prem(hi_a, lo_s) >= prem(lo_a, lo_s) - 1e-12
    assert prem(lo_a, hi_s) >= prem(lo_a, lo_s) - 1e-12


@given(st.floats(0.5, 4), st.floats(0.5, 10), st.sampled_from(["lender", "borrower"]))
def test_premium_nonnegative_crra_discrete(eta, notional, role):
    Yd = Discrete((0.0, 0.05, 0.2), (0.3, 0.5, 0.2))
    agent = AgentSpec(role, notional, UtilitySpec.crra(eta, offset=4 * notional / 0.5))
    assert hedging_premium(agent, Yd, 0.5) >= 0.0


def test_arbitrage_cases():
    sig = detect_arbitrage(None, 0.06, Y)
    assert sig.kind == "mint-and-sell" and sig.profit == pytest.approx(0.01, abs=1e-15)
    assert detect_arbitrage(None, 0.05, Y).kind == "none"
    sig = detect_arbitrage(None, 0.04, Y)
    assert sig.kind == "buy-and-hold" and sig.profit == pytest.approx(0.01, abs=1e-15)


@given(st.floats(-1, 1))
def test_arbitrage_classes_exclusive(price):
    sig = detect_arbitrage(None, price, Y, tol=1e-9)
    band = abs(price - 0.05) <= 1e-9
    assert (sig.kind == "none") == band
    assert sig.profit >= 0


def test_full_hedge_counting():
    pool = PoolState(10, 8)
    rep = equilibrium_hedge(pool, [AgentSpec("lender", 10, UtilitySpec.cara(1))], [AgentSpec("borrower", 8, UtilitySpec.cara(1))], 0.05, Y)
    assert rep.offered == 10 and rep.demanded == pytest.approx(10, abs=1e-12)
    assert rep.fully_hedged and rep.residual_side == "none"


def test_high_price_kills_borrower_demand():
    pool = PoolState(10, 8)
    b = AgentSpec("borrower", 8, UtilitySpec.cara(1))
    d = hedging_premium(b, Y, 0.8)
    rep = equilibrium_hedge(pool, [AgentSpec("lender", 10, UtilitySpec.cara(1))], [b], 0.05 + d + 1e-6, Y)
    assert rep.demanded == 0 and rep.residual_side == "lenders"


def test_risk_neutral_population_is_indifferent():
    pool = PoolState(10, 8)
    rn = UtilitySpec.risk_neutral()
    rep = equilibrium_hedge(pool, [AgentSpec("lender", 10, rn)], [AgentSpec("borrower", 8, rn)], 0.05, Y)
    assert rep.indifferent and rep.fully_hedged


def test_inconsistent_totals_rejected():
    with pytest.raises(ConsistencyError):
        equilibrium_hedge(PoolState(10, 8), [AgentSpec("lender", 10)], [AgentSpec("borrower", 5)], 0.05, Y)


def test_welfare_risk_neutral_equal():
    pool = PoolState(10, 8)
    agents = [AgentSpec("lender", 10), AgentSpec("borrower", 8)]
    assert welfare(pool, agents, Y, True) == welfare(pool, agents, Y, False)


def _population(rng, pool_b_over_l=0.8):
    n_l, n_b = rng.integers(1, 4), rng.integers(1, 4)
    lend = rng.uniform(1, 10, n_l)
    total_b = pool_b_over_l * lend.sum()
    w = rng.dirichlet(np.ones(n_b))
    borr = total_b * w
    agents = []
    for x in lend:
        agents.append(AgentSpec("lender", float(x), _utility(rng, float(x))))
    for x in borr:
        agents.append(AgentSpec("borrower", float(x), _utility(rng, float(x) / pool_b_over_l * 3)))
    return PoolState(float(lend.sum()), float(total_b)), agents


def _utility(rng, scale):
    if rng.random() < 0.5:
        return UtilitySpec.cara(float(rng.uniform(0.1, 2.0)))
    return UtilitySpec.crra(float(rng.uniform(0.5, 4.0)), offset=float(10 * scale + 10))


@pytest.mark.parametrize("seed", range(10))
def test_welfare_gain_and_gamma_monotone(seed):
    rng = np.random.default_rng(seed)
    pool, agents = _population(rng)
    Yg = Gaussian(0.05, float(rng.uniform(0.02, 0.1)))
    assert welfare(pool, agents, Yg, True) >= welfare(pool, agents, Yg, False)
    for present in (True, False):
        sweep = [r["welfare"] for r in gamma_sweep(pool, agents, Yg, [1, 1.1, 1.25, 1.5], present)]
        assert all(b <= a for a, b in zip(sweep, sweep[1:]))


def _deep_book():
    return aggregate([LiquidityCurve.constant(1000.0, 0.02, 0.2)], ["mm"], reference=0.2)


def test_manipulation_zero_shift_is_empty():
    tr = manipulation_scenario(PoolState(10, 8), 0.0, AgentSpec("lender", 1), _deep_book())
    assert tr.steps == () and tr.pnl == 0.0


def test_manipulation_deep_book_restores_rate():
    pool = PoolState(10, 8)
    tr = manipulation_scenario(pool, 0.05, AgentSpec("lender", 1), _deep_book(), lot=0.01)
    assert tr.shifted_rate > tr.equilibrium_rate
    assert tr.flag == "converged"
    assert abs(tr.final_rate - tr.equilibrium_rate) <= 0.1 * tr.equilibrium_rate
    assert tr.pnl > 0


def test_manipulation_empty_book_is_flagged():
    empty = aggregate([], [], reference=0.1)
    tr = manipulation_scenario(PoolState(10, 8), 0.05, AgentSpec("lender", 1), empty)
    assert tr.flag == "no-liquidity"
    assert tr.final_rate == tr.shifted_rate > tr.equilibrium_rate
