from __future__ import annotations

from dataclasses import replace
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from yieldlab.exceptions import DuplicateEmissionError, LifecycleError, ScheduleError
from yieldlab.pricing import constant_yield, price_yield_token_mc
from yieldlab.stochastic import geometric, simulate_paths
from yieldlab.tokenizer import (
    TokenizerState,
    accrue,
    advance_clock,
    deposit,
    events_to_csv,
    redeem,
    replay,
    split_to_futures,
)

F = Fraction


def fresh(T=2, sched=(1, 2)):
    return TokenizerState.new(T, sched)


def test_deposit_mints_one_to_one():
    s, p, y = deposit(fresh(), 5)
    assert (p, y) == (5, 5)
    assert s.principal_supply == 5 and s.yield_supply == 5 and s.deposits == 5


def test_deposits_are_additive():
    a, _, _ = deposit(fresh(), 2)
    a, _, _ = deposit(a, 3)
    b, _, _ = deposit(fresh(), 5)
    assert a == b


def test_deposit_rejections():
    with pytest.raises(ValueError):
        deposit(fresh(), 0)
    s = advance_clock(fresh(), 2)
    with pytest.raises(LifecycleError):
        deposit(s, 1)


def test_split_credits_each_future():
    s, _, _ = deposit(fresh(), 3)
    s, minted = split_to_futures(s, 1, [1, 2])
    assert minted == {1: 1, 2: 1}
    assert s.yield_supply == 2 and s.converted == 1
    assert {t: lot.supply for t, lot in s.futures} == {1: 1, 2: 1}
    s.check_invariants()


def test_split_rejections():
    s, _, _ = deposit(fresh(), 3)
    with pytest.raises(ValueError):
        split_to_futures(s, 0, [1, 2])
    with pytest.raises(ScheduleError):
        split_to_futures(s, 1, [2])
    with pytest.raises(ValueError):
        split_to_futures(s, 4, [1, 2])


def test_split_after_first_emission_uses_remaining_schedule():
    s, _, _ = deposit(fresh(), 3)
    s = accrue(s, 1, 1)
    with pytest.raises(ScheduleError):
        split_to_futures(s, 1, [1, 2])
    s, minted = split_to_futures(s, 1, [2])
    assert minted == {2: 1}


def test_zero_emission_only_moves_clock():
    s, _, _ = deposit(fresh(), 3)
    t = accrue(s, 0, 1)
    assert t.clock == 1
    assert t == replace(s, clock=F(1))


def test_pro_rata_between_yield_and_futures():
    s, _, _ = deposit(fresh(), 2)
    s, _ = split_to_futures(s, 1, [1, 2])
    s = accrue(s, F("0.06"), 1)
    assert s.routed_to_futures == F("0.03")
    assert s.routed_to_yield == F("0.03")
    assert s.ledger[F(1)].paid and s.ledger[F(1)].realized == F("0.03")
    assert not s.ledger[F(2)].paid


def test_accrue_errors():
    s, _, _ = deposit(fresh(), 2)
    s = accrue(s, 1, 1)
    with pytest.raises(DuplicateEmissionError):
        accrue(s, 1, 1)
    with pytest.raises(ScheduleError):
        accrue(fresh(3, (1, 2, 3)), 1, F(3, 2))
    s2 = advance_clock(fresh(), F(3, 2))
    with pytest.raises(LifecycleError):
        accrue(s2, 1, 1)


def test_emission_with_nothing_outstanding_is_kept_unrouted():
    s = accrue(fresh(), 5, 1)
    assert s.unrouted == 5 and s.emitted == s.routed
    s.check_invariants()


def test_redeem_examples():
    s, _, _ = deposit(fresh(), 5)
    with pytest.raises(LifecycleError):
        redeem(s, 1)
    s = advance_clock(s, 2)
    part, out = redeem(s, 2)
    assert out == 2 and part.principal_supply == 3
    full, out = redeem(s, 5)
    assert out == 5 and full.principal_supply == 0 and full.released == full.deposits
    with pytest.raises(ValueError):
        redeem(part, 4)


emission_lists = st.lists(st.fractions(min_value=0, max_value=10, max_denominator=1000), min_size=4, max_size=4)


@given(
    st.fractions(min_value=F(1, 100), max_value=50, max_denominator=100),
    st.fractions(min_value=0, max_value=1, max_denominator=100),
    emission_lists,
)
def test_conservation_and_split_neutrality(dep, frac, emissions):
    sched = [1, 2, 3, 4]
    base, _, _ = deposit(TokenizerState.new(4, sched), dep)
    split_amt = dep * frac
    held = base
    split = base
    if split_amt > 0:
        split, _ = split_to_futures(base, split_amt, sched)
    for t, e in zip(sched, emissions):
        held = accrue(held, e, t)
        split = accrue(split, e, t)
    for s in (held, split):
        s.check_invariants()
        assert s.emitted == s.routed == sum(emissions)
    # the split holder's futures receive exactly what the same notional of Y would have
    futures_total = sum((lot.realized for _, lot in split.futures), F(0))
    assert futures_total == split_amt * held.yield_index
    assert split.routed_to_yield + split.routed_to_futures == held.routed_to_yield
    held = advance_clock(held, 4)
    held, out = redeem(held, dep)
    assert out == dep and held.released == held.deposits


def test_event_log_replays_exactly():
    s = TokenizerState.new(3, [1, 2, 3])
    s, _, _ = deposit(s, F(7, 3))
    s, _ = split_to_futures(s, F(1, 3), [1, 2, 3])
    s = accrue(s, F("0.125"), 1)
    s, _, _ = deposit(s, 1)
    s = accrue(s, 0, 2)
    s = accrue(s, F("0.5"), 3)
    s, _ = redeem(s, 2)
    text = events_to_csv(s)
    assert text.splitlines()[0] == "kind,time,amount,detail"
    assert len(text.splitlines()) == len(s.events) + 1
    assert replay(3, [1, 2, 3], text) == s


def test_principal_plus_yield_values_the_deposit():
    # A is worth its terminal price plus the yield stream it pays while held
    r, y, T, x0 = 0.03, 0.05, 1.0, 1.0
    model = geometric(0.0, 0.25, r)
    Y = price_yield_token_mc(model, constant_yield(y), 0.0, [x0], T, 50_000, 50, seed=1)
    g = simulate_paths(model, "risk-neutral", [x0], np.linspace(0, T, 51), 50_000, seed=2)
    disc = np.exp(-r * T) * g.states[:, -1, 0]
    P = disc.mean()
    se = np.sqrt(disc.var(ddof=1) / disc.size + Y.stderr ** 2)
    A = x0 * (1 + y * T)
    assert abs(P + Y.mean - A) < 3 * se
