"""Yield tokenizer state machine.

Amounts and times are held as exact rationals so conservation checks are
equalities, not tolerances. Floats passed in are converted through their
shortest decimal repr (``0.06`` becomes ``3/50``).
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .exceptions import DuplicateEmissionError, LifecycleError, ScheduleError

ZERO = Fraction(0)


def q(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, (int, np.integer)):
        return Fraction(int(x))
    if isinstance(x, str):
        return Fraction(x)
    return Fraction(repr(float(x)))


@dataclass(frozen=True)
class FutureLot:
    supply: Fraction = ZERO
    paid: bool = False
    realized: Fraction = ZERO


@dataclass(frozen=True)
class Event:
    kind: str
    time: Fraction
    amount: Fraction
    detail: str = ""


@dataclass(frozen=True)
class TokenizerState:
    maturity: Fraction
    schedule: tuple[Fraction, ...]
    clock: Fraction = ZERO
    deposits: Fraction = ZERO
    released: Fraction = ZERO
    principal_supply: Fraction = ZERO
    yield_supply: Fraction = ZERO
    converted: Fraction = ZERO
    futures: tuple[tuple[Fraction, FutureLot], ...] = ()
    emitted: Fraction = ZERO
    routed_to_yield: Fraction = ZERO
    routed_to_futures: Fraction = ZERO
    unrouted: Fraction = ZERO
    yield_index: Fraction = ZERO  # cumulative yield per unit of Y held throughout
    emission_times: frozenset = frozenset()
    events: tuple[Event, ...] = field(default=(), compare=False)

    @classmethod
    def new(cls, maturity, schedule: Iterable, start=0) -> "TokenizerState":
        T = q(maturity)
        sched = tuple(sorted(q(t) for t in schedule))
        t0 = q(start)
        if len(set(sched)) != len(sched):
            raise ScheduleError("emission schedule has repeated times")
        if sched and (sched[0] <= t0 or sched[-1] > T):
            raise ScheduleError("emission times must lie in (start, maturity]")
        if not T > t0:
            raise LifecycleError("maturity must lie after the start time")
        return cls(maturity=T, schedule=sched, clock=t0)

    @property
    def ledger(self) -> dict[Fraction, FutureLot]:
        return dict(self.futures)

    @property
    def routed(self) -> Fraction:
        return self.routed_to_yield + self.routed_to_futures + self.unrouted

    def check_invariants(self) -> None:
        if self.principal_supply != self.deposits - self.released:
            raise AssertionError("principal supply does not match locked underlying")
        if self.yield_supply + self.converted != self.deposits:
            raise AssertionError("yield supply plus converted notional does not match deposits")
        if self.emitted != self.routed:
            raise AssertionError("emitted yield not fully routed")
        if any(lot.realized < 0 for _, lot in self.futures):
            raise AssertionError("negative realized amount")

    def _log(self, kind, time, amount, detail="") -> tuple[Event, ...]:
        return self.events + (Event(kind, q(time), q(amount), detail),)


def deposit(state: TokenizerState, amount) -> tuple[TokenizerState, Fraction, Fraction]:
    a = q(amount)
    if a <= 0:
        raise ValueError("deposit amount must be positive")
    if state.clock >= state.maturity:
        raise LifecycleError("cannot deposit at or after maturity")
    new = replace(
        state,
        deposits=state.deposits + a,
        principal_supply=state.principal_supply + a,
        yield_supply=state.yield_supply + a,
        events=state._log("deposit", state.clock, a),
    )
    return new, a, a


def remaining_schedule(state: TokenizerState) -> tuple[Fraction, ...]:
    return tuple(t for t in state.schedule if state.clock < t <= state.maturity)


def split_to_futures(state: TokenizerState, y_amount, payment_times: Sequence) -> tuple[TokenizerState, dict]:
    a = q(y_amount)
    if a <= 0:
        raise ValueError("split amount must be positive")
    if a > state.yield_supply:
        raise ValueError(f"cannot split {a}; only {state.yield_supply} yield tokens outstanding")
    times = tuple(sorted(q(t) for t in payment_times))
    expected = remaining_schedule(state)
    if times != expected:
        raise ScheduleError(f"payment times {[str(t) for t in times]} do not match the remaining schedule")
    ledger = state.ledger
    for t in times:
        lot = ledger.get(t, FutureLot())
        ledger[t] = replace(lot, supply=lot.supply + a)
    minted = {t: a for t in times}
    new = replace(
        state,
        yield_supply=state.yield_supply - a,
        converted=state.converted + a,
        futures=tuple(sorted(ledger.items())),
        events=state._log("split", state.clock, a, ";".join(str(t) for t in times)),
    )
    return new, minted


def accrue(state: TokenizerState, emission, at) -> TokenizerState:
    """Route one emission pro rata over live Y plus the futures for that time.

    Holders of record at the emission time are credited; with no eligible
    notional outstanding the emission is kept as unrouted.
    """
    e = q(emission)
    t = q(at)
    if e < 0:
        raise ValueError("emission must be nonnegative")
    if t < state.clock:
        raise LifecycleError(f"emission at {t} precedes the clock {state.clock}")
    if t > state.maturity:
        raise LifecycleError("emission after maturity")
    if t in state.emission_times:
        raise DuplicateEmissionError(f"emission at {t} already recorded")
    if t not in state.schedule:
        raise ScheduleError(f"{t} is not an emission time")
    if e == 0:
        return replace(state, clock=t, events=state._log("accrue", t, e))
    ledger = state.ledger
    lot = ledger.get(t, FutureLot())
    eligible = state.yield_supply + lot.supply
    to_y, to_f, unrouted = ZERO, ZERO, ZERO
    index = state.yield_index
    if eligible == 0:
        unrouted = e
    else:
        per_unit = e / eligible
        to_f = per_unit * lot.supply
        to_y = e - to_f
        index += per_unit
        if lot.supply > 0:
            ledger[t] = replace(lot, paid=True, realized=lot.realized + to_f)
    return replace(
        state,
        clock=t,
        futures=tuple(sorted(ledger.items())),
        emitted=state.emitted + e,
        routed_to_yield=state.routed_to_yield + to_y,
        routed_to_futures=state.routed_to_futures + to_f,
        unrouted=state.unrouted + unrouted,
        yield_index=index,
        emission_times=state.emission_times | {t},
        events=state._log("accrue", t, e),
    )


def advance_clock(state: TokenizerState, to) -> TokenizerState:
    t = q(to)
    if t < state.clock:
        raise LifecycleError("clock cannot move backwards")
    return replace(state, clock=t, events=state._log("advance", t, ZERO))


def redeem(state: TokenizerState, p_amount) -> tuple[TokenizerState, Fraction]:
    a = q(p_amount)
    if state.clock < state.maturity:
        raise LifecycleError(f"principal redeemable only at maturity {state.maturity}")
    if a <= 0 or a > state.principal_supply:
        raise ValueError(f"redeem amount must lie in (0, {state.principal_supply}]")
    new = replace(
        state,
        principal_supply=state.principal_supply - a,
        released=state.released + a,
        events=state._log("redeem", state.clock, a),
    )
    return new, a


# event log

EVENT_FIELDS = ("kind", "time", "amount", "detail")


def events_to_csv(state: TokenizerState) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(EVENT_FIELDS)
    for ev in state.events:
        w.writerow((ev.kind, str(ev.time), str(ev.amount), ev.detail))
    return buf.getvalue()


def replay(maturity, schedule, text: str, start=0) -> TokenizerState:
    state = TokenizerState.new(maturity, schedule, start)
    for row in csv.DictReader(io.StringIO(text)):
        kind, t, amount = row["kind"], q(row["time"]), q(row["amount"])
        if kind == "deposit":
            if t != state.clock:
                state = advance_clock(state, t)
            state, _, _ = deposit(state, amount)
        elif kind == "split":
            if t != state.clock:
                state = advance_clock(state, t)
            times = [q(s) for s in row["detail"].split(";")] if row["detail"] else []
            state, _ = split_to_futures(state, amount, times)
        elif kind == "accrue":
            state = accrue(state, amount, t)
        elif kind == "advance":
            state = advance_clock(state, t)
        elif kind == "redeem":
            if t != state.clock:
                state = advance_clock(state, t)
            state, _ = redeem(state, amount)
        else:
            raise ValueError(f"unknown event kind {kind!r}")
    return state
