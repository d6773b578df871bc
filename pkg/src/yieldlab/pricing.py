"""Fair prices of yield tokens and yield futures.

Monte Carlo under the risk-neutral measure (drift ``r(t) x``) with trapezoidal
accumulation of the discounted yield flow ``Y(s, X_s) . X_s`` along each path,
a backward-Euler finite-difference solve of the scalar pricing PDE as an
independent check, and the cross-maturity consistency report.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy.linalg import LinAlgError, solve_banded

from .exceptions import CoverageError, DimensionError, HorizonError, SolverError
from .stochastic import ModelSpec, RateLike, as_rate, discount_curve, integrated_rate, iter_states, rate_values


@dataclass(frozen=True)
class YieldFunctionSpec:
    """Per-unit-time yield fractions ``Y(t, X)``, vectorised: ``(paths, n) -> (paths, n)``."""

    evaluator: Callable[[float, np.ndarray], np.ndarray]
    n: int = 1
    name: str = "custom"

    def __call__(self, t: float, x: np.ndarray) -> np.ndarray:
        out = np.asarray(self.evaluator(t, x), dtype=float)
        if out.shape != x.shape:
            out = np.broadcast_to(out, x.shape)
        return out

    def flow(self, t: float, x: np.ndarray) -> np.ndarray:
        """Yield paid per unit time, ``Y(t, X) . X``, one value per path."""
        return np.einsum("pn,pn->p", self(t, x), x)


def constant_yield(fraction, n: int = 1) -> YieldFunctionSpec:
    frac = np.broadcast_to(np.atleast_1d(np.asarray(fraction, dtype=float)), (n,)).copy()
    return YieldFunctionSpec(lambda t, x: np.broadcast_to(frac, x.shape), n, name="constant")


def zero_yield(n: int = 1) -> YieldFunctionSpec:
    return YieldFunctionSpec(lambda t, x: np.zeros_like(x), n, name="zero")


def capped_yield(level: float, scale: float, n: int = 1) -> YieldFunctionSpec:
    """Yield fraction ``level * x / (x + scale)`` rising with the price and saturating."""
    return YieldFunctionSpec(lambda t, x: level * x / (x + scale), n, name="capped")


@dataclass(frozen=True)
class PriceEstimate:
    mean: float
    stderr: float
    n_paths: int

    @classmethod
    def from_samples(cls, samples: np.ndarray) -> "PriceEstimate":
        samples = np.asarray(samples, dtype=float)
        n = samples.size
        if n > 1 and np.ptp(samples) > 0:
            se = float(samples.std(ddof=1) / math.sqrt(n))
        else:
            se = 0.0
        return cls(float(samples.mean()), se, n)

    def to_dict(self) -> dict:
        return {"mean": self.mean, "stderr": self.stderr, "n_paths": self.n_paths}


def _check_dims(model: ModelSpec, yieldfn: YieldFunctionSpec) -> None:
    if yieldfn.n != model.n:
        raise DimensionError(f"yield function has dimension {yieldfn.n}, model has {model.n}")


def _grid_with_marks(t0: float, marks: Sequence[float], steps_per_unit: int) -> tuple[np.ndarray, list[int]]:
    """Grid from ``t0`` through every mark, each interval split into equal steps."""
    pts = [t0]
    idx = []
    for a, b in zip([t0, *marks[:-1]], marks):
        k = max(1, int(math.ceil(steps_per_unit * (b - a) - 1e-9)))
        seg = np.linspace(a, b, k + 1)[1:]
        pts.extend(seg.tolist())
        idx.append(len(pts) - 1)
    return np.asarray(pts), idx


def _path_functionals(model, yieldfn, x, times, mark_idx, n_paths, seed):
    """Per-path discounted cumulative yield and discounted point emissions at the marks."""
    disc = discount_curve(model.rate_fn, times)
    marks = {k: j for j, k in enumerate(mark_idx)}
    cum = np.zeros((n_paths, len(mark_idx)))
    emit = np.zeros((n_paths, len(mark_idx)))
    running = np.zeros(n_paths)
    prev = None
    for k, xs, _ in iter_states(model, "risk-neutral", x, times, n_paths, seed):
        f = disc[k] * yieldfn.flow(float(times[k]), xs)
        if prev is not None:
            running = running + 0.5 * (times[k] - times[k - 1]) * (prev + f)
        prev = f
        if k in marks:
            cum[:, marks[k]] = running
            emit[:, marks[k]] = f
    return cum, emit


def price_yield_token_mc(
    model: ModelSpec,
    yieldfn: YieldFunctionSpec,
    t: float,
    x,
    T: float,
    n_paths: int,
    steps: int,
    seed: int,
) -> PriceEstimate:
    """Risk-neutral Monte Carlo price at time ``t`` of the yield token maturing at ``T``."""
    if not T > t:
        raise HorizonError(f"maturity {T} must exceed valuation time {t}")
    if n_paths < 100:
        raise ValueError("need at least 100 paths")
    _check_dims(model, yieldfn)
    times = np.linspace(t, T, int(steps) + 1)
    cum, _ = _path_functionals(model, yieldfn, x, times, [times.size - 1], n_paths, seed)
    return PriceEstimate.from_samples(cum[:, 0])


def price_yield_future_mc(
    model: ModelSpec,
    yieldfn: YieldFunctionSpec,
    t_i: float,
    x,
    n_paths: int,
    seed: int,
    steps: int | None = None,
    t: float = 0.0,
) -> PriceEstimate:
    """Price of the single emission ``Y(t_i, X_{t_i}) . X_{t_i}`` paid at ``t_i``.

    Here the yield function is read as the fraction emitted at ``t_i``, not a
    rate per unit time.
    """
    if t_i < t:
        raise HorizonError(f"payment time {t_i} precedes valuation time {t}")
    _check_dims(model, yieldfn)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if t_i == t:
        pay = yieldfn.flow(t, np.broadcast_to(x, (n_paths, model.n)).copy())
        return PriceEstimate.from_samples(pay)
    if steps is None:
        steps = max(1, int(math.ceil(252 * (t_i - t))))
    times = np.linspace(t, t_i, int(steps) + 1)
    _, emit = _path_functionals(model, yieldfn, x, times, [times.size - 1], n_paths, seed)
    return PriceEstimate.from_samples(emit[:, 0])


@dataclass(frozen=True)
class TermStructure:
    """Prices on one shared path set (common random numbers).

    ``tokens[T]`` prices the yield token maturing at ``T``; ``period_futures[t_i]``
    prices the yield accrued over ``(t_{i-1}, t_i]``; ``emission_futures[t_i]``
    prices the point emission ``Y(t_i, X) . X * (t_i - t_{i-1})``.
    """

    start: float
    tokens: dict[float, PriceEstimate]
    period_futures: dict[float, PriceEstimate]
    emission_futures: dict[float, PriceEstimate]


def price_term_structure(
    model: ModelSpec,
    yieldfn: YieldFunctionSpec,
    x,
    maturities: Sequence[float],
    payment_times: Sequence[float],
    n_paths: int,
    seed: int,
    steps_per_unit: int = 252,
    t: float = 0.0,
) -> TermStructure:
    _check_dims(model, yieldfn)
    marks = sorted(set(float(m) for m in maturities) | set(float(p) for p in payment_times))
    if not marks or marks[0] <= t:
        raise HorizonError("all maturities and payment times must lie after the valuation time")
    times, idx = _grid_with_marks(t, marks, steps_per_unit)
    cum, emit = _path_functionals(model, yieldfn, x, times, idx, n_paths, seed)
    col = {m: j for j, m in enumerate(marks)}
    tokens = {float(m): PriceEstimate.from_samples(cum[:, col[float(m)]]) for m in maturities}
    pays = sorted(float(p) for p in payment_times)
    period, emission = {}, {}
    prev_t, prev_cum = t, np.zeros(n_paths)
    for p in pays:
        c = cum[:, col[p]]
        period[p] = PriceEstimate.from_samples(c - prev_cum)
        emission[p] = PriceEstimate.from_samples(emit[:, col[p]] * (p - prev_t))
        prev_t, prev_cum = p, c
    return TermStructure(t, tokens, period, emission)


# ---------------------------------------------------------------------------
# cross-maturity consistency


@dataclass(frozen=True)
class ConsistencyRow:
    lo: float
    hi: float
    residual: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.residual <= self.tolerance


@dataclass(frozen=True)
class ConsistencyReport:
    rows: tuple[ConsistencyRow, ...]

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows)

    def to_records(self) -> list[dict]:
        return [
            {"lo": r.lo, "hi": r.hi, "residual": r.residual, "tolerance": r.tolerance, "passed": r.passed}
            for r in self.rows
        ]


def check_maturity_consistency(
    token_prices: Mapping[float, PriceEstimate],
    future_prices: Mapping[float, PriceEstimate],
    start: float = 0.0,
    n_sigma: float = 3.0,
    abs_tol: float = 1e-10,
) -> ConsistencyReport:
    """Compare each token (and each adjacent pair of maturities) with its futures strip.

    ``future_prices`` is keyed by the end of each payment period; the futures
    must partition ``(start, T_max]``.
    """
    mats = sorted(token_prices)
    pays = sorted(future_prices)
    if not mats:
        return ConsistencyReport(())
    if not pays or not math.isclose(pays[-1], mats[-1], rel_tol=0, abs_tol=1e-12):
        raise CoverageError("futures must end at the longest maturity")
    if pays[0] <= start:
        raise CoverageError("futures must pay strictly after the start time")
    for m in mats:
        if not any(math.isclose(m, p, rel_tol=0, abs_tol=1e-12) for p in pays):
            raise CoverageError(f"maturity {m} is not a futures period boundary")
    rows = []
    prev_m, prev_est = start, None
    for m in mats:
        seg = [future_prices[p] for p in pays if prev_m < p <= m + 1e-12]
        est = token_prices[m]
        lhs = est.mean - (prev_est.mean if prev_est else 0.0)
        resid = abs(lhs - math.fsum(s.mean for s in seg))
        var = est.stderr ** 2 + (prev_est.stderr ** 2 if prev_est else 0.0) + sum(s.stderr ** 2 for s in seg)
        rows.append(ConsistencyRow(prev_m, m, resid, max(n_sigma * math.sqrt(var), abs_tol)))
        prev_m, prev_est = m, est
    return ConsistencyReport(tuple(rows))


# ---------------------------------------------------------------------------
# finite differences


@dataclass(frozen=True)
class PriceSurface:
    times: np.ndarray
    xs: np.ndarray
    values: np.ndarray  # (len(times), len(xs))

    def at(self, t: float, x) -> np.ndarray | float:
        k = int(np.argmin(np.abs(self.times - t)))
        out = np.interp(x, self.xs, self.values[k])
        return float(out) if np.ndim(out) == 0 else out


def solve_pricing_pde_1d(
    model: ModelSpec,
    yieldfn: YieldFunctionSpec,
    T: float,
    x_max: float,
    nx: int,
    nt: int,
    t0: float = 0.0,
) -> PriceSurface:
    """Backward-Euler solve of ``P_t + 1/2 s^2 P_xx + x (Y + r P_x) - r P = 0``, ``P(T, .) = 0``.

    ``P(t, 0) = 0``; zero curvature at ``x_max``.
    """
    if model.n != 1:
        raise DimensionError("the PDE solver handles scalar models only")
    _check_dims(model, yieldfn)
    if nx < 8 or nt < 8:
        raise ValueError("nx and nt must be at least 8")
    if not T > t0:
        raise HorizonError("maturity must exceed the start time")
    xs = np.linspace(0.0, float(x_max), nx + 1)
    times = np.linspace(t0, T, nt + 1)
    dx = xs[1] - xs[0]
    dt = times[1] - times[0]
    rates = rate_values(model.rate_fn, times)
    values = np.zeros((nt + 1, nx + 1))
    xin = xs[1:-1]
    col = xs[:, None]

    for k in range(nt - 1, -1, -1):
        t = float(times[k])
        r = float(rates[k])
        sig2 = np.sum(np.asarray(model.diffusion(t, col))[1:-1, 0, :] ** 2, axis=1)
        src = yieldfn.flow(t, col)[1:-1]
        diff = 0.5 * sig2 / dx ** 2
        conv = r * xin / (2 * dx)
        lower = -dt * (diff - conv)
        diag = 1.0 + dt * (2 * diff + r)
        upper = -dt * (diff + conv)
        # eliminate P_N = 2 P_{N-1} - P_{N-2}
        diag = diag.copy()
        lower = lower.copy()
        diag[-1] += 2 * upper[-1]
        lower[-1] -= upper[-1]
        ab = np.zeros((3, xin.size))
        ab[0, 1:] = upper[:-1]
        ab[1] = diag
        ab[2, :-1] = lower[1:]
        rhs = values[k + 1, 1:-1] + dt * src
        try:
            sol = solve_banded((1, 1), ab, rhs)
        except (LinAlgError, ValueError) as exc:
            raise SolverError(_diagnostics(dx, dt, sig2, conv, k)) from exc
        if not np.all(np.isfinite(sol)):
            raise SolverError(_diagnostics(dx, dt, sig2, conv, k))
        values[k, 1:-1] = sol
        values[k, 0] = 0.0
        values[k, -1] = 2 * sol[-1] - sol[-2]
    return PriceSurface(times, xs, values)


def _diagnostics(dx, dt, sig2, conv, k) -> str:
    diff = np.maximum(0.5 * sig2 / dx ** 2, 1e-300)
    peclet = float(np.max(np.abs(conv) / diff))
    return f"pde solve failed at time step {k}: dx={dx:.3g}, dt={dt:.3g}, max cell Peclet={peclet:.3g}"


# ---------------------------------------------------------------------------


def annuity_factor(rate: RateLike, t: float, T: float, panels: int = 128) -> float:
    """``int_t^T exp(-int_t^s r) ds`` by composite Simpson."""
    rate = as_rate(rate)
    s = np.linspace(t, T, 2 * panels + 1)
    logs = np.zeros_like(s)
    for i in range(1, s.size):
        logs[i] = logs[i - 1] + integrated_rate(rate, s[i - 1], s[i], panels=2)
    d = np.exp(-logs)
    h = (T - t) / (2 * panels)
    return float(h / 3.0 * (d[0] + d[-1] + 4 * d[1:-1:2].sum() + 2 * d[2:-1:2].sum()))


def implied_yield(token_price: float, rate: RateLike, t: float, T: float) -> float:
    """Flat yield per unit time whose discounted stream over ``[t, T]`` costs ``token_price``."""
    if not T > t:
        raise HorizonError(f"maturity {T} must exceed valuation time {t}")
    if token_price < 0:
        raise ValueError("token price must be nonnegative")
    if token_price == 0:
        return 0.0
    return token_price / annuity_factor(rate, t, T)
