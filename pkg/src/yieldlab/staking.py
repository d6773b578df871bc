"""Liquid-staking principal/yield prices and principal-token slashing insurance.

Rewards are restaked every slot, so principal prices compound through
``E[prod(1 + Y_i)]``. The tokenizer module pays yield out instead; the two
accountings are different on purpose.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .distributions import Payment, TruncatedGaussian, YieldDistribution, as_payment
from .exceptions import DistributionError, NoInsuranceError
from .utility import bisect_root

SMALL_SLASH_PROB = 0.1


class SlashRegimeWarning(UserWarning):
    pass


@dataclass(frozen=True)
class StakingYieldModel:
    payments: YieldDistribution
    slash_fraction: float = 0.0
    slash_prob: float = 0.0

    def __post_init__(self):
        if not 0 <= self.slash_fraction < 1:
            raise ValueError("slash fraction must lie in [0, 1)")
        if not 0 <= self.slash_prob < 1:
            raise ValueError("slash probability must lie in [0, 1)")
        for i, p in enumerate(self.payments.payments, start=1):
            if float(np.min(p.nodes()[0])) <= 0 and not (p.is_degenerate and p.mean > 0):
                raise DistributionError(f"staking reward {i} must be positively supported")

    @property
    def large_slash_prob(self) -> bool:
        return self.slash_prob > SMALL_SLASH_PROB


@dataclass(frozen=True)
class StakingPrices:
    principal: float
    yield_token: float
    growth: float  # E[prod(1 + Y_i)]
    stderr: float = 0.0


def price_principal_single(Y) -> StakingPrices:
    m = as_payment(Y).mean
    if not m > -1:
        raise DistributionError("expected reward must exceed -1")
    p = 1.0 / (1.0 + m)
    return StakingPrices(p, 1.0 - p, 1.0 + m)


def expected_growth(model: StakingYieldModel, n_paths: int | None = None, seed: int = 0) -> tuple[float, float]:
    """``E[prod(1 + Y_i)]`` and its standard error (zero for the independent product of means)."""
    dist = model.payments
    if dist.joint_sampler is None and n_paths is None:
        return math.prod(1.0 + p.mean for p in dist.payments), 0.0
    if n_paths is None or n_paths < 2:
        raise ValueError("Monte Carlo growth needs n_paths >= 2")
    rng = np.random.default_rng(seed)
    g = np.prod(1.0 + dist.sample(rng, n_paths), axis=1)
    return float(g.mean()), float(g.std(ddof=1) / math.sqrt(n_paths))


def price_principal_multi(model: StakingYieldModel, n_paths: int | None = None, seed: int = 0) -> StakingPrices:
    growth, se = expected_growth(model, n_paths, seed)
    p = 1.0 / growth
    return StakingPrices(p, 1.0 - p, growth, se)


def insurance_profit(K: float, slash_fraction: float, slash_prob: float, growth: float) -> float:
    """Expected profit of holding ``K`` extra principal tokens plus the minted one."""
    p, ps, E = slash_fraction, slash_prob, growth
    no_slash = (1.0 - ps) * (-K / E)
    slash = ps * (K * (1.0 / (1.0 - p) - 1.0 / E) + 1.0 / (1.0 - p))
    return no_slash + slash


@dataclass(frozen=True)
class InsuranceReport:
    K: float
    p_I: float
    growth: float
    profit_at_K: float
    closed_form_p_I: float  # displayed formula with + p_S E in the denominator
    root_form_p_I: float  # p_S / (1 - p - p_S E), what the zero-profit root reduces to
    discrepancy: float  # closed_form_p_I - p_I

    def to_records(self) -> list[dict]:
        return [
            {"quantity": "K", "value": self.K},
            {"quantity": "p_I", "value": self.p_I},
            {"quantity": "p_I_root_form", "value": self.root_form_p_I},
            {"quantity": "p_I_closed_form", "value": self.closed_form_p_I},
            {"quantity": "discrepancy", "value": self.discrepancy},
            {"quantity": "profit_at_K", "value": self.profit_at_K},
        ]


def insurance_position(model: StakingYieldModel, n_paths: int | None = None, seed: int = 0) -> InsuranceReport:
    """Principal tokens ``K`` that make the insurance fair, found as the zero of the expected profit."""
    growth, _ = expected_growth(model, n_paths, seed)
    p, ps = model.slash_fraction, model.slash_prob
    if not (1.0 - p) > ps * growth:
        raise NoInsuranceError(f"need 1 - p > p_S E[prod(1+Y)]; got {1.0 - p:.6g} <= {ps * growth:.6g}")
    if model.large_slash_prob:
        warnings.warn(f"slash probability {ps} is outside the small-probability regime", SlashRegimeWarning)
    if ps == 0:
        K = 0.0
    else:
        # profit is decreasing in K and positive at 0
        K = bisect_root(lambda k: -insurance_profit(k, p, ps, growth), 0.0, 1.0, xtol=1e-15)
    p_I = K / growth
    closed = ps / (1.0 - p + ps * growth)
    root_form = ps / (1.0 - p - ps * growth)
    return InsuranceReport(K, p_I, growth, insurance_profit(K, p, ps, growth), closed, root_form, closed - p_I)


def congestion_payments(n: int, fixed: float, variable_loc: float, variable_scale: float) -> YieldDistribution:
    """Rewards with a fixed part plus a fee-driven variable part truncated at zero."""
    pay: Payment = TruncatedGaussian(fixed + variable_loc, variable_scale, lower=fixed)
    return YieldDistribution.iid(pay, n)
