"""Yield tokenization toolkit: pricing, tokenizer ledger, AMM menus, lending hedges, fixed-rate quotes, staking."""

from __future__ import annotations

from .exceptions import YieldLabError

__version__ = "0.1.0"

__all__ = ["YieldLabError", "__version__"]
