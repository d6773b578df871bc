"""Scenario runner: ``yieldlab <subcommand> --config FILE`` writes plot-ready tables."""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import aggregation as agg
from . import amm, config, fixed_rate, lending, pricing, staking, tokenizer
from .distributions import YieldDistribution, distribution_from_config, payment_from_config
from .exceptions import ConfigError, YieldLabError
from .io import Table, emit
from .stochastic import model_from_config
from .utility import UtilitySpec

SUBCOMMANDS = ("price", "curve", "aggregate", "hedge", "quote", "stake", "verify")
EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


# ---------------------------------------------------------------------------
# builders


def build_model(cfg: dict):
    try:
        return model_from_config(cfg["model"])
    except TypeError as exc:
        raise ConfigError(f"bad model parameters: {exc}", "model") from None


def build_yield(cfg: dict, n: int) -> pricing.YieldFunctionSpec:
    y = cfg["yield"]
    if y["kind"] == "zero":
        return pricing.zero_yield(n)
    if y["kind"] == "capped":
        return pricing.capped_yield(y["level"], y["scale"], n)
    return pricing.constant_yield(y["fraction"], n)


def build_agents(cfg: dict) -> list[lending.AgentSpec]:
    return [
        lending.AgentSpec(a["role"], a["notional"], UtilitySpec.from_dict(a.get("utility", {})))
        for a in cfg.get("agents", [])
    ]


def build_curve(spec: dict) -> agg.LiquidityCurve:
    kind, lo, hi = spec["kind"], spec["lo"], spec["hi"]
    if kind == "constant":
        return agg.LiquidityCurve.constant(spec["level"], lo, hi)
    if kind == "power":
        return agg.LiquidityCurve.power(spec["level"], lo, hi)
    if kind == "linear":
        return agg.LiquidityCurve.linear(spec["level"], spec.get("slope", 0.0), lo, hi)
    return agg.ConcLiqPosition(spec["level"], lo, hi, spec["owner"]).as_curve()


def build_book(cfg: dict) -> agg.OrderBookView:
    lps = cfg.get("lps", [])
    ref = cfg.get("aggregation", {}).get("reference")
    return agg.aggregate([build_curve(s) for s in lps], [s["owner"] for s in lps], reference=ref)


def build_block_books(cfg: dict) -> dict[int, agg.OrderBookView]:
    fr = cfg["fixed_rate"]
    count = cfg["blocks"]["count"]
    prices = np.broadcast_to(np.atleast_1d(np.asarray(fr["book_price"], dtype=float)), (count,))
    if np.atleast_1d(fr["book_price"]).size not in (1, count):
        raise ConfigError("book_price needs one entry or one per block", "fixed_rate.book_price")
    return {k + 1: fixed_rate.flat_book(float(prices[k]), fr["book_depth"], "lp") for k in range(count)}


def _x0(cfg: dict, n: int) -> np.ndarray:
    return np.broadcast_to(np.atleast_1d(np.asarray(cfg["pricing"]["x0"], dtype=float)), (n,)).copy()


# ---------------------------------------------------------------------------
# subcommands; each returns its tables


def run_price(cfg: dict) -> list[Table]:
    model = build_model(cfg)
    yf = build_yield(cfg, model.n)
    pc = cfg["pricing"]
    seed, paths = cfg["seed"], cfg["paths"]
    spu = pc.get("steps_per_unit", 252)
    mats, pays = pc["maturities"], pc["payment_times"]
    ts = pricing.price_term_structure(model, yf, _x0(cfg, model.n), mats, pays, paths, seed, spu)
    tables = [
        Table.from_records(
            "tokens",
            [{"maturity": T, "price": e.mean, "stderr": e.stderr, "paths": e.n_paths} for T, e in sorted(ts.tokens.items())],
            ("maturity", "price", "stderr", "paths"),
        ),
        Table.from_records(
            "futures",
            [
                {
                    "payment_time": p,
                    "period_price": ts.period_futures[p].mean,
                    "period_stderr": ts.period_futures[p].stderr,
                    "emission_price": ts.emission_futures[p].mean,
                    "emission_stderr": ts.emission_futures[p].stderr,
                }
                for p in sorted(ts.period_futures)
            ],
            ("payment_time", "period_price", "period_stderr", "emission_price", "emission_stderr"),
        ),
    ]
    report = pricing.check_maturity_consistency(ts.tokens, ts.period_futures)
    tables.append(Table.from_records("consistency", report.to_records(), ("lo", "hi", "residual", "tolerance", "passed")))
    if model.n == 1 and "pde" in pc and "spots" in pc:
        tables.append(Table.from_records("pde", _pde_rows(model, yf, cfg), PDE_FIELDS))
    return tables


PDE_FIELDS = ("spot", "pde", "mc", "stderr", "difference", "tolerance", "passed")


def _pde_rows(model, yf, cfg: dict) -> list[dict]:
    pc = cfg["pricing"]
    T = max(pc["maturities"])
    g = pc["pde"]
    surf = pricing.solve_pricing_pde_1d(model, yf, T, g.get("x_max", 4 * max(pc["spots"])), g.get("nx", 200), g.get("nt", 100))
    steps = max(1, int(round(pc.get("steps_per_unit", 252) * T)))
    rows = []
    for i, s in enumerate(pc["spots"]):
        mc = pricing.price_yield_token_mc(model, yf, 0.0, [s], T, cfg["paths"], steps, cfg["seed"] + i)
        pde = surf.at(0.0, s)
        tol = max(0.01 * abs(mc.mean), 3 * mc.stderr)
        diff = abs(pde - mc.mean)
        rows.append({"spot": s, "pde": pde, "mc": mc.mean, "stderr": mc.stderr, "difference": diff, "tolerance": tol, "passed": diff <= tol})
    return rows


def run_curve(cfg: dict) -> list[Table]:
    a = cfg["amm"]
    U_P = UtilitySpec.from_dict(a["lp_utility"])
    U_S = UtilitySpec.from_dict(a["trader_utility"])
    dist = distribution_from_config(cfg["payments"])
    curves = amm.efficient_menu(U_P, a["x0"], a["y0"], dist, a["delta_grid"])
    rows = []
    for j, c in enumerate(curves, start=1):
        for i, d in enumerate(c.deltas):
            rows.append(
                {
                    "period": j,
                    "delta": float(d),
                    "p_sell": float(c.p_sell[i]) if i < len(c.p_sell) else None,
                    "p_buy": float(c.p_buy[i]) if i < len(c.p_buy) else None,
                }
            )
    opt = amm.lp_optimal_menu(U_P, U_S, a["x0"], a["y0"], a["delta"], dist)
    fut = amm.futures_menu_from_token_menu(opt.menu)
    lp = amm.lp_utilities(U_P, a["x0"], a["y0"], a["delta"], opt.menu, dist)
    actions = [
        {
            "action": t,
            "price": opt.menu.prices[t - 1] if t <= opt.menu.n else 0.0,
            "future_price": fut.prices[t - 1] if t <= opt.menu.n else None,
            "trader_utility": float(opt.trader_utilities[t - 1]),
            "lp_utility": float(lp[t - 1]),
            "chosen": t == opt.t_star,
        }
        for t in range(1, opt.menu.n + 2)
    ]
    return [
        Table.from_records("bonding", rows, ("period", "delta", "p_sell", "p_buy")),
        Table.from_records("menu", actions, ("action", "price", "future_price", "trader_utility", "lp_utility", "chosen")),
    ]


def run_aggregate(cfg: dict) -> list[Table]:
    book = build_book(cfg)
    ac = cfg.get("aggregation", {})
    tables = [Table.from_records("orderbook", book.to_records(), ("side", "price", "depth", "cumulative"))]
    fills, fees = [], []
    trade = ac.get("trade")
    if trade and not book.is_empty:
        for side in ("buy", "sell"):
            if book.depth(side) < trade:
                continue
            f = book.walk(trade, side)
            fills.append({"side": side, "quantity": f.quantity, "cost": f.cost, "average_price": f.average_price, "start": f.start, "end": f.end})
            split = agg.pro_rata_fees(f, book, ac.get("fee_rate", 0.0))
            values = book.owner_values(f)
            for o in book.owners:
                fees.append({"side": side, "owner": o, "value": values.get(o, 0.0), "fee": split.get(o, 0.0)})
    tables.append(Table.from_records("fills", fills, ("side", "quantity", "cost", "average_price", "start", "end")))
    tables.append(Table.from_records("fees", fees, ("side", "owner", "value", "fee")))
    approx = []
    d = ac.get("approx_delta")
    if d:
        for spec in cfg.get("lps", []):
            lc = build_curve(spec)
            for step in (d, d / 2):
                res = agg.approximate_concentrated(lc, step, spec["owner"])
                approx.append({"owner": spec["owner"], "delta": step, "positions": len(res.positions), "sup_error": res.sup_error})
    tables.append(Table.from_records("approximation", approx, ("owner", "delta", "positions", "sup_error")))
    return tables


def run_hedge(cfg: dict) -> list[Table]:
    pool = lending.PoolState(**cfg["pool"])
    Y = payment_from_config(cfg["payments"][0])
    agents = build_agents(cfg)
    lenders = [x for x in agents if x.role == "lender"]
    borrowers = [x for x in agents if x.role == "borrower"]
    price = cfg.get("hedge", {}).get("token_price", Y.mean)
    rep = lending.equilibrium_hedge(pool, lenders, borrowers, price, Y)
    sig = lending.detect_arbitrage(pool, price, Y)
    summary = [
        {"quantity": "interest_rate", "value": lending.interest_rate(pool)},
        {"quantity": "borrow_rate", "value": lending.borrow_rate(pool)},
        {"quantity": "utilization", "value": rep.utilization},
        {"quantity": "token_price", "value": price},
        {"quantity": "expected_yield", "value": rep.expected_yield},
        {"quantity": "offered", "value": rep.offered},
        {"quantity": "demanded", "value": rep.demanded},
        {"quantity": "residual", "value": rep.residual},
        {"quantity": "arbitrage_profit", "value": sig.profit},
        {"quantity": "welfare_without", "value": lending.welfare(pool, agents, Y, False)},
        {"quantity": "welfare_with", "value": lending.welfare(pool, agents, Y, True)},
    ]
    gammas = cfg.get("hedge", {}).get("gammas", [pool.gamma])
    sweep = [
        {"gamma": r["gamma"], "welfare_with": r["welfare"], "welfare_without": lending.welfare(pool, agents, Y, False, r["gamma"])}
        for r in lending.gamma_sweep(pool, agents, Y, gammas)
    ]
    return [
        Table.from_records("hedge", rep.to_records(), ("role", "index", "notional", "premium", "threshold", "participates", "tokens")),
        Table.from_records("summary", summary, ("quantity", "value")),
        Table.from_records("gamma_sweep", sweep, ("gamma", "welfare_with", "welfare_without")),
    ]


def run_quote(cfg: dict) -> list[Table]:
    fr, interval = cfg["fixed_rate"], cfg["blocks"]["interval"]
    books = build_block_books(cfg)
    pool = lending.PoolState(**cfg["pool"])
    quotes, flows = [], []
    rng = np.random.default_rng(cfg["seed"])
    for side in ("lend", "borrow"):
        qt = fixed_rate.quote_fixed(side, fr["notional"], fr["T1"], fr["T2"], books, interval)
        pos, _, new_pool = fixed_rate.execute_fixed(qt, pool, books)
        blocks = qt.blocks
        per_block = YieldDistribution.iid(payment_from_config(cfg["payments"][0]), blocks)
        # scale the per-period law to one block
        y = per_block.sample(rng, fr.get("scenarios", 100)) * interval
        cf = pos.cash_flows(y)
        quotes.append(
            {
                "side": side,
                "notional": qt.notional,
                "n1": qt.n1,
                "n2": qt.n2,
                "total_price": qt.total_price,
                "per_block_rate": qt.rate,
                "upfront": pos.upfront,
                "pool_rate_after": lending.interest_rate(new_pool),
            }
        )
        for b in range(blocks):
            col = cf[:, b]
            flows.append({"side": side, "block": qt.n1 + 1 + b, "mean": float(col.mean()), "variance": float(col.var())})
    return [
        Table.from_records("quotes", quotes, ("side", "notional", "n1", "n2", "total_price", "per_block_rate", "upfront", "pool_rate_after")),
        Table.from_records("cash_flows", flows, ("side", "block", "mean", "variance")),
        Table.from_records("maturities", fixed_rate.maturity_orderbook(books, interval), ("maturity", "bid", "ask", "depth")),
    ]


def run_stake(cfg: dict) -> list[Table]:
    st = cfg["staking"]
    dist = distribution_from_config(st["payments"])
    model = staking.StakingYieldModel(dist, st.get("slash_fraction", 0.0), st.get("slash_prob", 0.0))
    single = staking.price_principal_single(dist.payments[0])
    multi = staking.price_principal_multi(model, st.get("paths"), cfg["seed"])
    prices = [
        {"horizon": 1, "principal": single.principal, "yield_token": single.yield_token, "growth": single.growth, "stderr": single.stderr},
        {"horizon": dist.n, "principal": multi.principal, "yield_token": multi.yield_token, "growth": multi.growth, "stderr": multi.stderr},
    ]
    tables = [Table.from_records("prices", prices, ("horizon", "principal", "yield_token", "growth", "stderr"))]
    rep = staking.insurance_position(model, st.get("paths"), cfg["seed"])
    tables.append(Table.from_records("insurance", rep.to_records(), ("quantity", "value")))
    return tables


# ---------------------------------------------------------------------------
# verify


VERIFY_FIELDS = ("suite", "check", "value", "tolerance", "passed")


def _row(suite: str, check: str, value: float, tol: float, passed: bool | None = None) -> dict:
    ok = (abs(value) <= tol) if passed is None else passed
    return {"suite": suite, "check": check, "value": float(value), "tolerance": float(tol), "passed": bool(ok)}


def _verify_pricing(cfg: dict) -> list[dict]:
    rows = []
    pc = cfg["pricing"]
    model = build_model(cfg)
    yf = build_yield(cfg, model.n)
    ts = pricing.price_term_structure(
        model, yf, _x0(cfg, model.n), pc["maturities"], pc["payment_times"], cfg["paths"], cfg["seed"], pc.get("steps_per_unit", 252)
    )
    rep = pricing.check_maturity_consistency(ts.tokens, ts.period_futures)
    worst = max((r.residual - r.tolerance for r in rep.rows), default=0.0)
    rows.append(_row("pricing", "token_minus_futures_strip", worst, 0.0, rep.passed))
    det = config.deep_merge(cfg, {"model": {"preset": "deterministic", "mu": 0.01, "rate": 0.03, "n": model.n}})
    dm = build_model(det)
    dts = pricing.price_term_structure(dm, yf, _x0(cfg, model.n), pc["maturities"], pc["payment_times"], 100, cfg["seed"], pc.get("steps_per_unit", 252))
    drep = pricing.check_maturity_consistency(dts.tokens, dts.period_futures, abs_tol=1e-10)
    rows.append(_row("pricing", "deterministic_strip_exact", max(r.residual for r in drep.rows), 1e-10))
    zt = pricing.price_term_structure(
        model, pricing.zero_yield(model.n), _x0(cfg, model.n), pc["maturities"], pc["payment_times"], 100, cfg["seed"], 10
    )
    rows.append(_row("pricing", "zero_yield_prices_zero", max(abs(e.mean) for e in zt.tokens.values()), 0.0))
    if model.n == 1 and "pde" in pc and "spots" in pc:
        g = pc["pde"]
        T = max(pc["maturities"])
        surf = pricing.solve_pricing_pde_1d(model, yf, T, g.get("x_max", 4 * max(pc["spots"])), g.get("nx", 200), g.get("nt", 100))
        rows.append(_row("pricing", "pde_terminal_slice_zero", float(np.max(np.abs(surf.values[-1]))), 0.0))
        for r in _pde_rows(model, yf, cfg):
            rows.append(_row("pricing", f"pde_vs_mc_at_{r['spot']:g}", r["difference"], r["tolerance"], r["passed"]))
    return rows


def _verify_tokenizer(cfg: dict) -> list[dict]:
    T = 4
    sched = [1, 2, 3, 4]
    s = tokenizer.TokenizerState.new(T, sched)
    s, _, _ = tokenizer.deposit(s, 10)
    s, _ = tokenizer.split_to_futures(s, 4, sched)
    rng = np.random.default_rng(cfg["seed"])
    for t in sched:
        s = tokenizer.accrue(s, round(float(rng.uniform(0, 1)), 6), t)
    s, _ = tokenizer.redeem(s, 10)
    rows = []
    try:
        s.check_invariants()
        ok = True
    except AssertionError:
        ok = False
    rows.append(_row("tokenizer", "supply_and_routing_invariants", 0.0, 0.0, ok))
    rows.append(_row("tokenizer", "emitted_minus_routed", float(s.emitted - s.routed), 0.0))
    back = tokenizer.replay(T, sched, tokenizer.events_to_csv(s))
    rows.append(_row("tokenizer", "replay_reproduces_state", 0.0, 0.0, back == s))
    return rows


def _verify_lending(cfg: dict) -> list[dict]:
    pool = lending.PoolState(**cfg["pool"])
    Y = payment_from_config(cfg["payments"][0])
    agents = build_agents(cfg)
    rows = []
    rep = lending.equilibrium_hedge(
        pool, [a for a in agents if a.role == "lender"], [a for a in agents if a.role == "borrower"], Y.mean, Y
    )
    rows.append(_row("lending", "fair_price_full_hedge", rep.residual, 1e-9, rep.fully_hedged))
    w0, w1 = lending.welfare(pool, agents, Y, False), lending.welfare(pool, agents, Y, True)
    rows.append(_row("lending", "welfare_gain", w1 - w0, 0.0, w1 >= w0))
    sweep = [r["welfare"] for r in lending.gamma_sweep(pool, agents, Y, cfg.get("hedge", {}).get("gammas", [1.0]))]
    rise = max((b - a for a, b in zip(sweep, sweep[1:])), default=0.0)
    rows.append(_row("lending", "welfare_nonincreasing_in_gamma", rise, 1e-12, rise <= 1e-12))
    return rows


def _verify_amm(cfg: dict) -> list[dict]:
    a = cfg["amm"]
    U_P, U_S = UtilitySpec.from_dict(a["lp_utility"]), UtilitySpec.from_dict(a["trader_utility"])
    dist = distribution_from_config(cfg["payments"])
    menu = amm.indifference_menu(U_S, a["delta"], dist)
    tu = amm.trader_utilities(U_S, a["delta"], menu, dist)
    rows = [_row("amm", "trader_utilities_equal", float(np.ptp(tu)), 1e-8)]
    fut = amm.futures_menu_from_token_menu(menu)
    rows.append(_row("amm", "futures_telescoping_exact", 0.0, 0.0, fut.reconstruct() == menu))
    curves = amm.efficient_menu(U_P, a["x0"], a["y0"], dist, a["delta_grid"])
    rows.append(_row("amm", "bonding_curves_monotone", 0.0, 0.0, all(c.is_monotone() for c in curves)))
    rows.append(_row("amm", "bid_below_ask", 0.0, 0.0, all(c.spread >= -1e-12 for c in curves)))
    return rows


def _verify_aggregation(cfg: dict) -> list[dict]:
    lps = cfg.get("lps", [])
    if not lps:
        return []
    curves = [build_curve(s) for s in lps]
    book = build_book(cfg)
    grid = np.linspace(*book.total.support(), 101)[:-1]
    summed = sum(np.asarray([c(float(p)) for p in grid]) for c in curves)
    total = np.asarray([book.total(float(p)) for p in grid])
    rows = [_row("aggregation", "liquidity_additive", float(np.max(np.abs(summed - total))), 0.0)]
    ac = cfg.get("aggregation", {})
    trade, fee_rate = ac.get("trade", 1.0), ac.get("fee_rate", 0.0)
    for side in ("buy", "sell"):
        if book.depth(side) < trade:
            continue
        f = book.walk(trade, side)
        fees = agg.pro_rata_fees(f, book, fee_rate)
        gap = math.fsum(fees.values()) - fee_rate * f.cost
        rows.append(_row("aggregation", f"fee_conservation_{side}", gap, 1e-12))
        vals = book.owner_values(f)
        rows.append(_row("aggregation", f"owner_values_sum_{side}", math.fsum(vals.values()) - f.cost, 1e-12))
    return rows


def _verify_fixed_rate(cfg: dict) -> list[dict]:
    from fractions import Fraction

    fr, interval = cfg["fixed_rate"], cfg["blocks"]["interval"]
    books = build_block_books(cfg)
    pool = lending.PoolState(**{**cfg["pool"], "gamma": 1.0})
    rows = []
    rng = np.random.default_rng(cfg["seed"])
    for side in ("lend", "borrow"):
        qt = fixed_rate.quote_fixed(side, fr["notional"], fr["T1"], fr["T2"], books, interval)
        rows.append(_row("fixed_rate", f"{side}_rate_times_blocks_exact", 0.0, 0.0, qt.per_block_rate * qt.blocks == Fraction(qt.total_price)))
        pos, _, _ = fixed_rate.execute_fixed(qt, pool, books)
        y = YieldDistribution.iid(payment_from_config(cfg["payments"][0]), qt.blocks).sample(rng, fr.get("scenarios", 100))
        var = float(np.max(np.var(pos.cash_flows(y), axis=0)))
        rows.append(_row("fixed_rate", f"{side}_cash_flow_variance", var, 1e-10))
    return rows


def _verify_staking(cfg: dict) -> list[dict]:
    st = cfg["staking"]
    dist = distribution_from_config(st["payments"])
    model = staking.StakingYieldModel(dist, st.get("slash_fraction", 0.0), st.get("slash_prob", 0.0))
    single = staking.price_principal_single(dist.payments[0])
    multi = staking.price_principal_multi(model, st.get("paths"), cfg["seed"])
    rows = [
        _row("staking", "single_prices_sum_to_one", 0.0, 0.0, single.principal + single.yield_token == 1.0),
        _row("staking", "multi_prices_sum_to_one", 0.0, 0.0, multi.principal + multi.yield_token == 1.0),
    ]
    rep = staking.insurance_position(model, st.get("paths"), cfg["seed"])
    rows.append(_row("staking", "insurance_zero_profit", rep.profit_at_K, 1e-10))
    return rows


VERIFY_SUITES: dict[str, Callable[[dict], list[dict]]] = {
    "pricing": _verify_pricing,
    "tokenizer": _verify_tokenizer,
    "lending": _verify_lending,
    "amm": _verify_amm,
    "aggregation": _verify_aggregation,
    "fixed_rate": _verify_fixed_rate,
    "staking": _verify_staking,
}


def run_verify(cfg: dict) -> list[Table]:
    rows = []
    for name, suite in VERIFY_SUITES.items():
        try:
            rows.extend(suite(cfg))
        except YieldLabError as exc:
            rows.append({"suite": name, "check": f"error:{type(exc).__name__}", "value": None, "tolerance": None, "passed": False})
    return [Table.from_records("verify", rows, VERIFY_FIELDS)]


RUNNERS: dict[str, Callable[[dict], list[Table]]] = {
    "price": run_price,
    "curve": run_curve,
    "aggregate": run_aggregate,
    "hedge": run_hedge,
    "quote": run_quote,
    "stake": run_stake,
    "verify": run_verify,
}


# ---------------------------------------------------------------------------
# entry point


def run(subcommand: str, config_path: str | None = None, overrides: Sequence[str] = (), *,
        seed: int | None = None, out: str | None = None, paths: int | None = None, fmt: str = "csv") -> int:
    """Load, run and write one subcommand; returns the process exit status."""
    if subcommand not in RUNNERS:
        raise ValueError(f"unknown subcommand {subcommand!r}")
    extra = list(overrides)
    if seed is not None:
        extra.append(f"seed={int(seed)}")
    if paths is not None:
        extra.append(f"paths={int(paths)}")
    if out is not None:
        extra.append(f"output={json.dumps(str(out))}")
    cfg = config.load(config_path, extra)
    cfg.setdefault("paths", 4000)
    tables = RUNNERS[subcommand](cfg)
    outdir = Path(cfg.get("output", "artifacts")) / subcommand
    outdir.mkdir(parents=True, exist_ok=True)
    for t in tables:
        emit(t, outdir / f"{t.name}.{fmt}", fmt)
    # resolved config, minus the output location so runs into different directories compare byte for byte
    resolved = {k: v for k, v in cfg.items() if k != "output"}
    (outdir / "config.json").write_text(json.dumps(resolved, sort_keys=True, indent=1) + "\n", encoding="utf-8")
    if subcommand == "verify":
        failed = [r for r in tables[0].rows if not r["passed"]]
        for r in tables[0].rows:
            print(f"{'PASS' if r['passed'] else 'FAIL'} {r['suite']}.{r['check']}")
        return EXIT_FAIL if failed else EXIT_OK
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="scenario JSON; defaults to the shipped reference config")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", help="output directory")
    common.add_argument("--paths", type=int, help="Monte Carlo paths")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE")
    common.add_argument("--format", dest="fmt", choices=("csv", "json"), default="csv")
    parser = argparse.ArgumentParser(prog="yieldlab", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        sub.add_parser(name, parents=[common])
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    started = time.perf_counter()
    try:
        status = run(args.command, args.config, args.overrides, seed=args.seed, out=args.out, paths=args.paths, fmt=args.fmt)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except YieldLabError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL
    print(f"{args.command} finished in {time.perf_counter() - started:.2f}s", file=sys.stderr)
    return status


if __name__ == "__main__":
    sys.exit(main())
