"""Batch command-line front end.

Subcommands: generate, solve, verify, search, lp, reproduce.  All reports are
JSON with exact rationals serialized as "p/q" strings and deterministic field
order, so identical inputs produce byte-identical reports; timing, when
requested with --verbose, goes to stderr and never into the report.

Exit codes: 0 success / verification passed, 1 verification or golden-value
failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from fractions import Fraction

from . import __version__
from .numeric import ZERO, format_rational, parse_rational
from .market import (
    Allocation,
    Bundling,
    Market,
    MarketError,
    Outcome,
    PricedBundling,
    ScaleError,
    welfare_opt,
)
from .lp_models import cap2_lp, config_lp, menu_lp
from .equilibrium import cbe_search, verify_cbe
from .welfare_algorithms import (
    budget_additive_cbe,
    general_m23,
    multiunit_cbe,
    multiunit_value_query_mode,
    subadditive_n_over_2,
    two_consumer_cbe,
)
from .revenue_algorithms import matroid_revenue_cbe
from . import instances
from .instances import (
    LoadError,
    NAMED_CASES,
    RANDOM_CLASSES,
    equal_revenue_values,
    gen_named,
    gen_random,
    load_market,
    market_to_dict,
    market_to_json,
)

ALGORITHMS = {
    "two-consumer": two_consumer_cbe,
    "subadditive-n2": subadditive_n_over_2,
    "multiunit": multiunit_cbe,
    "multiunit-value-queries": multiunit_value_query_mode,
    "general-m23": general_m23,
    "budget-additive": budget_additive_cbe,
}


def _digest(market: Market) -> str:
    return hashlib.sha256(market_to_json(market).encode("ascii")).hexdigest()[:16]


def _report(args, market, results) -> dict:
    return {
        "command": args._echo,
        "instance_digest": None if market is None else _digest(market),
        "results": results,
        "version": __version__,
    }


def _emit(args, report) -> None:
    text = json.dumps(report, indent=2) + "\n"
    if args.out:
        with open(args.out, "w", encoding="ascii") as handle:
            handle.write(text)
    else:
        sys.stdout.write(text)


def _load_input(args) -> Market:
    if not args.input:
        raise LoadError("this command requires --input")
    return load_market(args.input)


def _outcome_from_dict(node, market: Market) -> Outcome:
    parts = tuple(frozenset(b) for b in node["bundles"])
    prices = tuple(parse_rational(p) for p in node["prices"])
    sets = tuple(frozenset(s) for s in node["allocation"])
    if len(sets) != market.n:
        raise LoadError("outcome.allocation: expected one entry per consumer")
    return Outcome(PricedBundling(Bundling(parts), prices), Allocation(sets))


def cmd_generate(args) -> int:
    if args.random_class:
        market = gen_random(args.random_class, args.m, args.n, args.seed)
    else:
        market = gen_named(args.case, m=args.m, n=args.n, eps=args.epsilon, delta=args.delta)
    text = market_to_json(market)
    if args.out:
        with open(args.out, "w", encoding="ascii") as handle:
            handle.write(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_solve(args) -> int:
    market = _load_input(args)
    if args.algo == "matroid-revenue":
        outcome = matroid_revenue_cbe(market, args.setting, args.budget)
    elif args.algo in ("multiunit", "multiunit-value-queries") and args.epsilon is not None:
        outcome = ALGORITHMS[args.algo](market, args.epsilon, args.budget)
    else:
        outcome = ALGORITHMS[args.algo](market, args.budget)
    report = verify_cbe(market, outcome, args.budget)
    opt, _ = welfare_opt(market, args.budget)
    results = {
        "algorithm": args.algo,
        "outcome": outcome.describe(),
        "welfare": format_rational(report.welfare),
        "revenue": format_rational(report.revenue),
        "optimal_welfare": format_rational(opt),
        "verified": report.ok,
    }
    _emit(args, _report(args, market, results))
    return 0 if report.ok else 1


def cmd_verify(args) -> int:
    with open(args.input, "r", encoding="ascii") as handle:
        data = json.load(handle)
    if "market" not in data or "outcome" not in data:
        raise LoadError("verify input needs 'market' and 'outcome'")
    market = instances.market_from_dict(data["market"])
    outcome = _outcome_from_dict(data["outcome"], market)
    report = verify_cbe(market, outcome, args.budget)
    _emit(args, _report(args, market, report.describe()))
    return 0 if report.ok else 1


def cmd_search(args) -> int:
    market = _load_input(args)
    result = cbe_search(market, args.budget, with_revenue=args.with_revenue, jobs=args.jobs)
    rows = []
    for rec in result.records:
        row = {
            "bundles": [sorted(p) for p in rec.parts],
            "ce_exists": rec.ce_exists,
            "fractional": format_rational(rec.fractional),
            "integral": format_rational(rec.integral),
        }
        if rec.ce_exists:
            row["welfare"] = format_rational(rec.welfare)
            if rec.max_revenue is not None:
                row["max_revenue"] = format_rational(rec.max_revenue)
        rows.append(row)
    results = {
        "best_welfare": format_rational(result.best_welfare),
        "witness": result.witness.describe(),
        "bundlings": rows,
    }
    _emit(args, _report(args, market, results))
    return 0


def cmd_lp(args) -> int:
    if args.model == "menu":
        values = [parse_rational(v) for v in args.values]
        mech = menu_lp(values, args.cap)
        results = {
            "model": "menu",
            "cap": format_rational(mech.cap),
            "expected_revenue": format_rational(mech.expected_revenue),
            "menu": [
                {"probability": format_rational(x), "price": format_rational(p)}
                for x, p in mech.menu
            ],
        }
        _emit(args, _report(args, None, results))
        return 0
    market = _load_input(args)
    if args.model == "config":
        res = config_lp(market, args.budget)
        results = {
            "model": "config",
            "fractional": format_rational(res.fractional),
            "integral": format_rational(res.integral),
            "integral_flag": res.integral_flag,
            "witness": [sorted(p) for p in res.opt_allocation],
        }
    else:
        res = cap2_lp(market, args.budget)
        results = {
            "model": "cap2",
            "fractional": format_rational(res.fractional),
            "integral": format_rational(res.integral),
            "integral_flag": res.integral_flag,
            "dual_revenue": format_rational(res.pi0),
            "dual_payoffs": [format_rational(p) for p in res.pi],
        }
    _emit(args, _report(args, market, results))
    return 0


def _golden(checks) -> tuple[dict, bool]:
    rows = {}
    ok = True
    for name, actual, expected in checks:
        match = actual == expected
        ok = ok and match
        rows[name] = {
            "expected": expected if isinstance(expected, (bool, str)) else format_rational(expected),
            "actual": actual if isinstance(actual, (bool, str)) else format_rational(actual),
            "pass": match,
        }
    return rows, ok


def cmd_reproduce(args) -> int:
    case = args.case
    if case == "myerson":
        n = args.n
        values = equal_revenue_values(n)
        mech = menu_lp(values, Fraction(1))
        oracle = max(
            (v * sum(1 for u in values if u >= v) / len(values) for v in values),
        )
        rows, ok = _golden(
            [
                ("menu_revenue", mech.expected_revenue, Fraction(1, n)),
                ("reserve_oracle", oracle, Fraction(1, n)),
            ]
        )
        _emit(args, _report(args, None, {"case": case, "checks": rows}))
        return 0 if ok else 1

    eps, delta = args.epsilon, args.delta
    if case == "prop22":
        market = gen_named("prop22", eps=eps)
        opt, _ = welfare_opt(market)
        cfg = config_lp(market)
        search = cbe_search(market)
        rows, ok = _golden(
            [
                ("optimal_welfare", opt, Fraction(3)),
                ("config_fractional", cfg.fractional, 3 + eps / 2),
                ("ce_exists", cfg.integral_flag, False),
                ("best_cbe_welfare", search.best_welfare, 2 + eps),
            ]
        )
    elif case == "thm42":
        market = gen_named("thm42", m=args.m, eps=eps)
        opt, _ = welfare_opt(market)
        search = cbe_search(market)
        all_to_first = all(
            rec.outcome.items_of(0) == market.item_set
            for rec in search.records
            if rec.ce_exists
        )
        harmonic = (1 + eps) + sum((Fraction(1, i) for i in range(2, args.m + 1)), ZERO)
        rows, ok = _golden(
            [
                ("best_cbe_welfare", search.best_welfare, 2 + 2 * eps),
                ("all_units_to_first", all_to_first, True),
                ("optimal_welfare", opt, harmonic),
            ]
        )
    elif case == "table1":
        market = gen_named("table1", eps=eps, delta=delta)
        opt, _ = welfare_opt(market)
        cfg = config_lp(market)
        search = cbe_search(market)
        rows, ok = _golden(
            [
                ("optimal_welfare", opt, 5 - eps / 2 - delta),
                ("config_fractional", cfg.fractional, 5 - eps / 2),
                ("best_cbe_welfare", search.best_welfare, Fraction(4)),
            ]
        )
    elif case == "ex81":
        market = gen_named("ex81")
        res = cap2_lp(market)
        rows, ok = _golden(
            [
                ("cap2_fractional", res.fractional, Fraction(11)),
                ("cap2_integral", res.integral, Fraction(8)),
            ]
        )
    elif case == "ex82":
        market = gen_named("ex82")
        res = cap2_lp(market)
        rows, ok = _golden(
            [
                ("cap2_fractional", res.fractional, Fraction(4)),
                ("cap2_integral", res.integral, Fraction(7, 2)),
            ]
        )
    elif case == "revenue-lb":
        market = gen_named("revenue-lb", n=args.n)
        opt, _ = welfare_opt(market)
        search = cbe_search(market, with_revenue=True)
        best_rev = max(rec.max_revenue for rec in search.records if rec.ce_exists)
        harmonic = sum((Fraction(1, i) for i in range(1, args.n + 1)), ZERO)
        cap = 1 + max(
            market.valuation(i).value(market.item_set) for i in range(market.n)
        )
        rows, ok = _golden(
            [
                ("optimal_welfare", opt, harmonic),
                ("revenue_bounded", best_rev <= cap, True),
            ]
        )
    else:
        raise LoadError("unknown reproduce case %r" % (case,))
    _emit(args, _report(args, market, {"case": case, "checks": rows}))
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bequil",
        description="exact competitive bundling equilibria: generate, solve, verify, search",
    )
    parser.add_argument("--verbose", action="store_true", help="timing to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--input", help="market JSON file")
        p.add_argument("--out", help="write the report here instead of stdout")
        p.add_argument("--budget", type=int, default=2_000_000, help="enumeration guard")
        p.add_argument("--epsilon", type=parse_rational, default=Fraction(1, 10))
        p.add_argument("--delta", type=parse_rational, default=Fraction(1, 100))
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--jobs", type=int, default=1)
        p.add_argument("--m", type=int, default=4)
        p.add_argument("--n", type=int, default=4)

    p = sub.add_parser("generate", help="emit a market instance as JSON")
    common(p)
    p.add_argument("--case", choices=NAMED_CASES, default="prop22")
    p.add_argument("--random-class", choices=RANDOM_CLASSES)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("solve", help="run a CBE construction on a market")
    common(p)
    p.add_argument("--algo", choices=sorted(ALGORITHMS) + ["matroid-revenue"], required=True)
    p.add_argument("--setting", choices=["uniform", "common"], default="uniform")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("verify", help="verify a market/outcome pair")
    common(p)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("search", help="exhaustive CBE search over bundlings")
    common(p)
    p.add_argument("--with-revenue", action="store_true")
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("lp", help="solve one of the LP models")
    common(p)
    p.add_argument("--model", choices=["config", "cap2", "menu"], required=True)
    p.add_argument("--values", nargs="*", default=[], help="menu type values, p/q")
    p.add_argument("--cap", type=parse_rational, default=Fraction(1))
    p.set_defaults(func=cmd_lp)

    p = sub.add_parser("reproduce", help="re-check the benchmark golden values")
    common(p)
    p.add_argument(
        "--case",
        choices=list(NAMED_CASES) + ["myerson"],
        required=True,
    )
    p.set_defaults(func=cmd_reproduce)
    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    args._echo = " ".join(["bequil"] + argv)
    started = time.monotonic()
    try:
        code = args.func(args)
    except (LoadError, MarketError, ScaleError, FileNotFoundError) as exc:
        sys.stderr.write("error: %s\n" % exc)
        return 2 if isinstance(exc, (LoadError, FileNotFoundError)) else 1
    finally:
        if args.verbose:
            sys.stderr.write("elapsed: %.3fs\n" % (time.monotonic() - started))
    return code


if __name__ == "__main__":
    sys.exit(main())
