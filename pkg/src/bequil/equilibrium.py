"""Equilibrium verification, CE existence, and exhaustive CBE search.

`verify_cbe` is the single source of truth for what counts as a competitive
bundling equilibrium here: every consumer's assigned bundle set must be a
brute-force demand set, and clearance is the strict condition that all bundles
are allocated.  `ce_exists` decides competitive-equilibrium existence through
configuration-LP integrality and, on success, returns a verified equilibrium
whose prices are the buyer-optimal (revenue-minimal) dual solution, which makes
the output canonical.  `cbe_search` enumerates every bundling of the items in
restricted-growth order and reports, per bundling, whether the induced market
has a CE and at what welfare, together with the best verified witness.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, Optional, Sequence

from .numeric import GE, LE, ZERO, make_lp, lp_solve
from .market import (
    DEFAULT_BUDGET,
    Allocation,
    Bundling,
    Consumer,
    Market,
    MarketError,
    Outcome,
    PricedBundling,
    bell_number,
    bundle_payoff,
    canonical_subsets,
    check_budget,
    induced_market,
    set_partitions,
    singleton_priced_bundling,
)
from .lp_models import ConfigLPResult, config_lp


@dataclass(frozen=True)
class ConsumerCheck:
    ok: bool
    payoff: Fraction
    best_payoff: Fraction
    better_alternative: Optional[frozenset]  # bundle indices, canonical first


@dataclass(frozen=True)
class VerificationReport:
    ok: bool
    consumers: tuple[ConsumerCheck, ...]
    clearance_ok: bool
    unallocated_items: frozenset
    welfare: Fraction
    revenue: Fraction

    def describe(self) -> dict:
        from .numeric import format_rational

        return {
            "pass": self.ok,
            "clearance": self.clearance_ok,
            "unallocated_items": sorted(self.unallocated_items),
            "welfare": format_rational(self.welfare),
            "revenue": format_rational(self.revenue),
            "consumers": [
                {
                    "profit_maximizing": c.ok,
                    "payoff": format_rational(c.payoff),
                    "best_payoff": format_rational(c.best_payoff),
                    "better_alternative": None
                    if c.better_alternative is None
                    else sorted(c.better_alternative),
                }
                for c in self.consumers
            ],
        }


def verify_cbe(market: Market, outcome: Outcome, budget: int = DEFAULT_BUDGET) -> VerificationReport:
    """Exact check of profit maximization (brute force) and strict clearance."""
    parts = outcome.priced.parts
    prices = outcome.priced.prices
    check_budget(market.n * (1 << len(parts)), budget, "CBE verification")

    checks = []
    for i in range(market.n):
        valuation = market.valuation(i)
        own = outcome.allocation.bundle_sets[i]
        payoff = bundle_payoff(valuation, parts, prices, own)
        best, best_set = None, None
        for chosen in canonical_subsets(range(len(parts))):
            p = bundle_payoff(valuation, parts, prices, chosen)
            if best is None or p > best:
                best, best_set = p, frozenset(chosen)
        ok = payoff == best
        checks.append(ConsumerCheck(ok, payoff, best, None if ok else best_set))

    allocated_items: frozenset = frozenset()
    for i in range(market.n):
        allocated_items |= outcome.items_of(i)
    unallocated = market.item_set - allocated_items
    clearance = outcome.priced.bundling.covers(market) and not unallocated

    return VerificationReport(
        ok=clearance and all(c.ok for c in checks),
        consumers=tuple(checks),
        clearance_ok=clearance,
        unallocated_items=unallocated,
        welfare=outcome.welfare(market),
        revenue=outcome.revenue(market),
    )


def verify_ce(
    market: Market,
    item_prices: Mapping[str, Fraction],
    allocation: Sequence[frozenset],
    budget: int = DEFAULT_BUDGET,
) -> VerificationReport:
    """Competitive-equilibrium check: singleton bundling special case of verify_cbe."""
    outcome = ce_outcome(market, item_prices, allocation)
    return verify_cbe(market, outcome, budget)


def ce_outcome(
    market: Market, item_prices: Mapping[str, Fraction], allocation: Sequence[frozenset]
) -> Outcome:
    pb = singleton_priced_bundling(market, item_prices)
    index_of = {label: k for k, label in enumerate(market.items)}
    bundle_sets = tuple(frozenset(index_of[j] for j in part) for part in allocation)
    return Outcome(pb, Allocation(bundle_sets))


def extreme_walrasian_prices(
    market: Market, config: ConfigLPResult, maximize_revenue: bool = False
) -> tuple[Fraction, dict, tuple[Fraction, ...]]:
    """Revenue-extreme dual optimum of the configuration LP.

    Returns (sum of prices, item price map, consumer payoffs).  The price
    vector is an optimal dual of the configuration LP minimizing (default) or
    maximizing total price.  Solved through the LP whose row duals are exactly
    (u, q), which keeps the tableau row-light; the returned pair is re-checked
    against dual feasibility and strong duality before being returned.
    """
    n, m = market.n, market.m
    items = market.items
    opt = config.fractional
    cols = [(i, mask) for i in range(n) for mask in range(1, 1 << m)]
    csign = Fraction(-1) if maximize_revenue else Fraction(1)

    objective = [market.valuation(i).value(_mask_items(items, mask)) for i, mask in cols]
    objective += [opt, -opt]  # split free variable t = t1 - t2
    rows = []
    for i in range(n):
        coeffs = [Fraction(1) if ci == i else ZERO for ci, _ in cols] + [Fraction(1), Fraction(-1)]
        rows.append((coeffs, LE, ZERO))
    for k in range(m):
        coeffs = [Fraction(1) if mask >> k & 1 else ZERO for _, mask in cols]
        coeffs += [Fraction(1), Fraction(-1)]
        rows.append((coeffs, LE, csign))
    sol = lp_solve(make_lp("max", objective, rows))
    if sol.status != "optimal":
        raise MarketError("price-extremum LP must be solvable")

    payoffs = tuple(sol.dual[:n])
    prices = {items[k]: sol.dual[n + k] for k in range(m)}
    total = sum(prices.values(), ZERO)

    # Independent re-check: (payoffs, prices) is a dual optimum of the config LP.
    if any(p < 0 for p in prices.values()) or any(u < 0 for u in payoffs):
        raise MarketError("extreme dual has negative entries")
    for i, mask in cols:
        value = market.valuation(i).value(_mask_items(items, mask))
        covered = payoffs[i] + sum(
            (prices[items[k]] for k in range(m) if mask >> k & 1), ZERO
        )
        if covered < value:
            raise MarketError("extreme dual violates dual feasibility")
    if sum(payoffs, ZERO) + total != opt:
        raise MarketError("extreme dual misses strong duality")
    if csign * total != sol.value:
        raise MarketError("extreme dual objective mismatch")
    return total, prices, payoffs


def _mask_items(items: Sequence[str], mask: int) -> frozenset:
    return frozenset(items[k] for k in range(len(items)) if mask >> k & 1)


@dataclass(frozen=True)
class CeResult:
    exists: bool
    config: ConfigLPResult
    outcome: Optional[Outcome] = None
    item_prices: Optional[dict] = None

    @property
    def certificate(self) -> tuple[Fraction, Fraction]:
        """(fractional, integral) pair; fractional > integral witnesses nonexistence."""
        return (self.config.fractional, self.config.integral)


def ce_exists(market: Market, budget: int = DEFAULT_BUDGET) -> CeResult:
    """CE existence via configuration-LP integrality.

    On success the returned equilibrium uses the canonical welfare_opt witness
    and buyer-optimal prices, and has been verified exactly.
    """
    config = config_lp(market, budget)
    if not config.integral_flag:
        return CeResult(False, config)
    _, prices, _ = extreme_walrasian_prices(market, config, maximize_revenue=False)
    outcome = ce_outcome(market, prices, config.opt_allocation)
    report = verify_cbe(market, outcome, budget)
    if not report.ok:
        raise MarketError("constructed CE failed verification")
    if report.welfare != config.integral:
        raise MarketError("constructed CE is not welfare-optimal")
    return CeResult(True, config, outcome, prices)


@dataclass(frozen=True)
class BundlingRecord:
    parts: tuple[frozenset, ...]
    ce_exists: bool
    welfare: Optional[Fraction]  # induced optimum when a CE exists
    outcome: Optional[Outcome]  # mapped back to original items
    max_revenue: Optional[Fraction]
    fractional: Fraction
    integral: Fraction


@dataclass(frozen=True)
class CbeSearchResult:
    best_welfare: Fraction
    witness: Outcome
    records: tuple[BundlingRecord, ...]
    best_indices: tuple[int, ...]  # all records attaining best_welfare


def _search_one(market: Market, parts: tuple[frozenset, ...], budget: int, with_revenue: bool):
    bundling = Bundling(parts)
    induced = induced_market(market, bundling)
    ce = ce_exists(induced, budget)
    if not ce.exists:
        return BundlingRecord(
            parts, False, None, None, None, ce.config.fractional, ce.config.integral
        )
    # map the induced CE back to the original items
    k = len(parts)
    prices = tuple(ce.item_prices[induced.items[b]] for b in range(k))
    index_of = {induced.items[b]: b for b in range(k)}
    bundle_sets = tuple(
        frozenset(index_of[label] for label in ce.outcome.items_of(i))
        for i in range(market.n)
    )
    outcome = Outcome(PricedBundling(bundling, prices), Allocation(bundle_sets))
    max_rev = None
    if with_revenue:
        max_rev, _, _ = extreme_walrasian_prices(induced, ce.config, maximize_revenue=True)
    return BundlingRecord(
        parts, True, ce.config.integral, outcome, max_rev,
        ce.config.fractional, ce.config.integral,
    )


def cbe_search(
    market: Market,
    budget: int = DEFAULT_BUDGET,
    with_revenue: bool = False,
    jobs: int = 1,
) -> CbeSearchResult:
    """Exhaustive best-CBE search over all bundlings of the items.

    For each set partition (in restricted-growth order) the induced market is
    tested for CE existence; the grand bundle always admits one, so a witness
    always exists.  The per-bundling work items are independent; `jobs` > 1
    runs them in worker processes and merges in canonical order.
    """
    check_budget(bell_number(market.m) * market.n * (1 << market.m), budget, "CBE search")
    partitions = [
        tuple(frozenset(block) for block in p) for p in set_partitions(market.items)
    ]
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=jobs) as pool:
            records = list(
                pool.map(
                    _search_one_star,
                    [(market, parts, budget, with_revenue) for parts in partitions],
                )
            )
    else:
        records = [_search_one(market, parts, budget, with_revenue) for parts in partitions]

    best = None
    for rec in records:
        if rec.ce_exists and (best is None or rec.welfare > best):
            best = rec.welfare
    best_indices = tuple(
        k for k, rec in enumerate(records) if rec.ce_exists and rec.welfare == best
    )
    witness = records[best_indices[0]].outcome
    return CbeSearchResult(best, witness, tuple(records), best_indices)


def _search_one_star(args):
    return _search_one(*args)


def restrict_to_consumers(market: Market, kept: Sequence[int]) -> Market:
    """Market with the valuations of consumers outside `kept` zeroed out."""
    from .market import Additive

    kept_set = set(kept)
    consumers = []
    for i, consumer in enumerate(market.consumers):
        if i in kept_set:
            consumers.append(consumer)
        else:
            consumers.append(
                Consumer(consumer.name, Additive({j: ZERO for j in market.items}))
            )
    return Market(market.items, tuple(consumers))
