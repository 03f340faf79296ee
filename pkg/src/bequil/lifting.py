"""Lifting toolkit: bundle-merging lift, partial-CBE lift, high-demand lift, log binning.

The central operation, `fgl_lift`, takes any priced bundling (valuations may be
non-monotone) and returns a coarser priced bundling plus an allocation with
three exact properties, asserted on every output:

1. every output bundle's price is at least the sum of its constituents' input
   prices;
2. an unallocated output bundle is an untouched input bundle at its input
   price;
3. every consumer's assigned bundle set is a demand set under the output
   prices.

The default strategy is an iterative merge-and-raise loop: repeatedly pick the
lowest-index consumer holding nothing whose demand has positive payoff, merge a
canonically-first demanded set of current bundles into one bundle priced at the
constituent sum plus an increment, and displace the previous holders.  Bundles
never end up orphaned because only empty-handed consumers are granted.  The
loop leaves allocated consumers within one increment of exact demand, so the
finishing step fixes the final structure and re-solves the prices by an exact
feasibility LP (with demand rows added by separation); if that fails the
increment is halved and the loop reruns.  A fully exhaustive search over
coarsenings and allocations backs this up at very small sizes.  Either way
the output is only returned after the three properties above pass exactly.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Optional, Sequence

from .numeric import EQ, GE, ZERO, floor_log2, lp_solve, make_lp
from .market import (
    DEFAULT_BUDGET,
    Allocation,
    Bundling,
    Market,
    MarketError,
    Outcome,
    PricedBundling,
    Shifted,
    Valuation,
    bundle_payoff,
    canonical_subsets,
    check_budget,
    set_partitions,
)

EXHAUSTIVE_MAX_BUNDLES = 4
GRANT_CAP = 20_000
REPAIR_CAP = 500


class LiftError(RuntimeError):
    """A lift output violated one of its exact postconditions."""


class LiftExhausted(RuntimeError):
    """The lift search budget was exceeded without a certified output."""


# ---------------------------------------------------------------------------
# demand oracles
# ---------------------------------------------------------------------------


def brute_force_oracle(valuation: Valuation) -> Callable:
    """(parts, prices) -> (max payoff, canonically first maximizer)."""

    def best(parts, prices):
        top, top_set = None, None
        for chosen in canonical_subsets(range(len(parts))):
            p = bundle_payoff(valuation, parts, prices, chosen)
            if top is None or p > top:
                top, top_set = p, frozenset(chosen)
        return top, top_set

    return best


@dataclass
class _Node:
    constituents: frozenset  # input bundle indices
    items: frozenset
    price: Fraction
    holder: Optional[int]

    @property
    def key(self) -> int:
        return min(self.constituents)


def _sorted_nodes(nodes: list) -> list:
    return sorted(nodes, key=lambda nd: nd.key)


# ---------------------------------------------------------------------------
# the merge-and-raise lift
# ---------------------------------------------------------------------------


def fgl_lift(
    market: Market,
    pb: PricedBundling,
    valuations: Optional[Sequence[Valuation]] = None,
    delta: Optional[Fraction] = None,
    strategy: str = "auto",
    oracles: Optional[Sequence[Callable]] = None,
    budget: int = DEFAULT_BUDGET,
) -> tuple[PricedBundling, Allocation]:
    """Coarsen a priced bundling into one satisfying the three lift properties.

    `valuations` overrides the market's (used by the partial-CBE lift, whose
    shifted valuations are non-monotone).  `oracles`, when given, supply the
    per-consumer demand oracle; the default is brute force over bundle subsets.
    Raises LiftExhausted if no certified output is found within budget.
    """
    vals = list(valuations) if valuations is not None else [
        market.valuation(i) for i in range(market.n)
    ]
    oracle = list(oracles) if oracles is not None else [brute_force_oracle(v) for v in vals]
    if strategy not in ("auto", "iterative", "exhaustive"):
        raise MarketError("unknown lift strategy %r" % (strategy,))

    result = None
    if strategy in ("auto", "iterative"):
        d0 = delta if delta is not None else default_increment(market, pb, vals)
        result = _iterative_lift(pb, vals, oracle, d0, budget)
    if result is None and strategy in ("auto", "exhaustive"):
        if len(pb.parts) <= EXHAUSTIVE_MAX_BUNDLES:
            result = _exhaustive_lift(market.n, pb, vals, oracle)
    if result is None:
        raise LiftExhausted("no certified lift found for %d bundles" % len(pb.parts))
    out_pb, alloc = result
    check_lift_properties(pb, out_pb, alloc, vals)
    return out_pb, alloc


def default_increment(market: Market, pb: PricedBundling, vals: Sequence[Valuation]) -> Fraction:
    """1/2^20 times the smallest positive gap among bundle-union values and prices."""
    seen = set(pb.prices) | {ZERO}
    for v in vals:
        for chosen in canonical_subsets(range(len(pb.parts))):
            items: frozenset = frozenset()
            for b in chosen:
                items |= pb.parts[b]
            seen.add(v.value(items))
    ordered = sorted(seen)
    gap = min(
        (b - a for a, b in zip(ordered, ordered[1:]) if b > a),
        default=Fraction(1),
    )
    return gap / (1 << 20)


def _iterative_lift(pb, vals, oracle, delta, budget):
    for _ in range(60):
        state = _grant_loop(pb, vals, oracle, delta)
        if state is None:
            return None  # iteration cap: retrying with smaller delta cannot help
        nodes = state
        prices = _price_solve(pb, nodes, vals, oracle)
        if prices is not None:
            for nd, p in zip(nodes, prices):
                nd.price = p
            if not _exact_demand_ok(nodes, vals, oracle):
                return None  # separation stalled on a non-certifiable point
            return _state_output(nodes, len(vals))
        delta = delta / 2
    return None


def _grant_loop(pb, vals, oracle, delta):
    nodes = [
        _Node(frozenset({b}), part, price, None)
        for b, (part, price) in enumerate(zip(pb.parts, pb.prices))
    ]
    nodes = _sorted_nodes(nodes)
    holding = {i: None for i in range(len(vals))}
    grants = 0
    while True:
        granted = False
        for i in range(len(vals)):
            if holding[i] is not None:
                continue
            parts = [nd.items for nd in nodes]
            prices = [nd.price for nd in nodes]
            payoff, chosen = oracle[i](parts, prices)
            if payoff <= 0 or not chosen:
                continue
            merged = _Node(
                frozenset().union(*(nodes[b].constituents for b in chosen)),
                frozenset().union(*(nodes[b].items for b in chosen)),
                sum((nodes[b].price for b in chosen), ZERO) + delta,
                i,
            )
            for b in chosen:
                old = nodes[b].holder
                if old is not None:
                    holding[old] = None
            nodes = _sorted_nodes([nd for b, nd in enumerate(nodes) if b not in chosen] + [merged])
            holding[i] = merged
            grants += 1
            granted = True
            break
        if not granted:
            return nodes
        if grants > GRANT_CAP:
            return None


def _exact_demand_ok(nodes, vals, oracle) -> bool:
    parts = [nd.items for nd in nodes]
    prices = [nd.price for nd in nodes]
    own = _holdings(nodes, len(vals))
    for i in range(len(vals)):
        payoff = bundle_payoff(vals[i], parts, prices, own[i])
        best, _ = oracle[i](parts, prices)
        if payoff != best:
            return False
    return True


def _holdings(nodes, n) -> list[frozenset]:
    own = [set() for _ in range(n)]
    for b, nd in enumerate(nodes):
        if nd.holder is not None:
            own[nd.holder].add(b)
    return [frozenset(s) for s in own]


def _price_solve(pb, nodes, vals, oracle):
    """Canonical exact prices for the fixed (bundling, allocation), or None.

    Structural rows pin unallocated bundles to their input price and force
    every bundle's price to at least the constituent sum; violated demand rows
    are added by separation.  Among the feasible price vectors the total is
    minimized, so outputs are buyer-optimal given the structure.
    """
    k = len(nodes)
    own = _holdings(nodes, len(vals))
    rows = []
    for b, nd in enumerate(nodes):
        base = sum((pb.prices[c] for c in nd.constituents), ZERO)
        coeffs = [ZERO] * k
        coeffs[b] = Fraction(1)
        if nd.holder is None:
            rows.append((list(coeffs), EQ, nd.price))
        else:
            rows.append((list(coeffs), GE, base))
    parts = [nd.items for nd in nodes]
    objective = [Fraction(1)] * k
    for _ in range(REPAIR_CAP):
        sol = lp_solve(make_lp("min", objective, rows))
        if sol.status != "optimal":
            return None
        prices = list(sol.primal)
        added = False
        for i in range(len(vals)):
            payoff = bundle_payoff(vals[i], parts, prices, own[i])
            best, chosen = oracle[i](parts, prices)
            if payoff < best:
                # v_i(own) - p(own) >= v_i(chosen) - p(chosen), as a row in p
                coeffs = [ZERO] * k
                for b in own[i]:
                    coeffs[b] -= 1
                for b in chosen:
                    coeffs[b] += 1
                rhs = vals[i].value(_union(parts, chosen)) - vals[i].value(_union(parts, own[i]))
                rows.append((coeffs, GE, rhs))
                added = True
        if not added:
            return prices
    return None


def _union(parts, chosen) -> frozenset:
    out: frozenset = frozenset()
    for b in chosen:
        out |= parts[b]
    return out


def _state_output(nodes, n) -> tuple[PricedBundling, Allocation]:
    out_pb = PricedBundling(
        Bundling(tuple(nd.items for nd in nodes)), tuple(nd.price for nd in nodes)
    )
    return out_pb, Allocation(tuple(_holdings(nodes, n)))


def _exhaustive_lift(n, pb, vals, oracle):
    """First certified (coarsening, allocation, prices) in canonical order."""
    b = len(pb.parts)
    for blocks in set_partitions(tuple(range(b))):
        nodes = [
            _Node(
                frozenset(block),
                _union(pb.parts, block),
                sum((pb.prices[c] for c in block), ZERO),
                None,
            )
            for block in blocks
        ]
        nodes = _sorted_nodes(nodes)
        choices = []
        for nd in nodes:
            allowed = list(range(n))
            if len(nd.constituents) == 1:
                allowed = [None] + allowed
            choices.append(allowed)
        for assignment in itertools.product(*choices):
            holders = [h for h in assignment if h is not None]
            if len(holders) != len(set(holders)):
                continue
            for nd, h in zip(nodes, assignment):
                nd.holder = h
            prices = _price_solve(pb, nodes, vals, oracle)
            if prices is None:
                continue
            for nd, p in zip(nodes, prices):
                nd.price = p
            if _exact_demand_ok(nodes, vals, oracle):
                return _state_output(nodes, n)
    return None


def check_lift_properties(
    input_pb: PricedBundling,
    out_pb: PricedBundling,
    alloc: Allocation,
    vals: Sequence[Valuation],
) -> dict:
    """Assert the three lift properties exactly; returns the constituent map."""
    constituents = {}
    for b_out, part in enumerate(out_pb.parts):
        inside = frozenset(
            b for b, inp in enumerate(input_pb.parts) if inp <= part
        )
        if _union(input_pb.parts, inside) != part:
            raise LiftError("output bundle %d is not a union of input bundles" % b_out)
        constituents[b_out] = inside
    covered = frozenset().union(*constituents.values()) if constituents else frozenset()
    if covered != frozenset(range(len(input_pb.parts))):
        raise LiftError("output bundling does not cover the input bundles")

    allocated = alloc.allocated_indices()
    for b_out, inside in constituents.items():
        base = sum((input_pb.prices[c] for c in inside), ZERO)
        if out_pb.prices[b_out] < base:
            raise LiftError("price of output bundle %d fell below constituent sum" % b_out)
        if b_out not in allocated:
            if len(inside) != 1:
                raise LiftError("unallocated output bundle %d is merged" % b_out)
            (c,) = inside
            if out_pb.prices[b_out] != input_pb.prices[c]:
                raise LiftError("unallocated bundle %d changed price" % b_out)

    parts, prices = out_pb.parts, out_pb.prices
    for i, valuation in enumerate(vals):
        own = alloc.bundle_sets[i]
        payoff = bundle_payoff(valuation, parts, prices, own)
        for chosen in canonical_subsets(range(len(parts))):
            if bundle_payoff(valuation, parts, prices, chosen) > payoff:
                raise LiftError("consumer %d is not on a demand set" % i)
    return constituents


# ---------------------------------------------------------------------------
# partial-CBE and high-demand lifts
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PartialCbe:
    """A CBE with respect to `consumers`; everyone else is treated as zero-valued."""

    outcome: Outcome
    consumers: frozenset

    def validate(self, market: Market, budget: int = DEFAULT_BUDGET) -> None:
        out = self.outcome
        if not out.priced.bundling.covers(market):
            raise MarketError("partial CBE bundling must cover all items")
        for i in range(market.n):
            if i not in self.consumers and out.allocation.bundle_sets[i]:
                raise MarketError("consumer outside the partial set holds a bundle")
        if out.allocation.allocated_indices() != frozenset(range(len(out.priced.parts))):
            raise MarketError("partial CBE must clear the market over its consumers")
        parts, prices = out.priced.parts, out.priced.prices
        check_budget(len(self.consumers) * (1 << len(parts)), budget, "partial CBE check")
        for i in sorted(self.consumers):
            valuation = market.valuation(i)
            payoff = bundle_payoff(valuation, parts, prices, out.allocation.bundle_sets[i])
            for chosen in canonical_subsets(range(len(parts))):
                if bundle_payoff(valuation, parts, prices, chosen) > payoff:
                    raise MarketError("partial CBE violates profit maximization")

    @property
    def revenue(self) -> Fraction:
        return sum(self.outcome.priced.prices, ZERO)


def lift_partial(market: Market, partial: PartialCbe, budget: int = DEFAULT_BUDGET) -> Outcome:
    """Lift a partial CBE to a full one with welfare >= the partial's revenue.

    Realizes the vanishing-shift argument: each consumer in the partial gets a
    bonus eps on their assigned item set (making their choice strictly unique),
    the shifted market is lifted, and once the lifted structure repeats on two
    consecutive eps values it is frozen and certified at eps = 0 by an exact
    price-feasibility solve.
    """
    from .equilibrium import verify_cbe

    partial.validate(market, budget)
    target_revenue = partial.revenue

    report = verify_cbe(market, partial.outcome, budget)
    if report.ok:
        return partial.outcome

    pb = partial.outcome.priced
    true_vals = [market.valuation(i) for i in range(market.n)]
    previous = None
    for t in range(31):
        eps = Fraction(1, 1 << t)
        shifted = []
        for i in range(market.n):
            items = partial.outcome.items_of(i)
            if i in partial.consumers and items:
                shifted.append(Shifted(true_vals[i], items, eps))
            else:
                shifted.append(true_vals[i])
        out_pb, alloc = fgl_lift(market, pb, valuations=shifted, budget=budget)
        if alloc.allocated_indices() != frozenset(range(len(out_pb.parts))):
            raise LiftError("shifted lift left a bundle unallocated")
        signature = (out_pb.parts, alloc.bundle_sets)
        if signature == previous:
            outcome = _freeze_at_zero(market, pb, out_pb, alloc, true_vals, budget)
            if outcome is not None:
                if outcome.welfare(market) < target_revenue:
                    raise LiftError("lifted welfare fell below the partial revenue")
                return outcome
        previous = signature
    raise LiftExhausted("partial lift did not stabilize")


def _freeze_at_zero(market, input_pb, out_pb, alloc, vals, budget):
    """Exact prices for the lifted structure under the true valuations."""
    from .equilibrium import verify_cbe

    nodes = []
    for b_out, part in enumerate(out_pb.parts):
        inside = frozenset(b for b, inp in enumerate(input_pb.parts) if inp <= part)
        holder = None
        for i in range(market.n):
            if b_out in alloc.bundle_sets[i]:
                holder = i
        nodes.append(_Node(inside, part, out_pb.prices[b_out], holder))
    nodes = _sorted_nodes(nodes)
    oracle = [brute_force_oracle(v) for v in vals]
    prices = _price_solve(input_pb, nodes, vals, oracle)
    if prices is None:
        return None
    for nd, p in zip(nodes, prices):
        nd.price = p
    fixed_pb, fixed_alloc = _state_output(nodes, market.n)
    check_lift_properties(input_pb, fixed_pb, fixed_alloc, vals)
    outcome = Outcome(fixed_pb, fixed_alloc)
    report = verify_cbe(market, outcome, budget)
    if not report.ok:
        return None
    return outcome


def high_demand_holds(market: Market, pb: PricedBundling) -> bool:
    """Each bundle strictly profitable for at least as many consumers as bundles."""
    count = len(pb.parts)
    for part, price in zip(pb.parts, pb.prices):
        backers = sum(
            1 for i in range(market.n) if market.valuation(i).value(part) - price > 0
        )
        if backers < count:
            return False
    return True


def lift_high_demand(market: Market, pb: PricedBundling, budget: int = DEFAULT_BUDGET,
                     oracles: Optional[Sequence[Callable]] = None) -> Outcome:
    """Lift a high-demand priced bundling into a CBE with welfare >= its total price."""
    from .equilibrium import verify_cbe

    if not high_demand_holds(market, pb):
        raise MarketError("high-demand precondition fails")
    out_pb, alloc = fgl_lift(market, pb, budget=budget, oracles=oracles)
    if alloc.allocated_indices() != frozenset(range(len(out_pb.parts))):
        raise LiftError("a high-demand bundle was left unallocated")
    outcome = Outcome(out_pb, alloc)
    report = verify_cbe(market, outcome, budget)
    if not report.ok:
        raise LiftError("high-demand lift failed verification")
    total = sum(pb.prices, ZERO)
    if report.welfare < total:
        raise LiftError("lifted welfare fell below the aggregate price")
    return outcome


# ---------------------------------------------------------------------------
# logarithmic binning
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LogBinResult:
    threshold: Optional[Fraction]  # v with survivors in [v, 2v); size for by-size mode
    filtered: tuple[frozenset, ...]
    alpha: Fraction
    survivors: int


def dyadic_index(value: Fraction, base: Fraction) -> int:
    """k with base*2^k <= value < base*2^(k+1); requires value >= base > 0."""
    q = value / base
    k = max((q.numerator // q.denominator).bit_length() - 1, 0)
    while q >= (1 << (k + 1)):
        k += 1
    while q < (1 << k):
        k -= 1
    return k


def log_bin(
    market: Market, allocation: Sequence[frozenset], mode: str = "by-value"
) -> LogBinResult:
    """Keep one dyadic bin of allocation parts carrying the most value.

    by-value: drop parts below W/(2 mu), bin by part value, keep the heaviest
    bin; survivors' values lie in [v, 2v) and their total is at least W/alpha
    with alpha = 2(floor(log2 mu) + 2), an exact-rational strengthening of the
    logarithmic guarantee (the dyadic bins over [W/2mu, W] number at most
    alpha/2).  by-size: same with bundle sizes instead of values and m in
    place of mu; nothing is dropped.
    """
    if mode not in ("by-value", "by-size"):
        raise MarketError("unknown binning mode %r" % (mode,))
    parts = tuple(frozenset(p) for p in allocation)
    values = [
        market.valuation(i).value(part) if part else ZERO
        for i, part in enumerate(parts)
    ]
    total = sum(values, ZERO)
    scale = market.mu if mode == "by-value" else market.m
    alpha = Fraction(2 * (floor_log2(scale) + 2))
    empty = tuple(frozenset() for _ in parts)
    if mode == "by-value":
        if total == 0:
            return LogBinResult(None, empty, alpha, 0)
        floor_value = total / (2 * market.mu)
        keyed = [
            (i, values[i], dyadic_index(values[i], floor_value))
            for i, part in enumerate(parts)
            if part and values[i] >= floor_value
        ]
    else:
        keyed = [
            (i, values[i], floor_log2(len(part)))
            for i, part in enumerate(parts)
            if part
        ]
        if not keyed:
            return LogBinResult(None, empty, alpha, 0)
    bins: dict[int, Fraction] = {}
    for _, value, k in keyed:
        bins[k] = bins.get(k, ZERO) + value
    best_k = min((k for k in bins), key=lambda k: (-bins[k], k))
    chosen = [(i, value) for i, value, k in keyed if k == best_k]
    filtered = tuple(
        parts[i] if i in {c for c, _ in chosen} else frozenset() for i in range(len(parts))
    )
    kept_total = sum((value for _, value in chosen), ZERO)
    if kept_total * alpha < total:
        raise LiftError("binning guarantee failed")  # unreachable by the counting bound
    if mode == "by-value":
        threshold = min(value for _, value in chosen)
        for _, value in chosen:
            if not (threshold <= value < 2 * threshold):
                raise LiftError("binned values escape [v, 2v)")
    else:
        threshold = Fraction(1 << best_k)
        for i, _ in chosen:
            if not (threshold <= len(parts[i]) < 2 * threshold):
                raise LiftError("binned sizes escape [k, 2k)")
    return LogBinResult(threshold, filtered, alpha, len(chosen))
