"""Revenue-guaranteeing CBE constructions for weighted matroid rank markets.

Both pipelines start from a competitive equilibrium with a reserve price: an
extra additive consumer who values every item at a binning value v is added,
the augmented market (still gross substitutes) is solved exactly, and among
its optimal allocations one maximizing the number of items at the original
consumers is chosen.  Items held by the extra consumer are "unsold at price
v"; everything else is priced at least v, so the revenue of the sold items
already carries a logarithmic fraction of the optimal welfare.  The uniform
setting then re-solves an exhausting assignment for the rank-saturated side
and lifts a partial equilibrium; the common-matroid setting runs the
extra-consumer iteration, moving one reserve item per step while keeping the
three structural price properties intact, and converts once the reserve
bundle empties or its price hits zero.

Every step re-asserts its invariants exactly, and every logarithmic factor is
the integer 2(floor(log2 m) + 2) so all comparisons stay rational.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Optional, Sequence

from .numeric import EQ, LE, ZERO, floor_log2, lp_solve, make_lp
from .market import (
    DEFAULT_BUDGET,
    Additive,
    Allocation,
    Bundling,
    Consumer,
    Market,
    MarketError,
    Outcome,
    PricedBundling,
    UniformMatroid,
    WeightedMatroidRank,
    canonical_key,
    canonical_subsets,
    check_budget,
    submasks,
    welfare_opt,
)
from .lifting import PartialCbe, dyadic_index, lift_partial
from .equilibrium import verify_cbe, verify_ce, extreme_walrasian_prices
from .lp_models import config_lp


def log_denominator(m: int) -> Fraction:
    """The reconstructed revenue denominator 4 (floor(log2 m) + 2)."""
    return Fraction(4 * (floor_log2(m) + 2))


def _require_wmr(market: Market) -> None:
    for i in range(market.n):
        if not isinstance(market.valuation(i), WeightedMatroidRank):
            raise MarketError("revenue pipeline needs weighted matroid rank valuations")


def _greedy_realizer(valuation: WeightedMatroidRank, items: frozenset) -> frozenset:
    """A max-weight independent subset realizing v(items), by matroid greedy."""
    order = sorted(items, key=lambda j: (-valuation.weights[j], j))
    chosen: set = set()
    for item in order:
        if valuation.matroid.independent(frozenset(chosen | {item})):
            chosen.add(item)
    return frozenset(chosen)


@dataclass(frozen=True)
class ReserveEquilibrium:
    reserve: Fraction
    item_prices: dict
    allocation: tuple[frozenset, ...]  # original consumers only
    unallocated: frozenset  # items held by the extra consumer
    opt: Fraction
    bin_count: int  # M_v, the surviving per-item pairs


def reserve_equilibrium(market: Market, budget: int = DEFAULT_BUDGET) -> ReserveEquilibrium:
    """Competitive equilibrium with reserve v extracting >= OPT / (4(log2 m + 2)).

    v comes from per-item dyadic binning of an optimal allocation's realizing
    weights; the equilibrium is the augmented-market one with the most items
    sold to original consumers, with the reserve items re-priced to exactly v.
    """
    _require_wmr(market)
    opt, witness = welfare_opt(market, budget)
    if opt == 0:
        prices = {j: ZERO for j in market.items}
        return ReserveEquilibrium(ZERO, prices, witness, frozenset(), opt, 0)

    pairs = []
    for i in range(market.n):
        realizer = _greedy_realizer(market.valuation(i), witness[i])
        for j in realizer:
            w = market.valuation(i).weights[j]
            if w > 0:
                pairs.append((i, j, w))
    floor_value = opt / (2 * len(pairs))
    keyed = [
        (i, j, w, dyadic_index(w, floor_value)) for i, j, w in pairs if w >= floor_value
    ]
    bins: dict[int, Fraction] = {}
    for _, _, w, k in keyed:
        bins[k] = bins.get(k, ZERO) + w
    best_k = min(bins, key=lambda k: (-bins[k], k))
    chosen = [(i, j, w) for i, j, w, k in keyed if k == best_k]
    v = min(w for _, _, w in chosen)
    m_v = len(chosen)
    log_factor = Fraction(2 * (floor_log2(market.m) + 2))
    if 2 * v * m_v * log_factor < opt:
        raise MarketError("per-item binning lost its logarithmic chain")

    augmented = _augmented(market, v)
    aug_opt, aug_witness = _opt_with_max_original_items(augmented, market.n, budget)
    config = config_lp(augmented, budget)
    if config.fractional != aug_opt:
        raise MarketError("augmented matroid market must have an integral optimum")
    _, prices, _ = extreme_walrasian_prices(augmented, config)
    unsold = aug_witness[market.n]
    prices = dict(prices)
    for j in unsold:
        if prices[j] > v:
            raise MarketError("reserve item priced above the reserve")
        prices[j] = v
    for j in market.item_set - unsold:
        if prices[j] < v:
            raise MarketError("sold item priced below the reserve")
    report = verify_ce(augmented, prices, aug_witness, budget)
    if not report.ok:
        raise MarketError("reserve equilibrium failed verification")

    allocation = aug_witness[: market.n]
    sold = sum(len(part) for part in allocation)
    if sold < m_v:
        raise MarketError("fewer items sold than the binning guarantees")
    revenue = sum((prices[j] for part in allocation for j in part), ZERO)
    if revenue * log_denominator(market.m) < opt:
        raise MarketError("reserve equilibrium lost its revenue chain")
    return ReserveEquilibrium(v, prices, allocation, unsold, opt, m_v)


def _augmented(market: Market, v: Fraction) -> Market:
    extra = Consumer("reserve", Additive({j: v for j in market.items}))
    return Market(market.items, market.consumers + (extra,))


def _opt_with_max_original_items(market: Market, n_orig: int, budget: int):
    """Max welfare, tie-broken by most items at the first n_orig consumers."""
    n, m = market.n, market.m
    check_budget(n * 3**m, budget, "augmented welfare maximization")
    items = market.items
    memo: list[dict] = [dict() for _ in range(n)]

    def score(i, mask):
        count = bin(mask).count("1") if i < n_orig else 0
        return (market.valuation(i).value(_mask_items(items, mask)), count)

    def best(i, remaining):
        if i == n - 1:
            return score(i, remaining)
        if remaining in memo[i]:
            return memo[i][remaining]
        out = None
        for sub in submasks(remaining):
            v1, c1 = score(i, sub)
            v2, c2 = best(i + 1, remaining & ~sub)
            cand = (v1 + v2, c1 + c2)
            if out is None or cand > out:
                out = cand
        memo[i][remaining] = out
        return out

    full = (1 << m) - 1
    opt = best(0, full)
    allocation = []
    remaining = full
    for i in range(n - 1):
        target = best(i, remaining)
        for sub in sorted(submasks(remaining), key=lambda s: canonical_key(_bits(s))):
            v1, c1 = score(i, sub)
            v2, c2 = best(i + 1, remaining & ~sub)
            if (v1 + v2, c1 + c2) == target:
                allocation.append(_mask_items(items, sub))
                remaining &= ~sub
                break
    allocation.append(_mask_items(items, remaining))
    return opt[0], tuple(allocation)


def _mask_items(items, mask) -> frozenset:
    return frozenset(items[k] for k in range(len(items)) if mask >> k & 1)


def _bits(mask: int) -> tuple[int, ...]:
    return tuple(k for k in range(mask.bit_length()) if mask >> k & 1)


# ---------------------------------------------------------------------------
# uniform matroids
# ---------------------------------------------------------------------------


def _grand_zero_outcome(market: Market) -> Outcome:
    sets = tuple(frozenset({0}) if i == 0 else frozenset() for i in range(market.n))
    outcome = Outcome(
        PricedBundling(Bundling((market.item_set,)), (ZERO,)), Allocation(sets)
    )
    report = verify_cbe(market, outcome)
    if not report.ok:
        raise MarketError("zero-value market rejected the trivial outcome")
    return outcome


def uniform_matroid_revenue_cbe(market: Market, budget: int = DEFAULT_BUDGET) -> Outcome:
    """Revenue >= OPT / (8 (floor(log2 m) + 2)) for uniform-matroid markets."""
    _require_wmr(market)
    ranks = []
    for i in range(market.n):
        matroid = market.valuation(i).matroid
        if not isinstance(matroid, UniformMatroid):
            raise MarketError("uniform pipeline needs uniform matroids")
        ranks.append(matroid.k)
    res = reserve_equilibrium(market, budget)
    if res.opt == 0:
        return _grand_zero_outcome(market)
    v = res.reserve
    exhausted = [i for i in range(market.n) if len(res.allocation[i]) == ranks[i]]
    slack = [i for i in range(market.n) if i not in exhausted]
    sold = frozenset().union(*res.allocation) if market.n else frozenset()
    count_e = sum(len(res.allocation[i]) for i in exhausted)

    # Split by sold-item count; the exhausted side's chain rebuilds prices from
    # a rank-exhausting assignment, the slack side keeps the reserve prices.
    if 2 * count_e >= len(sold):
        partial = _case_exhausted(market, exhausted, ranks, v, budget)
    else:
        partial = _case_slack(market, res, exhausted, slack, budget)
    target = res.opt / (2 * log_denominator(market.m))
    if partial.revenue < target:
        raise MarketError("partial equilibrium lost the revenue chain")
    outcome = lift_partial(market, partial, budget)
    if outcome.revenue(market) < partial.revenue:
        raise MarketError("lift decreased revenue")
    return outcome


def _case_exhausted(market, exhausted, ranks, v, budget):
    if not exhausted:
        raise MarketError("exhausted-side case with no exhausted consumers")
    assignment, prices = _exhausting_assignment(market, exhausted, ranks, v, budget)
    i_max = min(exhausted, key=lambda i: (-ranks[i], i))
    leftover = market.item_set - frozenset().union(*(assignment[i] for i in exhausted))
    parts = []
    bundle_prices = []
    order = sorted(exhausted)
    sets = [frozenset() for _ in range(market.n)]
    for pos, i in enumerate(order):
        items = assignment[i] | (leftover if i == i_max else frozenset())
        parts.append(items)
        bundle_prices.append(sum((prices[j] for j in assignment[i]), ZERO))
        sets[i] = frozenset({pos})
    outcome = Outcome(
        PricedBundling(Bundling(tuple(parts)), tuple(bundle_prices)),
        Allocation(tuple(sets)),
    )
    partial = PartialCbe(outcome, frozenset(exhausted))
    partial.validate(market, budget)
    return partial


def _exhausting_assignment(market, members, ranks, v, budget):
    """Rank-exhausting welfare-optimal assignment for `members` over all items.

    Solved as the assignment LP with per-member equality rows (the optimum is
    unchanged, which is asserted); its vertex is integral.  Prices come from
    the buyer-optimal duals of the corresponding augmented market and are
    re-based so unsold items cost exactly v.
    """
    items = market.items
    m = len(items)
    cols = [(i, j) for i in members for j in items] + [("extra", j) for j in items]

    def weight(i, j):
        return v if i == "extra" else market.valuation(i).weights[j]

    objective = [weight(i, j) for i, j in cols]
    rows = []
    for j in items:
        rows.append(([Fraction(1) if cj == j else ZERO for _, cj in cols], LE, Fraction(1)))
    for i in members:
        rows.append(
            ([Fraction(1) if ci == i else ZERO for ci, _ in cols], LE, Fraction(ranks[i]))
        )
    free_sol = lp_solve(make_lp("max", objective, rows))
    exact_rows = rows[:m] + [(coeffs, EQ, rhs) for coeffs, _, rhs in rows[m:]]
    sol = lp_solve(make_lp("max", objective, exact_rows))
    if sol.status != "optimal" or free_sol.status != "optimal":
        raise MarketError("exhausting assignment LP unsolvable")
    if sol.value != free_sol.value:
        raise MarketError("rank exhaustion changed the assignment optimum")
    if any(x != 0 and x != 1 for x in sol.primal):
        raise MarketError("assignment LP returned a fractional vertex")

    assignment = {i: frozenset() for i in members}
    extra_items = set()
    for (i, j), x in zip(cols, sol.primal):
        if x == 1:
            if i == "extra":
                extra_items.add(j)
            else:
                assignment[i] |= {j}
    # unmatched items also count as the extra consumer's (price v, zero weight)
    matched = frozenset().union(*assignment.values()) | frozenset(extra_items)
    extra_items |= set(market.item_set - matched)

    sub_market = Market(
        items, tuple(market.consumers[i] for i in members) + (_augmented(market, v).consumers[-1],)
    )
    config = config_lp(sub_market, budget)
    total = sum((weight(i, j) for (i, j), x in zip(cols, sol.primal) if x == 1), ZERO)
    total += v * Fraction(len(market.item_set - matched))
    if config.fractional != total:
        raise MarketError("exhausting assignment disagrees with the configuration LP")
    _, prices, _ = extreme_walrasian_prices(sub_market, config)
    prices = dict(prices)
    for j in extra_items:
        if prices[j] > v:
            raise MarketError("reserve item priced above the reserve")
        prices[j] = v
    for i in members:
        for j in assignment[i]:
            if prices[j] < v:
                raise MarketError("sold item priced below the reserve")
    allocation = [assignment[i] for i in members] + [frozenset(extra_items)]
    report = verify_ce(sub_market, prices, tuple(allocation), budget)
    if not report.ok:
        raise MarketError("exhausting assignment prices are not an equilibrium")
    return assignment, prices


def _case_slack(market, res, exhausted, slack, budget):
    if not slack:
        raise MarketError("slack-side case with no slack consumers")
    held = {i: res.allocation[i] for i in slack}
    leftover = market.item_set - frozenset().union(*held.values())
    i_max = min(
        slack, key=lambda i: (-market.valuation(i).value(held[i] | leftover), i)
    )
    held[i_max] = held[i_max] | leftover
    order = sorted(i for i in slack if held[i])
    parts = []
    bundle_prices = []
    sets = [frozenset() for _ in range(market.n)]
    for pos, i in enumerate(order):
        parts.append(held[i])
        if i == i_max:
            bundle_prices.append(market.valuation(i).value(held[i]))
        else:
            bundle_prices.append(sum((res.item_prices[j] for j in held[i]), ZERO))
        sets[i] = frozenset({pos})
    outcome = Outcome(
        PricedBundling(Bundling(tuple(parts)), tuple(bundle_prices)),
        Allocation(tuple(sets)),
    )
    partial = PartialCbe(outcome, frozenset(slack))
    partial.validate(market, budget)
    return partial


# ---------------------------------------------------------------------------
# a common matroid: the extra-consumer iteration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExtraConsumerState:
    allocation: tuple[frozenset, ...]  # n consumer bundles plus the reserve bundle
    item_prices: dict
    bundle_prices: tuple[Fraction, ...]  # for the n consumers
    reserve: Fraction

    @property
    def reserve_bundle(self) -> frozenset:
        return self.allocation[-1]

    @property
    def revenue(self) -> Fraction:
        return sum(self.bundle_prices, ZERO)


def _common_matroid(market: Market):
    _require_wmr(market)
    matroid = market.valuation(0).matroid
    for i in range(market.n):
        if market.valuation(i).matroid != matroid:
            raise MarketError("common-matroid pipeline needs one shared matroid")
    return matroid


def assert_state_properties(market: Market, state: ExtraConsumerState, budget: int = DEFAULT_BUDGET) -> None:
    """Exact check of the three structural properties of an extra-consumer state."""
    matroid = _common_matroid(market)
    prices = state.item_prices
    check_budget(market.n * (1 << market.m), budget, "extra-consumer property check")
    for j in state.reserve_bundle:
        if prices[j] != state.reserve:
            raise MarketError("reserve bundle item priced off the reserve")
    for j in market.item_set - state.reserve_bundle:
        if prices[j] < state.reserve:
            raise MarketError("item priced below the reserve")
    for i in range(market.n):
        own = state.allocation[i]
        base = market.valuation(i).value(own) - state.bundle_prices[i]
        for subset in canonical_subsets(market.items):
            s = frozenset(subset)
            if base < market.valuation(i).value(s) - sum((prices[j] for j in s), ZERO):
                raise MarketError("bundle profit beaten by an item-priced set")
        for subset in canonical_subsets(sorted(own)):
            s = frozenset(subset)
            if matroid.independent(s):
                if state.bundle_prices[i] < sum((prices[j] for j in s), ZERO):
                    raise MarketError("bundle price below an independent subset's prices")


def extra_consumer_start(market: Market, budget: int = DEFAULT_BUDGET) -> ExtraConsumerState:
    """Initial extra-consumer state: reserve equilibrium plus additive bundle prices."""
    _common_matroid(market)
    res = reserve_equilibrium(market, budget)
    bundle_prices = tuple(
        sum((res.item_prices[j] for j in res.allocation[i]), ZERO)
        for i in range(market.n)
    )
    state = ExtraConsumerState(
        res.allocation + (res.unallocated,), dict(res.item_prices), bundle_prices, res.reserve
    )
    if res.opt > 0:
        assert_state_properties(market, state, budget)
        if state.revenue * log_denominator(market.m) < res.opt:
            raise MarketError("starting state lost the revenue chain")
    return state


def extra_consumer_step(market: Market, state: ExtraConsumerState, budget: int = DEFAULT_BUDGET) -> ExtraConsumerState:
    """One iteration: move a reserve item without losing the three properties.

    Absorbs an item rank-neutrally when possible (prices unchanged); otherwise
    moves the globally heaviest reserve item, raises its taker's bundle price
    by that weight, and lowers the reserve to it.
    """
    if not state.reserve_bundle or state.reserve == 0:
        raise MarketError("step requires reserve items and a positive reserve")
    matroid = _common_matroid(market)

    for i in range(market.n):
        rank = matroid.rank(state.allocation[i])
        for j in sorted(state.reserve_bundle):
            if matroid.rank(state.allocation[i] | {j}) == rank:
                allocation = list(state.allocation)
                allocation[i] = allocation[i] | {j}
                allocation[-1] = allocation[-1] - {j}
                nxt = replace(state, allocation=tuple(allocation))
                assert_state_properties(market, nxt, budget)
                return nxt

    best = None
    for i in range(market.n):
        for j in sorted(state.reserve_bundle):
            w = market.valuation(i).weights[j]
            if best is None or (-w, i, j) < best[0]:
                best = ((-w, i, j), i, j, w)
    _, i_star, j_star, w = best
    if w > state.reserve:
        raise MarketError("heaviest reserve weight exceeds the reserve")
    before = market.valuation(i_star).value(state.allocation[i_star])
    after = market.valuation(i_star).value(state.allocation[i_star] | {j_star})
    if after != before + w:
        raise MarketError("rank-increasing move must gain exactly the weight")

    allocation = list(state.allocation)
    allocation[i_star] = allocation[i_star] | {j_star}
    allocation[-1] = allocation[-1] - {j_star}
    prices = dict(state.item_prices)
    prices[j_star] = w
    for j in allocation[-1]:
        prices[j] = w
    bundle_prices = list(state.bundle_prices)
    bundle_prices[i_star] += w
    nxt = ExtraConsumerState(tuple(allocation), prices, tuple(bundle_prices), w)
    if nxt.revenue < state.revenue:
        raise MarketError("step decreased revenue")
    assert_state_properties(market, nxt, budget)
    return nxt


def extra_consumer_to_cbe(market: Market, state: ExtraConsumerState, budget: int = DEFAULT_BUDGET) -> Outcome:
    """Convert a finished state (empty reserve bundle or zero reserve) to a CBE."""
    if state.reserve_bundle and state.reserve != 0:
        raise MarketError("conversion requires an empty reserve bundle or zero reserve")
    parts = []
    prices = []
    sets = [frozenset() for _ in range(market.n)]
    for i in range(market.n):
        if state.allocation[i]:
            sets[i] = frozenset({len(parts)})
            parts.append(state.allocation[i])
            prices.append(state.bundle_prices[i])
    if state.reserve_bundle:
        taker = min(
            range(market.n),
            key=lambda i: (-market.valuation(i).value(state.reserve_bundle), i),
        )
        sets[taker] = sets[taker] | {len(parts)}
        parts.append(state.reserve_bundle)
        prices.append(ZERO)
    outcome = Outcome(
        PricedBundling(Bundling(tuple(parts)), tuple(prices)), Allocation(tuple(sets))
    )
    report = verify_cbe(market, outcome, budget)
    if not report.ok:
        raise MarketError("extra-consumer conversion failed verification")
    if outcome.revenue(market) != state.revenue:
        raise MarketError("conversion changed the revenue")
    return outcome


def common_matroid_revenue_cbe(market: Market, budget: int = DEFAULT_BUDGET) -> Outcome:
    """Revenue >= OPT / (4 (floor(log2 m) + 2)) for a shared matroid."""
    state = extra_consumer_start(market, budget)
    opt, _ = welfare_opt(market, budget)
    if opt == 0:
        return _grand_zero_outcome(market)
    steps = 0
    start_revenue = state.revenue
    while state.reserve_bundle and state.reserve != 0:
        state = extra_consumer_step(market, state, budget)
        steps += 1
        if steps > market.m + 1:
            raise MarketError("extra-consumer iteration overran its step bound")
    outcome = extra_consumer_to_cbe(market, state, budget)
    if outcome.revenue(market) < start_revenue:
        raise MarketError("iteration decreased revenue")
    if outcome.revenue(market) * log_denominator(market.m) < opt:
        raise MarketError("common-matroid outcome lost the revenue chain")
    return outcome


def matroid_revenue_cbe(market: Market, setting: str, budget: int = DEFAULT_BUDGET) -> Outcome:
    if setting == "uniform":
        return uniform_matroid_revenue_cbe(market, budget)
    if setting == "common":
        return common_matroid_revenue_cbe(market, budget)
    raise MarketError("unknown matroid revenue setting %r" % (setting,))
