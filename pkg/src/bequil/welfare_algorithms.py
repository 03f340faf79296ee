"""Per-class CBE constructions with exact welfare guarantees.

Every construction returns an Outcome that has already passed `verify_cbe`,
and asserts its welfare bound as an exact rational inequality before
returning.  Logarithmic factors appear as the integer 2(floor(log2 .) + 2)
from the binning step, which lower-bounds the corresponding real-valued
expression, so each asserted bound implies the stated one.

Construction summary:

* two consumers: reduce to two bundles along an optimal allocation; subadditive
  pairs get a full-welfare equilibrium through the two-item reduction,
  superadditive pairs through the partition LP, and the mixed case either
  sells the grand bundle (when worth 2/3 of optimum) or uses the explicit
  mixed-case prices;
* multi-unit: bin the optimal allocation by value, sell floor(n'/2) equal
  blocks of units at just under the bin value, and lift;
* general markets: value-binned allocations grouped into sqrt-size bundles at
  the bin price, fed by a greedy that fills size-[k, 2k) bundles;
* budget-additive: doubled-budget greedy, then either a budget-binned uniform
  price (exhausted side) or pay-your-value prices (slack side), lifted from a
  partial equilibrium.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Optional, Sequence

from .numeric import ZERO, ceil_cbrt, ceil_sqrt, floor_log2
from .market import (
    DEFAULT_BUDGET,
    Allocation,
    BudgetAdditive,
    Bundling,
    Consumer,
    Market,
    MarketError,
    MultiUnit,
    Outcome,
    PricedBundling,
    canonical_key,
    canonical_subsets,
    check_budget,
    check_subadditive,
    check_superadditive,
    induced_market,
    submasks,
    welfare_opt,
)
from .lifting import (
    LiftExhausted,
    PartialCbe,
    dyadic_index,
    high_demand_holds,
    lift_high_demand,
    lift_partial,
    log_bin,
)


def _verified(market: Market, outcome: Outcome, budget: int = DEFAULT_BUDGET) -> Outcome:
    from .equilibrium import verify_cbe

    report = verify_cbe(market, outcome, budget)
    if not report.ok:
        raise MarketError("construction failed verification: %r" % (report.describe(),))
    return outcome


def grand_bundle_outcome(market: Market, buyer_optimal: bool = True) -> Outcome:
    """Grand bundle to the highest-value consumer; price blocks everyone else.

    buyer_optimal picks the smallest blocking price (the runner-up value);
    otherwise the winner pays their own value.
    """
    values = [market.valuation(i).value(market.item_set) for i in range(market.n)]
    winner = min(range(market.n), key=lambda i: (-values[i], i))
    others = [values[i] for i in range(market.n) if i != winner]
    price = max(others, default=ZERO) if buyer_optimal else values[winner]
    sets = tuple(
        frozenset({0}) if i == winner else frozenset() for i in range(market.n)
    )
    outcome = Outcome(
        PricedBundling(Bundling((market.item_set,)), (price,)), Allocation(sets)
    )
    return _verified(market, outcome)


# ---------------------------------------------------------------------------
# two consumers
# ---------------------------------------------------------------------------


def two_consumer_cbe(market: Market, budget: int = DEFAULT_BUDGET) -> Outcome:
    """A CBE with welfare >= (2/3) OPT for n = 2; full welfare when both
    valuations are subadditive or both superadditive."""
    from .equilibrium import ce_exists
    from .lp_models import cap2_lp, nlpe_to_cbe

    if market.n != 2:
        raise MarketError("two_consumer_cbe needs exactly two consumers")
    opt, witness = welfare_opt(market, budget)
    part_a, part_b = witness
    if not part_a or not part_b:
        outcome = grand_bundle_outcome(market)
        if outcome.welfare(market) != opt:
            raise MarketError("degenerate two-consumer case lost welfare")
        return outcome

    bundling = Bundling((part_a, part_b))
    induced = induced_market(market, bundling)
    sub = [check_subadditive(induced.valuation(i), induced.items) for i in range(2)]
    sup = [check_superadditive(induced.valuation(i), induced.items) for i in range(2)]

    if all(sub):
        outcome = _mapped_ce(market, bundling, induced, budget)
        if outcome.welfare(market) != opt:
            raise MarketError("subadditive pair must reach full welfare")
        return outcome
    if all(sup):
        result = cap2_lp(induced, budget)
        if not result.integral_flag:
            raise MarketError("superadditive pair with fractional partition LP")
        inner = nlpe_to_cbe(induced, result, budget)
        outcome = _map_outcome(market, bundling, induced, inner)
        if outcome.welfare(market) != opt:
            raise MarketError("superadditive pair must reach full welfare")
        return _verified(market, outcome, budget)

    grand_values = [induced.valuation(i).value(induced.item_set) for i in range(2)]
    if 3 * max(grand_values) >= 2 * opt:
        outcome = grand_bundle_outcome(market)
        if 3 * outcome.welfare(market) < 2 * opt:
            raise MarketError("grand-bundle branch lost its guarantee")
        return outcome

    candidates = []
    xa = induced.valuation(0).value(frozenset({"A"}))
    yb = induced.valuation(1).value(frozenset({"B"}))
    orientations = [(0, 1)] if xa > yb else [(1, 0)] if yb > xa else [(0, 1), (1, 0)]
    for first, second in orientations:
        pa_label = "A" if first == 0 else "B"
        pb_label = "B" if first == 0 else "A"
        x_a = induced.valuation(first).value(frozenset({pa_label}))
        y_b = induced.valuation(second).value(frozenset({pb_label}))
        if sup[first]:
            prices = {pa_label: x_a, pb_label: (x_a + y_b) / 3}
        else:
            prices = {pa_label: (x_a + y_b) / 3, pb_label: y_b}
        part_of = {"A": part_a, "B": part_b}
        parts = (part_of[pa_label], part_of[pb_label])
        sets = [frozenset(), frozenset()]
        sets[first], sets[second] = frozenset({0}), frozenset({1})
        outcome = Outcome(
            PricedBundling(Bundling(parts), (prices[pa_label], prices[pb_label])),
            Allocation(tuple(sets)),
        )
        from .equilibrium import verify_cbe

        if verify_cbe(market, outcome, budget).ok:
            candidates.append(outcome)
    if not candidates:
        raise MarketError("mixed two-consumer case produced no equilibrium")
    best = max(candidates, key=lambda o: o.welfare(market))
    if best.welfare(market) != opt:
        raise MarketError("mixed-case prices must support the optimal split")
    return best


def _mapped_ce(market: Market, bundling: Bundling, induced: Market, budget: int) -> Outcome:
    from .equilibrium import ce_exists

    ce = ce_exists(induced, budget)
    if not ce.exists:
        raise MarketError("expected a competitive equilibrium on the induced market")
    return _map_outcome(market, bundling, induced, ce.outcome)


def _map_outcome(market: Market, bundling: Bundling, induced: Market, inner: Outcome) -> Outcome:
    """Translate an outcome over the induced market back to the original items."""
    index_of = {label: k for k, label in enumerate(induced.items)}
    part_items = []
    prices = []
    for part, price in zip(inner.priced.parts, inner.priced.prices):
        merged: frozenset = frozenset()
        for label in part:
            merged |= bundling.parts[index_of[label]]
        part_items.append(merged)
        prices.append(price)
    sets = inner.allocation.bundle_sets
    return Outcome(
        PricedBundling(Bundling(tuple(part_items)), tuple(prices)), Allocation(sets)
    )


def subadditive_n_over_2(market: Market, budget: int = DEFAULT_BUDGET) -> Outcome:
    """Two-bundle split along the best optimal part; welfare >= (2/n) OPT."""
    for i in range(market.n):
        if not check_subadditive(market.valuation(i), market.items, budget):
            raise MarketError("subadditive_n_over_2 needs all-subadditive valuations")
    opt, witness = welfare_opt(market, budget)
    order = sorted(
        range(market.n),
        key=lambda i: (-market.valuation(i).value(witness[i]), i),
    )
    top = order[0]
    part_top = witness[top]
    rest = market.item_set - part_top
    if not part_top or not rest:
        outcome = grand_bundle_outcome(market)
    else:
        bundling = Bundling((part_top, rest))
        induced = induced_market(market, bundling)
        outcome = _mapped_ce(market, bundling, induced, budget)
    welfare = outcome.welfare(market)
    if market.n * welfare < 2 * opt:
        raise MarketError("two-bundle split lost its n/2 guarantee")
    return _verified(market, outcome, budget)


# ---------------------------------------------------------------------------
# multi-unit markets
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MultiUnitTrace:
    threshold: Optional[Fraction]
    survivors: int
    block_count: int
    block_price: Optional[Fraction]
    groups: tuple[frozenset, ...]  # pre-bundles (singletons in demand-query mode)


def _require_multiunit(market: Market) -> None:
    if not market.is_multi_unit():
        raise MarketError("multi-unit construction needs all MultiUnit valuations")


def multiunit_cbe(
    market: Market, eps: Optional[Fraction] = None, budget: int = DEFAULT_BUDGET
) -> Outcome:
    """Multi-unit CBE with welfare >= OPT / (20 (floor(log2 mu) + 2))."""
    outcome, _ = _multiunit_pipeline(market, _unit_groups(market), eps, False, budget)
    return outcome


def multiunit_value_query_mode(
    market: Market, eps: Optional[Fraction] = None, budget: int = DEFAULT_BUDGET
) -> Outcome:
    """Value-query variant: pre-bundle into min(n^2, m) equal blocks (leftover
    units join the last block) and run the same pipeline with demand queries
    simulated by dynamic programming over unit counts."""
    outcome, _ = _multiunit_pipeline(
        market, _unit_groups(market, prebundle=True), eps, True, budget
    )
    return outcome


def prebundle_sizes(m: int, n: int) -> list[int]:
    count = min(n * n, m)
    base = m // count
    sizes = [base] * count
    sizes[-1] += m - base * count
    return sizes


def _unit_groups(market: Market, prebundle: bool = False) -> tuple[frozenset, ...]:
    if not prebundle:
        return tuple(frozenset({j}) for j in market.items)
    sizes = prebundle_sizes(market.m, market.n)
    groups = []
    cursor = 0
    for s in sizes:
        groups.append(frozenset(market.items[cursor : cursor + s]))
        cursor += s
    return tuple(groups)


def _multiunit_pipeline(market, groups, eps, use_dp, budget):
    _require_multiunit(market)
    opt, _ = welfare_opt(market, budget)

    group_opt, group_witness = _group_welfare_opt(market, groups)
    if use_dp and 2 * group_opt < opt:
        raise MarketError("pre-bundled optimum fell below half of OPT")

    if group_opt == 0:
        outcome = Outcome(
            PricedBundling(Bundling((market.item_set,)), (ZERO,)),
            Allocation(tuple(frozenset({0}) if i == 0 else frozenset() for i in range(market.n))),
        )
        return _verified(market, outcome, budget), MultiUnitTrace(None, 0, 1, ZERO, groups)

    binres = log_bin(market, group_witness, "by-value")
    v = binres.threshold
    survivors = [(i, part) for i, part in enumerate(binres.filtered) if part]
    kbound = Fraction(20 * (floor_log2(market.mu) + 2))

    if binres.survivors == 1:
        outcome = grand_bundle_outcome(market, buyer_optimal=False)
        if outcome.welfare(market) * kbound < (group_opt if use_dp else opt):
            raise MarketError("single-survivor branch lost the logarithmic bound")
        trace = MultiUnitTrace(v, 1, 1, None, groups)
        return outcome, trace

    survivors.sort(key=lambda iv: (-len(iv[1]), iv[0]))
    k = binres.survivors // 2
    block_groups = _split_runs([g for g in groups], k)
    sizes_sorted = [len(part) for _, part in survivors]
    if not use_dp:
        min_block_units = min(sum(len(g) for g in run) for run in block_groups)
        if min_block_units < sizes_sorted[k]:
            raise MarketError("block size fell below the (k+1)-th survivor")

    eps = eps if eps is not None else v / (1 << 10)
    if not (0 < eps < v):
        raise MarketError("price slack must lie in (0, v)")
    if 10 * k * (v - eps) < 2 * v * (2 * k + 1):
        raise MarketError("price slack too large for the welfare chain")

    parts = tuple(frozenset().union(*run) for run in block_groups)
    pb = PricedBundling(Bundling(parts), tuple(v - eps for _ in parts))
    if not high_demand_holds(market, pb):
        raise MarketError("equal blocks failed the high-demand check")
    oracles = None
    if use_dp:
        oracles = [
            multiunit_dp_oracle(market.valuation(i)) for i in range(market.n)
        ]
    outcome = lift_high_demand(market, pb, budget, oracles=oracles)

    aggregate = k * (v - eps)
    if outcome.welfare(market) < aggregate:
        raise MarketError("lift lost the aggregate price")
    base_opt = group_opt if use_dp else opt
    if outcome.welfare(market) * kbound < base_opt:
        raise MarketError("multi-unit outcome lost the logarithmic bound")
    trace = MultiUnitTrace(v, binres.survivors, k, v - eps, groups)
    return outcome, trace


def _split_runs(groups: list, k: int) -> list[list]:
    base = len(groups) // k
    runs = []
    cursor = 0
    for block in range(k):
        size = base if block < k - 1 else len(groups) - base * (k - 1)
        runs.append(groups[cursor : cursor + size])
        cursor += size
    return runs


def _group_welfare_opt(market: Market, groups: Sequence[frozenset]):
    """Optimal allocation of whole groups; exact DP over (base-count, last-flag).

    Groups all share one size except possibly the last; a consumer's value
    depends only on the unit total, so the state is how many regular groups
    remain and whether the (possibly larger) last group is still free.
    """
    n = market.n
    sizes = [len(g) for g in groups]
    base_groups = len(groups) - 1
    base = sizes[0] if base_groups else 0
    if any(s != base for s in sizes[:-1]):
        raise MarketError("groups must share one size except the last")
    last_size = sizes[-1]

    memo: dict = {}

    def value(i, t, l):
        return market.valuation(i).value_of_count(t * base + (last_size if l else 0))

    def best(i, b, last_free):
        if i == n - 1:
            return value(i, b, last_free)
        key = (i, b, last_free)
        if key not in memo:
            memo[key] = max(
                value(i, t, l) + best(i + 1, b - t, last_free and not l)
                for t in range(b + 1)
                for l in ((0, 1) if last_free else (0,))
            )
        return memo[key]

    opt = best(0, base_groups, True)
    allocation = []
    b, last_free = base_groups, True
    cursor = 0
    for i in range(n):
        if i == n - 1:
            t, l = b, (1 if last_free else 0)
        else:
            target = best(i, b, last_free)
            t, l = next(
                (t, l)
                for t in range(b + 1)
                for l in ((0, 1) if last_free else (0,))
                if value(i, t, l) + best(i + 1, b - t, last_free and not l) == target
            )
        chosen: frozenset = frozenset()
        for _ in range(t):
            chosen |= groups[cursor]
            cursor += 1
        if l:
            chosen |= groups[-1]
            last_free = False
        b -= t
        allocation.append(chosen)
    return opt, tuple(allocation)


def multiunit_dp_oracle(valuation: MultiUnit) -> Callable:
    """Demand oracle computing (max payoff, canonical maximizer) from unit
    counts by dynamic programming; value queries only."""

    def constrained_best(counts, prices, forced, banned):
        free = [b for b in range(len(counts)) if b not in forced and b not in banned]
        base_units = sum(counts[b] for b in forced)
        base_price = sum((prices[b] for b in forced), ZERO)
        reachable = {0: ZERO}
        for b in free:
            nxt = dict(reachable)
            for u, cost in reachable.items():
                cand = cost + prices[b]
                tgt = u + counts[b]
                if tgt not in nxt or cand < nxt[tgt]:
                    nxt[tgt] = cand
            reachable = nxt
        return max(
            valuation.value_of_count(base_units + u) - base_price - cost
            for u, cost in reachable.items()
        )

    def best(parts, prices):
        counts = [len(p) for p in parts]
        top = constrained_best(counts, prices, frozenset(), frozenset())
        chosen: list[int] = []
        cursor = 0
        while True:
            own = bundle_value(counts, prices, chosen)
            if own == top:
                return top, frozenset(chosen)
            for c in range(cursor, len(counts)):
                forced = frozenset(chosen) | {c}
                banned = frozenset(b for b in range(c) if b not in forced)
                if constrained_best(counts, prices, forced, banned) == top:
                    chosen.append(c)
                    cursor = c + 1
                    break
            else:
                raise MarketError("demand DP failed to reconstruct a maximizer")

    def bundle_value(counts, prices, chosen):
        return valuation.value_of_count(sum(counts[b] for b in chosen)) - sum(
            (prices[b] for b in chosen), ZERO
        )

    return best


# ---------------------------------------------------------------------------
# general markets
# ---------------------------------------------------------------------------


def sqrt_bound_holds(aggregate: Fraction, total: Fraction, r: int) -> bool:
    """Exact check of aggregate >= total / (4 sqrt(r) + 4) by squaring."""
    rhs = total - 4 * aggregate
    if rhs <= 0:
        return True
    return (4 * aggregate) ** 2 * r >= rhs**2


def general_sqrt(
    market: Market,
    allocation: Sequence[frozenset],
    v: Fraction,
    budget: int = DEFAULT_BUDGET,
) -> Outcome:
    """Bundle ceil(sqrt(r))-many allocation parts together at price v and lift.

    Precondition: every nonempty part S_i has v_i(S_i) in [v, 2v).  The
    aggregate price of the constructed bundling is at least
    sum_i v_i(S_i) / (4 sqrt(r) + 4), checked exactly, and the lifted outcome's
    welfare is at least that aggregate.
    """
    parts = [(i, frozenset(s)) for i, s in enumerate(allocation) if s]
    if not parts:
        raise MarketError("general_sqrt needs a nonempty allocation")
    total = ZERO
    for i, s in parts:
        value = market.valuation(i).value(s)
        if not (v <= value < 2 * v):
            raise MarketError("part value outside [v, 2v)")
        total += value
    r = len(parts)
    q = ceil_sqrt(r)

    runs = []
    full = r // q
    cursor = 0
    for g in range(full):
        size = q if g < full - 1 else r - q * (full - 1)
        runs.append(parts[cursor : cursor + size])
        cursor += size
    bundle_items = [frozenset().union(*(s for _, s in run)) for run in runs]
    leftovers = market.item_set - frozenset().union(*bundle_items)
    if leftovers:
        bundle_items[0] |= leftovers

    # Price at v per the construction; when some backer values a bundle at
    # exactly v, shave the price just below v (the aggregate bound has strict
    # slack, so a small enough shave preserves it and restores strictness).
    shaves = [ZERO] + [Fraction(1, 1 << t) for t in range(10, 41)]
    for shave in shaves:
        price = v * (1 - shave)
        pb = PricedBundling(Bundling(tuple(bundle_items)), tuple(price for _ in bundle_items))
        aggregate = price * len(bundle_items)
        if high_demand_holds(market, pb) and sqrt_bound_holds(aggregate, total, r):
            outcome = lift_high_demand(market, pb, budget)
            if outcome.welfare(market) < aggregate:
                raise MarketError("sqrt construction lost the aggregate price")
            return outcome
    raise LiftExhausted("no price satisfied high demand and the sqrt bound")


@dataclass(frozen=True)
class AkTrace:
    k: int
    allocation: tuple[frozenset, ...]
    steps: tuple[tuple[int, frozenset], ...]
    remaining_history: tuple[frozenset, ...]

    def welfare(self, market: Market) -> Fraction:
        return sum(
            (market.valuation(i).value(s) for i, s in enumerate(self.allocation)), ZERO
        )


def greedy_ak(market: Market, k: int, budget: int = DEFAULT_BUDGET) -> AkTrace:
    """Greedy size-[k, 2k) allocation: repeatedly hand the most valuable such
    bundle of remaining items to an unserved consumer."""
    if not 1 <= k <= market.m:
        raise MarketError("bundle size parameter out of range")
    remaining = list(market.items)
    unserved = list(range(market.n))
    allocation = [frozenset() for _ in range(market.n)]
    steps = []
    history = [frozenset(remaining)]
    index = {j: pos for pos, j in enumerate(market.items)}
    while len(remaining) >= k and unserved:
        options = 0
        for size in range(k, min(2 * k - 1, len(remaining)) + 1):
            options += _comb(len(remaining), size)
        check_budget(options * len(unserved), budget, "greedy bundle search")
        best = None
        for i in unserved:
            valuation = market.valuation(i)
            for size in range(k, min(2 * k - 1, len(remaining)) + 1):
                for combo in itertools.combinations(sorted(remaining, key=index.get), size):
                    value = valuation.value(frozenset(combo))
                    key = (-value, i, tuple(index[j] for j in combo))
                    if best is None or key < best[0]:
                        best = (key, i, frozenset(combo))
        _, i_star, bundle = best
        allocation[i_star] = bundle
        unserved.remove(i_star)
        remaining = [j for j in remaining if j not in bundle]
        steps.append((i_star, bundle))
        history.append(frozenset(remaining))
    return AkTrace(k, tuple(allocation), tuple(steps), tuple(history))


def _comb(n: int, r: int) -> int:
    out = 1
    for t in range(r):
        out = out * (n - t) // (t + 1)
    return out


def restricted_welfare_opt(
    market: Market, k: int, budget: int = DEFAULT_BUDGET
) -> tuple[Fraction, tuple[frozenset, ...]]:
    """Best welfare over allocations whose nonempty parts have size in [k, 2k)."""
    n, m = market.n, market.m
    check_budget(n * 3**m, budget, "restricted welfare maximization")
    items = market.items
    memo: list[dict] = [dict() for _ in range(n + 1)]

    def best(i: int, remaining: int) -> Fraction:
        if i == n:
            return ZERO
        if remaining in memo[i]:
            return memo[i][remaining]
        out = best(i + 1, remaining)
        for sub in submasks(remaining):
            cnt = bin(sub).count("1")
            if k <= cnt < 2 * k:
                cand = market.valuation(i).value(_items_of_mask(items, sub)) + best(
                    i + 1, remaining & ~sub
                )
                if cand > out:
                    out = cand
        memo[i][remaining] = out
        return out

    full = (1 << m) - 1
    opt = best(0, full)
    allocation = []
    remaining = full
    for i in range(n):
        target = best(i, remaining)
        pick = 0
        if best(i + 1, remaining) != target:
            for sub in sorted(submasks(remaining), key=lambda s: canonical_key(_bits(s))):
                cnt = bin(sub).count("1")
                if k <= cnt < 2 * k:
                    rest = best(i + 1, remaining & ~sub)
                    if market.valuation(i).value(_items_of_mask(items, sub)) + rest == target:
                        pick = sub
                        break
        allocation.append(_items_of_mask(items, pick))
        remaining &= ~pick
    return opt, tuple(allocation)


def _items_of_mask(items, mask) -> frozenset:
    return frozenset(items[k] for k in range(len(items)) if mask >> k & 1)


def _bits(mask: int) -> tuple[int, ...]:
    return tuple(k for k in range(mask.bit_length()) if mask >> k & 1)


def check_ak_inequalities(
    market: Market, trace: AkTrace, budget: int = DEFAULT_BUDGET
) -> tuple[Fraction, Fraction]:
    """Assert the greedy's guarantee against the restricted optimum.

    Returns (greedy welfare, restricted optimum W).  Checks both the aggregate
    bound 2k ALG >= W and the per-step accounting
    W_{t-1} - W_t <= 2k (ALG_t - ALG_{t-1}), where W_t is the restricted
    optimum's value over parts untouched by (and consumers unserved in) the
    first t steps.
    """
    k = trace.k
    w_opt, w_witness = restricted_welfare_opt(market, k, budget)
    alg = trace.welfare(market)
    if 2 * k * alg < w_opt:
        raise MarketError("greedy lost its W/2k guarantee")

    served: set = set()
    removed: frozenset = frozenset()
    prev_w = w_opt

    def surviving(served, removed) -> Fraction:
        out = ZERO
        for i, part in enumerate(w_witness):
            if part and i not in served and not (part & removed):
                out += market.valuation(i).value(part)
        return out

    for i_star, bundle in trace.steps:
        served.add(i_star)
        removed |= bundle
        cur_w = surviving(served, removed)
        marginal = market.valuation(i_star).value(bundle)
        if prev_w - cur_w > 2 * k * marginal:
            raise MarketError("per-step greedy accounting failed")
        prev_w = cur_w
    return alg, w_opt


def general_m23(market: Market, budget: int = DEFAULT_BUDGET) -> Outcome:
    """Best verified CBE among the greedy/sqrt pipeline for k = 1..ceil(m^(1/3))
    and the grand bundle sold to the highest-value consumer at their value."""
    candidates = []
    for k in range(1, ceil_cbrt(market.m) + 1):
        try:
            trace = greedy_ak(market, k, budget)
            if not any(trace.allocation):
                continue
            binned = log_bin(market, trace.allocation, "by-value")
            if binned.survivors == 0:
                continue
            candidates.append(
                general_sqrt(market, binned.filtered, binned.threshold, budget)
            )
        except (MarketError, LiftExhausted):
            continue
    candidates.append(grand_bundle_outcome(market, buyer_optimal=False))
    best = candidates[0]
    for cand in candidates[1:]:
        if cand.welfare(market) > best.welfare(market):
            best = cand
    return best


# ---------------------------------------------------------------------------
# budget-additive markets
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GreedySplit:
    allocation: tuple[frozenset, ...]
    exhausted: tuple[int, ...]
    slack: tuple[int, ...]
    case: int  # 1 = exhausted side carries half, 2 = slack side
    bin_value: Optional[Fraction]  # uniform price (case 1)
    sink: Optional[int]  # leftover receiver (case 2)


def budget_additive_greedy(market: Market) -> tuple[frozenset, ...]:
    """Doubled-budget greedy in canonical item order; ties to the lowest index."""
    doubled = [
        BudgetAdditive(market.valuation(i).weights, 2 * market.valuation(i).budget)
        for i in range(market.n)
    ]
    held = [frozenset() for _ in range(market.n)]
    for j in market.items:
        gains = [
            doubled[i].value(held[i] | {j}) - doubled[i].value(held[i])
            for i in range(market.n)
        ]
        i_star = min(range(market.n), key=lambda i: (-gains[i], i))
        held[i_star] = held[i_star] | {j}
    return tuple(held)


def budget_additive_split(market: Market, budget: int = DEFAULT_BUDGET) -> GreedySplit:
    for i in range(market.n):
        if not isinstance(market.valuation(i), BudgetAdditive):
            raise MarketError("budget-additive construction needs its class")
    held = budget_additive_greedy(market)
    opt, _ = welfare_opt(market, budget)
    total = sum((market.valuation(i).value(held[i]) for i in range(market.n)), ZERO)
    if 4 * total < opt:
        raise MarketError("doubled-budget greedy lost its 4-approximation")
    exhausted = tuple(
        i for i in range(market.n) if market.valuation(i).value(held[i]) == market.valuation(i).budget
    )
    slack = tuple(i for i in range(market.n) if i not in exhausted)
    for i in slack:
        for j in held[i]:
            vi = market.valuation(i).value(frozenset({j}))
            for other in slack:
                if market.valuation(other).value(frozenset({j})) > vi:
                    raise MarketError("greedy slack-side dominance failed")
    sum_e = sum((market.valuation(i).value(held[i]) for i in exhausted), ZERO)
    case = 1 if 2 * sum_e >= total else 2
    bin_value = None
    sink = None
    if total != 0 and case == 1:
        bin_value = _case1_bin(market, held, exhausted, sum_e)[1]
    if total != 0 and case == 2:
        leftovers = market.item_set - frozenset().union(
            *(held[i] for i in slack)
        ) if slack else market.item_set
        sink = min(
            slack,
            key=lambda i: (-market.valuation(i).value(held[i] | leftovers), i),
        )
    return GreedySplit(held, exhausted, slack, case, bin_value, sink)


def _case1_bin(market, held, exhausted, sum_e):
    floor_value = sum_e / (2 * market.m)
    kept = [i for i in exhausted if market.valuation(i).budget >= floor_value]
    bins: dict[int, Fraction] = {}
    keyed = []
    for i in kept:
        b_i = market.valuation(i).budget
        idx = dyadic_index(b_i, floor_value)
        keyed.append((i, b_i, idx))
        bins[idx] = bins.get(idx, ZERO) + b_i
    best_k = min(bins, key=lambda kk: (-bins[kk], kk))
    chosen = [i for i, _, idx in keyed if idx == best_k]
    price = min(market.valuation(i).budget for i in chosen)
    return chosen, price


def budget_additive_cbe(market: Market, budget: int = DEFAULT_BUDGET) -> Outcome:
    """Budget-additive CBE; welfare >= OPT / (32 (floor(log2 m) + 2)) in the
    binned case and >= OPT / 8 in the pay-your-value case."""
    split = budget_additive_split(market, budget)
    held = split.allocation
    opt, _ = welfare_opt(market, budget)
    total = sum((market.valuation(i).value(held[i]) for i in range(market.n)), ZERO)
    if total == 0:
        outcome = Outcome(
            PricedBundling(Bundling((market.item_set,)), (ZERO,)),
            Allocation(
                tuple(frozenset({0}) if i == 0 else frozenset() for i in range(market.n))
            ),
        )
        return _verified(market, outcome, budget)

    if split.case == 1:
        sum_e = sum((market.valuation(i).value(held[i]) for i in split.exhausted), ZERO)
        chosen, price = _case1_bin(market, held, split.exhausted, sum_e)
        parts = {i: held[i] for i in chosen}
        leftovers = market.item_set - frozenset().union(*parts.values())
        anchor = min(chosen)
        if leftovers:
            parts[anchor] = parts[anchor] | leftovers
        order = sorted(chosen)
        bundle_sets = [frozenset() for _ in range(market.n)]
        for pos, i in enumerate(order):
            bundle_sets[i] = frozenset({pos})
        outcome = Outcome(
            PricedBundling(
                Bundling(tuple(parts[i] for i in order)),
                tuple(price for _ in order),
            ),
            Allocation(tuple(bundle_sets)),
        )
        partial = PartialCbe(outcome, frozenset(chosen))
        lifted = lift_partial(market, partial, budget)
        bound = Fraction(32 * (floor_log2(market.m) + 2))
        if lifted.welfare(market) * bound < opt:
            raise MarketError("budget-additive case 1 lost the logarithmic bound")
        return lifted

    holders = [i for i in split.slack if held[i]]
    sink = split.sink
    leftovers = market.item_set - frozenset().union(*(held[i] for i in holders))
    parts = {i: held[i] for i in holders}
    if sink not in parts:
        parts[sink] = frozenset()
        holders = sorted(set(holders) | {sink})
    if leftovers:
        parts[sink] = parts[sink] | leftovers
    order = sorted(i for i in holders if parts[i])
    bundle_sets = [frozenset() for _ in range(market.n)]
    for pos, i in enumerate(order):
        bundle_sets[i] = frozenset({pos})
    outcome = Outcome(
        PricedBundling(
            Bundling(tuple(parts[i] for i in order)),
            tuple(market.valuation(i).value(parts[i]) for i in order),
        ),
        Allocation(tuple(bundle_sets)),
    )
    partial = PartialCbe(outcome, frozenset(split.slack))
    lifted = lift_partial(market, partial, budget)
    if 8 * lifted.welfare(market) < opt:
        raise MarketError("budget-additive case 2 lost its factor 8")
    return lifted
