"""The three exact LP models: configuration LP, CAP2, and the one-bidder menu LP.

The configuration LP relaxes welfare maximization over (consumer, subset)
assignments; its integrality decides competitive-equilibrium existence.  CAP2
adds one fractional variable per set partition of the items and characterizes
anonymous non-linear pricing equilibria; when it is integral, the dual prices
restricted to the optimal partition support an efficient competitive bundling
equilibrium, and `nlpe_to_cbe` performs exactly that extraction (checking the
complementary-slackness facts it relies on).  The menu LP maximizes expected
revenue of an incentive-compatible, individually-rational option menu for a
single bidder with uniformly distributed value and a probability cap.

All solves are exact and deterministic; all results carry enough of the primal
and dual to be re-checked from outside.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence

from .numeric import EQ, GE, LE, ZERO, make_lp, lp_solve
from .market import (
    DEFAULT_BUDGET,
    Allocation,
    Bundling,
    Market,
    MarketError,
    Outcome,
    PricedBundling,
    ScaleError,
    bell_number,
    check_budget,
    set_partitions,
    welfare_opt,
)


def _nonempty_masks(m: int):
    return range(1, 1 << m)


def _mask_items(items: Sequence[str], mask: int) -> frozenset:
    return frozenset(items[k] for k in range(len(items)) if mask >> k & 1)


@dataclass(frozen=True)
class ConfigLPResult:
    fractional: Fraction
    support: tuple[tuple[int, frozenset, Fraction], ...]  # (consumer, items, weight)
    integral: Fraction
    integral_flag: bool
    item_duals: dict
    consumer_duals: tuple[Fraction, ...]
    opt_allocation: tuple[frozenset, ...]


def config_lp(market: Market, budget: int = DEFAULT_BUDGET) -> ConfigLPResult:
    """Exact fractional optimum of the configuration LP plus the integral benchmark."""
    n, m = market.n, market.m
    check_budget(n * (1 << m), budget, "configuration LP")
    items = market.items
    cols = [(i, mask) for i in range(n) for mask in _nonempty_masks(m)]
    objective = [market.valuation(i).value(_mask_items(items, mask)) for i, mask in cols]

    rows = []
    for k in range(m):
        rows.append(
            ([Fraction(1) if mask >> k & 1 else ZERO for _, mask in cols], LE, Fraction(1))
        )
    for i in range(n):
        rows.append(([Fraction(1) if ci == i else ZERO for ci, _ in cols], LE, Fraction(1)))

    sol = lp_solve(make_lp("max", objective, rows))
    if sol.status != "optimal":
        raise MarketError("configuration LP must be solvable")  # bounded by construction

    integral, witness = welfare_opt(market, budget)
    support = tuple(
        (i, _mask_items(items, mask), x)
        for (i, mask), x in zip(cols, sol.primal)
        if x != 0
    )
    return ConfigLPResult(
        fractional=sol.value,
        support=support,
        integral=integral,
        integral_flag=sol.value == integral,
        item_duals={items[k]: sol.dual[k] for k in range(m)},
        consumer_duals=tuple(sol.dual[m : m + n]),
        opt_allocation=witness,
    )


@dataclass(frozen=True)
class Cap2Result:
    fractional: Fraction
    x_support: tuple[tuple[int, frozenset, Fraction], ...]
    z_support: tuple[tuple[tuple[frozenset, ...], Fraction], ...]
    pi0: Fraction
    pi: tuple[Fraction, ...]
    set_prices: dict  # frozenset -> Fraction, nonzero dual prices p_S
    integral: Fraction
    integral_flag: bool
    opt_allocation: tuple[frozenset, ...]

    def set_price(self, subset: frozenset) -> Fraction:
        return self.set_prices.get(subset, ZERO)


def cap2_lp(market: Market, budget: int = DEFAULT_BUDGET) -> Cap2Result:
    """Exact CAP2 optimum with primal and dual witnesses.

    Partition variables are enumerated in restricted-growth-string order;
    Bell(m) keeps this tractable at desk scale.
    """
    n, m = market.n, market.m
    check_budget(n * (1 << m) + bell_number(m) * (1 << m), budget, "CAP2")
    items = market.items
    partitions = [
        tuple(frozenset(block) for block in p) for p in set_partitions(items)
    ]
    x_cols = [(i, mask) for i in range(n) for mask in _nonempty_masks(m)]
    num_x = len(x_cols)
    num_z = len(partitions)

    objective = [
        market.valuation(i).value(_mask_items(items, mask)) for i, mask in x_cols
    ] + [ZERO] * num_z

    rows = []
    # one bundle per consumer
    for i in range(n):
        coeffs = [Fraction(1) if ci == i else ZERO for ci, _ in x_cols] + [ZERO] * num_z
        rows.append((coeffs, LE, Fraction(1)))
    # a set can be assigned only as far as bundlings make it available
    subset_row_of = {}
    for mask in _nonempty_masks(m):
        subset = _mask_items(items, mask)
        coeffs = [Fraction(1) if cmask == mask else ZERO for _, cmask in x_cols]
        coeffs += [
            Fraction(-1) if subset in partition else ZERO for partition in partitions
        ]
        subset_row_of[subset] = len(rows)
        rows.append((coeffs, LE, ZERO))
    # at most one bundling in total
    rows.append(([ZERO] * num_x + [Fraction(1)] * num_z, LE, Fraction(1)))

    sol = lp_solve(make_lp("max", objective, rows))
    if sol.status != "optimal":
        raise MarketError("CAP2 must be solvable")

    integral, witness = welfare_opt(market, budget)
    pi = tuple(sol.dual[:n])
    set_prices = {}
    for subset, row in subset_row_of.items():
        if sol.dual[row] != 0:
            set_prices[subset] = sol.dual[row]
    pi0 = sol.dual[-1]

    x_support = tuple(
        (i, _mask_items(items, mask), sol.primal[k])
        for k, (i, mask) in enumerate(x_cols)
        if sol.primal[k] != 0
    )
    z_support = tuple(
        (partitions[k], sol.primal[num_x + k])
        for k in range(num_z)
        if sol.primal[num_x + k] != 0
    )

    result = Cap2Result(
        fractional=sol.value,
        x_support=x_support,
        z_support=z_support,
        pi0=pi0,
        pi=pi,
        set_prices=set_prices,
        integral=integral,
        integral_flag=sol.value == integral,
        opt_allocation=witness,
    )
    _assert_cap2_slackness(market, result)
    return result


def _assert_cap2_slackness(market: Market, result: Cap2Result) -> None:
    """The two complementary-slackness facts the CBE extraction relies on."""
    # p_S > 0 implies the availability row for S is tight at the optimum.
    avail = {}
    for partition, weight in result.z_support:
        for block in partition:
            avail[block] = avail.get(block, ZERO) + weight
    assigned = {}
    for _, subset, weight in result.x_support:
        assigned[subset] = assigned.get(subset, ZERO) + weight
    for subset, price in result.set_prices.items():
        if price != 0 and assigned.get(subset, ZERO) != avail.get(subset, ZERO):
            raise MarketError("CAP2 slackness: p_S > 0 on a slack availability row")
    # x_{i,S} > 0 implies pi_i = v_i(S) - p_S.
    for i, subset, weight in result.x_support:
        if weight != 0:
            gap = market.valuation(i).value(subset) - result.set_price(subset)
            if result.pi[i] != gap:
                raise MarketError("CAP2 slackness: payoff row not tight on support")


def nlpe_to_cbe(market: Market, cap2: Cap2Result, budget: int = DEFAULT_BUDGET) -> Outcome:
    """Turn an integral CAP2 optimum into an efficient CBE with its dual prices.

    Precondition: cap2.integral_flag.  The witness allocation is full, so its
    nonempty parts partition the items; each part is priced at the CAP2 dual
    price of that set, every consumer keeps their own part, and the pair is
    optimal, which makes all the slackness checks below exact facts.
    """
    from .equilibrium import verify_cbe  # cycle: equilibrium builds on this module

    if not cap2.integral_flag:
        raise MarketError("nlpe_to_cbe requires an integral CAP2 optimum")
    witness = cap2.opt_allocation
    part_of = [(i, part) for i, part in enumerate(witness) if part]
    parts = tuple(part for _, part in part_of)
    prices = tuple(cap2.set_price(part) for part in parts)

    # Our integral primal (witness parts + their partition) is CAP2-optimal, so
    # complementary slackness against the solver's dual must hold exactly.
    for (i, part), price in zip(part_of, prices):
        if cap2.pi[i] != market.valuation(i).value(part) - price:
            raise MarketError("integral optimum violates CAP2 slackness")
    if cap2.pi0 != sum(prices, ZERO):
        raise MarketError("integral bundling violates CAP2 slackness")
    for i in range(market.n):
        if not witness[i] and cap2.pi[i] != 0:
            raise MarketError("empty-handed consumer with nonzero CAP2 payoff")

    bundle_sets = [frozenset() for _ in range(market.n)]
    for k, (i, _) in enumerate(part_of):
        bundle_sets[i] = frozenset({k})
    outcome = Outcome(
        PricedBundling(Bundling(parts), prices), Allocation(tuple(bundle_sets))
    )
    report = verify_cbe(market, outcome, budget)
    if not report.ok:
        raise MarketError("CAP2 extraction failed verification: %r" % (report,))
    if report.welfare != cap2.integral:
        raise MarketError("CAP2 extraction is not efficient")
    return outcome


@dataclass(frozen=True)
class MenuMechanism:
    values: tuple[Fraction, ...]
    cap: Fraction
    menu: tuple[tuple[Fraction, Fraction], ...]  # (allocation probability, price)
    expected_revenue: Fraction


def menu_lp(values: Sequence[Fraction], cap: Fraction) -> MenuMechanism:
    """Revenue-maximal IC + IR menu with every allocation probability <= cap.

    One (x_t, p_t) pair per type, uniform type distribution; incentive
    compatibility is the full pairwise constraint family.
    """
    values = tuple(Fraction(v) for v in values)
    cap = Fraction(cap)
    if len(set(values)) != len(values) or any(v <= 0 for v in values):
        raise MarketError("menu LP needs distinct positive values")
    if not ZERO <= cap <= 1:
        raise MarketError("cap must lie in [0, 1]")
    n = len(values)
    # variables: x_0..x_{n-1}, p_0..p_{n-1}
    objective = [ZERO] * n + [Fraction(1)] * n
    rows = []
    for t in range(n):
        ir = [ZERO] * (2 * n)
        ir[t] = values[t]
        ir[n + t] = Fraction(-1)
        rows.append((ir, GE, ZERO))
        capped = [ZERO] * (2 * n)
        capped[t] = Fraction(1)
        rows.append((capped, LE, cap))
        for s in range(n):
            if s == t:
                continue
            ic = [ZERO] * (2 * n)
            ic[t] = values[t]
            ic[n + t] = Fraction(-1)
            ic[s] = -values[t]
            ic[n + s] = Fraction(1)
            rows.append((ic, GE, ZERO))
    sol = lp_solve(make_lp("max", objective, rows))
    if sol.status != "optimal":
        raise MarketError("menu LP must be solvable")
    menu = tuple((sol.primal[t], sol.primal[n + t]) for t in range(n))
    for t, (xt, pt) in enumerate(menu):
        if not (ZERO <= xt <= cap) or xt * values[t] - pt < 0:
            raise MarketError("menu LP produced an IR/cap violation")
        for xs, ps in menu:
            if xt * values[t] - pt < xs * values[t] - ps:
                raise MarketError("menu LP produced an IC violation")
    return MenuMechanism(values, cap, menu, sol.value / n)
