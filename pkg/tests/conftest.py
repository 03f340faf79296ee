"""Shared builders and independent test oracles.

The oracles here deliberately re-derive answers by the dumbest possible
enumeration (per-item assignment loops, direct subset scans) so that the
library's dynamic programs and LPs are checked against a second route.
"""

import itertools
from fractions import Fraction

import pytest

from bequil.market import (
    Consumer,
    Explicit,
    Market,
    MultiUnit,
    UnitDemand,
    bundle_payoff,
)
from bequil.numeric import ZERO


def F(num, den=1):
    return Fraction(num, den)


def explicit_market(items, tables, names=None):
    """Market from raw tables: each table maps sorted-label-strings to values."""
    items = tuple(items)
    consumers = []
    for idx, raw in enumerate(tables):
        table = {frozenset(): ZERO}
        for key, value in raw.items():
            table[frozenset(key)] = Fraction(value)
        name = names[idx] if names else "c%d" % (idx + 1)
        consumers.append(Consumer(name, Explicit(items, table)))
    return Market(items, tuple(consumers))


def two_item_market(x, y):
    """Two consumers over items a, b; x and y are (va, vb, vab) triples."""
    return explicit_market(
        ("a", "b"),
        [
            {"a": x[0], "b": x[1], "ab": x[2]},
            {"a": y[0], "b": y[1], "ab": y[2]},
        ],
    )


def prop22_market(eps=F(1, 10)):
    from bequil.instances import gen_two_item_gap

    return gen_two_item_gap(eps)


def brute_welfare(market):
    """Independent welfare optimum: assign each item to a consumer or to no one."""
    best = None
    n = market.n
    for assignment in itertools.product(range(n + 1), repeat=market.m):
        parts = [frozenset(
            market.items[k] for k in range(market.m) if assignment[k] == i
        ) for i in range(n)]
        total = sum((market.valuation(i).value(parts[i]) for i in range(n)), ZERO)
        if best is None or total > best:
            best = total
    return best


def brute_demand_payoff(valuation, parts, prices):
    """Independent demand oracle: max payoff over explicit subset scan."""
    best = None
    for size in range(len(parts) + 1):
        for chosen in itertools.combinations(range(len(parts)), size):
            payoff = bundle_payoff(valuation, parts, prices, chosen)
            if best is None or payoff > best:
                best = payoff
    return best


def multiunit_market(value_rows):
    m = len(value_rows[0]) - 1
    items = tuple("u%d" % k for k in range(m))
    consumers = tuple(
        Consumer("c%d" % (i + 1), MultiUnit(tuple(Fraction(v) for v in row)))
        for i, row in enumerate(value_rows)
    )
    return Market(items, consumers)
