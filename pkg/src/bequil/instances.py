"""Named instances, seeded random generators, and JSON (de)serialization.

Named generators reproduce the benchmark markets exactly (the two-item
lower-bound market, the subadditive multi-unit family, the budget-additive
table, the two partition-LP gap examples, and the harmonic unit-demand
revenue family).  Random generators are deterministic in the seed; the PRNG
is CPython's Mersenne Twister (`random.Random`), and the serialized JSON form
is the cross-implementation compatibility contract, not the PRNG itself.

JSON schema (rationals as "p/q" strings; explicit tables keyed by sorted
concatenated single-character labels, empty set omitted):

    {"items": ["a", "b"],
     "consumers": [{"name": "c1", "valuation": {"type": "additive",
                                                "weights": {"a": "1/2", ...}}},
                   ...]}

Valuation types: explicit (table), additive / unit_demand (weights),
budget_additive (weights, budget), multi_unit (values, length m+1),
matroid_rank (matroid, weights) with matroid either
{"kind": "uniform", "rank": k} or {"kind": "family", "independent": [[...]]}.
"""

from __future__ import annotations

import json
import random
from fractions import Fraction
from typing import Optional

from .numeric import ZERO, format_rational, parse_rational
from .market import (
    Additive,
    BudgetAdditive,
    Consumer,
    Explicit,
    FamilyMatroid,
    Market,
    MarketError,
    Matroid,
    MultiUnit,
    UniformMatroid,
    UnitDemand,
    Valuation,
    WeightedMatroidRank,
    canonical_subsets,
)

_ITEM_LABELS = "abcdefghijklmnopqrstuvwxyz"

NAMED_CASES = ("prop22", "thm42", "table1", "ex81", "ex82", "revenue-lb")

RANDOM_CLASSES = (
    "explicit-monotone",
    "additive",
    "unit-demand",
    "budget-additive",
    "multi-unit",
    "matroid-rank-uniform",
    "matroid-rank-common",
    "superadditive",
)


def item_labels(m: int) -> tuple[str, ...]:
    if m > len(_ITEM_LABELS):
        raise MarketError("at most %d items supported" % len(_ITEM_LABELS))
    return tuple(_ITEM_LABELS[:m])


# ---------------------------------------------------------------------------
# named instances
# ---------------------------------------------------------------------------


def gen_two_item_gap(eps: Fraction) -> Market:
    """Two items; a pair-loving consumer against a strong unit-demand one."""
    eps = Fraction(eps)
    if eps <= 0:
        raise MarketError("eps must be positive")
    items = ("a", "b")
    table = {
        frozenset(): ZERO,
        frozenset("a"): Fraction(1),
        frozenset("b"): Fraction(1),
        frozenset("ab"): 2 + eps,
    }
    return Market(
        items,
        (
            Consumer("pair", Explicit(items, table)),
            Consumer("single", UnitDemand({"a": Fraction(2), "b": Fraction(2)})),
        ),
    )


def gen_multiunit_tight(m: int, eps: Fraction) -> Market:
    """m units, m consumers: a nearly-flat complement lover and harmonic singles."""
    eps = Fraction(eps)
    if m < 2 or eps <= 0:
        raise MarketError("need m >= 2 and eps > 0")
    items = tuple("u%d" % k for k in range(m))
    flat = tuple([ZERO] + [1 + eps] * (m - 1) + [2 + 2 * eps])
    consumers = [Consumer("big", MultiUnit(flat))]
    for i in range(2, m + 1):
        consumers.append(
            Consumer("unit%d" % i, MultiUnit(tuple([ZERO] + [Fraction(1, i)] * m)))
        )
    return Market(items, tuple(consumers))


def gen_budget_table(eps: Fraction, delta: Fraction) -> Market:
    """The three-consumer budget-additive gap market."""
    eps, delta = Fraction(eps), Fraction(delta)
    if eps <= 0 or delta <= 0:
        raise MarketError("need eps, delta > 0")
    items = ("a", "b", "c")
    return Market(
        items,
        (
            Consumer(
                "c1",
                BudgetAdditive({"a": Fraction(2), "b": Fraction(1), "c": Fraction(1)}, Fraction(2)),
            ),
            Consumer(
                "c2",
                BudgetAdditive({"a": ZERO, "b": Fraction(2), "c": Fraction(2)}, Fraction(2)),
            ),
            Consumer(
                "c3",
                BudgetAdditive(
                    {"a": 2 - eps, "b": ZERO, "c": 1 - eps / 2 - delta}, 2 - eps
                ),
            ),
        ),
    )


def gen_pair_vs_singles() -> Market:
    """Two items valued 8 together against unit demand 7: a partition-LP gap."""
    items = ("a", "b")
    table = {
        frozenset(): ZERO,
        frozenset("a"): ZERO,
        frozenset("b"): ZERO,
        frozenset("ab"): Fraction(8),
    }
    return Market(
        items,
        (
            Consumer("pair", Explicit(items, table)),
            Consumer("single", UnitDemand({"a": Fraction(7), "b": Fraction(7)})),
        ),
    )


def gen_submodular_gap() -> Market:
    """Four items, two submodular consumers preferring crossed pairs."""
    items = ("a", "b", "c", "d")

    def build(pairs2):
        table = {frozenset(): ZERO}
        for s in canonical_subsets(items):
            if not s:
                continue
            fs = frozenset(s)
            if len(fs) == 1:
                table[fs] = Fraction(1)
            elif len(fs) == 2:
                table[fs] = Fraction(2) if fs in pairs2 else Fraction(3, 2)
            else:
                table[fs] = Fraction(2)
        return Explicit(items, table)

    one = build({frozenset("ab"), frozenset("cd")})
    two = build({frozenset("ad"), frozenset("bc")})
    return Market(items, (Consumer("c1", one), Consumer("c2", two)))


def gen_harmonic_unit_demand(n: int) -> Market:
    """n items, n unit-demand consumers valued 1/i; revenue stays bounded."""
    if n < 1:
        raise MarketError("need n >= 1")
    items = item_labels(n)
    consumers = tuple(
        Consumer(
            "c%d" % i,
            WeightedMatroidRank(
                UniformMatroid(items, 1), {j: Fraction(1, i) for j in items}
            ),
        )
        for i in range(1, n + 1)
    )
    return Market(items, consumers)


def equal_revenue_values(n: int) -> tuple[Fraction, ...]:
    """The value support {1/2, ..., 1/n} of the equal-revenue auction."""
    if n < 2:
        raise MarketError("need n >= 2")
    return tuple(Fraction(1, i) for i in range(2, n + 1))


def gen_named(case: str, m: int = 4, n: int = 4,
              eps: Fraction = Fraction(1, 10), delta: Fraction = Fraction(1, 100)) -> Market:
    if case == "prop22":
        return gen_two_item_gap(eps)
    if case == "thm42":
        return gen_multiunit_tight(m, eps)
    if case == "table1":
        return gen_budget_table(eps, delta)
    if case == "ex81":
        return gen_pair_vs_singles()
    if case == "ex82":
        return gen_submodular_gap()
    if case == "revenue-lb":
        return gen_harmonic_unit_demand(n)
    raise MarketError("unknown named case %r" % (case,))


# ---------------------------------------------------------------------------
# random instances
# ---------------------------------------------------------------------------


def _rand_rational(rng: random.Random, lo: int = 0, hi: int = 8, dens=(1, 2, 3, 4)) -> Fraction:
    return Fraction(rng.randint(lo, hi), rng.choice(dens))


def _rand_weights(rng, items) -> dict:
    return {j: _rand_rational(rng) for j in items}


def gen_random(cls: str, m: int, n: int, seed: int) -> Market:
    """Deterministic random market of the given class."""
    if cls not in RANDOM_CLASSES:
        raise MarketError("unknown random class %r" % (cls,))
    if m < 1 or n < 1:
        raise MarketError("need m, n >= 1")
    rng = random.Random((cls, m, n, seed).__repr__())
    if cls == "multi-unit":
        items = tuple("u%d" % k for k in range(m))
    else:
        items = item_labels(m)
    consumers = []
    common_matroid = _rand_matroid(rng, items) if cls == "matroid-rank-common" else None
    for i in range(n):
        name = "c%d" % (i + 1)
        if cls == "additive":
            valuation: Valuation = Additive(_rand_weights(rng, items))
        elif cls == "unit-demand":
            valuation = UnitDemand(_rand_weights(rng, items))
        elif cls == "budget-additive":
            valuation = BudgetAdditive(_rand_weights(rng, items), _rand_rational(rng, 1, 10))
        elif cls == "multi-unit":
            steps = [ZERO]
            for _ in range(m):
                steps.append(steps[-1] + _rand_rational(rng, 0, 4))
            valuation = MultiUnit(tuple(steps))
        elif cls == "matroid-rank-uniform":
            valuation = WeightedMatroidRank(
                UniformMatroid(items, rng.randint(1, m)), _rand_weights(rng, items)
            )
        elif cls == "matroid-rank-common":
            valuation = WeightedMatroidRank(common_matroid, _rand_weights(rng, items))
        elif cls == "explicit-monotone":
            valuation = _rand_monotone(rng, items)
        else:
            valuation = _rand_superadditive(rng, items)
        consumers.append(Consumer(name, valuation))
    return Market(items, tuple(consumers))


def _rand_monotone(rng, items) -> Explicit:
    """Random values pushed up to their monotone closure."""
    table = {frozenset(): ZERO}
    draws = {}
    for s in canonical_subsets(items):
        if s:
            draws[frozenset(s)] = _rand_rational(rng)
    for fs in sorted(draws, key=lambda s: (len(s), sorted(s))):
        below = max((table[fs - {j}] for j in fs), default=ZERO)
        table[fs] = max(draws[fs], below)
    return Explicit(items, table)


def _rand_superadditive(rng, items) -> Explicit:
    """Superadditive closure of random seed values (monotone by construction)."""
    base = {frozenset(): ZERO}
    for s in canonical_subsets(items):
        if s:
            base[frozenset(s)] = _rand_rational(rng)
    table = {frozenset(): ZERO}
    ordered = sorted((frozenset(s) for s in canonical_subsets(items)), key=len)
    for fs in ordered:
        if not fs:
            continue
        best = base[fs]
        members = sorted(fs)
        anchor = members[0]
        for part in canonical_subsets(members[1:]):
            left = frozenset(part) | {anchor}
            if left == fs:
                continue
            cand = table[left] + table[fs - left]
            if cand > best:
                best = cand
        table[fs] = best
    return Explicit(items, table)


def _rand_matroid(rng, items) -> Matroid:
    """A random matroid: uniform, or the span structure of random GF(2) vectors."""
    if rng.random() < Fraction(1, 2):
        return UniformMatroid(items, rng.randint(1, len(items)))
    dim = rng.randint(1, max(1, len(items) - 1))
    vectors = {j: rng.randrange(1, 1 << dim) for j in items}
    family = set()
    for s in canonical_subsets(items):
        fs = frozenset(s)
        if _gf2_independent([vectors[j] for j in fs]):
            family.add(fs)
    return FamilyMatroid(items, frozenset(family))


def _gf2_independent(vectors: list[int]) -> bool:
    basis: list[int] = []
    for v in vectors:
        for b in basis:
            v = min(v, v ^ b)
        if v == 0:
            return False
        basis.append(v)
        basis.sort(reverse=True)
    return True


# ---------------------------------------------------------------------------
# JSON serialization
# ---------------------------------------------------------------------------


def _subset_key(subset: frozenset) -> str:
    return "".join(sorted(subset))


def market_to_dict(market: Market) -> dict:
    consumers = []
    for consumer in market.consumers:
        consumers.append(
            {"name": consumer.name, "valuation": _valuation_to_dict(consumer.valuation)}
        )
    return {"items": list(market.items), "consumers": consumers}


def _weights_to_dict(weights, items) -> dict:
    return {j: format_rational(weights[j]) for j in items}


def _valuation_to_dict(valuation: Valuation) -> dict:
    if isinstance(valuation, Explicit):
        if any(len(j) != 1 for j in valuation.ground):
            raise MarketError("explicit tables serialize only single-character labels")
        table = {}
        for s in canonical_subsets(valuation.ground):
            if s:
                table[_subset_key(frozenset(s))] = format_rational(
                    valuation.table[frozenset(s)]
                )
        return {"type": "explicit", "table": table}
    if isinstance(valuation, Additive):
        return {"type": "additive", "weights": _weights_to_dict(valuation.weights, sorted(valuation.weights))}
    if isinstance(valuation, UnitDemand):
        return {"type": "unit_demand", "weights": _weights_to_dict(valuation.weights, sorted(valuation.weights))}
    if isinstance(valuation, BudgetAdditive):
        return {
            "type": "budget_additive",
            "weights": _weights_to_dict(valuation.weights, sorted(valuation.weights)),
            "budget": format_rational(valuation.budget),
        }
    if isinstance(valuation, MultiUnit):
        return {"type": "multi_unit", "values": [format_rational(v) for v in valuation.by_count]}
    if isinstance(valuation, WeightedMatroidRank):
        return {
            "type": "matroid_rank",
            "matroid": _matroid_to_dict(valuation.matroid),
            "weights": _weights_to_dict(valuation.weights, sorted(valuation.weights)),
        }
    raise MarketError("unserializable valuation %r" % (type(valuation).__name__,))


def _matroid_to_dict(matroid: Matroid) -> dict:
    if isinstance(matroid, UniformMatroid):
        return {"kind": "uniform", "rank": matroid.k}
    if isinstance(matroid, FamilyMatroid):
        family = sorted(sorted(s) for s in matroid.family)
        return {"kind": "family", "independent": family}
    raise MarketError("unserializable matroid %r" % (type(matroid).__name__,))


def market_to_json(market: Market) -> str:
    return json.dumps(market_to_dict(market), indent=2) + "\n"


def save_market(market: Market, path: str) -> None:
    with open(path, "w", encoding="ascii") as handle:
        handle.write(market_to_json(market))


class LoadError(MarketError):
    """Schema violation; the message names the offending field."""


def _load_rational(node, where: str) -> Fraction:
    if not isinstance(node, str):
        raise LoadError("%s: rationals must be strings, got %r" % (where, node))
    try:
        return parse_rational(node)
    except Exception:
        raise LoadError("%s: malformed rational %r" % (where, node)) from None


def _load_weights(node, items, where: str) -> dict:
    if not isinstance(node, dict):
        raise LoadError("%s: weights must be an object" % where)
    out = {}
    for j in items:
        if j not in node:
            raise LoadError("%s: missing weight for item %r" % (where, j))
        out[j] = _load_rational(node[j], "%s.%s" % (where, j))
    extra = set(node) - set(items)
    if extra:
        raise LoadError("%s: unknown items %r" % (where, sorted(extra)))
    return out


def market_from_dict(data: dict) -> Market:
    if not isinstance(data, dict):
        raise LoadError("top level: expected an object")
    items = data.get("items")
    if not isinstance(items, list) or not all(isinstance(j, str) for j in items):
        raise LoadError("items: expected a list of labels")
    items = tuple(items)
    consumers_node = data.get("consumers")
    if not isinstance(consumers_node, list) or not consumers_node:
        raise LoadError("consumers: expected a nonempty list")
    consumers = []
    for idx, node in enumerate(consumers_node):
        where = "consumers[%d]" % idx
        if not isinstance(node, dict) or "name" not in node or "valuation" not in node:
            raise LoadError("%s: expected name and valuation" % where)
        consumers.append(
            Consumer(str(node["name"]), _valuation_from_dict(node["valuation"], items, where))
        )
    try:
        return Market(items, tuple(consumers))
    except MarketError as exc:
        raise LoadError("market: %s" % exc) from None


def _valuation_from_dict(node, items, where: str) -> Valuation:
    if not isinstance(node, dict) or "type" not in node:
        raise LoadError("%s.valuation: expected an object with a type" % where)
    kind = node["type"]
    try:
        if kind == "explicit":
            table_node = node.get("table")
            if not isinstance(table_node, dict):
                raise LoadError("%s.table: expected an object" % where)
            table = {frozenset(): ZERO}
            for key, value in table_node.items():
                subset = frozenset(key)
                if not subset <= frozenset(items) or len(key) != len(subset):
                    raise LoadError("%s.table: bad subset key %r" % (where, key))
                table[subset] = _load_rational(value, "%s.table.%s" % (where, key))
            return Explicit(items, table)
        if kind == "additive":
            return Additive(_load_weights(node.get("weights"), items, where + ".weights"))
        if kind == "unit_demand":
            return UnitDemand(_load_weights(node.get("weights"), items, where + ".weights"))
        if kind == "budget_additive":
            return BudgetAdditive(
                _load_weights(node.get("weights"), items, where + ".weights"),
                _load_rational(node.get("budget"), where + ".budget"),
            )
        if kind == "multi_unit":
            values = node.get("values")
            if not isinstance(values, list) or len(values) != len(items) + 1:
                raise LoadError("%s.values: expected m+1 entries" % where)
            return MultiUnit(
                tuple(_load_rational(v, "%s.values[%d]" % (where, k)) for k, v in enumerate(values))
            )
        if kind == "matroid_rank":
            return WeightedMatroidRank(
                _matroid_from_dict(node.get("matroid"), items, where + ".matroid"),
                _load_weights(node.get("weights"), items, where + ".weights"),
            )
    except MarketError as exc:
        if isinstance(exc, LoadError):
            raise
        raise LoadError("%s: %s" % (where, exc)) from None
    raise LoadError("%s.type: unknown valuation type %r" % (where, kind))


def _matroid_from_dict(node, items, where: str) -> Matroid:
    if not isinstance(node, dict) or "kind" not in node:
        raise LoadError("%s: expected an object with a kind" % where)
    kind = node["kind"]
    if kind == "uniform":
        rank = node.get("rank")
        if not isinstance(rank, int) or rank < 0:
            raise LoadError("%s.rank: expected a nonnegative integer" % where)
        return UniformMatroid(items, rank)
    if kind == "family":
        fam = node.get("independent")
        if not isinstance(fam, list):
            raise LoadError("%s.independent: expected a list of subsets" % where)
        family = set()
        for k, subset in enumerate(fam):
            if not isinstance(subset, list) or not set(subset) <= set(items):
                raise LoadError("%s.independent[%d]: bad subset" % (where, k))
            family.add(frozenset(subset))
        try:
            return FamilyMatroid(items, frozenset(family))
        except MarketError as exc:
            raise LoadError("%s: %s" % (where, exc)) from None
    raise LoadError("%s.kind: unknown matroid kind %r" % (where, kind))


def load_market(path: str) -> Market:
    with open(path, "r", encoding="ascii") as handle:
        try:
            data = json.load(handle)
        except json.JSONDecodeError as exc:
            raise LoadError("invalid JSON: %s" % exc) from None
    return market_from_dict(data)
