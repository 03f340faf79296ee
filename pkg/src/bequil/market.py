"""Market model: items, valuation classes, matroids, bundlings and oracles.

A market is a set of item labels plus an ordered list of named consumers, each
carrying one valuation.  Valuations expose a single oracle, ``value(items)``,
returning an exact rational; demand queries, welfare maximization and the
subadditivity / gross-substitutes checks are built on top of it by (budgeted)
exhaustive enumeration, which is the intended operating mode of this library:
every answer is exact and every tie is resolved by a documented canonical
order.

Canonical orders used throughout:

* item order = the market's ``items`` tuple;
* subsets of an indexed universe are ordered lexicographically by their sorted
  index tuple, with the empty set first: (), (0,), (0,1), (0,1,2), (0,2), (1,), ...;
* set partitions are enumerated in restricted-growth-string order.

Everything here is immutable after construction and safe to share.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Optional, Sequence

from .numeric import ZERO, Fraction as Rational, format_rational

DEFAULT_BUDGET = 2_000_000


class MarketError(ValueError):
    """Malformed market data (bad valuation table, bad bundling, ...)."""


class ScaleError(RuntimeError):
    """An exhaustive operation exceeded its enumeration budget."""


def check_budget(amount: int, budget: int, what: str) -> None:
    if amount > budget:
        raise ScaleError("%s needs %d enumeration steps, budget is %d" % (what, amount, budget))


# ---------------------------------------------------------------------------
# canonical subset machinery
# ---------------------------------------------------------------------------


def canonical_subsets(universe: Sequence) -> Iterable[tuple]:
    """All subsets of `universe` as tuples, in canonical (sorted-tuple-lex) order."""
    n = len(universe)

    def rec(prefix, start):
        yield tuple(prefix)
        for k in range(start, n):
            prefix.append(universe[k])
            yield from rec(prefix, k + 1)
            prefix.pop()

    yield from rec([], 0)


def canonical_key(indices: Iterable[int]) -> tuple[int, ...]:
    return tuple(sorted(indices))


def submasks(mask: int) -> Iterable[int]:
    """All submasks of `mask` (unordered)."""
    sub = mask
    while True:
        yield sub
        if sub == 0:
            return
        sub = (sub - 1) & mask


def set_partitions(elements: Sequence) -> Iterable[tuple[tuple, ...]]:
    """All partitions of `elements` in restricted-growth-string order."""
    n = len(elements)
    if n == 0:
        yield ()
        return
    rgs = [0] * n

    def rec(i, maxval):
        if i == n:
            blocks = [[] for _ in range(maxval + 1)]
            for k, b in enumerate(rgs):
                blocks[b].append(elements[k])
            yield tuple(tuple(b) for b in blocks)
            return
        for b in range(maxval + 2):
            rgs[i] = b
            yield from rec(i + 1, max(maxval, b))

    yield from rec(1, 0)


def bell_number(n: int) -> int:
    if n <= 0:
        return 1
    row = [1]
    for _ in range(n - 1):
        nxt = [row[-1]]
        for v in row:
            nxt.append(nxt[-1] + v)
        row = nxt
    return row[-1]


# ---------------------------------------------------------------------------
# matroids
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Matroid:
    ground: tuple[str, ...]

    def independent(self, subset: frozenset) -> bool:
        raise NotImplementedError

    def rank(self, subset: frozenset) -> int:
        """Size of the largest independent subset of `subset` (matroid greedy)."""
        chosen: set = set()
        for item in sorted(subset):
            if self.independent(frozenset(chosen | {item})):
                chosen.add(item)
        return len(chosen)


@dataclass(frozen=True)
class UniformMatroid(Matroid):
    k: int = 0

    def __post_init__(self):
        if self.k < 0:
            raise MarketError("uniform matroid rank must be >= 0")

    def independent(self, subset: frozenset) -> bool:
        return len(subset) <= self.k


@dataclass(frozen=True)
class FamilyMatroid(Matroid):
    """Matroid given by an explicit family; the axioms are validated exhaustively."""

    family: frozenset = frozenset()

    def __post_init__(self):
        fam = self.family
        if frozenset() not in fam:
            raise MarketError("matroid family must contain the empty set")
        for s in fam:
            if not s <= frozenset(self.ground):
                raise MarketError("independent set %r outside the ground set" % (sorted(s),))
            for item in s:
                if s - {item} not in fam:
                    raise MarketError("matroid family is not downward closed at %r" % (sorted(s),))
        for s in fam:
            for t in fam:
                if len(s) > len(t) and not any(t | {j} in fam for j in s - t):
                    raise MarketError(
                        "exchange property fails for %r over %r" % (sorted(t), sorted(s))
                    )

    def independent(self, subset: frozenset) -> bool:
        return subset in self.family


def matroid_rank(matroid: Matroid, subset: frozenset) -> int:
    if not subset <= frozenset(matroid.ground):
        raise MarketError("rank query outside the ground set")
    return matroid.rank(subset)


# ---------------------------------------------------------------------------
# valuations
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Valuation:
    def value(self, items: frozenset) -> Fraction:
        raise NotImplementedError


@dataclass(frozen=True)
class Explicit(Valuation):
    """Total table over all subsets of its ground set; validated at construction."""

    ground: tuple[str, ...]
    table: Mapping[frozenset, Fraction]

    def __post_init__(self):
        object.__setattr__(self, "table", dict(self.table))
        if self.table.get(frozenset(), ZERO) != 0:
            raise MarketError("explicit valuation must have v(empty) = 0")
        self.table.setdefault(frozenset(), ZERO)
        all_subsets = {frozenset(s) for s in canonical_subsets(self.ground)}
        for subset in sorted(all_subsets, key=len):
            if subset not in self.table:
                raise MarketError("explicit table missing subset %r" % (sorted(subset),))
            for item in subset:
                if self.table[subset] < self.table[subset - {item}]:
                    raise MarketError("explicit table not monotone at %r" % (sorted(subset),))
        extra = set(self.table) - all_subsets
        if extra:
            raise MarketError("explicit table keys outside the ground set")

    def value(self, items: frozenset) -> Fraction:
        return self.table[items]


@dataclass(frozen=True)
class Additive(Valuation):
    weights: Mapping[str, Fraction]

    def __post_init__(self):
        object.__setattr__(self, "weights", dict(self.weights))
        if any(w < 0 for w in self.weights.values()):
            raise MarketError("additive weights must be nonnegative")

    def value(self, items: frozenset) -> Fraction:
        return sum((self.weights[j] for j in items), ZERO)


@dataclass(frozen=True)
class UnitDemand(Valuation):
    weights: Mapping[str, Fraction]

    def __post_init__(self):
        object.__setattr__(self, "weights", dict(self.weights))
        if any(w < 0 for w in self.weights.values()):
            raise MarketError("unit-demand weights must be nonnegative")

    def value(self, items: frozenset) -> Fraction:
        return max((self.weights[j] for j in items), default=ZERO)


@dataclass(frozen=True)
class BudgetAdditive(Valuation):
    weights: Mapping[str, Fraction]
    budget: Fraction = ZERO

    def __post_init__(self):
        object.__setattr__(self, "weights", dict(self.weights))
        if any(w < 0 for w in self.weights.values()) or self.budget < 0:
            raise MarketError("budget-additive data must be nonnegative")

    def value(self, items: frozenset) -> Fraction:
        return min(sum((self.weights[j] for j in items), ZERO), self.budget)


@dataclass(frozen=True)
class MultiUnit(Valuation):
    """Value depends only on the number of units; `by_count[c]` is v(c units)."""

    by_count: tuple[Fraction, ...] = ()

    def __post_init__(self):
        if not self.by_count or self.by_count[0] != 0:
            raise MarketError("multi-unit valuation needs by_count[0] = 0")
        for a, b in zip(self.by_count, self.by_count[1:]):
            if b < a:
                raise MarketError("multi-unit valuation must be monotone in the count")

    def value(self, items: frozenset) -> Fraction:
        return self.by_count[len(items)]

    def value_of_count(self, count: int) -> Fraction:
        return self.by_count[count]


@dataclass(frozen=True)
class WeightedMatroidRank(Valuation):
    """v(S) = weight of the maximum-weight independent subset of S."""

    matroid: Matroid = None
    weights: Mapping[str, Fraction] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "weights", dict(self.weights))
        if any(w < 0 for w in self.weights.values()):
            raise MarketError("matroid-rank weights must be nonnegative")

    def value(self, items: frozenset) -> Fraction:
        # Matroid greedy is exact for weighted rank; ties broken by label.
        order = sorted(items, key=lambda j: (-self.weights[j], j))
        chosen: set = set()
        total = ZERO
        for item in order:
            if self.matroid.independent(frozenset(chosen | {item})):
                chosen.add(item)
                total += self.weights[item]
        return total


@dataclass(frozen=True)
class Shifted(Valuation):
    """`base` plus a bonus on one exact set.  Non-monotone; internal to lifting."""

    base: Valuation = None
    target: frozenset = frozenset()
    bonus: Fraction = ZERO

    def value(self, items: frozenset) -> Fraction:
        v = self.base.value(items)
        if items == self.target:
            v = v + self.bonus
        return v


@dataclass(frozen=True)
class Consumer:
    name: str
    valuation: Valuation


@dataclass(frozen=True)
class Market:
    items: tuple[str, ...]
    consumers: tuple[Consumer, ...]

    def __post_init__(self):
        if len(set(self.items)) != len(self.items):
            raise MarketError("duplicate item labels")
        if not self.items or not self.consumers:
            raise MarketError("a market needs at least one item and one consumer")

    @property
    def m(self) -> int:
        return len(self.items)

    @property
    def n(self) -> int:
        return len(self.consumers)

    @property
    def mu(self) -> int:
        return min(self.m, self.n)

    @property
    def item_set(self) -> frozenset:
        return frozenset(self.items)

    def valuation(self, i: int) -> Valuation:
        return self.consumers[i].valuation

    def is_multi_unit(self) -> bool:
        return all(isinstance(c.valuation, MultiUnit) for c in self.consumers)


def value_query(valuation: Valuation, items: frozenset) -> Fraction:
    return valuation.value(frozenset(items))


# ---------------------------------------------------------------------------
# bundlings, allocations, outcomes
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Bundling:
    """Disjoint nonempty item sets; whether they cover a market is checked in context."""

    parts: tuple[frozenset, ...]

    def __post_init__(self):
        object.__setattr__(self, "parts", tuple(frozenset(p) for p in self.parts))
        seen: set = set()
        for p in self.parts:
            if not p:
                raise MarketError("bundles must be nonempty")
            if p & seen:
                raise MarketError("bundles must be pairwise disjoint")
            seen |= p

    def union(self) -> frozenset:
        return frozenset().union(*self.parts) if self.parts else frozenset()

    def covers(self, market: Market) -> bool:
        return self.union() == market.item_set


@dataclass(frozen=True)
class PricedBundling:
    bundling: Bundling
    prices: tuple[Fraction, ...]

    def __post_init__(self):
        if len(self.prices) != len(self.bundling.parts):
            raise MarketError("price vector length must equal the bundle count")
        if any(p < 0 for p in self.prices):
            raise MarketError("bundle prices must be nonnegative")

    @property
    def parts(self) -> tuple[frozenset, ...]:
        return self.bundling.parts


@dataclass(frozen=True)
class Allocation:
    """Per consumer, a set of bundle indices; index sets are pairwise disjoint."""

    bundle_sets: tuple[frozenset, ...]

    def __post_init__(self):
        object.__setattr__(self, "bundle_sets", tuple(frozenset(s) for s in self.bundle_sets))
        seen: set = set()
        for s in self.bundle_sets:
            if s & seen:
                raise MarketError("allocated bundle index sets must be disjoint")
            seen |= s

    def allocated_indices(self) -> frozenset:
        return frozenset().union(*self.bundle_sets) if self.bundle_sets else frozenset()


@dataclass(frozen=True)
class Outcome:
    """A CBE candidate: priced bundling plus an allocation of bundles to consumers."""

    priced: PricedBundling
    allocation: Allocation

    def __post_init__(self):
        count = len(self.priced.parts)
        for s in self.allocation.bundle_sets:
            if any(b < 0 or b >= count for b in s):
                raise MarketError("allocation references an unknown bundle index")

    def items_of(self, i: int) -> frozenset:
        parts = self.priced.parts
        out: frozenset = frozenset()
        for b in self.allocation.bundle_sets[i]:
            out |= parts[b]
        return out

    def welfare(self, market: Market) -> Fraction:
        return sum(
            (market.valuation(i).value(self.items_of(i)) for i in range(market.n)), ZERO
        )

    def revenue(self, market: Market) -> Fraction:
        alloc = self.allocation.allocated_indices()
        return sum((self.priced.prices[b] for b in alloc), ZERO)

    def describe(self) -> dict:
        return {
            "bundles": [sorted(p) for p in self.priced.parts],
            "prices": [format_rational(p) for p in self.priced.prices],
            "allocation": [sorted(s) for s in self.allocation.bundle_sets],
        }


def singleton_priced_bundling(market: Market, prices: Mapping[str, Fraction]) -> PricedBundling:
    parts = tuple(frozenset({j}) for j in market.items)
    return PricedBundling(Bundling(parts), tuple(Fraction(prices[j]) for j in market.items))


# ---------------------------------------------------------------------------
# demand oracles
# ---------------------------------------------------------------------------


def bundle_payoff(
    valuation: Valuation,
    parts: Sequence[frozenset],
    prices: Sequence[Fraction],
    chosen: Iterable[int],
) -> Fraction:
    chosen = tuple(chosen)
    items: frozenset = frozenset()
    for b in chosen:
        items |= parts[b]
    return valuation.value(items) - sum((prices[b] for b in chosen), ZERO)


def demand_best(
    valuation: Valuation,
    parts: Sequence[frozenset],
    prices: Sequence[Fraction],
    budget: int = DEFAULT_BUDGET,
) -> tuple[Fraction, frozenset]:
    """Max payoff and the canonically-first maximizing bundle-index set (brute force)."""
    check_budget(1 << len(parts), budget, "demand query")
    best = None
    best_set = None
    for chosen in canonical_subsets(range(len(parts))):
        payoff = bundle_payoff(valuation, parts, prices, chosen)
        if best is None or payoff > best:
            best = payoff
            best_set = frozenset(chosen)
    return best, best_set


def demand_query(
    valuation: Valuation, pb: PricedBundling, budget: int = DEFAULT_BUDGET
) -> tuple[frozenset, ...]:
    """All payoff-maximizing bundle-index sets, in canonical order (brute force)."""
    parts, prices = pb.parts, pb.prices
    check_budget(1 << len(parts), budget, "demand query")
    table = [
        (bundle_payoff(valuation, parts, prices, chosen), chosen)
        for chosen in canonical_subsets(range(len(parts)))
    ]
    best = max(p for p, _ in table)
    return tuple(frozenset(chosen) for p, chosen in table if p == best)


def demand_query_additive(valuation: Additive, pb: PricedBundling) -> tuple[frozenset, ...]:
    """Specialized additive demand: per-bundle surplus decides independently."""
    keep = []
    tied = []
    for b, part in enumerate(pb.parts):
        surplus = valuation.value(part) - pb.prices[b]
        if surplus > 0:
            keep.append(b)
        elif surplus == 0:
            tied.append(b)
    out = []
    for extra in canonical_subsets(tied):
        out.append(frozenset(keep) | frozenset(extra))
    return tuple(sorted(out, key=canonical_key))


# ---------------------------------------------------------------------------
# valuation class checks
# ---------------------------------------------------------------------------


def _nonempty_subsets(ground: Sequence[str]):
    for s in canonical_subsets(ground):
        if s:
            yield frozenset(s)


def check_subadditive(
    valuation: Valuation, ground: Sequence[str], budget: int = DEFAULT_BUDGET
) -> bool:
    """Exhaustive v(T) + v(U) >= v(T | U) over disjoint nonempty pairs."""
    check_budget(3 ** len(ground), budget, "subadditivity check")
    return _pairwise_check(valuation, ground, lambda vt, vu, vtu: vt + vu >= vtu)


def check_superadditive(
    valuation: Valuation, ground: Sequence[str], budget: int = DEFAULT_BUDGET
) -> bool:
    """Exhaustive v(T) + v(U) <= v(T | U) over disjoint nonempty pairs."""
    check_budget(3 ** len(ground), budget, "superadditivity check")
    return _pairwise_check(valuation, ground, lambda vt, vu, vtu: vt + vu <= vtu)


def _pairwise_check(valuation, ground, ok) -> bool:
    items = tuple(ground)
    for t in _nonempty_subsets(items):
        rest = [j for j in items if j not in t]
        for u in canonical_subsets(rest):
            if not u:
                continue
            u = frozenset(u)
            if not ok(valuation.value(t), valuation.value(u), valuation.value(t | u)):
                return False
    return True


def check_gross_substitutes(
    valuation: Valuation, ground: Sequence[str], budget: int = DEFAULT_BUDGET
) -> bool:
    """Finite local test: submodularity plus the three-item exchange condition."""
    items = tuple(ground)
    m = len(items)
    check_budget((2**m) * m * m * m, budget, "gross-substitutes check")
    v = lambda s: valuation.value(frozenset(s))
    for base in canonical_subsets(items):
        s = frozenset(base)
        outside = [j for j in items if j not in s]
        for a, b in itertools.combinations(outside, 2):
            if v(s | {a}) + v(s | {b}) < v(s | {a, b}) + v(s):
                return False
        for a, b, c in itertools.permutations(outside, 3):
            if a > b:
                continue  # the condition is symmetric in (a, b)
            lhs = v(s | {a, b}) + v(s | {c})
            if lhs > max(v(s | {a, c}) + v(s | {b}), v(s | {b, c}) + v(s | {a})):
                return False
    return True


# ---------------------------------------------------------------------------
# welfare maximization and induced markets
# ---------------------------------------------------------------------------


def welfare_opt(
    market: Market, budget: int = DEFAULT_BUDGET
) -> tuple[Fraction, tuple[frozenset, ...]]:
    """Exact max of sum_i v_i(O_i) over full allocations, with a canonical witness.

    Monotonicity makes full allocations lossless.  The witness is deterministic:
    consumer 0's part is canonically first among optimal continuations, then
    consumer 1's, and so on (the last consumer absorbs the remainder).
    """
    if market.is_multi_unit():
        return _welfare_opt_multiunit(market)
    n, m = market.n, market.m
    check_budget(n * 3**m, budget, "welfare maximization")
    items = market.items
    full = (1 << m) - 1

    table: list[dict] = [dict() for _ in range(n)]

    def mask_items(mask: int) -> frozenset:
        return frozenset(items[k] for k in range(m) if mask >> k & 1)

    def best(i: int, remaining: int) -> Fraction:
        if i == n - 1:
            return market.valuation(i).value(mask_items(remaining))
        memo = table[i]
        if remaining in memo:
            return memo[remaining]
        out = None
        for sub in submasks(remaining):
            cand = market.valuation(i).value(mask_items(sub)) + best(i + 1, remaining & ~sub)
            if out is None or cand > out:
                out = cand
        memo[remaining] = out
        return out

    opt = best(0, full)

    allocation = []
    remaining = full
    for i in range(n - 1):
        target = best(i, remaining)
        subs = sorted(submasks(remaining), key=lambda s: canonical_key(_mask_bits(s)))
        for sub in subs:
            if market.valuation(i).value(mask_items(sub)) + best(i + 1, remaining & ~sub) == target:
                allocation.append(mask_items(sub))
                remaining &= ~sub
                break
    allocation.append(mask_items(remaining))
    return opt, tuple(allocation)


def _mask_bits(mask: int) -> tuple[int, ...]:
    return tuple(k for k in range(mask.bit_length()) if mask >> k & 1)


def _welfare_opt_multiunit(market: Market) -> tuple[Fraction, tuple[frozenset, ...]]:
    n, m = market.n, market.m
    table: list[dict] = [dict() for _ in range(n)]

    def best(i: int, units: int) -> Fraction:
        if i == n - 1:
            return market.valuation(i).value_of_count(units)
        memo = table[i]
        if units in memo:
            return memo[units]
        out = max(
            market.valuation(i).value_of_count(c) + best(i + 1, units - c)
            for c in range(units + 1)
        )
        memo[units] = out
        return out

    opt = best(0, m)
    counts = []
    units = m
    for i in range(n - 1):
        target = best(i, units)
        for c in range(units + 1):
            if market.valuation(i).value_of_count(c) + best(i + 1, units - c) == target:
                counts.append(c)
                units -= c
                break
    counts.append(units)

    allocation = []
    cursor = 0
    for c in counts:
        allocation.append(frozenset(market.items[cursor : cursor + c]))
        cursor += c
    return opt, tuple(allocation)


def induced_market(market: Market, bundling: Bundling) -> Market:
    """Market over the bundles as indivisible goods; v'(T) = v(union of T)."""
    if not bundling.covers(market):
        raise MarketError("bundling does not cover the market's items")
    k = len(bundling.parts)
    if k > 26:
        raise MarketError("induced markets support at most 26 bundles")
    labels = tuple(chr(ord("A") + idx) for idx in range(k))
    consumers = []
    for consumer in market.consumers:
        table = {}
        for chosen in canonical_subsets(range(k)):
            items: frozenset = frozenset()
            for b in chosen:
                items |= bundling.parts[b]
            table[frozenset(labels[b] for b in chosen)] = consumer.valuation.value(items)
        consumers.append(Consumer(consumer.name, Explicit(labels, table)))
    return Market(labels, tuple(consumers))
