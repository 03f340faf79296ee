import random
from fractions import Fraction

import pytest

from conftest import (
    F,
    brute_demand_payoff,
    brute_welfare,
    explicit_market,
    multiunit_market,
    prop22_market,
    two_item_market,
)
from bequil.market import (
    Additive,
    Bundling,
    BudgetAdditive,
    Consumer,
    Explicit,
    FamilyMatroid,
    Market,
    MarketError,
    MultiUnit,
    PricedBundling,
    ScaleError,
    UniformMatroid,
    UnitDemand,
    WeightedMatroidRank,
    bell_number,
    check_gross_substitutes,
    check_subadditive,
    check_superadditive,
    demand_query,
    demand_query_additive,
    induced_market,
    matroid_rank,
    set_partitions,
    singleton_priced_bundling,
    value_query,
    welfare_opt,
)
from bequil.instances import gen_budget_table, gen_multiunit_tight, gen_random


class TestValueQuery:
    def test_budget_cap(self):
        v = BudgetAdditive({"a": F(2), "b": F(1), "c": F(1)}, F(2))
        assert value_query(v, frozenset("bc")) == F(2)

    def test_empty_set(self):
        for v in (
            Additive({"a": F(1)}),
            UnitDemand({"a": F(1)}),
            BudgetAdditive({"a": F(1)}, F(1)),
            MultiUnit((F(0), F(1))),
            WeightedMatroidRank(UniformMatroid(("a",), 1), {"a": F(1)}),
        ):
            assert value_query(v, frozenset()) == 0

    def test_rank_one_cap(self):
        v = WeightedMatroidRank(UniformMatroid(("a", "b"), 1), {"a": F(1), "b": F(1)})
        assert value_query(v, frozenset("ab")) == 1

    def test_explicit_validation(self):
        with pytest.raises(MarketError):
            Explicit(("a",), {frozenset(): F(1), frozenset("a"): F(2)})
        with pytest.raises(MarketError):
            Explicit(("a", "b"), {frozenset("a"): F(1)})  # missing subsets
        with pytest.raises(MarketError):
            Explicit(
                ("a", "b"),
                {
                    frozenset("a"): F(2),
                    frozenset("b"): F(0),
                    frozenset("ab"): F(1),  # not monotone
                },
            )


class TestDemandQuery:
    def test_unit_demand_forced(self):
        market = Market(
            ("a", "b"),
            (Consumer("c", UnitDemand({"a": F(2), "b": F(2)})),),
        )
        pb = singleton_priced_bundling(market, {"a": F(1), "b": F(3)})
        assert demand_query(market.valuation(0), pb) == (frozenset({0}),)

    def test_zero_prices_include_everything(self):
        market = prop22_market()
        pb = singleton_priced_bundling(market, {"a": F(0), "b": F(0)})
        result = demand_query(market.valuation(0), pb)
        assert frozenset({0, 1}) in result

    def test_pair_lover_unique_demand(self):
        market = prop22_market()
        pb = singleton_priced_bundling(market, {"a": F(1), "b": F(1)})
        assert demand_query(market.valuation(0), pb) == (frozenset({0, 1}),)

    def test_additive_path_matches_brute_force(self):
        rng = random.Random(11)
        for _ in range(40):
            m = rng.randint(1, 4)
            items = tuple("abcd"[:m])
            v = Additive({j: F(rng.randint(0, 3)) for j in items})
            parts = tuple(frozenset({j}) for j in items)
            prices = tuple(F(rng.randint(0, 3)) for _ in items)
            pb = PricedBundling(Bundling(parts), prices)
            assert demand_query_additive(v, pb) == demand_query(v, pb)

    def test_max_payoff_matches_independent_oracle(self):
        rng = random.Random(5)
        for _ in range(25):
            market = gen_random("explicit-monotone", 3, 2, rng.randint(0, 999))
            prices = {j: F(rng.randint(0, 3), rng.choice((1, 2))) for j in market.items}
            pb = singleton_priced_bundling(market, prices)
            for i in range(market.n):
                sets = demand_query(market.valuation(i), pb)
                from bequil.market import bundle_payoff

                payoff = bundle_payoff(market.valuation(i), pb.parts, pb.prices, sets[0])
                assert payoff == brute_demand_payoff(market.valuation(i), pb.parts, pb.prices)


class TestMatroids:
    def test_uniform_rank(self):
        assert matroid_rank(UniformMatroid(("a", "b", "c"), 2), frozenset("abc")) == 2

    def test_empty_rank(self):
        assert matroid_rank(UniformMatroid(("a",), 1), frozenset()) == 0

    def test_family_rank(self):
        fam = FamilyMatroid(
            ("a", "b", "c"),
            frozenset(
                frozenset(s) for s in ("", "a", "b", "c", "ab", "ac", "bc")
            ),
        )
        assert matroid_rank(fam, frozenset("abc")) == 2

    def test_family_validation(self):
        with pytest.raises(MarketError):  # not downward closed
            FamilyMatroid(("a", "b"), frozenset({frozenset(), frozenset("ab")}))
        with pytest.raises(MarketError):  # exchange fails
            FamilyMatroid(
                ("a", "b", "c"),
                frozenset(
                    frozenset(s) for s in ("", "a", "b", "c", "bc")
                ),
            )
        with pytest.raises(MarketError):  # empty set missing
            FamilyMatroid(("a",), frozenset({frozenset("a")}))


class TestShapeChecks:
    def test_additive_is_both(self):
        v = Additive({"a": F(1), "b": F(2)})
        assert check_subadditive(v, ("a", "b"))
        assert check_superadditive(v, ("a", "b"))

    def test_pair_lover_not_subadditive(self):
        market = prop22_market()
        assert not check_subadditive(market.valuation(0), market.items)
        assert check_subadditive(market.valuation(1), market.items)

    def test_multiunit_tight_consumer_is_subadditive(self):
        market = gen_multiunit_tight(4, F(1, 10))
        for i in range(market.n):
            assert check_subadditive(market.valuation(i), market.items)

    def test_gs_additive(self):
        assert check_gross_substitutes(Additive({"a": F(1), "b": F(3)}), ("a", "b"))

    def test_gs_equals_subadditive_on_two_items(self):
        grid = [F(k, 2) for k in range(5)]
        for va in grid:
            for vb in grid:
                for vab in grid:
                    if vab < max(va, vb):
                        continue
                    v = Explicit(
                        ("a", "b"),
                        {
                            frozenset("a"): va,
                            frozenset("b"): vb,
                            frozenset("ab"): vab,
                        },
                    )
                    assert check_gross_substitutes(v, ("a", "b")) == check_subadditive(
                        v, ("a", "b")
                    )

    def test_wmr_is_gs(self):
        rng = random.Random(3)
        for seed in range(12):
            market = gen_random("matroid-rank-common", 4, 2, seed)
            for i in range(market.n):
                assert check_gross_substitutes(market.valuation(i), market.items)
        for seed in range(12):
            market = gen_random("matroid-rank-uniform", 4, 2, seed)
            for i in range(market.n):
                assert check_gross_substitutes(market.valuation(i), market.items)


class TestWelfareOpt:
    def test_prop22(self):
        opt, witness = welfare_opt(prop22_market())
        assert opt == 3
        total = frozenset().union(*witness)
        assert total == frozenset("ab")

    def test_budget_table(self):
        # delta below eps/2 keeps the a->1, b->2, c->3 allocation optimal
        eps, delta = F(1, 100), F(1, 10000)
        opt, _ = welfare_opt(gen_budget_table(eps, delta))
        assert opt == 5 - eps / 2 - delta

    def test_budget_table_large_delta_flips_optimum(self):
        # with delta >= eps/2 the allocation c->1, b->2, a->3 takes over
        eps = delta = F(1, 100)
        opt, _ = welfare_opt(gen_budget_table(eps, delta))
        assert opt == 5 - eps

    def test_single_consumer(self):
        market = explicit_market(("a", "b"), [{"a": 1, "b": 2, "ab": 5}])
        opt, witness = welfare_opt(market)
        assert opt == 5 and witness == (frozenset("ab"),)

    def test_matches_independent_enumeration(self):
        rng = random.Random(17)
        for cls in ("explicit-monotone", "additive", "budget-additive"):
            for _ in range(6):
                market = gen_random(cls, rng.randint(1, 4), rng.randint(1, 3), rng.randint(0, 999))
                opt, witness = welfare_opt(market)
                assert opt == brute_welfare(market)
                total = sum(
                    (market.valuation(i).value(witness[i]) for i in range(market.n)),
                    F(0),
                )
                assert total == opt

    def test_multiunit_specialization_agrees(self):
        rng = random.Random(23)
        for _ in range(8):
            m, n = rng.randint(1, 5), rng.randint(1, 3)
            market = gen_random("multi-unit", m, n, rng.randint(0, 999))
            generic = explicit_market(
                tuple("abcde"[:m]),
                [
                    {
                        "".join(sorted(s)): market.valuation(i).value_of_count(len(s))
                        for s in _nonempty_subsets("abcde"[:m])
                    }
                    for i in range(n)
                ],
            )
            assert welfare_opt(market)[0] == welfare_opt(generic)[0]

    def test_scale_guard(self):
        market = gen_random("additive", 5, 3, 0)
        with pytest.raises(ScaleError):
            welfare_opt(market, budget=10)


def _nonempty_subsets(labels):
    import itertools

    for size in range(1, len(labels) + 1):
        for combo in itertools.combinations(labels, size):
            yield combo


class TestInducedMarket:
    def test_singleton_bundling_isomorphic(self):
        market = prop22_market()
        induced = induced_market(
            market, Bundling((frozenset("a"), frozenset("b")))
        )
        assert welfare_opt(induced)[0] == welfare_opt(market)[0]
        assert induced.valuation(0).value(frozenset("AB")) == F(21, 10)

    def test_two_bundle_split_keeps_subadditivity(self):
        rng = random.Random(9)
        for seed in range(8):
            market = gen_random("unit-demand", 4, 2, seed)
            opt, witness = welfare_opt(market)
            if not witness[0] or not witness[1]:
                continue
            induced = induced_market(market, Bundling((witness[0], witness[1])))
            for i in range(2):
                assert check_subadditive(induced.valuation(i), induced.items)

    def test_grand_bundle(self):
        market = prop22_market()
        induced = induced_market(market, Bundling((frozenset("ab"),)))
        assert induced.m == 1
        assert induced.valuation(0).value(frozenset("A")) == F(21, 10)
        assert induced.valuation(1).value(frozenset("A")) == F(2)

    def test_refining_bundling_preserves_optimum(self):
        market = gen_budget_table(F(1, 100), F(1, 100))
        opt, witness = welfare_opt(market)
        parts = tuple(p for p in witness if p)
        leftover = market.item_set - frozenset().union(*parts)
        if leftover:
            parts = parts + (leftover,)
        induced = induced_market(market, Bundling(parts))
        assert welfare_opt(induced)[0] == opt


class TestPartitions:
    def test_bell_numbers(self):
        assert [bell_number(k) for k in range(1, 9)] == [1, 2, 5, 15, 52, 203, 877, 4140]

    def test_partition_enumeration(self):
        parts = list(set_partitions("abc"))
        assert len(parts) == 5
        assert parts[0] == (("a", "b", "c"),)
        assert parts[-1] == (("a",), ("b",), ("c",))
        seen = {tuple(sorted(tuple(sorted(b)) for b in p)) for p in parts}
        assert len(seen) == 5
