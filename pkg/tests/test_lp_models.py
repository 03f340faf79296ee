import random
from fractions import Fraction

import pytest

from conftest import F, brute_welfare, explicit_market, prop22_market
from bequil.market import Additive, Consumer, Market, MarketError, welfare_opt
from bequil.lp_models import cap2_lp, config_lp, menu_lp, nlpe_to_cbe
from bequil.equilibrium import ce_exists, verify_cbe
from bequil.instances import (
    equal_revenue_values,
    gen_budget_table,
    gen_pair_vs_singles,
    gen_random,
    gen_submodular_gap,
)


class TestConfigLP:
    def test_two_item_gap(self):
        res = config_lp(prop22_market(F(1, 10)))
        assert res.fractional == F(61, 20)
        assert res.integral == 3
        assert not res.integral_flag

    def test_budget_table(self):
        eps = delta = F(1, 100)
        res = config_lp(gen_budget_table(eps, delta))
        assert res.fractional == 5 - eps / 2
        assert not res.integral_flag

    def test_single_additive(self):
        market = Market(
            ("a", "b"), (Consumer("c", Additive({"a": F(2), "b": F(3, 2)})),)
        )
        res = config_lp(market)
        assert res.fractional == res.integral == F(7, 2)
        assert res.integral_flag

    def test_fractional_dominates_integral(self):
        rng = random.Random(31)
        for cls in ("explicit-monotone", "unit-demand", "superadditive"):
            for _ in range(5):
                market = gen_random(cls, rng.randint(1, 4), rng.randint(1, 3), rng.randint(0, 999))
                res = config_lp(market)
                assert res.fractional >= res.integral
                assert res.integral == brute_welfare(market)

    def test_support_is_feasible(self):
        res = config_lp(prop22_market())
        for j in ("a", "b"):
            assert sum((x for _, s, x in res.support if j in s), F(0)) <= 1
        for i in range(2):
            assert sum((x for ci, _, x in res.support if ci == i), F(0)) <= 1


class TestCap2:
    def test_pair_vs_singles(self):
        res = cap2_lp(gen_pair_vs_singles())
        assert res.fractional == 11
        assert res.integral == 8
        assert not res.integral_flag

    def test_submodular_gap(self):
        res = cap2_lp(gen_submodular_gap())
        assert res.fractional == 4
        assert res.integral == F(7, 2)
        assert not res.integral_flag

    def test_single_consumer(self):
        market = explicit_market(("a", "b"), [{"a": 1, "b": 1, "ab": 3}])
        res = cap2_lp(market)
        assert res.fractional == res.integral == 3
        assert res.integral_flag

    def test_dominates_welfare(self):
        rng = random.Random(5)
        for _ in range(6):
            market = gen_random("explicit-monotone", 3, 2, rng.randint(0, 999))
            res = cap2_lp(market)
            assert res.fractional >= welfare_opt(market)[0]


class TestNlpeToCbe:
    def test_two_additive(self):
        market = Market(
            ("a", "b"),
            (
                Consumer("c1", Additive({"a": F(3), "b": F(1)})),
                Consumer("c2", Additive({"a": F(1), "b": F(2)})),
            ),
        )
        res = cap2_lp(market)
        assert res.integral_flag
        outcome = nlpe_to_cbe(market, res)
        assert verify_cbe(market, outcome).ok
        assert outcome.welfare(market) == 5

    def test_requires_integrality(self):
        market = gen_pair_vs_singles()
        res = cap2_lp(market)
        with pytest.raises(MarketError):
            nlpe_to_cbe(market, res)

    def test_superadditive_integrality_end_to_end(self):
        for seed in range(12):
            market = gen_random("superadditive", 3, 2, seed)
            res = cap2_lp(market)
            assert res.integral_flag  # partition LP is integral for superadditive
            outcome = nlpe_to_cbe(market, res)
            report = verify_cbe(market, outcome)
            assert report.ok
            assert report.welfare == welfare_opt(market)[0]

    def test_single_consumer_grand_bundle(self):
        market = explicit_market(("a", "b"), [{"a": 1, "b": 1, "ab": 3}])
        res = cap2_lp(market)
        outcome = nlpe_to_cbe(market, res)
        assert outcome.welfare(market) == 3
        assert len(outcome.priced.parts) == 1


class TestMenuLP:
    def test_two_values_cap_one(self):
        mech = menu_lp([F(1, 2), F(1, 3)], F(1))
        assert mech.expected_revenue == F(1, 3)

    def test_cap_zero(self):
        mech = menu_lp([F(1, 2), F(1, 3)], F(0))
        assert mech.expected_revenue == 0

    def test_four_values_cap_half(self):
        mech = menu_lp(equal_revenue_values(5), F(1, 2))
        assert mech.expected_revenue <= F(1, 8)

    def test_reserve_oracle_at_cap_one(self):
        for n in range(2, 9):
            values = equal_revenue_values(n)
            mech = menu_lp(values, F(1))
            oracle = max(
                v * sum(1 for u in values if u >= v) / len(values) for v in values
            )
            assert mech.expected_revenue == oracle == F(1, n)

    def test_claim_bound_grid(self):
        caps = [F(0), F(1, 4), F(1, 2), F(3, 4), F(1)]
        for n in range(2, 9):
            for cap in caps:
                mech = menu_lp(equal_revenue_values(n), cap)
                assert mech.expected_revenue <= cap / (n - 1)

    def test_rejects_bad_input(self):
        with pytest.raises(MarketError):
            menu_lp([F(1, 2), F(1, 2)], F(1))
        with pytest.raises(MarketError):
            menu_lp([F(1, 2)], F(2))


def test_ce_exists_agrees_with_config_flag():
    rng = random.Random(77)
    for cls in ("additive", "unit-demand", "explicit-monotone"):
        for _ in range(5):
            market = gen_random(cls, rng.randint(1, 4), rng.randint(1, 3), rng.randint(0, 999))
            assert ce_exists(market).exists == config_lp(market).integral_flag
