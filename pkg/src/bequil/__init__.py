"""Exact toolkit for competitive bundling equilibria in combinatorial markets.

Everything computes over exact rationals: the market model and its oracles
(`market`), an exact simplex with dual certificates (`numeric`), the three LP
models (`lp_models`), equilibrium verification and exhaustive bundling search
(`equilibrium`), the lifting toolkit (`lifting`), the per-class welfare
constructions (`welfare_algorithms`), the matroid revenue pipelines
(`revenue_algorithms`), and instance generators plus JSON serialization
(`instances`).  The `bequil` CLI fronts all of it.
"""

__version__ = "0.1.0"

from .numeric import (
    LinearProgram,
    LPSolution,
    Rational,
    format_rational,
    lp_feasible,
    lp_solve,
    make_lp,
    parse_rational,
    rat,
)
from .market import (
    Additive,
    Allocation,
    BudgetAdditive,
    Bundling,
    Consumer,
    Explicit,
    FamilyMatroid,
    Market,
    MarketError,
    MultiUnit,
    Outcome,
    PricedBundling,
    ScaleError,
    UniformMatroid,
    UnitDemand,
    WeightedMatroidRank,
    check_gross_substitutes,
    check_subadditive,
    check_superadditive,
    demand_query,
    induced_market,
    matroid_rank,
    value_query,
    welfare_opt,
)
from .lp_models import Cap2Result, ConfigLPResult, MenuMechanism, cap2_lp, config_lp, menu_lp, nlpe_to_cbe
from .equilibrium import (
    CbeSearchResult,
    CeResult,
    VerificationReport,
    cbe_search,
    ce_exists,
    verify_cbe,
    verify_ce,
)
from .lifting import (
    LogBinResult,
    PartialCbe,
    fgl_lift,
    lift_high_demand,
    lift_partial,
    log_bin,
)
from .welfare_algorithms import (
    budget_additive_cbe,
    general_m23,
    general_sqrt,
    greedy_ak,
    multiunit_cbe,
    multiunit_value_query_mode,
    subadditive_n_over_2,
    two_consumer_cbe,
)
from .revenue_algorithms import (
    ExtraConsumerState,
    ReserveEquilibrium,
    common_matroid_revenue_cbe,
    extra_consumer_start,
    extra_consumer_step,
    extra_consumer_to_cbe,
    reserve_equilibrium,
    uniform_matroid_revenue_cbe,
)
from .instances import gen_named, gen_random, load_market, save_market
