import itertools
import random
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bequil.numeric import (
    EQ,
    GE,
    LE,
    NumericError,
    ceil_cbrt,
    ceil_sqrt,
    floor_log2,
    format_rational,
    lp_feasible,
    lp_solve,
    make_lp,
    parse_rational,
    rat,
)

F = Fraction


class TestRat:
    def test_gcd_reduction(self):
        assert rat(2, 4) == F(1, 2)

    def test_zero(self):
        assert rat(0, 7) == F(0)
        assert format_rational(rat(0, 7)) == "0"

    def test_sign_normalization(self):
        q = rat(3, -6)
        assert q == F(-1, 2)
        assert q.denominator == 2 and q.numerator == -1

    def test_zero_denominator(self):
        with pytest.raises(NumericError):
            rat(1, 0)

    def test_parse_errors(self):
        for bad in ("1/0", "x", "1/y", "1.5"):
            with pytest.raises(NumericError):
                parse_rational(bad)

    @given(st.integers(-10**12, 10**12), st.integers(1, 10**9))
    def test_parse_format_roundtrip(self, num, den):
        q = F(num, den)
        assert parse_rational(format_rational(q)) == q


class TestLpSolve:
    def test_single_constraint(self):
        sol = lp_solve(make_lp("max", [1], [([1], LE, 3)]))
        assert sol.status == "optimal" and sol.value == 3

    def test_infeasible(self):
        sol = lp_solve(make_lp("max", [1], [([1], LE, -1)]))
        assert sol.status == "infeasible"

    def test_unbounded(self):
        sol = lp_solve(make_lp("max", [1], [([-1], LE, 1)]))
        assert sol.status == "unbounded"

    def test_min_with_mixed_rows(self):
        sol = lp_solve(
            make_lp("min", [2, 3], [([1, 1], GE, 4), ([1, -1], EQ, 0)])
        )
        assert sol.status == "optimal"
        assert sol.value == 10
        assert sol.primal == (F(2), F(2))

    def test_degenerate_redundant_rows(self):
        sol = lp_solve(
            make_lp(
                "max",
                [1, 1],
                [([1, 1], EQ, 2), ([2, 2], EQ, 4), ([1, 0], LE, 1)],
            )
        )
        assert sol.status == "optimal" and sol.value == 2

    def test_determinism(self):
        lp = make_lp(
            "max",
            [3, 5, 4],
            [([2, 3, 0], LE, 8), ([0, 2, 5], LE, 10), ([3, 2, 4], LE, 15)],
        )
        a, b = lp_solve(lp), lp_solve(lp)
        assert a == b


def _vertex_oracle(objective, rows):
    """Enumerate candidate vertices of a bounded 2-variable LP (with x >= 0)."""
    lines = [(coeffs, rhs) for coeffs, _, rhs in rows]
    lines += [([F(1), F(0)], F(0)), ([F(0), F(1)], F(0))]
    points = []
    for (a, b1), (c, b2) in itertools.combinations(lines, 2):
        det = a[0] * c[1] - a[1] * c[0]
        if det == 0:
            continue
        x = (b1 * c[1] - a[1] * b2) / det
        y = (a[0] * b2 - b1 * c[0]) / det
        points.append((x, y))
    best = None
    for x, y in points:
        if x < 0 or y < 0:
            continue
        if all(co[0] * x + co[1] * y <= rhs for co, _, rhs in rows):
            value = objective[0] * x + objective[1] * y
            if best is None or value > best:
                best = value
    return best


def test_against_vertex_enumeration():
    rng = random.Random(42)
    for _ in range(60):
        rows = []
        for _ in range(rng.randint(1, 4)):
            rows.append(
                (
                    [F(rng.randint(0, 4)), F(rng.randint(0, 4))],
                    LE,
                    F(rng.randint(0, 6)),
                )
            )
        rows.append(([F(1), F(1)], LE, F(rng.randint(1, 9))))  # keeps it bounded
        objective = [F(rng.randint(0, 5)), F(rng.randint(0, 5))]
        sol = lp_solve(make_lp("max", objective, rows))
        assert sol.status == "optimal"
        assert sol.value == _vertex_oracle(objective, rows)


def test_dual_program_matches_certificate():
    # max cx, Ax <= b  vs its explicit dual  min by, A^T y >= c, y >= 0
    rng = random.Random(7)
    for _ in range(40):
        n, m = rng.randint(1, 3), rng.randint(1, 3)
        a = [[F(rng.randint(0, 4)) for _ in range(n)] for _ in range(m)]
        b = [F(rng.randint(1, 6)) for _ in range(m)]
        c = [F(rng.randint(0, 4)) for _ in range(n)]
        primal = lp_solve(make_lp("max", c, [(row, LE, rhs) for row, rhs in zip(a, b)]))
        dual_rows = [([a[i][j] for i in range(m)], GE, c[j]) for j in range(n)]
        dual = lp_solve(make_lp("min", b, dual_rows))
        if primal.status == "unbounded":
            assert dual.status == "infeasible"
            continue
        assert primal.status == "optimal"
        assert dual.status == "optimal"
        assert dual.value == primal.value
        # the primal's dual certificate is feasible for the explicit dual
        assert sum(yi * bi for yi, bi in zip(primal.dual, b)) == primal.value


class TestLpFeasible:
    def test_interval(self):
        point = lp_feasible([([1], GE, 1), ([1], LE, 2)], 1)
        assert point is not None and F(1) <= point[0] <= F(2)

    def test_empty(self):
        assert lp_feasible([([1], GE, 1), ([1], LE, 0)], 1) is None

    def test_mixed_case_price_system(self):
        # price system for a two-item split sale: values x=(3,0,7/2), y=(2,3,7/2),
        # allocation a->1, b->2; every profit-maximization inequality as a row.
        x = {"a": F(3), "b": F(0), "ab": F(7, 2)}
        y = {"a": F(2), "b": F(3), "ab": F(7, 2)}
        rows = [
            # consumer 1 holds {a}: x_a - pa >= {0, x_b - pb, x_ab - pa - pb}
            ([-1, 0], GE, -x["a"]),
            ([-1, 1], GE, x["b"] - x["a"]),
            ([0, 1], GE, x["ab"] - x["a"]),
            # consumer 2 holds {b}: y_b - pb >= {0, y_a - pa, y_ab - pa - pb}
            ([0, -1], GE, -y["b"]),
            ([1, -1], GE, y["a"] - y["b"]),
            ([1, 0], GE, y["ab"] - y["b"]),
        ]
        rows = [([F(c) for c in coeffs], rel, F(rhs)) for coeffs, rel, rhs in rows]
        point = lp_feasible(rows, 2)
        assert point is not None
        # the hand-derived prices satisfy the same system
        pa, pb = F(3), F(2)
        for coeffs, _, rhs in rows:
            assert coeffs[0] * pa + coeffs[1] * pb >= rhs


@given(st.integers(1, 10**9))
def test_floor_log2(v):
    k = floor_log2(v)
    assert 2**k <= v < 2 ** (k + 1)


@given(st.integers(0, 10**9))
def test_ceil_roots(v):
    r = ceil_sqrt(v)
    assert (r - 1) ** 2 < v <= r * r or (v == 0 and r == 0)
    c = ceil_cbrt(v)
    assert (c - 1) ** 3 < v <= c**3 or (v == 0 and c == 0)
