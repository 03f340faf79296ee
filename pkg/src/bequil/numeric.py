"""Exact rational arithmetic and an exact LP solver with primal/dual certificates.

All numbers are `fractions.Fraction` (aliased `Rational`): arithmetic is closed
and exact, comparisons are exact, and there is no floating point anywhere in
this module.  The solver is a two-phase tableau simplex with Bland's pivot
rule, which guarantees termination and makes the output deterministic for a
fixed input.  Every optimal solve carries a dual certificate indexed by the
original constraint rows, and the certificate is re-verified exactly (primal
feasibility, dual feasibility, equal objectives, complementary slackness)
before it is returned.

Variables are implicitly bounded below by 0.  Duals follow the asymmetric
convention: for a `max` program, y_i >= 0 on `<=` rows, y_i <= 0 on `>=` rows,
free on `==` rows, with dual feasibility sum_i y_i A[i][j] >= c[j]; for `min`
programs the signs and the direction of dual feasibility flip.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Optional, Sequence

Rational = Fraction

ZERO = Fraction(0)
ONE = Fraction(1)

LE = "<="
GE = ">="
EQ = "=="

_RELATIONS = (LE, GE, EQ)


class NumericError(ValueError):
    """Malformed LP data or a broken solver certificate."""


def rat(num: int, den: int = 1) -> Fraction:
    """Canonical rational num/den.  A zero denominator is a construction error."""
    if den == 0:
        raise NumericError("zero denominator in rational %r/0" % (num,))
    return Fraction(num, den)


def parse_rational(text: str) -> Fraction:
    """Parse the wire format "p/q" (or "p" when q = 1), ASCII, no whitespace."""
    s = text.strip()
    if "/" in s:
        num_s, den_s = s.split("/", 1)
        try:
            num, den = int(num_s), int(den_s)
        except ValueError:
            raise NumericError("malformed rational %r" % (text,)) from None
        if den == 0:
            raise NumericError("malformed rational %r (zero denominator)" % (text,))
        return Fraction(num, den)
    try:
        return Fraction(int(s))
    except ValueError:
        raise NumericError("malformed rational %r" % (text,)) from None


def format_rational(value: Fraction) -> str:
    """Serialize as "p/q", or "p" when the denominator is 1."""
    if value.denominator == 1:
        return str(value.numerator)
    return "%d/%d" % (value.numerator, value.denominator)


@dataclass(frozen=True)
class Constraint:
    coeffs: tuple[Fraction, ...]
    relation: str
    rhs: Fraction

    def __post_init__(self):
        if self.relation not in _RELATIONS:
            raise NumericError("unknown relation %r" % (self.relation,))


@dataclass(frozen=True)
class LinearProgram:
    """An exact LP: optimize objective . x subject to rows, x >= 0 componentwise."""

    sense: str  # "max" | "min"
    objective: tuple[Fraction, ...]
    constraints: tuple[Constraint, ...]

    def __post_init__(self):
        if self.sense not in ("max", "min"):
            raise NumericError("sense must be 'max' or 'min', got %r" % (self.sense,))
        width = len(self.objective)
        for k, row in enumerate(self.constraints):
            if len(row.coeffs) != width:
                raise NumericError(
                    "constraint %d has width %d, objective has width %d"
                    % (k, len(row.coeffs), width)
                )

    @property
    def num_vars(self) -> int:
        return len(self.objective)


def make_lp(sense, objective, rows) -> LinearProgram:
    """Build a LinearProgram from plain lists; rows are (coeffs, relation, rhs)."""
    obj = tuple(Fraction(c) for c in objective)
    cons = tuple(
        Constraint(tuple(Fraction(c) for c in coeffs), rel, Fraction(rhs))
        for coeffs, rel, rhs in rows
    )
    return LinearProgram(sense, obj, cons)


@dataclass(frozen=True)
class LPSolution:
    """Solve result; `primal`/`dual`/`value` are populated iff status=="optimal".

    `dual[i]` is the multiplier of original constraint row i (see module
    docstring for the sign convention).
    """

    status: str  # "optimal" | "infeasible" | "unbounded"
    value: Optional[Fraction] = None
    primal: tuple[Fraction, ...] = field(default_factory=tuple)
    dual: tuple[Fraction, ...] = field(default_factory=tuple)

    def verify(self, lp: LinearProgram) -> None:
        """Exact certificate check; raises NumericError on any violation."""
        if self.status != "optimal":
            return
        x, y = self.primal, self.dual
        if len(x) != lp.num_vars or len(y) != len(lp.constraints):
            raise NumericError("certificate has wrong dimensions")
        if any(xj < 0 for xj in x):
            raise NumericError("primal violates x >= 0")
        maximizing = lp.sense == "max"
        for i, row in enumerate(lp.constraints):
            lhs = _dot(row.coeffs, x)
            if row.relation == LE and lhs > row.rhs:
                raise NumericError("primal violates row %d" % i)
            if row.relation == GE and lhs < row.rhs:
                raise NumericError("primal violates row %d" % i)
            if row.relation == EQ and lhs != row.rhs:
                raise NumericError("primal violates row %d" % i)
            # dual sign
            yi = y[i]
            pos_rel = LE if maximizing else GE
            neg_rel = GE if maximizing else LE
            if row.relation == pos_rel and yi < 0:
                raise NumericError("dual sign violated on row %d" % i)
            if row.relation == neg_rel and yi > 0:
                raise NumericError("dual sign violated on row %d" % i)
            # complementary slackness (row side)
            if yi != 0 and lhs != row.rhs:
                raise NumericError("complementary slackness violated on row %d" % i)
        obj = _dot(lp.objective, x)
        if obj != self.value:
            raise NumericError("objective value mismatch")
        ybt = sum((y[i] * row.rhs for i, row in enumerate(lp.constraints)), ZERO)
        if ybt != self.value:
            raise NumericError("strong duality violated: %s != %s" % (ybt, self.value))
        for j in range(lp.num_vars):
            col = sum((y[i] * row.coeffs[j] for i, row in enumerate(lp.constraints)), ZERO)
            cj = lp.objective[j]
            if maximizing:
                if col < cj:
                    raise NumericError("dual infeasible at column %d" % j)
                if x[j] > 0 and col != cj:
                    raise NumericError("complementary slackness violated at column %d" % j)
            else:
                if col > cj:
                    raise NumericError("dual infeasible at column %d" % j)
                if x[j] > 0 and col != cj:
                    raise NumericError("complementary slackness violated at column %d" % j)


def _dot(a: Sequence[Fraction], b: Sequence[Fraction]) -> Fraction:
    return sum((ai * bi for ai, bi in zip(a, b)), ZERO)


def _pivot(tableau, zrow, basis, r, c):
    prow = tableau[r]
    piv = prow[c]
    inv = ONE / piv
    tableau[r] = [v * inv for v in prow]
    prow = tableau[r]
    for i, row in enumerate(tableau):
        if i == r:
            continue
        f = row[c]
        if f != 0:
            tableau[i] = [v - f * p for v, p in zip(row, prow)]
    f = zrow[c]
    if f != 0:
        zrow[:] = [v - f * p for v, p in zip(zrow, prow)]
    basis[r] = c


def _run_simplex(tableau, zrow, basis, allowed) -> str:
    """Bland's rule loop; returns "optimal" or "unbounded"."""
    num_cols = len(zrow) - 1
    while True:
        entering = -1
        for j in range(num_cols):
            if allowed[j] and zrow[j] < 0:
                entering = j
                break
        if entering < 0:
            return "optimal"
        leaving = -1
        best = None
        for i, row in enumerate(tableau):
            a = row[entering]
            if a > 0:
                ratio = row[-1] / a
                if best is None or ratio < best or (ratio == best and basis[i] < basis[leaving]):
                    best = ratio
                    leaving = i
        if leaving < 0:
            return "unbounded"
        _pivot(tableau, zrow, basis, leaving, entering)


def _build_zrow(tableau, basis, cost, width):
    zrow = [-cost[j] for j in range(width)] + [ZERO]
    for i, b in enumerate(basis):
        cb = cost[b]
        if cb != 0:
            zrow = [z + cb * t for z, t in zip(zrow, tableau[i])]
    return zrow


def lp_solve(lp: LinearProgram) -> LPSolution:
    """Solve exactly; the returned certificate is verified before returning.

    Deterministic: Bland's pivot rule with fixed column order.
    """
    if lp.sense == "min":
        neg = LinearProgram("max", tuple(-c for c in lp.objective), lp.constraints)
        sol = _solve_max(neg)
        if sol.status != "optimal":
            return sol
        flipped = LPSolution(
            "optimal",
            -sol.value,
            sol.primal,
            tuple(-yi for yi in sol.dual),
        )
        flipped.verify(lp)
        return flipped
    sol = _solve_max(lp)
    sol.verify(lp)
    return sol


def _solve_max(lp: LinearProgram) -> LPSolution:
    n = lp.num_vars
    m = len(lp.constraints)

    # Normalize every row to a nonnegative rhs, remembering the flip.
    rows = []
    for con in lp.constraints:
        coeffs, rel, rhs = list(con.coeffs), con.relation, con.rhs
        flipped = rhs < 0
        if flipped:
            coeffs = [-c for c in coeffs]
            rhs = -rhs
            rel = {LE: GE, GE: LE, EQ: EQ}[rel]
        rows.append((coeffs, rel, rhs, flipped))

    num_slack = sum(1 for _, rel, _, _ in rows if rel != EQ)
    num_art = sum(1 for _, rel, _, _ in rows if rel != LE)
    width = n + num_slack + num_art

    tableau = []
    basis = []
    init_col = []  # per row: the column whose phase-2 zrow entry is the dual
    slack_of_row = {}
    s_idx = n
    a_idx = n + num_slack
    for i, (coeffs, rel, rhs, _) in enumerate(rows):
        row = list(coeffs) + [ZERO] * (num_slack + num_art) + [rhs]
        if rel == LE:
            row[s_idx] = ONE
            basis.append(s_idx)
            init_col.append(s_idx)
            slack_of_row[i] = s_idx
            s_idx += 1
        elif rel == GE:
            row[s_idx] = -ONE
            slack_of_row[i] = s_idx
            s_idx += 1
            row[a_idx] = ONE
            basis.append(a_idx)
            init_col.append(a_idx)
            a_idx += 1
        else:
            row[a_idx] = ONE
            basis.append(a_idx)
            init_col.append(a_idx)
            a_idx += 1
        tableau.append(row)

    artificial = [False] * width
    for j in range(n + num_slack, width):
        artificial[j] = True
    allowed = [not artificial[j] for j in range(width)]

    # Phase 1: maximize -(sum of artificials).
    if num_art:
        cost1 = [ZERO] * width
        for j in range(n + num_slack, width):
            cost1[j] = -ONE
        zrow = _build_zrow(tableau, basis, cost1, width)
        allow_all = [True] * width
        _run_simplex(tableau, zrow, basis, allow_all)
        if zrow[-1] != 0:
            return LPSolution("infeasible")
        # Drive artificials out of the (degenerate) basis where possible.
        for i in range(m):
            if artificial[basis[i]]:
                for j in range(width):
                    if allowed[j] and tableau[i][j] != 0:
                        _pivot(tableau, zrow, basis, i, j)
                        break

    cost2 = list(lp.objective) + [ZERO] * (num_slack + num_art)
    zrow = _build_zrow(tableau, basis, cost2, width)
    status = _run_simplex(tableau, zrow, basis, allowed)
    if status == "unbounded":
        return LPSolution("unbounded")

    x = [ZERO] * width
    for i, b in enumerate(basis):
        x[b] = tableau[i][-1]
    primal = tuple(x[:n])

    dual = []
    for i, (_, rel, _, flipped) in enumerate(rows):
        yi = zrow[init_col[i]]
        dual.append(-yi if flipped else yi)
    return LPSolution("optimal", zrow[-1], primal, tuple(dual))


def lp_feasible(
    rows: Iterable[tuple[Sequence[Fraction], str, Fraction]], num_vars: int
) -> Optional[tuple[Fraction, ...]]:
    """Find any x >= 0 satisfying the rows, or None if the system is infeasible.

    Deterministic (phase-1 simplex with a zero phase-2 objective).
    """
    lp = make_lp("max", [ZERO] * num_vars, rows)
    sol = lp_solve(lp)
    if sol.status == "infeasible":
        return None
    if sol.status != "optimal":  # zero objective cannot be unbounded
        raise NumericError("unexpected status %r for feasibility problem" % sol.status)
    return sol.primal


def floor_log2(value: int) -> int:
    """Exact floor(log2(value)) for a positive integer."""
    if value < 1:
        raise NumericError("floor_log2 requires a positive integer")
    return value.bit_length() - 1


def ceil_sqrt(value: int) -> int:
    """Exact ceiling of the square root of a nonnegative integer."""
    if value < 0:
        raise NumericError("ceil_sqrt requires a nonnegative integer")
    r = int(value**0.5)
    while r * r < value:
        r += 1
    while r >= 1 and (r - 1) * (r - 1) >= value:
        r -= 1
    return r


def ceil_cbrt(value: int) -> int:
    """Exact ceiling of the cube root of a nonnegative integer."""
    if value < 0:
        raise NumericError("ceil_cbrt requires a nonnegative integer")
    r = round(value ** (1 / 3))
    while r**3 < value:
        r += 1
    while r >= 1 and (r - 1) ** 3 >= value:
        r -= 1
    return r
