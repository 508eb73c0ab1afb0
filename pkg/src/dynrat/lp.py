"""Exact rational linear programming.

A small dense two-phase simplex over exact rationals, with variable bounds
handled natively (nonbasic variables rest at either bound) and Bland's
anti-cycling pivot rule, so every solve terminates and is bit-for-bit
deterministic.  Strict inequalities never appear in a program; callers decide
strictness by comparing the exact optimal value against zero afterwards.

Internally the tableau runs on ``gmpy2.mpq`` when available (same exact
semantics as `fractions.Fraction`, much faster); all inputs and outputs are
plain `Fraction`s.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Optional, Union

from .model import (
    DecisionProblem,
    ValidationError,
    format_rational,
    parse_rational,
)

try:
    from gmpy2 import mpq as _mpq
except ImportError:  # pragma: no cover - gmpy2 is a declared dependency
    _mpq = None


def _internal(x: Fraction):
    return _mpq(x.numerator, x.denominator) if _mpq is not None else x


def _external(x) -> Fraction:
    return Fraction(x.numerator, x.denominator)


_SENSES = ("<=", "==", ">=")

_PIVOT_TALLY = [0]


def pivot_tally() -> int:
    """Process-wide count of simplex pivots (flips included); for reporting."""
    return _PIVOT_TALLY[0]


# ---------------------------------------------------------------------------
# Program model
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Constraint:
    coeffs: tuple[tuple[str, Fraction], ...]
    sense: str
    rhs: Fraction
    name: str = ""


@dataclass
class LinearProgram:
    """A named-variable LP with exact rational data.

    Variables carry optional lower/upper bounds (``None`` means unbounded on
    that side).  Constraints reference declared variables only.
    """

    variables: dict[str, tuple[Optional[Fraction], Optional[Fraction]]] = field(default_factory=dict)
    constraints: list[Constraint] = field(default_factory=list)
    objective: dict[str, Fraction] = field(default_factory=dict)
    direction: str = "max"

    def add_variable(
        self,
        name: str,
        lower: Union[None, int, str, Fraction] = None,
        upper: Union[None, int, str, Fraction] = None,
    ) -> str:
        if name in self.variables:
            raise ValidationError(f"variable {name!r} declared twice")
        lo = None if lower is None else parse_rational(lower)
        hi = None if upper is None else parse_rational(upper)
        if lo is not None and hi is not None and lo > hi:
            raise ValidationError(f"variable {name!r} has empty bound interval")
        self.variables[name] = (lo, hi)
        return name

    def add_constraint(
        self,
        coeffs: Mapping[str, Union[int, str, Fraction]],
        sense: str,
        rhs: Union[int, str, Fraction],
        name: str = "",
    ) -> None:
        if sense not in _SENSES:
            raise ValidationError(f"bad constraint sense {sense!r}")
        items = []
        for var, c in coeffs.items():
            if var not in self.variables:
                raise ValidationError(f"constraint references undeclared variable {var!r}")
            q = parse_rational(c)
            if q != 0:
                items.append((var, q))
        self.constraints.append(Constraint(tuple(items), sense, parse_rational(rhs), name))

    def set_objective(self, coeffs: Mapping[str, Union[int, str, Fraction]], direction: str = "max") -> None:
        if direction not in ("max", "min"):
            raise ValidationError(f"bad objective direction {direction!r}")
        for var in coeffs:
            if var not in self.variables:
                raise ValidationError(f"objective references undeclared variable {var!r}")
        self.objective = {v: parse_rational(c) for v, c in coeffs.items() if parse_rational(c) != 0}
        self.direction = direction


@dataclass(frozen=True)
class LpSolution:
    status: str  # "optimal" | "infeasible" | "unbounded"
    value: Optional[Fraction]
    assignment: Optional[dict[str, Fraction]]
    pivots: int


def check_solution(lp: LinearProgram, assignment: Mapping[str, Fraction]) -> bool:
    """Exact feasibility check of an assignment against bounds and constraints."""
    for var, (lo, hi) in lp.variables.items():
        x = assignment[var]
        if lo is not None and x < lo:
            return False
        if hi is not None and x > hi:
            return False
    for con in lp.constraints:
        lhs = sum((c * assignment[v] for v, c in con.coeffs), Fraction(0))
        if con.sense == "<=" and lhs > con.rhs:
            return False
        if con.sense == ">=" and lhs < con.rhs:
            return False
        if con.sense == "==" and lhs != con.rhs:
            return False
    return True


def dump_lp(lp: LinearProgram) -> str:
    """Human-readable text form, for debugging only."""
    lines = [f"{lp.direction} " + " + ".join(
        f"{format_rational(c)}*{v}" for v, c in lp.objective.items()) or "0"]
    for con in lp.constraints:
        lhs = " + ".join(f"{format_rational(c)}*{v}" for v, c in con.coeffs) or "0"
        lines.append(f"  {lhs} {con.sense} {format_rational(con.rhs)}"
                     + (f"  [{con.name}]" if con.name else ""))
    for var, (lo, hi) in lp.variables.items():
        lines.append(f"  {format_rational(lo) if lo is not None else '-inf'}"
                     f" <= {var} <= {format_rational(hi) if hi is not None else '+inf'}")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# Simplex
# ---------------------------------------------------------------------------

class _Solver:
    """Two-phase primal simplex with upper bounds and Bland's rule.

    All nonbasic columns are kept at value zero in a working representation:
    a column currently resting at its upper bound is stored negated
    ("flipped", x = ub - x~).  Entering steps therefore always increase the
    working variable from zero, which keeps the ratio test and Bland's rule
    in their textbook forms.
    """

    def __init__(self, lp: LinearProgram):
        self.lp = lp
        self.pivots = 0
        zero = _internal(Fraction(0))
        self._zero = zero

        # Map user variables to internal columns (all with lower bound 0).
        self.records: dict[str, tuple] = {}
        self.ub: list = []          # per column: scalar upper bound or None
        self.artificial: list = []  # per column: bool
        col = 0
        for name, (lo, hi) in lp.variables.items():
            if lo is not None and hi is not None and lo == hi:
                self.records[name] = ("fixed", _internal(lo))
                continue
            if lo is not None:
                width = None if hi is None else _internal(hi - lo)
                self.records[name] = ("shifted", col, _internal(lo))
                self.ub.append(width)
                self.artificial.append(False)
                col += 1
            elif hi is not None:
                self.records[name] = ("reflected", col, _internal(hi))
                self.ub.append(None)
                self.artificial.append(False)
                col += 1
            else:
                self.records[name] = ("free", col, col + 1)
                self.ub.extend([None, None])
                self.artificial.extend([False, False])
                col += 2
        self.ncols_user = col

        # Transform constraint rows into internal coordinates.
        raw_rows: list[tuple[dict, str, object]] = []
        for con in lp.constraints:
            coeffs: dict[int, object] = {}
            rhs = _internal(con.rhs)
            for var, c in con.coeffs:
                ci = _internal(c)
                rec = self.records[var]
                if rec[0] == "fixed":
                    rhs -= ci * rec[1]
                elif rec[0] == "shifted":
                    coeffs[rec[1]] = coeffs.get(rec[1], zero) + ci
                    rhs -= ci * rec[2]
                elif rec[0] == "reflected":
                    coeffs[rec[1]] = coeffs.get(rec[1], zero) - ci
                    rhs -= ci * rec[2]
                else:
                    coeffs[rec[1]] = coeffs.get(rec[1], zero) + ci
                    coeffs[rec[2]] = coeffs.get(rec[2], zero) - ci
            coeffs = {j: v for j, v in coeffs.items() if v != 0}
            raw_rows.append((coeffs, con.sense, rhs))

        self.infeasible_row = False
        rows: list[tuple[dict, str, object]] = []
        for coeffs, sense, rhs in raw_rows:
            if not coeffs:
                ok = (rhs >= 0) if sense == "<=" else (rhs <= 0) if sense == ">=" else (rhs == 0)
                if not ok:
                    self.infeasible_row = True
                continue
            if rhs < 0:
                coeffs = {j: -v for j, v in coeffs.items()}
                rhs = -rhs
                sense = {"<=": ">=", ">=": "<=", "==": "=="}[sense]
            if sense == ">=" and rhs == 0:
                coeffs = {j: -v for j, v in coeffs.items()}
                sense = "<="
            rows.append((coeffs, sense, rhs))

        # Append slack/surplus/artificial columns and set the starting basis.
        self.matrix: list[list] = []
        self.rhs: list = []
        self.basis: list[int] = []
        pending: list[tuple[dict, str, object]] = rows
        extra_specs: list[tuple[int, str]] = []  # (row, kind)
        for r, (coeffs, sense, rhs) in enumerate(pending):
            if sense == "<=":
                extra_specs.append((r, "slack"))
            elif sense == ">=":
                extra_specs.append((r, "surplus+artificial"))
            else:
                extra_specs.append((r, "artificial"))
        ncols = col
        col_of_extra: list[tuple[int, int, int]] = []  # (row, slack_col or -1, art_col or -1)
        for r, kind in extra_specs:
            if kind == "slack":
                col_of_extra.append((r, ncols, -1))
                self.ub.append(None)
                self.artificial.append(False)
                ncols += 1
            elif kind == "surplus+artificial":
                col_of_extra.append((r, ncols, ncols + 1))
                self.ub.extend([None, None])
                self.artificial.extend([False, True])
                ncols += 2
            else:
                col_of_extra.append((r, -1, ncols))
                self.ub.append(None)
                self.artificial.append(True)
                ncols += 1
        self.ncols = ncols
        for (coeffs, sense, rhs), (r, s_col, a_col) in zip(pending, col_of_extra):
            row = [zero] * ncols
            for j, v in coeffs.items():
                row[j] = v
            if sense == "<=":
                row[s_col] = _internal(Fraction(1))
                self.basis.append(s_col)
            elif sense == ">=":
                row[s_col] = _internal(Fraction(-1))
                row[a_col] = _internal(Fraction(1))
                self.basis.append(a_col)
            else:
                row[a_col] = _internal(Fraction(1))
                self.basis.append(a_col)
            self.matrix.append(row)
            self.rhs.append(rhs)

        self.flipped = [False] * ncols
        self.dropped: list[int] = []

        # Phase-2 objective in internal coordinates (always maximize).
        sign = 1 if lp.direction == "max" else -1
        self.obj = [zero] * ncols
        self.obj_const = zero
        for var, c in lp.objective.items():
            ci = _internal(c) * sign
            rec = self.records[var]
            if rec[0] == "fixed":
                self.obj_const += ci * rec[1]
            elif rec[0] == "shifted":
                self.obj[rec[1]] += ci
                self.obj_const += ci * rec[2]
            elif rec[0] == "reflected":
                self.obj[rec[1]] -= ci
                self.obj_const += ci * rec[2]
            else:
                self.obj[rec[1]] += ci
                self.obj[rec[2]] -= ci
        # The starting basis is slacks/artificials, none of which appear in the
        # user objective, so this row is already priced out.

    # -- tableau mechanics ----------------------------------------------------

    def _flip(self, j: int, objs: list) -> None:
        ubj = self.ub[j]
        for i, row in enumerate(self.matrix):
            if row[j] != 0:
                self.rhs[i] -= row[j] * ubj
                row[j] = -row[j]
        for obj in objs:
            if obj[0][j] != 0:
                obj[1][0] += obj[0][j] * ubj
                obj[0][j] = -obj[0][j]
        self.flipped[j] = not self.flipped[j]

    def _pivot(self, r: int, j: int, objs: list) -> None:
        row = self.matrix[r]
        p = row[j]
        if p != 1:
            inv = 1 / p
            self.matrix[r] = row = [v * inv for v in row]
            self.rhs[r] *= inv
        for i, other in enumerate(self.matrix):
            if i != r and other[j] != 0:
                f = other[j]
                self.matrix[i] = [a - f * b for a, b in zip(other, row)]
                self.rhs[i] -= f * self.rhs[r]
        for obj in objs:
            f = obj[0][j]
            if f != 0:
                obj[0][:] = [a - f * b for a, b in zip(obj[0], row)]
                obj[1][0] += f * self.rhs[r]
        self.basis[r] = j

    def _run(self, obj_row: list, obj_const: list, extra_objs: list, phase1: bool) -> str:
        guard = 5000 + 200 * (len(self.matrix) + self.ncols)
        in_basis = set(self.basis)
        while True:
            entering = None
            for j in range(self.ncols):
                if j in in_basis or (self.artificial[j] and not phase1):
                    continue
                if self.ub[j] == 0:
                    continue
                if obj_row[j] > 0:
                    entering = j
                    break
            if entering is None:
                return "optimal"

            # Blocking candidates: (step, blocking variable index, kind, row).
            candidates: list[tuple[object, int, str, int]] = []
            if self.ub[entering] is not None:
                candidates.append((self.ub[entering], entering, "self", -1))
            for r, row in enumerate(self.matrix):
                a = row[entering]
                if a > 0:
                    candidates.append((self.rhs[r] / a, self.basis[r], "lower", r))
                elif a < 0:
                    ubb = self.ub[self.basis[r]]
                    if ubb is not None:
                        candidates.append(((ubb - self.rhs[r]) / (-a), self.basis[r], "upper", r))
            if not candidates:
                return "unbounded"
            step = min(c[0] for c in candidates)
            _, var, kind, r = min(
                (c for c in candidates if c[0] == step), key=lambda c: c[1]
            )

            objs = [(obj_row, obj_const)] + extra_objs
            self.pivots += 1
            _PIVOT_TALLY[0] += 1
            if kind == "self":
                self._flip(entering, objs)
            elif kind == "lower":
                in_basis.discard(self.basis[r])
                self._pivot(r, entering, objs)
                in_basis.add(entering)
            else:
                leaving = self.basis[r]
                ubb = self.ub[leaving]
                self.matrix[r] = [-v for v in self.matrix[r]]
                self.rhs[r] = ubb - self.rhs[r]
                self.matrix[r][leaving] = -self.matrix[r][leaving]
                self.flipped[leaving] = not self.flipped[leaving]
                in_basis.discard(leaving)
                self._pivot(r, entering, objs)
                in_basis.add(entering)
            if self.pivots > guard:  # pragma: no cover - would be a solver bug
                raise RuntimeError("simplex pivot guard exceeded; anti-cycling failure")

    def _price_out(self, obj_row: list, obj_const: list) -> None:
        for r, b in enumerate(self.basis):
            f = obj_row[b]
            if f != 0:
                row = self.matrix[r]
                obj_row[:] = [a - f * v for a, v in zip(obj_row, row)]
                obj_const[0] += f * self.rhs[r]

    def solve(self) -> LpSolution:
        if self.infeasible_row:
            return LpSolution("infeasible", None, None, self.pivots)

        obj_const = [self.obj_const]
        if any(self.artificial[b] for b in self.basis):
            p1_row = [self._zero] * self.ncols
            for j in range(self.ncols):
                if self.artificial[j]:
                    p1_row[j] = _internal(Fraction(-1))
            p1_const = [self._zero]
            self._price_out(p1_row, p1_const)
            status = self._run(p1_row, p1_const, [(self.obj, obj_const)], phase1=True)
            assert status == "optimal"  # phase-1 objective is bounded above by 0
            if p1_const[0] != 0:
                return LpSolution("infeasible", None, None, self.pivots)
            self._drop_artificials([(p1_row, p1_const), (self.obj, obj_const)])

        status = self._run(self.obj, obj_const, [], phase1=False)
        if status == "unbounded":
            return LpSolution("unbounded", None, None, self.pivots)

        values = [Fraction(0)] * self.ncols
        for r, b in enumerate(self.basis):
            values[b] = _external(self.rhs[r])
        for j in range(self.ncols):
            if self.flipped[j]:
                values[j] = _external(self.ub[j]) - values[j]

        assignment: dict[str, Fraction] = {}
        for name, rec in self.records.items():
            if rec[0] == "fixed":
                assignment[name] = _external(rec[1])
            elif rec[0] == "shifted":
                assignment[name] = values[rec[1]] + _external(rec[2])
            elif rec[0] == "reflected":
                assignment[name] = _external(rec[2]) - values[rec[1]]
            else:
                assignment[name] = values[rec[1]] - values[rec[2]]

        value = sum(
            (c * assignment[v] for v, c in self.lp.objective.items()), Fraction(0)
        )
        if not check_solution(self.lp, assignment):  # pragma: no cover - solver bug
            raise RuntimeError("simplex returned an assignment violating the program")
        expected = _external(obj_const[0]) * (1 if self.lp.direction == "max" else -1)
        if value != expected:  # pragma: no cover - solver bug
            raise RuntimeError("objective bookkeeping mismatch")
        return LpSolution("optimal", value, assignment, self.pivots)

    def _drop_artificials(self, objs: list) -> None:
        keep_rows = []
        for r in range(len(self.matrix)):
            b = self.basis[r]
            if not self.artificial[b]:
                keep_rows.append(r)
                continue
            # Basic artificial at value zero: pivot it out if possible.
            pivot_col = None
            for j in range(self.ncols):
                if not self.artificial[j] and self.matrix[r][j] != 0:
                    pivot_col = j
                    break
            if pivot_col is None:
                continue  # redundant row, drop it
            self._pivot(r, pivot_col, objs)
            keep_rows.append(r)
        if len(keep_rows) != len(self.matrix):
            self.matrix = [self.matrix[r] for r in keep_rows]
            self.rhs = [self.rhs[r] for r in keep_rows]
            self.basis = [self.basis[r] for r in keep_rows]


def solve(lp: LinearProgram) -> LpSolution:
    """Exact optimum of ``lp``; deterministic for identical programs.

    Optimal assignments are re-verified against every constraint before being
    returned, so a reported optimum is always exactly feasible.
    """
    return _Solver(lp).solve()


# ---------------------------------------------------------------------------
# The deviation-rule polytope
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DeviationPolytope:
    """Reusable constraint block whose feasible set is exactly the deviation
    rule kernels of a problem: one [0,1] variable per kernel entry, row-sum
    equalities, and prefix-marginal equalities between inputs that share a
    history."""

    problem: DecisionProblem
    var_names: tuple[tuple[str, ...], ...]
    constraints: tuple[Constraint, ...]

    def install(self, lp: LinearProgram) -> None:
        for row in self.var_names:
            for name in row:
                lp.add_variable(name, lower=0, upper=1)
        for con in self.constraints:
            lp.add_constraint(dict(con.coeffs), con.sense, con.rhs, con.name)

    def var(self, a_index: int, b_index: int) -> str:
        return self.var_names[a_index][b_index]

    def extract_matrix(self, assignment: Mapping[str, Fraction]) -> tuple[tuple[Fraction, ...], ...]:
        return tuple(
            tuple(assignment[name] for name in row) for row in self.var_names
        )


def deviation_polytope_constraints(problem: DecisionProblem) -> DeviationPolytope:
    leaves = problem.leaves
    names = tuple(
        tuple(f"D[{b.label}|{a.label}]" for b in leaves) for a in leaves
    )
    one = Fraction(1)
    constraints: list[Constraint] = []
    for i, a in enumerate(leaves):
        constraints.append(
            Constraint(tuple((names[i][j], one) for j in range(len(leaves))),
                       "==", one, f"density[{a.label}]")
        )
    for t in range(1, problem.periods):
        out_classes = problem.prefix_classes(t)
        for prefix, members in problem.prefix_classes(t):
            for a_i, a_k in zip(members, members[1:]):
                for out_prefix, out_members in out_classes:
                    coeffs = [(names[a_i][j], one) for j in out_members]
                    coeffs += [(names[a_k][j], -one) for j in out_members]
                    constraints.append(
                        Constraint(
                            tuple(coeffs), "==", Fraction(0),
                            f"adapted[t={t},{','.join(prefix)}:{','.join(out_prefix)}]",
                        )
                    )
    return DeviationPolytope(problem, names, tuple(constraints))
