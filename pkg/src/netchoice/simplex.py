"""Desk-scale two-phase primal simplex with Bland's rule.

Dense tableau implementation meant for the estimation polyhedra this package
builds (up to a few thousand variables); larger systems should be exported in
LP format and handed to an industrial solver.  Bland's rule fixes both the
entering and leaving choices by smallest index, which rules out cycling.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .errors import SimplexBreakdownError

PIVOT_TOL = 1e-11
_REDUCED_COST_TOL = 1e-9
_FEASIBILITY_TOL = 1e-7
_MAX_PIVOTS = 200_000

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"


@dataclass(frozen=True)
class LinearConstraint:
    """One row: sum(coeffs[i] * x_i) <sense> rhs, with provenance tags."""

    coeffs: Mapping[int, float]
    sense: str
    rhs: float
    tag: str = ""
    label: str = ""

    def __post_init__(self):
        if self.sense not in ("<=", ">=", "="):
            raise ValueError(f"unknown constraint sense {self.sense!r}")


@dataclass(frozen=True)
class SimplexResult:
    status: str
    x: np.ndarray | None
    value: float | None
    pivots: int = 0
    message: str = ""


@dataclass
class _Tableau:
    T: np.ndarray
    basis: list[int]
    art_start: int
    pivots: int = 0
    excluded: set[int] = field(default_factory=set)

    def pivot(self, row: int, col: int) -> None:
        T = self.T
        T[row] /= T[row, col]
        for r in range(T.shape[0]):
            if r != row and T[r, col] != 0.0:
                T[r] -= T[r, col] * T[row]
        self.basis[row] = col
        self.pivots += 1


def _run_phase(tab: _Tableau) -> None:
    """Minimize the current objective row in place with Bland's rule."""
    T = tab.T
    m = T.shape[0] - 1
    while True:
        if tab.pivots > _MAX_PIVOTS:
            raise SimplexBreakdownError(f"pivot budget {_MAX_PIVOTS} exhausted")
        entering = -1
        for j in range(T.shape[1] - 1):
            if j in tab.excluded:
                continue
            if T[m, j] < -_REDUCED_COST_TOL:
                entering = j
                break
        if entering < 0:
            return
        leaving, best_ratio = -1, np.inf
        tiny_only = False
        for i in range(m):
            a = T[i, entering]
            if a > PIVOT_TOL:
                ratio = T[i, -1] / a
                if ratio < best_ratio - 1e-12 or (
                    abs(ratio - best_ratio) <= 1e-12
                    and (leaving < 0 or tab.basis[i] < tab.basis[leaving])
                ):
                    best_ratio, leaving = ratio, i
            elif a > 0.0:
                tiny_only = True
        if leaving < 0:
            if tiny_only:
                raise SimplexBreakdownError(
                    f"all candidate pivots in column {entering} are below {PIVOT_TOL}"
                )
            raise SimplexBreakdownError(
                f"column {entering} is unbounded; boxed variables should prevent this"
            )
        tab.pivot(leaving, entering)


def simplex_solve(n_vars: int, constraints, objective, maximize: bool = False,
                  upper_bounds=None) -> SimplexResult:
    """Solve min/max c.x subject to the constraints, x >= 0.

    Variables must be effectively boxed (non-negative plus either explicit
    ``upper_bounds`` entries or bounding rows), so a well-posed input is
    never unbounded; hitting an unbounded ray or a sub-tolerance pivot raises
    SimplexBreakdownError with diagnostics.  Returns status "optimal" with
    the point and value, or "infeasible".
    """
    objective = np.asarray(objective, dtype=float)
    if objective.shape != (n_vars,):
        raise ValueError(f"objective must have length {n_vars}")
    rows: list[tuple[dict[int, float], str, float]] = []
    for con in constraints:
        coeffs = dict(con.coeffs)
        for idx in coeffs:
            if not (0 <= idx < n_vars):
                raise ValueError(f"constraint references unknown variable {idx}")
        rows.append((coeffs, con.sense, float(con.rhs)))
    if upper_bounds is not None:
        for idx, bound in enumerate(np.asarray(upper_bounds, dtype=float)):
            if np.isfinite(bound):
                rows.append(({idx: 1.0}, "<=", float(bound)))

    m = len(rows)
    n_slack = sum(1 for _, sense, _ in rows if sense in ("<=", ">="))
    slack_start = n_vars
    art_start = n_vars + n_slack
    n_art = m  # one artificial per row keeps the construction uniform
    width = art_start + n_art + 1

    T = np.zeros((m + 1, width))
    basis = [-1] * m
    slack_at = slack_start
    for i, (coeffs, sense, rhs) in enumerate(rows):
        sign = 1.0
        if rhs < 0.0:
            sign = -1.0
            rhs = -rhs
            sense = {"<=": ">=", ">=": "<=", "=": "="}[sense]
        for idx, value in coeffs.items():
            T[i, idx] = sign * value
        T[i, -1] = rhs
        if sense == "<=":
            T[i, slack_at] = 1.0
            basis[i] = slack_at
            slack_at += 1
        elif sense == ">=":
            T[i, slack_at] = -1.0
            slack_at += 1
        if basis[i] < 0:
            T[i, art_start + i] = 1.0
            basis[i] = art_start + i

    tab = _Tableau(T=T, basis=basis, art_start=art_start)

    # Phase one: minimize the sum of artificials (unit cost each), with the
    # cost row expressed in the starting basis.
    T[m, :] = 0.0
    T[m, art_start:width - 1] = 1.0
    for i in range(m):
        if basis[i] >= art_start:
            T[m] -= T[i]
    _run_phase(tab)
    if -T[m, -1] > _FEASIBILITY_TOL:
        return SimplexResult(status=INFEASIBLE, x=None, value=None, pivots=tab.pivots,
                             message=f"phase-one infeasibility {-T[m, -1]:.3e}")

    # Drive any residual artificial out of the basis or drop its row.
    keep = []
    for i in range(m):
        if tab.basis[i] < art_start:
            keep.append(i)
            continue
        pivot_col = next(
            (j for j in range(art_start) if abs(T[i, j]) > PIVOT_TOL), None
        )
        if pivot_col is not None:
            tab.pivot(i, pivot_col)
            keep.append(i)
        # else: redundant row, drop it
    if len(keep) != m:
        T = np.vstack([T[keep], T[m:]])
        tab.T = T
        tab.basis = [tab.basis[i] for i in keep]
        m = len(keep)

    tab.excluded = set(range(art_start, width - 1))

    # Phase two: install the real objective expressed in the current basis.
    sense_sign = -1.0 if maximize else 1.0
    T[m, :] = 0.0
    T[m, :n_vars] = sense_sign * objective
    for i in range(m):
        coeff = T[m, tab.basis[i]]
        if coeff != 0.0:
            T[m] -= coeff * T[i]
    _run_phase(tab)

    x = np.zeros(width - 1)
    for i in range(m):
        x[tab.basis[i]] = T[i, -1]
    point = x[:n_vars]
    value = float(objective @ point)
    return SimplexResult(status=OPTIMAL, x=point, value=value, pivots=tab.pivots)
