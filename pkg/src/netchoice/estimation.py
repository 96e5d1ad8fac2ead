"""Polyhedral estimation of model parameters from observed choice probabilities.

Observed per-agent choice probabilities pin the parameters only up to a
polyhedron: the fit identities (with slack for inconsistent side knowledge),
non-negativity, the unit row sums, and whatever the analyst knows about
relative reliance, preferences, decisiveness, and sparsity.  Estimation is
two-phase: first find the smallest slacks that make the polyhedron non-empty,
then pick the point maximizing the minimum margin to the remaining inequality
constraints (a relative-interior point standing in for the analytic center).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import InfeasibleError, ModelFormatError, NetchoiceError
from .simplex import INFEASIBLE, OPTIMAL, LinearConstraint, simplex_solve

# Ratio cells with zero observed probability fall back to this floor so the
# largest-ratio objective stays well-defined.
PI_FLOOR = 1e-9
_SLACK_UPPER = 2.0
_T_UPPER = 1e10
_MARGIN_UPPER = 10.0
_TIGHT_TOL = 1e-9

TAG_FIT = "fit"
TAG_NONNEG = "nonneg"
TAG_ROWSUM = "rowsum"
TAG_GROUP = "group_importance"
TAG_RATIO = "preference_ratio"
TAG_DECISIVE = "decisiveness"
TAG_SPARSITY = "sparsity"


@dataclass(frozen=True)
class SparsityPin:
    agent: str
    other: str


@dataclass(frozen=True)
class PreferenceRatio:
    agent: str
    preferred: str
    baseline: str
    ratio: float
    uncertainty: float = 0.0


@dataclass(frozen=True)
class GroupImportance:
    agent: str
    favored: tuple[str, ...]
    disfavored: tuple[str, ...]
    factor: float = 1.0


@dataclass(frozen=True)
class DecisivenessBound:
    agent: str
    factor: float
    direction: str  # "adoption_at_least" or "adoption_at_most"


@dataclass(frozen=True)
class Variable:
    name: str
    kind: str   # "p", "q", "epsp", "epsm"
    row: int
    col: int
    upper: float


@dataclass(frozen=True)
class EstimationPolyhedron:
    agents: tuple[str, ...]
    choices: tuple[str, ...]
    observed: np.ndarray
    variables: tuple[Variable, ...]
    rows: tuple[LinearConstraint, ...]
    slack_plus: np.ndarray | None = None
    slack_minus: np.ndarray | None = None

    @property
    def n_agents(self) -> int:
        return len(self.agents)

    @property
    def n_choices(self) -> int:
        return len(self.choices)

    def index(self, kind: str, row: int, col: int) -> int:
        return self._lookup[(kind, row, col)]

    def __post_init__(self):
        object.__setattr__(
            self,
            "_lookup",
            {(v.kind, v.row, v.col): i for i, v in enumerate(self.variables)},
        )

    def with_slacks(self, plus: np.ndarray, minus: np.ndarray) -> "EstimationPolyhedron":
        return replace(self, slack_plus=np.asarray(plus, dtype=float),
                       slack_minus=np.asarray(minus, dtype=float))


@dataclass(frozen=True)
class Phase1Result:
    slack_plus: np.ndarray
    slack_minus: np.ndarray
    objective: float


@dataclass(frozen=True)
class EstimateResult:
    adoption: np.ndarray
    direct: np.ndarray
    margin: float
    rounds: int
    converted_rows: int


def parse_observed(source) -> tuple[tuple[str, ...], tuple[str, ...], np.ndarray]:
    """Read an observed-probabilities document {agents, choices, pi}."""
    if isinstance(source, Mapping):
        doc = dict(source)
    else:
        text = Path(source).read_text(encoding="utf-8") if isinstance(source, (str, Path)) else source.read()
        doc = json.loads(text)
    extra = set(doc) - {"agents", "choices", "pi"}
    if extra:
        raise ModelFormatError(f"unknown key(s) in observed document: {sorted(extra)}")
    try:
        agents = tuple(str(a) for a in doc["agents"])
        choices = tuple(str(s) for s in doc["choices"])
        pi = np.array(doc["pi"], dtype=float)
    except KeyError as exc:
        raise ModelFormatError(f"observed document missing key {exc}") from exc
    if pi.shape != (len(agents), len(choices)):
        raise ModelFormatError("pi matrix shape does not match agents x choices")
    return agents, choices, pi


def parse_knowledge(source) -> list:
    """Read typed side-knowledge entries from a JSON list."""
    if isinstance(source, (str, Path)):
        entries = json.loads(Path(source).read_text(encoding="utf-8"))
    elif isinstance(source, Sequence):
        entries = list(source)
    else:
        entries = json.loads(source.read())
    if not isinstance(entries, list):
        raise ModelFormatError("knowledge document must be a JSON list")
    parsed = []
    for pos, entry in enumerate(entries):
        if not isinstance(entry, Mapping) or "type" not in entry:
            raise ModelFormatError(f"knowledge entry {pos} must be an object with a 'type'")
        kind = entry["type"]
        data = {k: v for k, v in entry.items() if k != "type"}
        try:
            if kind == "sparsity":
                parsed.append(SparsityPin(agent=str(data.pop("agent")),
                                          other=str(data.pop("other"))))
            elif kind == "preference_ratio":
                parsed.append(PreferenceRatio(
                    agent=str(data.pop("agent")),
                    preferred=str(data.pop("preferred")),
                    baseline=str(data.pop("baseline")),
                    ratio=float(data.pop("ratio")),
                    uncertainty=float(data.pop("uncertainty", 0.0)),
                ))
            elif kind == "group_importance":
                parsed.append(GroupImportance(
                    agent=str(data.pop("agent")),
                    favored=tuple(str(x) for x in data.pop("favored")),
                    disfavored=tuple(str(x) for x in data.pop("disfavored")),
                    factor=float(data.pop("factor", 1.0)),
                ))
            elif kind == "decisiveness":
                parsed.append(DecisivenessBound(
                    agent=str(data.pop("agent")),
                    factor=float(data.pop("factor")),
                    direction=str(data.pop("direction")),
                ))
            else:
                raise ModelFormatError(f"knowledge entry {pos}: unknown type {kind!r}")
        except KeyError as exc:
            raise ModelFormatError(f"knowledge entry {pos}: missing field {exc}") from exc
        if data:
            raise ModelFormatError(f"knowledge entry {pos}: unknown field(s) {sorted(data)}")
    return parsed


def build_polyhedron(observed: np.ndarray, knowledge=(), agents=None,
                     choices=None) -> EstimationPolyhedron:
    """Assemble the constraint system for observed probabilities plus knowledge.

    Always emits the fit identities (with slack variables), the unit row
    sums, and keeps non-negativity as variable boxes; each knowledge item
    adds its class of rows, tagged with provenance.  A preference ratio with
    zero uncertainty becomes a single equality.
    """
    observed = np.asarray(observed, dtype=float)
    if observed.ndim != 2:
        raise ModelFormatError("observed probabilities must be a matrix")
    n, c = observed.shape
    agents = tuple(str(a) for a in (agents if agents is not None else range(1, n + 1)))
    choices = tuple(str(s) for s in (choices if choices is not None else range(1, c + 1)))
    if len(agents) != n or len(choices) != c:
        raise ModelFormatError("agent/choice labels do not match the observed matrix")
    if np.any(observed < -1e-12) or np.any(np.abs(observed.sum(axis=1) - 1.0) > 1e-9):
        raise ModelFormatError("each observed row must be a probability distribution")
    a_idx = {a: i for i, a in enumerate(agents)}
    c_idx = {s: j for j, s in enumerate(choices)}

    variables: list[Variable] = []
    for i in range(n):
        for k in range(n):
            if i != k:
                variables.append(Variable(f"p_{i + 1}_{k + 1}", "p", i, k, 1.0))
    for kind, upper in (("q", 1.0), ("epsp", _SLACK_UPPER), ("epsm", _SLACK_UPPER)):
        for i in range(n):
            for j in range(c):
                variables.append(Variable(f"{kind}_{i + 1}_{j + 1}", kind, i, j, upper))
    lookup = {(v.kind, v.row, v.col): idx for idx, v in enumerate(variables)}

    rows: list[LinearConstraint] = []
    for i in range(n):
        for j in range(c):
            coeffs = {lookup[("q", i, j)]: 1.0,
                      lookup[("epsp", i, j)]: -1.0,
                      lookup[("epsm", i, j)]: 1.0}
            for k in range(n):
                if k != i and observed[k, j] != 0.0:
                    coeffs[lookup[("p", i, k)]] = observed[k, j]
            rows.append(LinearConstraint(coeffs, "=", float(observed[i, j]),
                                         tag=TAG_FIT, label=f"fit_{i + 1}_{j + 1}"))
    for i in range(n):
        coeffs = {lookup[("p", i, k)]: 1.0 for k in range(n) if k != i}
        for j in range(c):
            coeffs[lookup[("q", i, j)]] = 1.0
        rows.append(LinearConstraint(coeffs, "=", 1.0, tag=TAG_ROWSUM,
                                     label=f"rowsum_{i + 1}"))

    def agent_of(label: str) -> int:
        try:
            return a_idx[label]
        except KeyError:
            raise ModelFormatError(f"knowledge references unknown agent {label!r}") from None

    def choice_of(label: str) -> int:
        try:
            return c_idx[label]
        except KeyError:
            raise ModelFormatError(f"knowledge references unknown choice {label!r}") from None

    for pos, item in enumerate(knowledge):
        if isinstance(item, SparsityPin):
            i, k = agent_of(item.agent), agent_of(item.other)
            if i == k:
                raise ModelFormatError("sparsity pin must reference two distinct agents")
            rows.append(LinearConstraint({lookup[("p", i, k)]: 1.0}, "=", 0.0,
                                         tag=TAG_SPARSITY, label=f"pin_{i + 1}_{k + 1}"))
        elif isinstance(item, PreferenceRatio):
            i = agent_of(item.agent)
            j1, j2 = choice_of(item.preferred), choice_of(item.baseline)
            if j1 == j2:
                raise ModelFormatError("preference ratio must compare two distinct choices")
            if item.uncertainty < 0.0:
                raise ModelFormatError("preference-ratio uncertainty must be non-negative")
            lo, hi = item.ratio - item.uncertainty, item.ratio + item.uncertainty
            if item.uncertainty == 0.0:
                rows.append(LinearConstraint(
                    {lookup[("q", i, j1)]: 1.0, lookup[("q", i, j2)]: -item.ratio},
                    "=", 0.0, tag=TAG_RATIO, label=f"ratio_{pos + 1}"))
            else:
                rows.append(LinearConstraint(
                    {lookup[("q", i, j1)]: 1.0, lookup[("q", i, j2)]: -lo},
                    ">=", 0.0, tag=TAG_RATIO, label=f"ratio_{pos + 1}_lo"))
                rows.append(LinearConstraint(
                    {lookup[("q", i, j1)]: 1.0, lookup[("q", i, j2)]: -hi},
                    "<=", 0.0, tag=TAG_RATIO, label=f"ratio_{pos + 1}_hi"))
        elif isinstance(item, GroupImportance):
            i = agent_of(item.agent)
            favored = [agent_of(a) for a in item.favored]
            disfavored = [agent_of(a) for a in item.disfavored]
            if set(favored) & set(disfavored):
                raise ModelFormatError("group-importance sets must be disjoint")
            if i in favored or i in disfavored:
                raise ModelFormatError("group-importance sets cannot contain the agent itself")
            coeffs: dict[int, float] = {}
            for k in favored:
                coeffs[lookup[("p", i, k)]] = coeffs.get(lookup[("p", i, k)], 0.0) + 1.0
            for k in disfavored:
                coeffs[lookup[("p", i, k)]] = coeffs.get(lookup[("p", i, k)], 0.0) - item.factor
            rows.append(LinearConstraint(coeffs, ">=", 0.0, tag=TAG_GROUP,
                                         label=f"group_{pos + 1}"))
        elif isinstance(item, DecisivenessBound):
            i = agent_of(item.agent)
            coeffs = {lookup[("p", i, k)]: 1.0 for k in range(n) if k != i}
            for j in range(c):
                coeffs[lookup[("q", i, j)]] = -item.factor
            if item.direction == "adoption_at_least":
                sense = ">="
            elif item.direction == "adoption_at_most":
                sense = "<="
            else:
                raise ModelFormatError(
                    f"decisiveness direction must be adoption_at_least or adoption_at_most,"
                    f" got {item.direction!r}")
            rows.append(LinearConstraint(coeffs, sense, 0.0, tag=TAG_DECISIVE,
                                         label=f"decisive_{pos + 1}"))
        else:
            raise ModelFormatError(f"unsupported knowledge item {item!r}")

    return EstimationPolyhedron(
        agents=agents,
        choices=choices,
        observed=observed,
        variables=tuple(variables),
        rows=tuple(rows),
    )


def phase1_min_slack(poly: EstimationPolyhedron) -> Phase1Result:
    """Find the smallest slacks (largest-ratio objective) making the system feasible.

    Minimizes t subject to eps+ + eps- <= t * pi for every cell (cells with
    zero observed probability use the PI_FLOOR denominator) over the full
    polyhedron, then fixes the slack variables at the optimum.
    """
    n_base = len(poly.variables)
    t = n_base
    constraints = list(poly.rows)
    for i in range(poly.n_agents):
        for j in range(poly.n_choices):
            denom = max(float(poly.observed[i, j]), PI_FLOOR)
            constraints.append(LinearConstraint(
                {poly.index("epsp", i, j): 1.0,
                 poly.index("epsm", i, j): 1.0,
                 t: -denom},
                "<=", 0.0, tag="slack_ratio", label=f"cap_{i + 1}_{j + 1}"))
    objective = np.zeros(n_base + 1)
    objective[t] = 1.0
    uppers = np.array([v.upper for v in poly.variables] + [_T_UPPER])
    result = simplex_solve(n_base + 1, constraints, objective, maximize=False,
                           upper_bounds=uppers)
    if result.status != OPTIMAL:
        raise NetchoiceError(
            f"phase-one slack minimization unexpectedly returned {result.status}"
        )
    plus = np.zeros((poly.n_agents, poly.n_choices))
    minus = np.zeros_like(plus)
    for i in range(poly.n_agents):
        for j in range(poly.n_choices):
            plus[i, j] = result.x[poly.index("epsp", i, j)]
            minus[i, j] = result.x[poly.index("epsm", i, j)]
    return Phase1Result(slack_plus=plus, slack_minus=minus, objective=float(result.value))


def interior_point_estimate(poly: EstimationPolyhedron) -> EstimateResult:
    """Max-min-margin point of the slack-fixed polyhedron.

    Maximizes the smallest normalized margin over every inequality (knowledge
    rows and the [0, 1] variable boxes).  Whenever the best margin is zero,
    the inequalities that are implicit equalities (their own slack cannot be
    made positive anywhere in the polyhedron, probed by one auxiliary LP per
    tight row) are converted to equalities and the problem re-solved, until a
    strictly positive margin appears or no inequality remains; the result is
    then interior relative to the affine hull.
    """
    if poly.slack_plus is None or poly.slack_minus is None:
        raise NetchoiceError("interior-point step requires fixed slacks; run phase 1 first")
    n, c = poly.n_agents, poly.n_choices

    reduced_vars = [v for v in poly.variables if v.kind in ("p", "q")]
    index = {(v.kind, v.row, v.col): i for i, v in enumerate(reduced_vars)}
    n_red = len(reduced_vars)

    equalities: list[tuple[dict[int, float], float]] = []
    inequalities: list[tuple[dict[int, float], str, float]] = []
    for row in poly.rows:
        coeffs: dict[int, float] = {}
        rhs = float(row.rhs)
        for var_idx, value in row.coeffs.items():
            var = poly.variables[var_idx]
            if var.kind == "epsp":
                rhs -= value * poly.slack_plus[var.row, var.col]
            elif var.kind == "epsm":
                rhs -= value * poly.slack_minus[var.row, var.col]
            else:
                coeffs[index[(var.kind, var.row, var.col)]] = value
        if row.sense == "=":
            equalities.append((coeffs, rhs))
        else:
            inequalities.append((coeffs, row.sense, rhs))
    for i, var in enumerate(reduced_vars):
        inequalities.append(({i: 1.0}, ">=", 0.0))
        inequalities.append(({i: 1.0}, "<=", var.upper))

    margin = 0.0
    rounds = 0
    converted = 0
    point = np.zeros(n_red)
    while True:
        rounds += 1
        if rounds > len(inequalities) + len(equalities) + 2:
            raise NetchoiceError("margin iteration failed to terminate")
        s = n_red
        constraints = [LinearConstraint(coeffs, "=", rhs) for coeffs, rhs in equalities]
        for coeffs, sense, rhs in inequalities:
            norm = float(np.linalg.norm(list(coeffs.values())))
            padded = dict(coeffs)
            padded[s] = -norm if sense == ">=" else norm
            constraints.append(LinearConstraint(padded, sense, rhs))
        objective = np.zeros(n_red + 1)
        objective[s] = 1.0
        uppers = np.array([v.upper for v in reduced_vars] + [_MARGIN_UPPER])
        result = simplex_solve(n_red + 1, constraints, objective, maximize=True,
                               upper_bounds=uppers)
        if result.status == INFEASIBLE:
            raise InfeasibleError(
                "slack-fixed polyhedron is empty; phase-one slacks were inconsistent"
            )
        point = result.x[:n_red]
        margin = float(result.x[s])
        if margin > _TIGHT_TOL or not inequalities:
            break

        def is_implicit_equality(coeffs: dict[int, float], sense: str, rhs: float) -> bool:
            # maximize the row's own slack over the polyhedron; only rows that
            # cannot be slack anywhere are equalities for all points
            plain = [LinearConstraint(c, "=", r) for c, r in equalities]
            plain += [LinearConstraint(c, sn, r) for c, sn, r in inequalities]
            direction = np.zeros(n_red)
            for i, value in coeffs.items():
                direction[i] = value
            probe = simplex_solve(n_red, plain, direction,
                                  maximize=(sense == ">="),
                                  upper_bounds=[v.upper for v in reduced_vars])
            if probe.status != OPTIMAL:
                return True
            if sense == ">=":
                return probe.value <= rhs + _TIGHT_TOL
            return probe.value >= rhs - _TIGHT_TOL

        still_open = []
        for coeffs, sense, rhs in inequalities:
            attained = sum(value * point[i] for i, value in coeffs.items())
            tight = abs(attained - rhs) <= _TIGHT_TOL
            if tight and is_implicit_equality(coeffs, sense, rhs):
                equalities.append((dict(coeffs), rhs))
                converted += 1
            else:
                still_open.append((coeffs, sense, rhs))
        if len(still_open) == len(inequalities):
            break
        inequalities = still_open
        if not inequalities:
            margin = 0.0
            break

    adoption = np.zeros((n, n))
    direct = np.zeros((n, c))
    for i, var in enumerate(reduced_vars):
        if var.kind == "p":
            adoption[var.row, var.col] = point[i]
        else:
            direct[var.row, var.col] = point[i]
    return EstimateResult(adoption=adoption, direct=direct, margin=max(margin, 0.0),
                          rounds=rounds, converted_rows=converted)


def _fmt(value: float) -> str:
    return f"{value:.12g}"


def _format_terms(coeffs: Mapping[int, float], names) -> str:
    parts: list[str] = []
    for idx in sorted(coeffs):
        value = coeffs[idx]
        if value == 0.0:
            continue
        sign = "-" if value < 0 else "+"
        if not parts and sign == "+":
            parts.append(f"{_fmt(value)} {names[idx]}")
        else:
            parts.append(f"{sign} {_fmt(abs(value))} {names[idx]}")
    return " ".join(parts) if parts else "0 " + names[0]


def export_lp(poly: EstimationPolyhedron, objective: str = "phase1") -> str:
    """Render the selected phase as a standard LP-format text document.

    ``objective="phase1"`` writes the slack-minimization program over the
    full polyhedron; ``objective="interior"`` writes the max-margin program
    over the slack-fixed system (phase 1 must have run).  Variable names are
    positional (p_i_k, q_i_j, epsp_i_j, epsm_i_j) and the output is
    byte-stable across runs.
    """
    lines: list[str] = []
    if objective == "phase1":
        names = [v.name for v in poly.variables] + ["t"]
        lines.append("Minimize")
        lines.append(" obj: 1 t")
        lines.append("Subject To")
        for row in poly.rows:
            op = {"<=": "<=", ">=": ">=", "=": "="}[row.sense]
            lines.append(f" {row.label or 'row'}: {_format_terms(row.coeffs, names)} "
                         f"{op} {_fmt(row.rhs)}")
        t = len(poly.variables)
        for i in range(poly.n_agents):
            for j in range(poly.n_choices):
                denom = max(float(poly.observed[i, j]), PI_FLOOR)
                coeffs = {poly.index("epsp", i, j): 1.0,
                          poly.index("epsm", i, j): 1.0, t: -denom}
                lines.append(f" cap_{i + 1}_{j + 1}: {_format_terms(coeffs, names)} <= 0")
        lines.append("Bounds")
        for v in poly.variables:
            lines.append(f" 0 <= {v.name} <= {_fmt(v.upper)}")
        lines.append(f" 0 <= t <= {_fmt(_T_UPPER)}")
    elif objective == "interior":
        if poly.slack_plus is None:
            raise NetchoiceError("interior export requires fixed slacks; run phase 1 first")
        reduced = [v for v in poly.variables if v.kind in ("p", "q")]
        index = {(v.kind, v.row, v.col): i for i, v in enumerate(reduced)}
        names = [v.name for v in reduced] + ["s"]
        s = len(reduced)
        lines.append("Maximize")
        lines.append(" obj: 1 s")
        lines.append("Subject To")
        for row in poly.rows:
            coeffs: dict[int, float] = {}
            rhs = float(row.rhs)
            for var_idx, value in row.coeffs.items():
                var = poly.variables[var_idx]
                if var.kind == "epsp":
                    rhs -= value * poly.slack_plus[var.row, var.col]
                elif var.kind == "epsm":
                    rhs -= value * poly.slack_minus[var.row, var.col]
                else:
                    coeffs[index[(var.kind, var.row, var.col)]] = value
            if row.sense == "=":
                lines.append(f" {row.label or 'row'}: {_format_terms(coeffs, names)} "
                             f"= {_fmt(rhs)}")
            else:
                norm = float(np.linalg.norm(list(coeffs.values())))
                padded = dict(coeffs)
                padded[s] = -norm if row.sense == ">=" else norm
                lines.append(f" {row.label or 'row'}: {_format_terms(padded, names)} "
                             f"{row.sense} {_fmt(rhs)}")
        for i, v in enumerate(reduced):
            lines.append(f" lb_{v.name}: {_format_terms({i: 1.0, s: -1.0}, names)} >= 0")
            lines.append(f" ub_{v.name}: {_format_terms({i: 1.0, s: 1.0}, names)} "
                         f"<= {_fmt(v.upper)}")
        lines.append("Bounds")
        for v in reduced:
            lines.append(f" 0 <= {v.name} <= {_fmt(v.upper)}")
        lines.append(f" 0 <= s <= {_fmt(_MARGIN_UPPER)}")
    else:
        raise ValueError(f"unknown objective selector {objective!r}")
    lines.append("End")
    return "\n".join(lines) + "\n"
