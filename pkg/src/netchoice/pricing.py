"""Discount-parametrized models: sensitivities, profit, and pricing equilibrium.

Each firm owns one choice and one scalar discount.  Discounts move the model
entries affinely: a firm's own direct-selection column may gain mass while
other direct entries and adoption entries shed it, with zero net change per
row so the stochastic structure survives.  Affine entries satisfy every shape
hypothesis the profit theory needs (own-entry concave increasing, others
convex decreasing), make the feasible box corner-checkable, and give exact
first- and second-order sensitivity formulas from a single factorization.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from .errors import AssumptionError, ModelFormatError, StructureError
from .model import NetworkModel, _load_document, parse_model, require_assumption, unreachable_agents
from .shares import _check_endowment, choice_shares

_ENTRY_TOL = 1e-12
_GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class Firm:
    choice: str
    margin: float
    bounds: tuple[float, float]
    dq: np.ndarray
    dp: np.ndarray


@dataclass(frozen=True)
class ParametricModel:
    base: NetworkModel
    firms: tuple[Firm, ...]

    def firm_index(self, choice: str) -> int:
        for f, firm in enumerate(self.firms):
            if firm.choice == choice:
                return f
        raise ModelFormatError(f"no firm owns choice {choice!r}")


@dataclass(frozen=True)
class Profit:
    """Profit value with explicit definedness; outside the feasible region the
    profit is treated as minus infinity and ``value`` is None."""

    defined: bool
    value: float | None


@dataclass(frozen=True)
class EquilibriumResult:
    discounts: np.ndarray
    converged: bool
    residual: float
    rounds: int
    trace: tuple[np.ndarray, ...]


def build_parametric(base: NetworkModel, firms) -> ParametricModel:
    """Validate sign structure, row balance, and the feasible box.

    Affine entries attain their extremes at box corners, so entrywise bounds
    are checked there (plus the midpoint); collective decisiveness is
    rechecked at each corner because adoption entries can reach zero.
    """
    firms = tuple(firms)
    if not firms:
        raise ModelFormatError("parametric model declares no firms")
    seen = set()
    for firm in firms:
        if firm.choice in seen:
            raise ModelFormatError(f"choice {firm.choice!r} is owned by two firms")
        seen.add(firm.choice)
        j = base.choice_index(firm.choice)
        if firm.margin <= 0.0:
            raise ModelFormatError(f"firm {firm.choice!r}: margin must be positive")
        lo, hi = firm.bounds
        if not (lo <= 0.0 <= hi):
            raise ModelFormatError(f"firm {firm.choice!r}: bounds must contain 0")
        if hi > firm.margin:
            raise ModelFormatError(f"firm {firm.choice!r}: upper bound exceeds the margin")
        if firm.dq.shape != base.direct.shape or firm.dp.shape != base.adoption.shape:
            raise ModelFormatError(f"firm {firm.choice!r}: sensitivity shapes mismatch")
        if np.any(np.abs(np.diagonal(firm.dp)) > 0.0):
            raise ModelFormatError(f"firm {firm.choice!r}: adoption sensitivities on the diagonal")
        if np.any(firm.dp > _ENTRY_TOL):
            raise ModelFormatError(
                f"firm {firm.choice!r}: adoption entries must not increase with the discount")
        others = [l for l in range(base.n_choices) if l != j]
        if np.any(firm.dq[:, others] > _ENTRY_TOL):
            raise ModelFormatError(
                f"firm {firm.choice!r}: rival direct entries must not increase with the discount")
        if np.any(firm.dq[:, j] < -_ENTRY_TOL):
            raise ModelFormatError(
                f"firm {firm.choice!r}: own direct entries must not decrease with the discount")
        balance = firm.dq.sum(axis=1) + firm.dp.sum(axis=1)
        if np.any(np.abs(balance) > 1e-12):
            raise ModelFormatError(
                f"firm {firm.choice!r}: sensitivity rows must balance to zero, got {balance}")
        firm.dq.setflags(write=False)
        firm.dp.setflags(write=False)

    pm = ParametricModel(base=base, firms=firms)
    corners = _box_corners(pm)
    midpoint = np.array([(f.bounds[0] + f.bounds[1]) / 2.0 for f in firms])
    for z in corners + [midpoint]:
        adoption, direct = _instantiate(pm, z)
        if np.any(adoption < -_ENTRY_TOL) or np.any(direct < -_ENTRY_TOL):
            raise ModelFormatError(
                f"entries leave [0, 1] at z={z}; shrink the discount bounds")
        if np.any(adoption > 1.0 + _ENTRY_TOL) or np.any(direct > 1.0 + _ENTRY_TOL):
            raise ModelFormatError(
                f"entries leave [0, 1] at z={z}; shrink the discount bounds")
        model = base.replace(adoption=np.clip(adoption, 0.0, None),
                             direct=np.clip(direct, 0.0, None))
        if unreachable_agents(model) or not np.any(model.decisiveness > 0.0):
            raise ModelFormatError(
                f"collective decisiveness fails at z={z}; shrink the discount bounds")
    return pm


def _box_corners(pm: ParametricModel) -> list[np.ndarray]:
    corners = [np.array([], dtype=float)]
    for firm in pm.firms:
        lo, hi = firm.bounds
        ends = (lo, hi) if lo != hi else (lo,)
        corners = [np.append(z, e) for z in corners for e in ends]
    return corners


def _z_vector(pm: ParametricModel, z) -> np.ndarray:
    if isinstance(z, Mapping):
        vec = np.zeros(len(pm.firms))
        for key, value in z.items():
            vec[pm.firm_index(str(key))] = float(value)
        return vec
    vec = np.asarray(z, dtype=float)
    if vec.shape != (len(pm.firms),):
        raise ValueError(f"discount vector must have length {len(pm.firms)}")
    return vec


def _inside_box(pm: ParametricModel, z: np.ndarray, slack: float = 1e-12) -> bool:
    return all(
        firm.bounds[0] - slack <= z[f] <= firm.bounds[1] + slack
        for f, firm in enumerate(pm.firms)
    )


def _instantiate(pm: ParametricModel, z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    adoption = np.array(pm.base.adoption)
    direct = np.array(pm.base.direct)
    for f, firm in enumerate(pm.firms):
        if z[f] != 0.0:
            adoption += z[f] * firm.dp
            direct += z[f] * firm.dq
    return adoption, direct


def evaluate_model(pm: ParametricModel, z) -> NetworkModel:
    """Instantiate the model at a discount vector inside the feasible box."""
    z = _z_vector(pm, z)
    if not _inside_box(pm, z):
        raise ValueError(f"discount vector {z} is outside the feasible box")
    adoption, direct = _instantiate(pm, z)
    model = pm.base.replace(adoption=np.clip(adoption, 0.0, None),
                            direct=np.clip(direct, 0.0, None))
    require_assumption(model)
    return model


def share_sensitivities(pm: ParametricModel, z, firm: str, w) -> tuple[float, float]:
    """Analytic first and second derivatives of the firm's share in its discount.

    Let M = (I - P(z))^{-1} and let picol be the firm's probability column.
    With per-entry derivative matrices dP and dQ, the share derivative is
    c @ G with c = w^T M and G = dQ_col + dP @ picol; the second derivative
    adds the induced movement of c and of picol.  Affine entries contribute
    no second-order entry terms, so one factorization serves everything.
    Matches central finite differences to relative 1e-6 at interior points.
    """
    z = _z_vector(pm, z)
    f = pm.firm_index(firm)
    lo, hi = pm.firms[f].bounds
    if not (lo < z[f] < hi):
        raise ValueError(
            f"discount {z[f]} for firm {firm!r} must be strictly inside ({lo}, {hi})")
    w = _check_endowment(pm.base, w)
    model = evaluate_model(pm, z)
    j = model.choice_index(firm)
    dq_col = pm.firms[f].dq[:, j]
    dp = pm.firms[f].dp

    factors = lu_factor(np.eye(model.n_agents) - model.adoption)
    picol = lu_solve(factors, model.direct[:, j])
    cw = lu_solve(factors, w, trans=1)
    G = dq_col + dp @ picol
    first = float(cw @ G)
    dpicol = lu_solve(factors, G)
    H = dp @ dpicol
    dcw = lu_solve(factors, cw @ dp, trans=1)
    second = float(dcw @ G + cw @ H)
    return first, second


def affine_single_agent_share(pm: ParametricModel, u: float, firm: str, w) -> float:
    """Closed-form share when one agent's preferences move along a rank-one ray.

    Requires the firm's sensitivities to touch a single agent r: the own
    direct entry grows at rate s > 0 while that agent's adoption row and
    rival direct entries shed mass proportionally.  The share is then an
    explicit rational function of the discount, evaluated from base-model
    quantities only; it equals the generic instantiate-and-solve path to
    1e-10.
    """
    f = pm.firm_index(firm)
    sens_q, sens_p = pm.firms[f].dq, pm.firms[f].dp
    j = pm.base.choice_index(firm)
    touched = np.nonzero(
        np.any(sens_q != 0.0, axis=1) | np.any(sens_p != 0.0, axis=1)
    )[0]
    if touched.size != 1:
        raise StructureError(
            f"rank-one form needs exactly one varied agent, found {touched.size}")
    r = int(touched[0])
    scale = float(sens_q[r, j])
    if scale <= 0.0:
        raise StructureError("rank-one form needs a positive own-entry rate")
    v = -sens_p[r, :] / scale
    if np.any(v < -1e-12):
        raise StructureError("adoption sensitivities must be non-positive")
    lo, hi = pm.firms[f].bounds
    if not (lo - 1e-12 <= u <= hi + 1e-12):
        raise ValueError(f"discount {u} outside the feasible interval [{lo}, {hi}]")

    w = _check_endowment(pm.base, w)
    base = pm.base
    factors = lu_factor(np.eye(base.n_agents) - base.adoption)
    picol = lu_solve(factors, base.direct[:, j])
    cw = lu_solve(factors, w, trans=1)
    unit = np.zeros(base.n_agents)
    unit[r] = 1.0
    theta_col = lu_solve(factors, unit)  # theta_{k r} for all k

    u_eff = u * scale
    denominator = 1.0 + u_eff * float(v @ theta_col)
    if denominator <= 0.0:
        raise StructureError(f"discount {u} lies outside the validity interval")
    return float(w @ picol) + u_eff * float(cw[r]) * (1.0 - float(v @ picol)) / denominator


def profit(pm: ParametricModel, firm: str, z, w) -> Profit:
    """Per-firm profit (margin - discount) * share; undefined outside the box."""
    z = _z_vector(pm, z)
    f = pm.firm_index(firm)
    if not _inside_box(pm, z):
        return Profit(defined=False, value=None)
    try:
        model = evaluate_model(pm, z)
    except AssumptionError:
        return Profit(defined=False, value=None)
    w = _check_endowment(pm.base, w)
    share = float(choice_shares(model, w)[model.choice_index(firm)])
    return Profit(defined=True, value=(pm.firms[f].margin - z[f]) * share)


def best_response(pm: ParametricModel, firm: str, z, w, tol: float = 1e-8) -> float:
    """Profit-maximizing discount for one firm, rivals held fixed.

    Profit is concave in the firm's own discount, so golden-section search on
    the bound interval localizes the maximizer to width ``tol``; the better
    bound endpoint is returned when it dominates the interior candidate.
    """
    z = _z_vector(pm, z).copy()
    f = pm.firm_index(firm)
    lo, hi = pm.firms[f].bounds
    w = _check_endowment(pm.base, w)

    def value(x: float) -> float:
        z[f] = x
        result = profit(pm, firm, z, w)
        return result.value if result.defined else -np.inf

    a, b = lo, hi
    x1 = b - _GOLDEN * (b - a)
    x2 = a + _GOLDEN * (b - a)
    f1, f2 = value(x1), value(x2)
    while b - a > tol:
        if f1 >= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - _GOLDEN * (b - a)
            f1 = value(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + _GOLDEN * (b - a)
            f2 = value(x2)
    interior = 0.5 * (a + b)
    candidates = [lo, interior, hi]
    values = [value(x) for x in candidates]
    return float(candidates[int(np.argmax(values))])


def find_equilibrium(pm: ParametricModel, w, damping: float = 0.5, tol: float = 1e-6,
                     max_rounds: int = 200) -> EquilibriumResult:
    """Damped sequential best-response iteration for the pricing game.

    A pure-strategy equilibrium exists (profits are concave on compact
    intervals), but no algorithm is implied by that; best-response iteration
    is the pragmatic choice and may cycle, in which case the non-converged
    trace is returned rather than an exception.
    """
    if len(pm.firms) < 2:
        raise ValueError("equilibrium search needs at least two firms")
    if not (0.0 < damping <= 1.0):
        raise ValueError("damping must lie in (0, 1]")
    w = _check_endowment(pm.base, w)
    inner_tol = tol * 1e-2
    z = np.zeros(len(pm.firms))
    trace = [z.copy()]
    converged = False
    residual = np.inf
    rounds = 0
    for rounds in range(1, max_rounds + 1):
        for f, firm in enumerate(pm.firms):
            reply = best_response(pm, firm.choice, z, w, tol=inner_tol)
            z[f] = (1.0 - damping) * z[f] + damping * reply
        trace.append(z.copy())
        residual = max(
            abs(z[f] - best_response(pm, firm.choice, z, w, tol=inner_tol))
            for f, firm in enumerate(pm.firms)
        )
        if residual < tol:
            converged = True
            break
    return EquilibriumResult(
        discounts=z,
        converged=converged,
        residual=float(residual),
        rounds=rounds,
        trace=tuple(trace),
    )


def parse_parametric(source) -> ParametricModel:
    """Parse a model document carrying the per-firm pricing extension block."""
    doc = _load_document(source)
    base = parse_model(doc)
    block = doc.get("pricing")
    if block is None:
        raise ModelFormatError("model document has no 'pricing' block")
    if not isinstance(block, Mapping) or set(block) != {"firms"}:
        raise ModelFormatError("pricing block must be an object with a 'firms' list")
    firms = []
    for pos, entry in enumerate(block["firms"]):
        if not isinstance(entry, Mapping):
            raise ModelFormatError(f"firm entry {pos} must be an object")
        extra = set(entry) - {"choice", "margin", "bounds", "sensitivity"}
        if extra:
            raise ModelFormatError(f"firm entry {pos}: unknown field(s) {sorted(extra)}")
        try:
            choice = str(entry["choice"])
            margin = float(entry["margin"])
            lo, hi = (float(x) for x in entry["bounds"])
            sensitivity = entry["sensitivity"]
        except (KeyError, TypeError, ValueError) as exc:
            raise ModelFormatError(f"firm entry {pos} is malformed: {exc}") from exc
        dq = np.zeros_like(base.direct)
        dp = np.zeros_like(base.adoption)
        if not isinstance(sensitivity, Mapping) or set(sensitivity) - {"direct", "adoption"}:
            raise ModelFormatError(
                f"firm entry {pos}: sensitivity must hold 'direct'/'adoption' lists")
        for item in sensitivity.get("direct", []):
            dq[base.agent_index(str(item["agent"])), base.choice_index(str(item["choice"]))] = \
                float(item["coef"])
        for item in sensitivity.get("adoption", []):
            dp[base.agent_index(str(item["agent"])), base.agent_index(str(item["to"]))] = \
                float(item["coef"])
        firms.append(Firm(choice=choice, margin=margin, bounds=(lo, hi), dq=dq, dp=dp))
    return build_parametric(base, firms)
