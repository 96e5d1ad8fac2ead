"""Network choice model: representation, document parsing, and structural validation.

A model couples a set of agents with a set of choices.  Each agent either
selects a choice directly (probabilities in the ``direct`` matrix) or adopts
the eventual choice of another agent (probabilities in the ``adoption``
matrix).  Per agent, adoption and direct-selection probabilities partition a
unit of probability mass, and no agent adopts itself.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from .errors import AssumptionError, ModelFormatError

# Row sums are accepted within this tolerance and then renormalized; the
# value is a package convention (estimation output and hand-written fixtures
# carry rounding).
ROW_SUM_TOL = 1e-9

_POWER_ITERATIONS = 200
_POWER_RTOL = 1e-12

# Top-level document keys.  "pricing" carries the parametric extension and is
# consumed by the pricing module; the base parser ignores its content.
_KNOWN_KEYS = {"agents", "choices", "adoption", "direct", "endowment", "pricing"}


@dataclass(frozen=True)
class NetworkModel:
    """Immutable model of agents choosing directly or adopting peers' choices.

    ``adoption[i, k]`` is the probability that agent ``i`` adopts agent
    ``k``'s choice; ``direct[i, j]`` the probability that agent ``i`` selects
    choice ``j`` without consulting the network.  Rows of
    ``adoption.sum(1) + direct.sum(1)`` equal one.  ``endowment`` holds the
    non-negative weight each agent allocates.
    """

    agents: tuple[str, ...]
    choices: tuple[str, ...]
    adoption: np.ndarray
    direct: np.ndarray
    endowment: np.ndarray
    _agent_index: dict[str, int] = field(repr=False, compare=False, default_factory=dict)
    _choice_index: dict[str, int] = field(repr=False, compare=False, default_factory=dict)

    def __post_init__(self):
        n, c = len(self.agents), len(self.choices)
        adoption = np.ascontiguousarray(self.adoption, dtype=float)
        direct = np.ascontiguousarray(self.direct, dtype=float)
        endowment = np.ascontiguousarray(self.endowment, dtype=float)
        if adoption.shape != (n, n):
            raise ModelFormatError(f"adoption matrix must be {n}x{n}, got {adoption.shape}")
        if direct.shape != (n, c):
            raise ModelFormatError(f"direct matrix must be {n}x{c}, got {direct.shape}")
        if endowment.shape != (n,):
            raise ModelFormatError(f"endowment must have length {n}, got {endowment.shape}")
        if np.any(np.diagonal(adoption) != 0.0):
            raise ModelFormatError("adoption matrix must have a zero diagonal (no self-adoption)")
        if np.any(adoption < 0.0) or np.any(direct < 0.0):
            raise ModelFormatError("adoption and direct probabilities must be non-negative")
        if np.any(endowment < 0.0):
            raise ModelFormatError("endowment weights must be non-negative")
        rows = adoption.sum(axis=1) + direct.sum(axis=1)
        bad = np.nonzero(np.abs(rows - 1.0) > ROW_SUM_TOL)[0]
        if bad.size:
            i = int(bad[0])
            raise ModelFormatError(
                f"agent {self.agents[i]!r}: adoption + direct row sums to {rows[i]:.12g}, not 1"
            )
        for arr in (adoption, direct, endowment):
            arr.setflags(write=False)
        object.__setattr__(self, "adoption", adoption)
        object.__setattr__(self, "direct", direct)
        object.__setattr__(self, "endowment", endowment)
        object.__setattr__(self, "_agent_index", {a: i for i, a in enumerate(self.agents)})
        object.__setattr__(self, "_choice_index", {s: j for j, s in enumerate(self.choices)})
        if len(self._agent_index) != n:
            raise ModelFormatError("agent identifiers must be unique")
        if len(self._choice_index) != c:
            raise ModelFormatError("choice identifiers must be unique")

    @property
    def n_agents(self) -> int:
        return len(self.agents)

    @property
    def n_choices(self) -> int:
        return len(self.choices)

    @property
    def decisiveness(self) -> np.ndarray:
        """Per-agent probability of selecting directly, ``direct.sum(axis=1)``."""
        return self.direct.sum(axis=1)

    def agent_index(self, agent: str) -> int:
        try:
            return self._agent_index[agent]
        except KeyError:
            raise ModelFormatError(f"unknown agent {agent!r}") from None

    def choice_index(self, choice: str) -> int:
        try:
            return self._choice_index[choice]
        except KeyError:
            raise ModelFormatError(f"unknown choice {choice!r}") from None

    def replace(self, adoption: np.ndarray | None = None, direct: np.ndarray | None = None,
                endowment: np.ndarray | None = None) -> "NetworkModel":
        return NetworkModel(
            agents=self.agents,
            choices=self.choices,
            adoption=self.adoption if adoption is None else adoption,
            direct=self.direct if direct is None else direct,
            endowment=self.endowment if endowment is None else endowment,
        )


@dataclass(frozen=True)
class ValidationReport:
    """Outcome of the collective-decisiveness check plus numeric diagnostics."""

    satisfies_assumption1: bool
    unreachable_agents: tuple[str, ...]
    spectral_radius_estimate: float
    row_sum_residuals: np.ndarray


def build_model(agents, choices, adoption, direct, endowment=None) -> NetworkModel:
    """Construct a model, renormalizing rows that are within tolerance of one.

    Rows whose total mass deviates from one by more than ``ROW_SUM_TOL`` are
    rejected; smaller deviations are absorbed by rescaling the direct-selection
    remainder (falling back to the adoption row when the agent is fully
    indecisive).
    """
    agents = tuple(str(a) for a in agents)
    choices = tuple(str(s) for s in choices)
    adoption = np.array(adoption, dtype=float)
    direct = np.array(direct, dtype=float)
    if endowment is None:
        endowment = np.ones(len(agents))
    endowment = np.array(endowment, dtype=float)

    if adoption.shape != (len(agents), len(agents)) or direct.shape != (len(agents), len(choices)):
        raise ModelFormatError("adoption/direct matrices do not match agent and choice counts")
    if np.any(adoption < 0.0) or np.any(direct < 0.0):
        raise ModelFormatError("adoption and direct probabilities must be non-negative")
    rows = adoption.sum(axis=1) + direct.sum(axis=1)
    off = np.abs(rows - 1.0)
    bad = np.nonzero(off > ROW_SUM_TOL)[0]
    if bad.size:
        i = int(bad[0])
        raise ModelFormatError(
            f"agent {agents[i]!r}: adoption + direct row sums to {rows[i]:.12g}, not 1"
        )
    # Rows already normalized at float precision are left untouched so that
    # parse(serialize(model)) is an exact identity.
    for i in np.nonzero(off > 1e-15)[0]:
        q_sum = direct[i].sum()
        p_sum = adoption[i].sum()
        if q_sum > 0.0:
            direct[i] *= (1.0 - p_sum) / q_sum
        elif p_sum > 0.0:
            adoption[i] *= 1.0 / p_sum
        else:
            raise ModelFormatError(f"agent {agents[i]!r}: row has no probability mass")
    return NetworkModel(agents, choices, adoption, direct, endowment)


def _require_keys(entry: Mapping[str, Any], keys: set[str], where: str) -> None:
    extra = set(entry) - keys
    if extra:
        raise ModelFormatError(f"{where}: unknown field(s) {sorted(extra)}")
    missing = keys - set(entry)
    if missing:
        raise ModelFormatError(f"{where}: missing field(s) {sorted(missing)}")


def _load_document(source) -> dict:
    if isinstance(source, Mapping):
        return dict(source)
    if isinstance(source, (str, Path)):
        text = Path(source).read_text(encoding="utf-8")
    else:
        text = source.read()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"model document is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ModelFormatError("model document must be a JSON object")
    return doc


def parse_model(source) -> NetworkModel:
    """Parse a model document (path, mapping, or file-like) into a NetworkModel.

    The document carries ``agents``, ``choices``, sparse ``adoption`` triplets
    ``{from, to, p}``, sparse ``direct`` triplets ``{agent, choice, q}``, and
    an optional ``endowment`` map (weights default to 1.0).  Unknown keys and
    duplicate triplets are rejected; duplicates are ambiguous rather than
    additive.
    """
    doc = _load_document(source)
    extra = set(doc) - _KNOWN_KEYS
    if extra:
        raise ModelFormatError(f"unknown top-level key(s) {sorted(extra)}")
    for key in ("agents", "choices", "adoption", "direct"):
        if key not in doc:
            raise ModelFormatError(f"missing top-level key {key!r}")
        if not isinstance(doc[key], list):
            raise ModelFormatError(f"top-level key {key!r} must be a list")
    agents = [str(a) for a in doc["agents"]]
    choices = [str(s) for s in doc["choices"]]
    if not agents or not choices:
        raise ModelFormatError("agents and choices must be non-empty")
    if len(set(agents)) != len(agents) or len(set(choices)) != len(choices):
        raise ModelFormatError("agent and choice identifiers must be unique")
    a_idx = {a: i for i, a in enumerate(agents)}
    c_idx = {s: j for j, s in enumerate(choices)}

    adoption = np.zeros((len(agents), len(agents)))
    seen_p: set[tuple[int, int]] = set()
    for entry in doc["adoption"]:
        if not isinstance(entry, Mapping):
            raise ModelFormatError("adoption entries must be objects {from, to, p}")
        _require_keys(entry, {"from", "to", "p"}, "adoption entry")
        src, dst = str(entry["from"]), str(entry["to"])
        if src not in a_idx or dst not in a_idx:
            raise ModelFormatError(f"adoption entry references unknown agent {src!r} or {dst!r}")
        p = float(entry["p"])
        i, k = a_idx[src], a_idx[dst]
        if i == k and p != 0.0:
            raise ModelFormatError(f"agent {src!r} cannot adopt its own choice")
        if (i, k) in seen_p:
            raise ModelFormatError(f"duplicate adoption entry for ({src!r}, {dst!r})")
        seen_p.add((i, k))
        if p < 0.0:
            raise ModelFormatError(f"adoption probability for ({src!r}, {dst!r}) is negative")
        adoption[i, k] = p

    direct = np.zeros((len(agents), len(choices)))
    seen_q: set[tuple[int, int]] = set()
    for entry in doc["direct"]:
        if not isinstance(entry, Mapping):
            raise ModelFormatError("direct entries must be objects {agent, choice, q}")
        _require_keys(entry, {"agent", "choice", "q"}, "direct entry")
        agent, choice = str(entry["agent"]), str(entry["choice"])
        if agent not in a_idx:
            raise ModelFormatError(f"direct entry references unknown agent {agent!r}")
        if choice not in c_idx:
            raise ModelFormatError(f"direct entry references unknown choice {choice!r}")
        q = float(entry["q"])
        i, j = a_idx[agent], c_idx[choice]
        if (i, j) in seen_q:
            raise ModelFormatError(f"duplicate direct entry for ({agent!r}, {choice!r})")
        seen_q.add((i, j))
        if q < 0.0:
            raise ModelFormatError(f"direct probability for ({agent!r}, {choice!r}) is negative")
        direct[i, j] = q

    endowment = np.ones(len(agents))
    if "endowment" in doc:
        if not isinstance(doc["endowment"], Mapping):
            raise ModelFormatError("endowment must be a map agent -> weight")
        for agent, weight in doc["endowment"].items():
            if str(agent) not in a_idx:
                raise ModelFormatError(f"endowment references unknown agent {agent!r}")
            w = float(weight)
            if w < 0.0:
                raise ModelFormatError(f"endowment for agent {agent!r} is negative")
            endowment[a_idx[str(agent)]] = w

    return build_model(agents, choices, adoption, direct, endowment)


def serialize_model(model: NetworkModel) -> dict:
    """Canonical document for a model; ``parse_model`` inverts it exactly."""
    adoption = [
        {"from": model.agents[i], "to": model.agents[k], "p": float(model.adoption[i, k])}
        for i in range(model.n_agents)
        for k in range(model.n_agents)
        if model.adoption[i, k] != 0.0
    ]
    direct = [
        {"agent": model.agents[i], "choice": model.choices[j], "q": float(model.direct[i, j])}
        for i in range(model.n_agents)
        for j in range(model.n_choices)
        if model.direct[i, j] != 0.0
    ]
    return {
        "agents": list(model.agents),
        "choices": list(model.choices),
        "adoption": adoption,
        "direct": direct,
        "endowment": {a: float(w) for a, w in zip(model.agents, model.endowment)},
    }


def write_model(model: NetworkModel, path) -> None:
    Path(path).write_text(json.dumps(serialize_model(model), indent=2) + "\n", encoding="utf-8")


def unreachable_agents(model: NetworkModel) -> tuple[str, ...]:
    """Agents with no probabilistic adoption path to any directly-selecting agent.

    Runs a reverse reachability search from the decisive set over arcs
    ``(k, i)`` for every positive ``adoption[i, k]``; the result is empty
    exactly when collective decisiveness holds.
    """
    n = model.n_agents
    decisive = model.decisiveness > 0.0
    reached = decisive.copy()
    frontier = list(np.nonzero(decisive)[0])
    # incoming[k] lists agents i that adopt k with positive probability
    positive = model.adoption > 0.0
    while frontier:
        k = frontier.pop()
        for i in np.nonzero(positive[:, k])[0]:
            if not reached[i]:
                reached[i] = True
                frontier.append(int(i))
    return tuple(model.agents[i] for i in np.nonzero(~reached)[0])


def spectral_radius(model: NetworkModel) -> float:
    """Perron root estimate of the adoption matrix by power iteration.

    Iterates on the shifted matrix I + P so the dominant growth rate is
    strictly separated in modulus even for cyclic adoption structure (for a
    non-negative matrix the shift moves every eigenvalue but only the Perron
    root stays maximal), then subtracts the shift.  Starts from the all-ones
    vector for reproducibility and stops once the growth-rate bracket closes
    to relative 1e-12, or after 200 iterations (returning the bracket
    midpoint, a mild overestimate for defective cases such as pure chains).
    """
    P = model.adoption
    x = np.ones(model.n_agents)
    upper = lower = 1.0
    for _ in range(_POWER_ITERATIONS):
        y = P @ x + x
        # Collatz-Wielandt: the entrywise growth ratios bracket the Perron
        # root of I + P.  Entries that have decayed to nothing sit outside
        # the dominant class and would pin the bracket open, so they are
        # excluded once negligible (x is renormalized to max 1 each step).
        alive = x > 1e-15
        ratios = y[alive] / x[alive]
        upper = float(ratios.max())
        lower = float(ratios.min())
        x = y / float(y.max())
        if upper - lower <= _POWER_RTOL * upper:
            return upper - 1.0
    return 0.5 * (upper + lower) - 1.0


def validate(model: NetworkModel) -> ValidationReport:
    """Check collective decisiveness and report diagnostics (never raises)."""
    unreachable = unreachable_agents(model)
    has_decisive = bool(np.any(model.decisiveness > 0.0))
    rows = model.adoption.sum(axis=1) + model.direct.sum(axis=1)
    return ValidationReport(
        satisfies_assumption1=has_decisive and not unreachable,
        unreachable_agents=unreachable,
        spectral_radius_estimate=spectral_radius(model),
        row_sum_residuals=rows - 1.0,
    )


def require_assumption(model: NetworkModel) -> None:
    """Raise AssumptionError when the closed forms are undefined for ``model``."""
    unreachable = unreachable_agents(model)
    if not np.any(model.decisiveness > 0.0):
        raise AssumptionError("no agent selects directly; choice probabilities are undefined",
                              tuple(model.agents))
    if unreachable:
        raise AssumptionError(
            f"agents {list(unreachable)} have no adoption path to a decisive agent",
            unreachable,
        )
