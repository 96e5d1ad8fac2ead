"""Monte Carlo samplers realizing the model's probabilistic semantics.

Two samplers are provided.  The absorbing random walk follows one agent's
decision chain until a choice is hit and is unbiased for the closed-form
probabilities.  The joint pointer sampler draws one action for every agent
simultaneously and resolves adoption pointers, rejecting realizations whose
pointers form a cycle; its accepted-outcome marginals are reported against
the closed form rather than asserted, since rejection may tilt them.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError
from .model import NetworkModel, require_assumption
from .shares import solve_choice_matrix

_MAX_WALK_STEPS = 10_000_000

UNRESOLVED_CYCLE = "unresolved_cycle"
U_RULE = "u_rule"


@dataclass(frozen=True)
class JointOutcome:
    """One realization of every agent's resolved choice."""

    choices: tuple[str | None, ...]
    rejected: bool
    rejection_reason: str | None


@dataclass(frozen=True)
class JointStats:
    """Aggregate over joint-outcome draws, for reporting."""

    samples: int
    accepted: int
    rejected_cycle: int
    rejected_u_rule: int
    marginals: np.ndarray
    closed_form: np.ndarray
    max_marginal_discrepancy: float


def _action_cumulative(model: NetworkModel) -> np.ndarray:
    """Per-agent cumulative distribution over [choices..., agents...]."""
    table = np.concatenate([model.direct, model.adoption], axis=1)
    cum = np.cumsum(table, axis=1)
    cum[:, -1] = 1.0
    return cum


def sample_walk_choice(model: NetworkModel, agent: str, rng: np.random.Generator) -> str:
    """Absorbing random walk from one agent; returns the absorbed choice id.

    At each step the current agent either selects a choice directly (walk
    absorbs) or hands the decision to an adopted agent.  Unbiased for the
    closed-form probability row of ``agent``.
    """
    require_assumption(model)
    cum = _action_cumulative(model)
    c = model.n_choices
    state = model.agent_index(agent)
    for _ in range(_MAX_WALK_STEPS):
        action = int(np.searchsorted(cum[state], rng.random(), side="right"))
        if action < c:
            return model.choices[action]
        state = action - c
    raise ConvergenceError(
        f"walk from agent {agent!r} exceeded {_MAX_WALK_STEPS} steps; "
        "the model is effectively not collectively decisive"
    )


def _estimate_agent_counts(model: NetworkModel, start: int, n: int,
                           rng: np.random.Generator) -> np.ndarray:
    """Absorption counts of n independent walks started at one agent.

    Walkers sharing a state take independent categorical steps, so advancing
    them one synchronized round is a multinomial split per occupied state;
    the aggregated counts have exactly the distribution of n per-walk
    simulations.
    """
    c = model.n_choices
    table = np.concatenate([model.direct, model.adoption], axis=1)
    table = table / table.sum(axis=1, keepdims=True)
    absorbed = np.zeros(c)
    active = np.zeros(model.n_agents, dtype=np.int64)
    active[start] = n
    for _ in range(_MAX_WALK_STEPS):
        if not active.any():
            return absorbed
        new_active = np.zeros_like(active)
        for state in np.nonzero(active)[0]:
            draw = rng.multinomial(active[state], table[state])
            absorbed += draw[:c]
            new_active += draw[c:]
        active = new_active
    raise ConvergenceError("walk rounds exceeded the step budget")


def estimate_choice_probs_mc(model: NetworkModel, n: int, seed: int,
                             threads: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """Monte Carlo estimate of the choice-probability matrix with standard errors.

    Runs ``n`` independent absorbing walks per agent on a per-agent
    substream spawned from ``seed``, so results are reproducible and
    independent of worker count.  Returns (estimates, standard errors) with
    per-cell standard error sqrt(p (1 - p) / n).
    """
    require_assumption(model)
    if n < 1:
        raise ValueError("sample count must be at least 1")
    streams = np.random.SeedSequence(seed).spawn(model.n_agents)

    def run(i: int) -> np.ndarray:
        return _estimate_agent_counts(model, i, n, np.random.default_rng(streams[i]))

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            counts = list(pool.map(run, range(model.n_agents)))
    else:
        counts = [run(i) for i in range(model.n_agents)]
    estimates = np.vstack(counts) / n
    errors = np.sqrt(estimates * (1.0 - estimates) / n)
    return estimates, errors


def _resolve_pointers(n_choices: int, actions: np.ndarray) -> tuple[np.ndarray, bool]:
    """Follow adoption pointers to absorbing choices; flag pointer cycles.

    ``actions[i]`` is a choice index in [0, n_choices) or ``n_choices + k``
    for a pointer to agent k.  Returns resolved choice indices (-1 for agents
    caught in a cycle) and whether any cycle occurred.
    """
    n = actions.shape[0]
    resolved = np.full(n, -2, dtype=np.int64)  # -2 unknown, -1 cycle
    any_cycle = False
    for i in range(n):
        if resolved[i] != -2:
            continue
        path: list[int] = []
        on_path: set[int] = set()
        cur = i
        while True:
            if resolved[cur] != -2:
                outcome = int(resolved[cur])
                break
            if cur in on_path:
                outcome = -1
                break
            path.append(cur)
            on_path.add(cur)
            action = int(actions[cur])
            if action < n_choices:
                outcome = action
                break
            cur = action - n_choices
        for node in path:
            resolved[node] = outcome
        if outcome == -1:
            any_cycle = True
    return resolved, any_cycle


def sample_joint_outcome(model: NetworkModel, rng: np.random.Generator,
                         u_choice: str | None = None) -> JointOutcome:
    """One simultaneous realization of all agents' actions, with rejection.

    Every agent independently draws one action: a direct choice, or a pointer
    to the agent whose choice it adopts.  Pointers are followed to
    resolution; a realization containing a pointer cycle is rejected as
    ``unresolved_cycle``.  With ``u_choice`` set, the non-activation
    alignment rule applies: a realization in which no agent picked
    ``u_choice`` directly yet some agent remains without a resolved
    activating choice is rejected as ``u_rule`` instead.
    """
    require_assumption(model)
    cum = _action_cumulative(model)
    c = model.n_choices
    u = model.choice_index(u_choice) if u_choice is not None else None
    draws = rng.random(model.n_agents)
    actions = np.empty(model.n_agents, dtype=np.int64)
    for i in range(model.n_agents):
        actions[i] = np.searchsorted(cum[i], draws[i], side="right")
    resolved, any_cycle = _resolve_pointers(c, actions)
    if any_cycle:
        reason = UNRESOLVED_CYCLE
        if u is not None and not np.any(actions == u):
            reason = U_RULE
        labels = tuple(
            model.choices[k] if k >= 0 else None for k in resolved
        )
        return JointOutcome(choices=labels, rejected=True, rejection_reason=reason)
    return JointOutcome(
        choices=tuple(model.choices[k] for k in resolved),
        rejected=False,
        rejection_reason=None,
    )


def joint_outcome_stats(model: NetworkModel, n: int, seed: int,
                        u_choice: str | None = None) -> JointStats:
    """Run the joint sampler ``n`` times and compare accepted marginals.

    The discrepancy between accepted-outcome marginals and the closed form
    is reported, never asserted: whether rejection preserves the marginals
    exactly is an open point, and the absorbing-walk sampler is the unbiased
    reference.
    """
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    counts = np.zeros((model.n_agents, model.n_choices))
    accepted = rejected_cycle = rejected_u = 0
    for _ in range(n):
        outcome = sample_joint_outcome(model, rng, u_choice)
        if outcome.rejected:
            if outcome.rejection_reason == U_RULE:
                rejected_u += 1
            else:
                rejected_cycle += 1
            continue
        accepted += 1
        for i, label in enumerate(outcome.choices):
            counts[i, model.choice_index(label)] += 1
    marginals = counts / accepted if accepted else np.full_like(counts, np.nan)
    closed = solve_choice_matrix(model).pi
    discrepancy = float(np.max(np.abs(marginals - closed))) if accepted else float("nan")
    return JointStats(
        samples=n,
        accepted=accepted,
        rejected_cycle=rejected_cycle,
        rejected_u_rule=rejected_u,
        marginals=marginals,
        closed_form=closed,
        max_marginal_discrepancy=discrepancy,
    )


def joint_second_moment(model: NetworkModel, n: int, seed: int,
                        u_choice: str | None = None) -> np.ndarray:
    """Empirical E[X X^T] over accepted joint outcomes for a two-choice model.

    Choices are encoded +1 (first declared) and -1 (second); diagonal entries
    are identically one, and off-diagonals measure choice alignment between
    agent pairs.
    """
    if model.n_choices != 2:
        raise ValueError("second-moment encoding requires exactly two choices")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    total = np.zeros((model.n_agents, model.n_agents))
    accepted = 0
    for _ in range(n):
        outcome = sample_joint_outcome(model, rng, u_choice)
        if outcome.rejected:
            continue
        x = np.array([1.0 if label == model.choices[0] else -1.0 for label in outcome.choices])
        total += np.outer(x, x)
        accepted += 1
    if accepted == 0:
        raise ConvergenceError("every joint realization was rejected; no accepted samples")
    return total / accepted
