"""Brand-ambassador selection: marginal gains, greedy and lazy-greedy planners.

Recruiting an agent zeroes its adoption row and pins its direct selection on
the target choice.  That is a rank-one change to I - P, so the resolvent can
be maintained by Sherman-Morrison updates while the greedy planner scans
candidates, and each candidate's marginal share gain has a closed form that
needs no refactorization.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from itertools import combinations
from math import comb

import numpy as np

from .errors import ModelFormatError, StaleCacheError
from .model import NetworkModel, require_assumption
from .shares import _check_endowment, choice_shares

BRUTE_FORCE_LIMIT = 1_000_000
GAIN_CONTRACT_TOL = 1e-10


@dataclass(frozen=True)
class AmbassadorPlan:
    target_choice: str
    selected: tuple[str, ...]
    marginal_gains: tuple[float, ...]
    final_share: float
    budget: int
    baseline_share: float
    lazy: bool
    evaluations: int


@dataclass(frozen=True)
class ResolventCache:
    """Explicit inverse of I - P(B) for a fixed ambassador set B."""

    members: frozenset[str]
    inverse: np.ndarray

    def __post_init__(self):
        self.inverse.setflags(write=False)


def apply_ambassadors(model: NetworkModel, members, target: str) -> NetworkModel:
    """Model with every member recommending and selecting the target only."""
    j = model.choice_index(target)
    rows = [model.agent_index(a) for a in members]
    adoption = np.array(model.adoption)
    direct = np.array(model.direct)
    for i in rows:
        adoption[i, :] = 0.0
        direct[i, :] = 0.0
        direct[i, j] = 1.0
    return model.replace(adoption=adoption, direct=direct)


def make_cache(model: NetworkModel, members) -> ResolventCache:
    members = frozenset(str(a) for a in members)
    rows = [model.agent_index(a) for a in members]
    P = np.array(model.adoption)
    for i in rows:
        P[i, :] = 0.0
    inverse = np.linalg.inv(np.eye(model.n_agents) - P)
    return ResolventCache(members=members, inverse=inverse)


def extend_cache(model: NetworkModel, cache: ResolventCache, agent: str) -> ResolventCache:
    """Rank-one update of the cached resolvent after recruiting ``agent``.

    Zeroing row a of P(B) adds e_a p_a^T to I - P(B); Sherman-Morrison gives
    the new inverse from the old one in O(n^2).
    """
    a = model.agent_index(agent)
    if agent in cache.members:
        raise StaleCacheError(f"agent {agent!r} is already in the cached ambassador set")
    M = cache.inverse
    p_a = model.adoption[a, :]
    col = M[:, a]
    row = p_a @ M
    denom = 1.0 + row[a]
    inverse = M - np.outer(col, row) / denom
    return ResolventCache(members=cache.members | {agent}, inverse=inverse)


def _gain_components(model: NetworkModel, cache: ResolventCache, j: int, w: np.ndarray):
    """Weighted centrality and target column under the cached ambassador set."""
    q_j = np.array(model.direct[:, j])
    member_rows = [model.agent_index(a) for a in cache.members]
    q_j[member_rows] = 1.0
    centrality = w @ cache.inverse
    pi_col = cache.inverse @ q_j
    return centrality, pi_col


def _gain_from_cache(model: NetworkModel, cache: ResolventCache, a: int, j: int,
                     centrality: np.ndarray, pi_col: np.ndarray) -> float:
    p_a = model.adoption[a, :]
    off_target = model.decisiveness[a] - model.direct[a, j]
    numerator = off_target + p_a @ (1.0 - pi_col)
    denominator = 1.0 + p_a @ cache.inverse[:, a]
    return float(centrality[a] * numerator / denominator)


def marginal_gain(model: NetworkModel, members, agent: str, target: str, w,
                  cache: ResolventCache) -> float:
    """Share gain from recruiting one more ambassador, without refactorizing.

    Evaluates the incremental-benefit closed form on the cached resolvent of
    I - P(B); the result agrees with recomputing both shares directly to
    1e-10, and is always non-negative.
    """
    members = frozenset(str(x) for x in members)
    if cache.members != members:
        raise StaleCacheError(
            f"cache was built for {sorted(cache.members)}, not {sorted(members)}"
        )
    if agent in members:
        raise ValueError(f"agent {agent!r} is already an ambassador")
    j = model.choice_index(target)
    a = model.agent_index(agent)
    w = _check_endowment(model, w)
    centrality, pi_col = _gain_components(model, cache, j, w)
    return _gain_from_cache(model, cache, a, j, centrality, pi_col)


def greedy_select(model: NetworkModel, target: str, w, budget: int,
                  lazy: bool = False) -> AmbassadorPlan:
    """Greedy ambassador selection with the approximation guarantee.

    At each step recruits the candidate whose marginal share gain is largest,
    breaking ties by agent declaration order.  With ``lazy`` the candidate
    scan uses a stale-upper-bound priority queue; submodularity means gains
    only shrink as the set grows, so a bound recomputed at the current set
    that stays on top is exact.  Both modes return the same set.
    """
    require_assumption(model)
    j = model.choice_index(target)
    w = _check_endowment(model, w)
    n = model.n_agents
    if not (1 <= budget <= n):
        raise ValueError(f"budget must lie in [1, {n}], got {budget}")

    baseline = float(choice_shares(model, w)[j])
    cache = make_cache(model, frozenset())
    selected: list[str] = []
    gains: list[float] = []
    evaluations = 0

    if not lazy:
        for _ in range(budget):
            centrality, pi_col = _gain_components(model, cache, j, w)
            best_gain, best_agent = -1.0, -1
            for a in range(n):
                if model.agents[a] in cache.members:
                    continue
                gain = _gain_from_cache(model, cache, a, j, centrality, pi_col)
                evaluations += 1
                if gain > best_gain:
                    best_gain, best_agent = gain, a
            agent = model.agents[best_agent]
            selected.append(agent)
            gains.append(best_gain)
            cache = extend_cache(model, cache, agent)
    else:
        centrality, pi_col = _gain_components(model, cache, j, w)
        heap: list[tuple[float, int, int]] = []  # (-gain, declaration index, stamp)
        for a in range(n):
            gain = _gain_from_cache(model, cache, a, j, centrality, pi_col)
            evaluations += 1
            heap.append((-gain, a, 0))
        heapq.heapify(heap)
        step = 0
        while len(selected) < budget:
            neg_gain, a, stamp = heapq.heappop(heap)
            if stamp == step:
                agent = model.agents[a]
                selected.append(agent)
                gains.append(-neg_gain)
                cache = extend_cache(model, cache, agent)
                step += 1
                if len(selected) < budget:
                    centrality, pi_col = _gain_components(model, cache, j, w)
            else:
                gain = _gain_from_cache(model, cache, a, j, centrality, pi_col)
                evaluations += 1
                heapq.heappush(heap, (-gain, a, step))

    final = float(choice_shares(apply_ambassadors(model, selected, target), w)[j])
    return AmbassadorPlan(
        target_choice=target,
        selected=tuple(selected),
        marginal_gains=tuple(gains),
        final_share=final,
        budget=budget,
        baseline_share=baseline,
        lazy=lazy,
        evaluations=evaluations,
    )


def _subset_share(model: NetworkModel, subset, j: int, w: np.ndarray) -> float:
    P = np.array(model.adoption)
    q_j = np.array(model.direct[:, j])
    for a in subset:
        P[a, :] = 0.0
        q_j[a] = 1.0
    return float(w @ np.linalg.solve(np.eye(model.n_agents) - P, q_j))


def brute_force_select(model: NetworkModel, target: str, w, budget: int):
    """Exhaustive optimum of the ambassador problem; the greedy oracle.

    Enumerates subsets of size exactly ``budget`` and, as a monotonicity
    cross-check, all smaller sizes too; the two maxima must coincide.
    Guarded to instances with C(|A|, budget) at most one million.
    """
    require_assumption(model)
    j = model.choice_index(target)
    w = _check_endowment(model, w)
    n = model.n_agents
    if budget < 0 or budget > n:
        raise ValueError(f"budget must lie in [0, {n}], got {budget}")
    if comb(n, budget) > BRUTE_FORCE_LIMIT:
        raise ValueError(
            f"instance too large: C({n}, {budget}) exceeds {BRUTE_FORCE_LIMIT} subsets"
        )

    best_small = -np.inf
    for size in range(budget):
        for subset in combinations(range(n), size):
            best_small = max(best_small, _subset_share(model, subset, j, w))

    best_value, best_subset = -np.inf, ()
    for subset in combinations(range(n), budget):
        value = _subset_share(model, subset, j, w)
        if value > best_value:
            best_value, best_subset = value, subset

    if budget > 0 and best_small > best_value + 1e-9:
        raise AssertionError(
            "monotonicity violated: a smaller ambassador set beat every "
            f"size-{budget} set ({best_small} > {best_value})"
        )
    return frozenset(model.agents[a] for a in best_subset), float(best_value)


def optimal_ambassador_sets(model: NetworkModel, target: str, w, budget: int,
                            tol: float = 1e-9):
    """All size-``budget`` subsets within ``tol`` of the exhaustive optimum."""
    require_assumption(model)
    j = model.choice_index(target)
    w = _check_endowment(model, w)
    n = model.n_agents
    if comb(n, budget) > BRUTE_FORCE_LIMIT:
        raise ValueError("instance too large for enumeration")
    values = {
        subset: _subset_share(model, subset, j, w)
        for subset in combinations(range(n), budget)
    }
    best = max(values.values())
    sets = [
        frozenset(model.agents[a] for a in subset)
        for subset, value in values.items()
        if value >= best - tol
    ]
    return sets, float(best)


def vertex_cover_instance(edges, nodes=None) -> NetworkModel:
    """Reduction model mapping vertex covers to optimal ambassador sets.

    Agents are graph vertices; two choices exist ("alpha", the target, and
    "beta").  Every vertex puts half its mass on "beta" directly and splits
    the other half uniformly over its neighbors, so for unit endowment an
    ambassador set of size K covering all edges attains share (n + K) / 2,
    and only vertex covers attain it.  Vertices listed in ``nodes`` without
    any incident edge select "beta" outright.
    """
    normalized = []
    seen = set()
    vertices: list[str] = []

    def note(v: str) -> None:
        if v not in seen:
            seen.add(v)
            vertices.append(v)

    if nodes is not None:
        for v in nodes:
            note(str(v))
    for edge in edges:
        if len(edge) != 2:
            raise ModelFormatError(f"edge {edge!r} must have exactly two endpoints")
        a, b = str(edge[0]), str(edge[1])
        if a == b:
            raise ModelFormatError(f"self-loop at {a!r} is not a simple-graph edge")
        note(a)
        note(b)
        key = (a, b) if a <= b else (b, a)
        if key in normalized:
            raise ModelFormatError(f"duplicate edge {key!r}")
        normalized.append(key)
    if not vertices:
        raise ModelFormatError("graph has no vertices")

    index = {v: i for i, v in enumerate(vertices)}
    n = len(vertices)
    degree = np.zeros(n, dtype=int)
    for a, b in normalized:
        degree[index[a]] += 1
        degree[index[b]] += 1

    adoption = np.zeros((n, n))
    for a, b in normalized:
        i, k = index[a], index[b]
        adoption[i, k] = 1.0 / (2.0 * degree[i])
        adoption[k, i] = 1.0 / (2.0 * degree[k])
    direct = np.zeros((n, 2))
    direct[:, 1] = np.where(degree > 0, 0.5, 1.0)
    return NetworkModel(tuple(vertices), ("alpha", "beta"), adoption, direct, np.ones(n))
