"""Closed-form choice probabilities, shares, centrality, and decision shares.

Everything here rests on one linear system: with adoption matrix P and
direct-selection matrix Q, the steady-state probability matrix solves
(I - P) pi = Q.  Aggregates follow from the same factorization: the
endowment-weighted centrality c = w^T (I - P)^{-1}, choice shares c @ Q,
and decision shares c * rowsum(Q).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from .errors import ConvergenceError
from .model import NetworkModel, require_assumption

JACOBI_RESIDUAL_RTOL = 1e-12
_JACOBI_MAX_SWEEPS = 200_000

# Qualitative sensitivity flag: when every agent is nearly indecisive the
# spectral radius of P approaches 1 and the solve amplifies input noise.
ILL_CONDITIONED_DECISIVENESS = 1e-3


@dataclass(frozen=True)
class ChoiceSolution:
    """Full closed-form solution for one model and endowment."""

    pi: np.ndarray
    centrality: np.ndarray
    decisiveness: np.ndarray
    decision_shares: np.ndarray
    choice_shares: np.ndarray
    ill_conditioned: bool
    solver: str


@dataclass(frozen=True)
class LearningLimit:
    """Fixed point of the belief-averaging iteration for one choice."""

    values: np.ndarray
    iterations: int
    indecisive_agents: tuple[str, ...]


def _check_endowment(model: NetworkModel, w) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    if w.shape != (model.n_agents,):
        raise ValueError(f"endowment must have length {model.n_agents}, got shape {w.shape}")
    if np.any(w < 0.0):
        raise ValueError("endowment weights must be non-negative")
    return w


def _jacobi_columns(P: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Solve (I - P) X = B by Jacobi sweeps X <- B + P X.

    The diagonal of I - P is identically one (no self-adoption), so each
    sweep is exactly the fixed-point map; it contracts because the spectral
    radius of P is below one under collective decisiveness.  Stops on
    relative residual.
    """
    X = B.copy()
    scale = max(1.0, float(np.max(np.abs(B))))
    for sweep in range(_JACOBI_MAX_SWEEPS):
        residual = B + P @ X - X
        if float(np.max(np.abs(residual))) <= JACOBI_RESIDUAL_RTOL * scale:
            return X
        X = X + residual
    raise ConvergenceError(f"Jacobi sweeps did not reach residual tolerance in {_JACOBI_MAX_SWEEPS} sweeps")


def solve_choice_matrix(model: NetworkModel, solver: str = "dense",
                        w: np.ndarray | None = None) -> ChoiceSolution:
    """Solve for the full probability matrix and endowment aggregates.

    ``solver="dense"`` factorizes I - P once (LU) and reuses the factors for
    every choice column and for the transposed centrality solve.
    ``solver="iterative"`` runs Jacobi sweeps to relative residual 1e-12;
    the iteration matrix is valid because I - P is strictly diagonally
    dominant wherever agents keep any direct-selection mass and the spectral
    radius of P is below one under collective decisiveness.
    """
    require_assumption(model)
    if w is None:
        w = model.endowment
    w = _check_endowment(model, w)
    P, Q = model.adoption, model.direct
    A = np.eye(model.n_agents) - P
    if solver == "dense":
        factors = lu_factor(A)
        pi = lu_solve(factors, Q)
        centrality = lu_solve(factors, w, trans=1)
    elif solver == "iterative":
        pi = _jacobi_columns(P, Q)
        centrality = _jacobi_columns(P.T, w[:, None])[:, 0]
    else:
        raise ValueError(f"unknown solver {solver!r}; expected 'dense' or 'iterative'")
    qbar = model.decisiveness
    return ChoiceSolution(
        pi=pi,
        centrality=centrality,
        decisiveness=qbar,
        decision_shares=centrality * qbar,
        choice_shares=w @ pi,
        ill_conditioned=bool(np.max(1.0 - qbar) > 1.0 - ILL_CONDITIONED_DECISIVENESS),
        solver=solver,
    )


def choice_shares(model: NetworkModel, w) -> np.ndarray:
    """Expected endowment allocated to each choice, ``w^T (I - P)^{-1} Q``."""
    require_assumption(model)
    w = _check_endowment(model, w)
    A = np.eye(model.n_agents) - model.adoption
    centrality = np.linalg.solve(A.T, w)
    return centrality @ model.direct


def decision_shares(model: NetworkModel, w) -> np.ndarray:
    """Expected endowment whose ultimate selection each agent makes.

    The share of agent i is its weighted centrality ``[w^T (I - P)^{-1}]_i``
    times its decisiveness (the probability it selects without adopting).
    """
    require_assumption(model)
    w = _check_endowment(model, w)
    A = np.eye(model.n_agents) - model.adoption
    centrality = np.linalg.solve(A.T, w)
    return centrality * model.decisiveness


def hub_asymptotic_ratio(rho_f: float, rho_h: float) -> float:
    """Large-network limit of hub decision share over total endowment.

    In a fully connected network where every agent additionally leans on one
    hub, the hub's decision share approaches this fraction of the total
    endowment as the population grows:  ``1 / (1/rho_h - rho_f/(1-rho_f))``.
    ``rho_f`` is the total mass spread uniformly over peers, ``rho_h`` the
    extra mass on the hub.
    """
    if not (0.0 <= rho_f < 1.0):
        raise ValueError("rho_f must lie in [0, 1)")
    if not (0.0 < rho_h <= 1.0):
        raise ValueError("rho_h must lie in (0, 1]")
    if rho_f + rho_h > 1.0:
        raise ValueError("rho_f + rho_h must not exceed 1")
    return 1.0 / (1.0 / rho_h - rho_f / (1.0 - rho_f))


def mixture_choice_share(model: NetworkModel, w, measures, subset) -> float:
    """Choice share of an arbitrary measurable subset of a general choice space.

    With per-agent preference measures replacing the finite direct-selection
    rows, the share of a subset S is the decision-share-weighted mixture
    ``sum_i delta_i * mu_i(S)``.  ``measures`` is one evaluator per agent in
    declaration order; each must return a probability in [0, 1].
    """
    measures = list(measures)
    if len(measures) != model.n_agents:
        raise ValueError(f"expected {model.n_agents} measure evaluators, got {len(measures)}")
    delta = decision_shares(model, w)
    total = 0.0
    for i, evaluate in enumerate(measures):
        value = float(evaluate(subset))
        if not (0.0 <= value <= 1.0) or not np.isfinite(value):
            raise ValueError(
                f"measure for agent {model.agents[i]!r} returned {value!r}, outside [0, 1]"
            )
        total += delta[i] * value
    return total


def linear_learning_limit(model: NetworkModel, choice: str, tol: float = 1e-12,
                          max_iter: int = 1_000_000) -> LearningLimit:
    """Belief-averaging fixed point reproducing one column of the choice matrix.

    Runs the averaging process x <- D V x + (I - D) x0 where V is the
    row-normalized adoption matrix, D holds each agent's total adoption mass
    alpha_i, and x0_i = q_ij / (1 - alpha_i) is the agent's personal
    probability of the target choice.  The limit equals column j of the
    closed-form solve.  Agents with alpha_i = 1 have no personal probability;
    they take x0_i = 0 and are reported in ``indecisive_agents`` (their
    initial value never enters the fixed point because 1 - alpha_i = 0).
    """
    require_assumption(model)
    j = model.choice_index(choice)
    P = model.adoption
    alpha = P.sum(axis=1)
    fully_indecisive = alpha >= 1.0 - 1e-15
    V = np.zeros_like(P)
    active = alpha > 0.0
    V[active] = P[active] / alpha[active, None]
    x0 = np.zeros(model.n_agents)
    ok = ~fully_indecisive
    x0[ok] = model.direct[ok, j] / (1.0 - alpha[ok])
    drive = (1.0 - alpha) * x0

    # Contraction factor of the map is max alpha_i; convert the per-step
    # change into a bound on the distance to the fixed point where possible.
    rho = float(alpha.max(initial=0.0))
    if rho < 1.0 and rho > 0.0:
        step_tol = tol * (1.0 - rho) / rho
    elif rho == 0.0:
        step_tol = tol
    else:
        step_tol = tol * 1e-2
    x = x0.copy()
    x[fully_indecisive] = 0.0
    for iteration in range(1, max_iter + 1):
        x_next = alpha * (V @ x) + drive
        change = float(np.max(np.abs(x_next - x)))
        x = x_next
        if change <= step_tol:
            return LearningLimit(
                values=x,
                iterations=iteration,
                indecisive_agents=tuple(
                    model.agents[i] for i in np.nonzero(fully_indecisive)[0]
                ),
            )
    raise ConvergenceError(f"belief averaging did not converge within {max_iter} iterations")
