"""Largest-herd statistics under proportional preferential attachment.

When indecisive agents adopt uniformly, the agents that ultimately trace
their choice to one decisive agent form a herd, and conditional on the number
of decisive agents the herd sizes grow by a classic unit-feedback urn.  This
module carries the closed-form limit moments of the largest herd fraction,
a direct urn simulator, and a truncated-moment pipeline for expectations of
polynomial functions of that fraction.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from math import factorial, sqrt

import numpy as np

_CROSS_CHECK_TOL = 1e-12


@dataclass(frozen=True)
class HerdMomentTable:
    """Limit moments of the largest-herd fraction, indexed by (d, m).

    ``d`` is the decisive-agent count, ``m`` the moment order; base cases
    are moment one at d = 1 and order zero everywhere.
    """

    d_max: int
    m_max: int
    values: dict[tuple[int, int], float]

    def moment(self, d: int, m: int) -> float:
        if d < 1 or m < 0:
            raise ValueError(f"moment index ({d}, {m}) out of range")
        if m == 0:
            return 1.0
        if d == 1:
            return 1.0
        try:
            return self.values[(d, m)]
        except KeyError:
            raise ValueError(
                f"moment ({d}, {m}) outside the computed grid "
                f"d<={self.d_max}, m<={self.m_max}"
            ) from None


@dataclass(frozen=True)
class UrnSummary:
    bins: int
    total: int
    trials: int
    mean_max_fraction: float
    quantiles: dict[float, float]


def expected_max_herd_fraction(d: int) -> float:
    """Limit expected fraction of agents in the largest herd, H_d / d."""
    if d < 1:
        raise ValueError("decisive count must be at least 1")
    return sum(1.0 / k for k in range(1, d + 1)) / d


def _two_term(values, d: int, m: int) -> float:
    return (d - 1) / (m + d - 1) * values[(d - 1, m)] \
        + m / (d * (m + d - 1)) * values[(d, m - 1)]


def _downward_sum(values, d: int, m: int) -> float:
    total = 0.0
    for k in range(0, m + 1):
        coefficient = (
            (d - 1)
            * Fraction(factorial(m), factorial(m - k))
            * Fraction(factorial(m + d - k - 2), factorial(m + d - 1))
            / d**k
        )
        total += float(coefficient) * values[(d - 1, m - k)]
    return total


def _order_reduction_sum(values, d: int, m: int) -> float:
    total = 0.0
    for j in range(1, d + 1):
        coefficient = (
            Fraction(m, m + d - 1)
            * Fraction(factorial(d - 1), factorial(j))
            * Fraction(factorial(m + j - 2), factorial(m + d - 2))
        )
        total += float(coefficient) * values[(j, m - 1)]
    return total


def herd_moments(d_max: int, m_max: int) -> HerdMomentTable:
    """Fill the moment table and cross-validate the three recurrences.

    The table is built from the two-term recurrence; every entry is then
    recomputed from the downward summation over the previous decisive count
    and from the order-reduction summation, and all three must agree to
    1e-12.
    """
    if d_max < 1 or m_max < 1:
        raise ValueError("table dimensions must be at least 1")
    values: dict[tuple[int, int], float] = {}
    for d in range(1, d_max + 1):
        values[(d, 0)] = 1.0
    for m in range(0, m_max + 1):
        values[(1, m)] = 1.0
    for d in range(2, d_max + 1):
        for m in range(1, m_max + 1):
            values[(d, m)] = _two_term(values, d, m)
    for d in range(2, d_max + 1):
        for m in range(1, m_max + 1):
            reference = values[(d, m)]
            for other in (_downward_sum(values, d, m), _order_reduction_sum(values, d, m)):
                if abs(other - reference) > _CROSS_CHECK_TOL:
                    raise AssertionError(
                        f"moment recurrences disagree at (d={d}, m={m}): "
                        f"{reference} vs {other}"
                    )
    return HerdMomentTable(d_max=d_max, m_max=m_max, values=values)


def simulate_urn(d: int, total: int, trials: int, seed: int) -> UrnSummary:
    """Simulate the unit-feedback urn and summarize the largest-bin fraction.

    Starts ``d`` bins with one ball each and adds ``total - d`` balls
    sequentially, each to a bin with probability proportional to its count.
    Trials run on a vectorized common step schedule but use independent draws;
    results are reproducible per seed.
    """
    if not (1 <= d <= total):
        raise ValueError("need 1 <= bins <= total agents")
    if trials < 1:
        raise ValueError("trial count must be at least 1")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    counts = np.ones((trials, d))
    for balls_so_far in range(d, total):
        u = rng.random(trials) * balls_so_far
        cumulative = np.cumsum(counts, axis=1)
        chosen = (u[:, None] < cumulative).argmax(axis=1)
        counts[np.arange(trials), chosen] += 1.0
    fractions = counts.max(axis=1) / total
    levels = (0.05, 0.2, 0.8, 0.95)
    quantiles = {q: float(np.quantile(fractions, q)) for q in levels}
    return UrnSummary(
        bins=d,
        total=total,
        trials=trials,
        mean_max_fraction=float(fractions.mean()),
        quantiles=quantiles,
    )


def expected_smooth_function(population: int, gamma: float, coefficients,
                             m_max: int) -> float:
    """Approximate E[f(largest-herd fraction)] for a polynomial f.

    The decisive count is binomial over the population with per-agent
    probability ``gamma``; it is approximated by the matching normal law,
    discretized on the integers within four standard deviations (clamped to
    [1, population]).  Conditional on the count, E[f] is the exact truncated
    moment series, so the only approximation is the binomial one.
    """
    if population < 1:
        raise ValueError("population must be at least 1")
    if not (0.0 < gamma < 1.0):
        raise ValueError("decisiveness probability must lie in (0, 1)")
    coefficients = [float(a) for a in coefficients]
    degree = len(coefficients) - 1
    if degree > m_max:
        raise ValueError(
            f"polynomial degree {degree} exceeds the moment truncation {m_max}"
        )

    mean = population * gamma
    std = sqrt(population * gamma * (1.0 - gamma))
    lo = max(1, int(np.ceil(mean - 4.0 * std)))
    hi = min(population, int(np.floor(mean + 4.0 * std)))
    center = min(population, max(1, int(round(mean))))
    lo, hi = min(lo, center), max(hi, center)

    table = herd_moments(hi, max(1, m_max))
    grid = np.arange(lo, hi + 1)
    weights = np.exp(-0.5 * ((grid - mean) / std) ** 2)
    weights /= weights.sum()

    value = 0.0
    for d, weight in zip(grid, weights):
        conditional = sum(
            a * table.moment(int(d), m) for m, a in enumerate(coefficients)
        )
        value += weight * conditional
    return value
