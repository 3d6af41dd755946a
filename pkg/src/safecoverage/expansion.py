"""Goal-directed safe expansion: pick the constraint measurement that best pushes the
pessimistic set toward a goal."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .domain import GridDomain, SetLike, as_mask, hop_distance
from .gp import ConfidenceBounds
from .safesets import SafetyParams, pessimistic_operator


def inverse_distance_heuristic(domain: GridDomain, candidates: SetLike, goals: SetLike) -> np.ndarray:
    """``1 / (1 + hops to the nearest goal)`` on candidates, ``-inf`` elsewhere.

    Unreachable candidates score 0. Scores of equal hop distance are equal
    floats, so they form the priority levels directly.
    """
    goals = as_mask(domain, goals)
    if not goals.any():
        raise ValueError("goals must be non-empty")
    cand = as_mask(domain, candidates)
    hops = hop_distance(domain, goals)
    h = np.full(domain.n, -np.inf)
    h[cand] = 1.0 / (1.0 + hops[cand])
    return h


@dataclass(frozen=True)
class ExpansionSets:
    priority: np.ndarray         # heuristic score on A, -inf elsewhere
    uncertain: np.ndarray        # W: pessimistic cells wider than eps_q
    level: float | None          # alpha*
    expanders: np.ndarray        # G(alpha*)


def expansion_sets(pessimistic: SetLike, optimistic: SetLike, bounds: ConfidenceBounds, domain: GridDomain,
                   goals: SetLike, params: SafetyParams,
                   heuristic: Callable = inverse_distance_heuristic) -> ExpansionSets:
    pess = as_mask(domain, pessimistic)
    opt = as_mask(domain, optimistic)
    frontier = opt & ~pessimistic_operator(bounds, domain, pess, params)
    priority = heuristic(domain, frontier, goals) if frontier.any() else np.full(domain.n, -np.inf)
    uncertain = pess & (bounds.upper - bounds.lower > params.eps_q)
    empty = np.zeros(domain.n, dtype=bool)
    w = np.flatnonzero(uncertain)
    if w.size == 0 or not frontier.any():
        return ExpansionSets(priority, uncertain, None, empty)
    levels = np.unique(priority[frontier])[::-1]
    for alpha in levels:
        a = np.flatnonzero(frontier & (priority == alpha))
        nearest = domain.distances[np.ix_(w, a)].min(axis=1)
        hit = bounds.upper[w] - params.lipschitz * nearest >= 0
        if hit.any():
            g = empty.copy()
            g[w[hit]] = True
            return ExpansionSets(priority, uncertain, float(alpha), g)
    return ExpansionSets(priority, uncertain, None, empty)


def safe_expansion_step(pessimistic: SetLike, optimistic: SetLike, bounds: ConfidenceBounds, domain: GridDomain,
                        goals: SetLike, params: SafetyParams,
                        heuristic: Callable = inverse_distance_heuristic) -> int | None:
    """Location for the next constraint measurement, or None if no expander exists."""
    sets = expansion_sets(pessimistic, optimistic, bounds, domain, goals, params, heuristic)
    if sets.level is None:
        return None
    g = np.flatnonzero(sets.expanders)
    widths = bounds.upper[g] - bounds.lower[g]
    return int(g[np.argmax(widths)])
