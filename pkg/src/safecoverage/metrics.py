"""Regret and coverage accounting against ground truth."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .coverage import CoverageAssignment, brute_force_optimal, greedy_ucb
from .domain import GridDomain, SetLike, as_mask, disk_matrix
from .environments import EnvironmentTruth
from .safesets import compute_batches, true_reachable_set

GREEDY_FACTOR = 1.0 - 1.0 / math.e


@dataclass(frozen=True)
class RegretRecord:
    round: int
    simple_actual_regret: float
    per_agent_regret: float
    cumulative_actual_regret: float
    cumulative_per_agent_regret: float
    coverage_true: float
    samples_rho: int
    samples_q: int


def _counts(entry) -> tuple[int, int]:
    if hasattr(entry, "rho_observations"):
        return len(entry.rho_observations), len(entry.q_observations)
    return len(entry.observations), 0


def _gains(density: np.ndarray, m, placements: Sequence[int], n_cells: int) -> tuple[float, float, float]:
    """Realized and best-possible marginal gains of agents in order, plus the total value."""
    covered = np.zeros(n_cells, dtype=bool)
    realized = best = 0.0
    for x in placements:
        free = np.where(covered, 0.0, density)
        best += float((m @ free).max())
        row = m.indices[m.indptr[x]:m.indptr[x + 1]]
        realized += float(free[row].sum())
        covered[row] = True
    return realized / n_cells, best / n_cells, realized / n_cells


def _records(rows) -> list[RegretRecord]:
    out = []
    cum_act = cum_loc = 0.0
    n_rho = n_q = 0
    for rnd, act, loc, cov, d_rho, d_q in rows:
        cum_act += act
        cum_loc += loc
        n_rho += d_rho
        n_q += d_q
        out.append(RegretRecord(rnd, act, loc, cum_act, cum_loc, cov, n_rho, n_q))
    return out


def unconstrained_regret(history: Sequence, env: EnvironmentTruth, oracle_opt: CoverageAssignment, r: int,
                         path_restricted: bool = True) -> list[RegretRecord]:
    """Per-round ``(1 - 1/e) F(X*) - F(X_t)`` and per-agent regret, with prefix sums.

    ``oracle_opt.total_value`` must be the true-density value of the benchmark.
    Sample counts are cumulative and include the round's own measurements.
    """
    domain = env.domain
    density = np.asarray(env.density, dtype=float)
    m = disk_matrix(domain, r, None, path_restricted)
    rows = []
    for h in history:
        realized, best, value = _gains(density, m, h.placements.placements, domain.n)
        rows.append((h.round, GREEDY_FACTOR * oracle_opt.total_value - value, best - realized, value,
                     *_counts(h)))
    return _records(rows)


@dataclass(frozen=True)
class ReachableOptimum:
    """Benchmark per true batch: agents, their reachable set and the optimal placement value."""

    batches: tuple[tuple[int, ...], ...]
    regions: tuple[np.ndarray, ...]
    values: tuple[float, ...]
    exact: bool

    @property
    def total(self) -> float:
        return float(sum(self.values))


def reachable_sets(env: EnvironmentTruth, eps: float, lipschitz: float | None = None) -> list[np.ndarray]:
    lip = env.lipschitz_q if lipschitz is None else lipschitz
    return [true_reachable_set(env.constraint, env.domain, [s], eps, lip) for s in env.seeds]


def reachable_optimum(env: EnvironmentTruth, r: int, eps: float, lipschitz: float | None = None,
                      exact: bool = True, path_restricted: bool = True) -> ReachableOptimum:
    """Optimal coverage of each true batch inside its ``eps``-reachable region.

    With ``exact=False`` the per-batch optimum is replaced by greedy on the
    true density, which is a lower bound on it.
    """
    sets = reachable_sets(env, eps, lipschitz)
    batches = compute_batches(sets)
    values = []
    for members, region in zip(batches.batches, batches.unions):
        if exact:
            values.append(brute_force_optimal(env.density, env.domain, len(members), r, region,
                                              path_restricted).total_value)
        else:
            values.append(greedy_ucb(env.density, env.density, env.domain, len(members), r, region,
                                     path_restricted=path_restricted).assignment.total_value)
    return ReachableOptimum(batches.batches, batches.unions, tuple(values), exact)


def _union_batches(entry, n_agents: int):
    unions = [p | o for p, o in zip(entry.pessimistic, entry.optimistic)]
    return compute_batches(unions) if len(unions) == n_agents else None


def constrained_regret(history: Sequence, env: EnvironmentTruth, reachable_opt: ReachableOptimum, r: int,
                       eval_set: SetLike | None = None, path_restricted: bool = True) -> list[RegretRecord]:
    """Simple regret against the reachable benchmark with marginal gains taken inside each union set.

    ``coverage_true`` is the placement value over ``eval_set`` (all cells by
    default); placements outside it contribute nothing.
    """
    domain = env.domain
    n = len(env.seeds)
    agents = sorted(a for b in reachable_opt.batches for a in b)
    if agents != list(range(n)):
        raise ValueError(f"oracle batches cover agents {agents}, run has {n}")
    density = np.asarray(env.density, dtype=float)
    evaluation = as_mask(domain, eval_set)
    benchmark = GREEDY_FACTOR * reachable_opt.total
    rows = []
    for h in history:
        batches = _union_batches(h, n)
        if batches is None:
            raise ValueError(f"round {h.round} logs {len(h.pessimistic)} agents, oracle has {n}")
        placed = dict(zip(h.placements.agent_ids, h.placements.placements))
        realized = best = 0.0
        for members, arena in zip(batches.batches, batches.unions):
            m = disk_matrix(domain, r, arena, path_restricted)
            xs = [placed[a] for a in sorted(members, key=h.placements.agent_ids.index)]
            got, top, _ = _gains(density, m, xs, domain.n)
            realized += got
            best += top
        cov = coverage_on(density, domain, list(placed.values()), r, evaluation, path_restricted)
        rows.append((h.round, benchmark - realized, best - realized, cov, *_counts(h)))
    return _records(rows)


def coverage_on(density: np.ndarray, domain: GridDomain, placements: Sequence[int], r: int,
                region: SetLike | None = None, path_restricted: bool = True) -> float:
    """``F(X; rho; region)`` where placements outside ``region`` cover nothing."""
    allowed = as_mask(domain, region)
    m = disk_matrix(domain, r, allowed, path_restricted)
    covered = np.zeros(domain.n, dtype=bool)
    for x in placements:
        covered[m.indices[m.indptr[x]:m.indptr[x + 1]]] = True
    return float(np.asarray(density, dtype=float)[covered].sum() / domain.n)


def normalized_coverage(placements: Sequence[int], env: EnvironmentTruth, r: int,
                        reachable: np.ndarray | None = None, path_restricted: bool = True) -> float | None:
    """Coverage over the zero-margin reachable region divided by that region's mass.

    Returns None when the region carries no density.
    """
    if reachable is None:
        reachable = np.logical_or.reduce(reachable_sets(env, 0.0))
    mass = float(np.asarray(env.density, dtype=float)[reachable].sum() / env.domain.n)
    if mass <= 0:
        return None
    return coverage_on(env.density, env.domain, placements, r, reachable, path_restricted) / mass
