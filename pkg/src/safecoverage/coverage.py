"""Disk-coverage objective, greedy maximization on upper bounds, exhaustive oracle."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .domain import GridDomain, InconsistentAssignmentError, SetLike, as_mask, disk_matrix

BRUTE_FORCE_LIMIT = 10 ** 7


@dataclass(frozen=True)
class CoverageAssignment:
    """Agent placements with their disjoint effective regions.

    ``effective_regions[k]`` is the part of agent ``agent_ids[k]``'s disk not
    already covered by the agents before it.
    """

    agent_ids: tuple[int, ...]
    placements: tuple[int, ...]
    effective_regions: tuple[np.ndarray, ...]
    total_value: float
    duplicates: tuple[int, ...] = field(default=())

    @property
    def covered(self) -> np.ndarray:
        if not self.effective_regions:
            raise ValueError("empty assignment has no covered mask")
        return np.logical_or.reduce(self.effective_regions)

    def region_of(self, agent: int) -> np.ndarray:
        return self.effective_regions[self.agent_ids.index(agent)]

    def placement_of(self, agent: int) -> int:
        return self.placements[self.agent_ids.index(agent)]


def _check_placements(placements, allowed):
    for x in placements:
        if not allowed[int(x)]:
            raise InconsistentAssignmentError(f"placement {x} lies outside the restriction set")


def effective_regions(domain: GridDomain, placements: Sequence[int], r: int,
                      restrict: SetLike | None = None, path_restricted: bool = True) -> list[np.ndarray]:
    allowed = as_mask(domain, restrict)
    _check_placements(placements, allowed)
    m = disk_matrix(domain, r, allowed, path_restricted)
    covered = np.zeros(domain.n, dtype=bool)
    regions = []
    for x in placements:
        row = np.zeros(domain.n, dtype=bool)
        row[m.indices[m.indptr[x]:m.indptr[x + 1]]] = True
        regions.append(row & ~covered)
        covered |= row
    return regions


def coverage_value(density: np.ndarray, domain: GridDomain, placements: Sequence[int], r: int,
                   restrict: SetLike | None = None, path_restricted: bool = True) -> float:
    """Sum of density over the disjointified disks, divided by the domain size.

    Sums are correctly rounded (``math.fsum``) so that, for non-negative
    densities, monotonicity and diminishing returns hold exactly in floating
    point and not just up to summation-order noise.
    """
    regions = effective_regions(domain, placements, r, restrict, path_restricted)
    covered = np.logical_or.reduce(regions) if regions else np.zeros(domain.n, dtype=bool)
    return math.fsum(np.asarray(density, dtype=float)[covered]) / domain.n


def marginal_gain(density: np.ndarray, domain: GridDomain, existing: Sequence[int], candidate: int, r: int,
                  restrict: SetLike | None = None, path_restricted: bool = True) -> float:
    regions = effective_regions(domain, list(existing) + [candidate], r, restrict, path_restricted)
    return math.fsum(np.asarray(density, dtype=float)[regions[-1]]) / domain.n


def make_assignment(density: np.ndarray, domain: GridDomain, placements: Sequence[int], r: int,
                    restrict: SetLike | None = None, agent_ids: Sequence[int] | None = None,
                    path_restricted: bool = True) -> CoverageAssignment:
    regions = effective_regions(domain, placements, r, restrict, path_restricted)
    density = np.asarray(density, dtype=float)
    ids = tuple(range(len(placements))) if agent_ids is None else tuple(int(a) for a in agent_ids)
    total = float(sum(density[reg].sum() for reg in regions) / domain.n)
    dups = tuple(a for a, reg in zip(ids, regions) if not reg.any())
    return CoverageAssignment(ids, tuple(int(x) for x in placements), tuple(regions), total, dups)


def argmax_in(values: np.ndarray, mask: np.ndarray) -> int | None:
    """Index of the largest value inside ``mask``; lowest index wins ties."""
    idx = np.flatnonzero(mask)
    if idx.size == 0:
        return None
    return int(idx[np.argmax(values[idx])])


@dataclass(frozen=True)
class GreedyResult:
    assignment: CoverageAssignment
    sum_max_width: float
    goals: tuple[int, ...]


def greedy_ucb(upper: np.ndarray, lower: np.ndarray, domain: GridDomain, n_agents: int, r: int,
               restrict: SetLike | None = None, agent_ids: Sequence[int] | None = None,
               path_restricted: bool = True) -> GreedyResult:
    """Place agents one at a time on the disk maximizing the upper-bound mass.

    Each agent's sampling goal is the widest cell of its effective region;
    agents whose region is empty are flagged as duplicates and get their own
    location as goal.
    """
    allowed = as_mask(domain, restrict)
    if not allowed.any():
        raise ValueError("restriction set is empty")
    upper = np.asarray(upper, dtype=float)
    width = upper - np.asarray(lower, dtype=float)
    m = disk_matrix(domain, r, allowed, path_restricted)
    ids = tuple(range(n_agents)) if agent_ids is None else tuple(int(a) for a in agent_ids)
    if len(ids) != n_agents:
        raise ValueError("agent_ids must have n_agents entries")

    covered = np.zeros(domain.n, dtype=bool)
    placements, regions, goals = [], [], []
    total = 0.0
    gamma = 0.0
    outside = ~allowed
    for _ in range(n_agents):
        gains = m @ np.where(covered, 0.0, upper)
        gains[outside] = -np.inf
        x = int(np.argmax(gains))
        row = np.zeros(domain.n, dtype=bool)
        row[m.indices[m.indptr[x]:m.indptr[x + 1]]] = True
        region = row & ~covered
        covered |= row
        goal = argmax_in(width, region)
        if goal is None:
            goal = x
        placements.append(x)
        regions.append(region)
        goals.append(goal)
        total += upper[region].sum()
        gamma += width[goal]
    dups = tuple(a for a, reg in zip(ids, regions) if not reg.any())
    assignment = CoverageAssignment(ids, tuple(placements), tuple(regions), float(total / domain.n), dups)
    return GreedyResult(assignment, float(gamma), tuple(goals))


def brute_force_optimal(density: np.ndarray, domain: GridDomain, n_agents: int, r: int,
                        restrict: SetLike | None = None, path_restricted: bool = True,
                        limit: int = BRUTE_FORCE_LIMIT) -> CoverageAssignment:
    """Exact maximizer by enumerating unordered placements inside ``restrict``."""
    allowed = as_mask(domain, restrict)
    cells = np.flatnonzero(allowed)
    if cells.size == 0:
        raise ValueError("restriction set is empty")
    if float(cells.size) ** n_agents > limit:
        raise ValueError(f"instance too large for enumeration: {cells.size}^{n_agents} > {limit}")
    density = np.asarray(density, dtype=float)
    m = disk_matrix(domain, r, allowed, path_restricted)[cells].toarray().astype(bool)
    if cells.size >= n_agents:
        combos = itertools.combinations(range(cells.size), n_agents)
    else:
        combos = itertools.combinations_with_replacement(range(cells.size), n_agents)

    best_val, best = -math.inf, None
    chunk = 20000
    while True:
        block = np.array(list(itertools.islice(combos, chunk)), dtype=np.int64)
        if block.size == 0:
            break
        union = m[block[:, 0]].copy()
        for j in range(1, n_agents):
            union |= m[block[:, j]]
        vals = union @ density
        k = int(np.argmax(vals))
        if vals[k] > best_val:
            best_val, best = vals[k], block[k]
    placements = [int(cells[i]) for i in best]
    return make_assignment(density, domain, placements, r, allowed, path_restricted=path_restricted)
