"""Pessimistic/optimistic constraint operators, ergodic expansion and agent batching."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .domain import GridDomain, SetLike, as_mask
from .gp import ConfidenceBounds


@dataclass(frozen=True)
class SafetyParams:
    lipschitz: float
    eps_q: float = 0.1

    def __post_init__(self):
        if not self.lipschitz > 0:
            raise ValueError("lipschitz must be positive")
        if self.eps_q < 0:
            raise ValueError("eps_q must be non-negative")


def _certified(values: np.ndarray, base: np.ndarray, domain: GridDomain, lipschitz: float) -> np.ndarray:
    """Best margin ``max_{z in base} values[z] - L d(v, z)`` for every v."""
    z = np.flatnonzero(base)
    if z.size == 0:
        return np.full(domain.n, -np.inf)
    return (values[z][:, None] - lipschitz * domain.distances[z]).max(axis=0)


def pessimistic_operator(bounds: ConfidenceBounds, domain: GridDomain, base: SetLike,
                         params: SafetyParams) -> np.ndarray:
    base = as_mask(domain, base)
    return _certified(bounds.lower, base, domain, params.lipschitz) >= 0


def optimistic_operator(bounds: ConfidenceBounds, domain: GridDomain, base: SetLike,
                        params: SafetyParams) -> np.ndarray:
    base = as_mask(domain, base)
    return _certified(bounds.upper - params.eps_q, base, domain, params.lipschitz) >= 0


def _expand(values: np.ndarray, domain: GridDomain, seed: np.ndarray, lipschitz: float) -> np.ndarray:
    current = seed.copy()
    best = _certified(values, current, domain, lipschitz)
    dist = domain.distances
    adj = domain.adjacency
    for _ in range(domain.n + 1):
        touching = (adj @ current.astype(np.int32)) > 0
        frontier = touching & ~current & (best >= 0)
        if not frontier.any():
            return current
        current |= frontier
        z = np.flatnonzero(frontier)
        best = np.maximum(best, (values[z][:, None] - lipschitz * dist[z]).max(axis=0))
    raise AssertionError("expansion did not reach a fixed point within |V| sweeps")


def ergodic_expand(kind: str, bounds: ConfidenceBounds, domain: GridDomain, seed: SetLike,
                   params: SafetyParams) -> np.ndarray:
    """Grow ``seed`` by cells the operator certifies and that connect to it.

    Returns the least set containing ``seed`` that is closed under adding
    certified neighbors; on an undirected graph reach-and-return reduces to
    connectivity through the set itself.
    """
    seed = as_mask(domain, seed)
    if not seed.any():
        raise ValueError("seed must be non-empty")
    if kind == "pessimistic":
        values = bounds.lower
    elif kind == "optimistic":
        values = bounds.upper - params.eps_q
    else:
        raise ValueError(f"unknown operator kind {kind!r}")
    return _expand(np.asarray(values, float), domain, seed, params.lipschitz)


class UnsafeSeedError(ValueError):
    pass


def true_reachable_set(q: np.ndarray, domain: GridDomain, seed: SetLike, eps: float,
                       lipschitz: float) -> np.ndarray:
    """Largest set reachable from ``seed`` under the true constraint with margin ``eps``.

    Computed by synchronous sweeps ``S <- S u (safe(S) n one_step(S))`` until
    nothing changes; kept deliberately separate from :func:`ergodic_expand`.
    """
    q = np.asarray(q, dtype=float)
    current = as_mask(domain, seed)
    if not current.any():
        raise ValueError("seed must be non-empty")
    if np.any(q[current] < 0):
        raise UnsafeSeedError("seed contains a location with q < 0")
    while True:
        z = np.flatnonzero(current)
        safe = ((q[z][:, None] - eps - lipschitz * domain.distances[z]) >= 0).any(axis=0)
        one_step = current | (domain.adjacency[z].sum(axis=0).A1 > 0)
        nxt = current | (safe & one_step)
        if np.array_equal(nxt, current):
            return current
        current = nxt


@dataclass(frozen=True)
class SafeSetState:
    pessimistic: tuple[np.ndarray, ...]
    optimistic: tuple[np.ndarray, ...]

    @property
    def n_agents(self) -> int:
        return len(self.pessimistic)

    @property
    def union(self) -> tuple[np.ndarray, ...]:
        return tuple(p | o for p, o in zip(self.pessimistic, self.optimistic))

    def uncertain(self, i: int) -> np.ndarray:
        return self.optimistic[i] & ~self.pessimistic[i]


def initial_safe_sets(domain: GridDomain, seeds: Sequence[int]) -> SafeSetState:
    pess = tuple(as_mask(domain, [s]) for s in seeds)
    opt = tuple(domain.full() for _ in seeds)
    return SafeSetState(pess, opt)


def update_safe_sets(state: SafeSetState, bounds: ConfidenceBounds, domain: GridDomain,
                     params: SafetyParams) -> SafeSetState:
    """Expand every agent's sets from its previous pessimistic set."""
    pess, opt = [], []
    for p_prev in state.pessimistic:
        pess.append(ergodic_expand("pessimistic", bounds, domain, p_prev, params))
        opt.append(ergodic_expand("optimistic", bounds, domain, p_prev, params))
    return SafeSetState(tuple(pess), tuple(opt))


@dataclass(frozen=True)
class BatchCollection:
    batches: tuple[tuple[int, ...], ...]
    unions: tuple[np.ndarray, ...]

    def batch_of(self, agent: int) -> int:
        for k, b in enumerate(self.batches):
            if agent in b:
                return k
        raise KeyError(agent)


def compute_batches(sets: Sequence[np.ndarray]) -> BatchCollection:
    """Group agents whose sets intersect, closed transitively (union-find)."""
    n = len(sets)
    parent = list(range(n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for i in range(n):
        for j in range(i + 1, n):
            if np.any(sets[i] & sets[j]):
                ri, rj = find(i), find(j)
                if ri != rj:
                    parent[max(ri, rj)] = min(ri, rj)
    groups: dict[int, list[int]] = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(i)
    batches = tuple(sorted(tuple(g) for g in groups.values()))
    unions = tuple(np.logical_or.reduce([sets[i] for i in b]) for b in batches)
    return BatchCollection(batches, unions)
