"""Coverage under an unknown safety constraint, plus the passive and two-stage baselines."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .coverage import CoverageAssignment, argmax_in, coverage_value, greedy_ucb, make_assignment
from .domain import GridDomain, disk_mask
from .environments import EnvironmentTruth
from .expansion import inverse_distance_heuristic, safe_expansion_step
from .gp import ConfidenceBounds, GpModel, initial_bounds, update_bounds
from .macopt import observe, uncertainty_goals
from .rng import stream
from .safesets import (BatchCollection, SafeSetState, SafetyParams, compute_batches, initial_safe_sets,
                       update_safe_sets)

HEURISTICS = {"inverse_distance": inverse_distance_heuristic}


@dataclass(frozen=True)
class SafemacConfig:
    """Settings shared by SafeMaC and its baselines.

    ``lipschitz=None`` takes the constant stored with the environment.
    """

    eps_rho: float = 0.15
    eps_q: float = 0.1
    beta_sqrt_rho: float = 3.0
    beta_sqrt_q: float = 3.0
    lipschitz: float | None = None
    max_rounds: int = 300
    heuristic: str = "inverse_distance"
    r: int = 5
    path_restricted: bool = True
    clamp_lower: bool = True

    def __post_init__(self):
        if not self.eps_rho >= 0:
            raise ValueError("eps_rho must be non-negative")
        if not self.eps_q >= 0:
            raise ValueError("eps_q must be non-negative")
        if self.lipschitz is not None and not self.lipschitz > 0:
            raise ValueError("lipschitz must be positive")
        if self.max_rounds < 1:
            raise ValueError("max_rounds must be at least 1")
        if self.heuristic not in HEURISTICS:
            raise ValueError(f"unknown heuristic {self.heuristic!r}")

    def safety(self, env: EnvironmentTruth) -> SafetyParams:
        return SafetyParams(self.lipschitz if self.lipschitz is not None else env.lipschitz_q, self.eps_q)


@dataclass(frozen=True)
class PhaseState:
    phase: str                              # "coverage" or "exploration"
    current_goals: tuple[int | None, ...]   # None marks an idle agent
    pending_expansion_agents: frozenset[int]


@dataclass(frozen=True)
class SafeRoundLog:
    round: int
    phase: str
    placements: CoverageAssignment
    goals: tuple[int | None, ...]
    sum_max_width: float
    rho_observations: tuple[tuple[int, int, float], ...]   # (agent, location, value)
    q_observations: tuple[tuple[int, int, float], ...]
    pessimistic: tuple[np.ndarray, ...]
    optimistic: tuple[np.ndarray, ...]
    batches: tuple[tuple[int, ...], ...]
    recommendation: tuple[int, ...] = ()


@dataclass(frozen=True)
class SafetyEvent:
    round: int
    agent: int
    kind: str               # "rho", "q", "placement" or "recommendation"
    location: int
    q_true: float
    in_pessimistic: bool


@dataclass
class SafetyLog:
    events: list[SafetyEvent] = field(default_factory=list)

    def record(self, env: EnvironmentTruth, rnd: int, agent: int, kind: str, location: int, pess: np.ndarray):
        self.events.append(SafetyEvent(rnd, agent, kind, int(location), float(env.constraint[location]),
                                       bool(pess[location])))

    @property
    def violations(self) -> int:
        """Events at locations whose true constraint value is negative."""
        return sum(e.q_true < 0 for e in self.events)

    @property
    def outside_pessimistic(self) -> int:
        return sum(not e.in_pessimistic for e in self.events)


@dataclass
class SafeRunResult:
    final: CoverageAssignment
    history: list[SafeRoundLog]
    safety: SafetyLog
    converged: bool
    stalled: bool
    state: SafeSetState
    recommendation: CoverageAssignment
    gp_rho: GpModel
    gp_q: GpModel
    bounds_rho: ConfidenceBounds
    bounds_q: ConfidenceBounds

    @property
    def samples_rho(self) -> int:
        return sum(len(h.rho_observations) for h in self.history)

    @property
    def samples_q(self) -> int:
        return sum(len(h.q_observations) for h in self.history)

    def __iter__(self):
        yield self.final
        yield self.history
        yield self.safety


# --- per-batch greedy -------------------------------------------------------------------------

@dataclass(frozen=True)
class BatchedGreedy:
    assignment: CoverageAssignment   # agents listed batch by batch
    disks: tuple[np.ndarray, ...]    # full disk of each agent, indexed by agent id
    batches: BatchCollection


def merge_assignments(parts: Sequence[CoverageAssignment]) -> CoverageAssignment:
    return CoverageAssignment(
        tuple(a for p in parts for a in p.agent_ids),
        tuple(x for p in parts for x in p.placements),
        tuple(reg for p in parts for reg in p.effective_regions),
        float(sum(p.total_value for p in parts)),
        tuple(a for p in parts for a in p.duplicates))


def batched_greedy(upper: np.ndarray, lower: np.ndarray, domain: GridDomain, batches: BatchCollection,
                   r: int, path_restricted: bool = True) -> BatchedGreedy:
    """Greedy solved independently inside each batch's set."""
    n = sum(len(b) for b in batches.batches)
    parts = []
    disks: list[np.ndarray | None] = [None] * n
    for members, arena in zip(batches.batches, batches.unions):
        res = greedy_ucb(upper, lower, domain, len(members), r, arena, agent_ids=members,
                         path_restricted=path_restricted)
        parts.append(res.assignment)
        for a, x in zip(members, res.assignment.placements):
            disks[a] = disk_mask(domain, x, r, arena, path_restricted)
    return BatchedGreedy(merge_assignments(parts), tuple(disks), batches)


def _goals_excluding(assignment: CoverageAssignment, width: np.ndarray, n: int,
                     stuck: Sequence[bool], pessimistic: Sequence[np.ndarray]) -> list[int | None]:
    """Width-argmax goal per agent; agents with no feasible expansion keep to their pessimistic set."""
    goals: list[int | None] = [None] * n
    for a, x, region in zip(assignment.agent_ids, assignment.placements, assignment.effective_regions):
        if not region.any():
            goals[a] = x
            continue
        allowed = region & pessimistic[a] if stuck[a] else region
        goals[a] = argmax_in(width, allowed)
    return goals


def _gamma(width: np.ndarray, goals: Sequence[int | None]) -> float:
    return float(sum(width[g] for g in goals if g is not None))


def _same_batches(a: BatchCollection, b: BatchCollection) -> bool:
    return a.batches == b.batches and all(np.array_equal(x, y) for x, y in zip(a.unions, b.unions))


# --- intermediate recommendation --------------------------------------------------------------

class IntermediateRecommender:
    """Running best of safe greedy and pessimistic-greedy solutions under the worst-case objective.

    Candidates are valued by ``sum_B F(X^B; max(l_rho, 0); S^{p,B})`` over
    the batches of the pessimistic sets; the first candidate wins ties.
    ``clamp_lower=False`` uses the raw lower bound instead.
    """

    def __init__(self, domain: GridDomain, seeds: Sequence[int], r: int, path_restricted: bool = True,
                 clamp_lower: bool = True):
        self.domain = domain
        self.r = r
        self.path_restricted = path_restricted
        self.clamp_lower = clamp_lower
        n = len(seeds)
        self.best = CoverageAssignment(tuple(range(n)), tuple(int(s) for s in seeds),
                                       tuple(np.zeros(domain.n, dtype=bool) for _ in seeds), 0.0)
        self.best_value = -math.inf
        self.values: list[float] = []

    def _value(self, density, placements, batches) -> float:
        return sum(coverage_value(density, self.domain, [placements[a] for a in b], self.r, arena,
                                  self.path_restricted)
                   for b, arena in zip(batches.batches, batches.unions))

    def _assignment(self, density, placements, batches) -> CoverageAssignment:
        return merge_assignments([
            make_assignment(density, self.domain, [placements[a] for a in b], self.r, arena, b,
                            self.path_restricted)
            for b, arena in zip(batches.batches, batches.unions)])

    def update(self, greedy: CoverageAssignment, state: SafeSetState, bounds_rho: ConfidenceBounds) -> float:
        low = np.maximum(bounds_rho.lower, 0.0) if self.clamp_lower else bounds_rho.lower
        batches = compute_batches(state.pessimistic)
        candidates = []
        placed = dict(zip(greedy.agent_ids, greedy.placements))
        if len(placed) == state.n_agents and all(
                batches.unions[batches.batch_of(a)][x] for a, x in placed.items()):
            candidates.append(placed)
        pess = {}
        for b, arena in zip(batches.batches, batches.unions):
            res = greedy_ucb(low, low, self.domain, len(b), self.r, arena, agent_ids=b,
                             path_restricted=self.path_restricted)
            pess.update(zip(b, res.assignment.placements))
        candidates.append(pess)
        for cand in candidates:
            value = self._value(low, cand, batches)
            if value > self.best_value:
                self.best_value = value
                self.best = self._assignment(low, cand, batches)
        self.values.append(self.best_value)
        return self.best_value


def recommend_intermediate(rounds: Iterable[tuple[CoverageAssignment, SafeSetState, ConfidenceBounds]],
                           domain: GridDomain, seeds: Sequence[int], r: int,
                           path_restricted: bool = True, clamp_lower: bool = True) -> CoverageAssignment:
    """Fold :class:`IntermediateRecommender` over ``(greedy, sets, density bounds)`` per round.

    With no rounds the agents stay at their seeds.
    """
    rec = IntermediateRecommender(domain, seeds, r, path_restricted, clamp_lower)
    for greedy, state, bounds in rounds:
        rec.update(greedy, state, bounds)
    return rec.best


# --- SafeMaC ----------------------------------------------------------------------------------

def _check_seeds(env: EnvironmentTruth):
    from .safesets import UnsafeSeedError
    for s in env.seeds:
        if env.constraint[s] < 0:
            raise UnsafeSeedError(f"seed {s} violates the constraint")


def _sets_changed(old: SafeSetState, new: SafeSetState, i: int) -> bool:
    return not (np.array_equal(old.pessimistic[i], new.pessimistic[i])
                and np.array_equal(old.optimistic[i], new.optimistic[i]))


def safemac_run(env: EnvironmentTruth, gp_rho: GpModel, gp_q: GpModel, cfg: SafemacConfig, rng_seed: int,
                bounds_q: ConfidenceBounds | None = None) -> SafeRunResult:
    """Alternate optimistic coverage and goal-directed constraint exploration until both settle.

    ``bounds_q`` overrides the initial constraint interval (otherwise it
    comes from ``gp_q``). A run that can make no further progress on any
    remaining goal stops with ``stalled=True``.
    """
    _check_seeds(env)
    domain = env.domain
    n = len(env.seeds)
    params = cfg.safety(env)
    heuristic = HEURISTICS[cfg.heuristic]
    rho_gens = [stream(rng_seed, "rho", i) for i in range(n)]
    q_gens = [stream(rng_seed, "q", i) for i in range(n)]
    b_rho = initial_bounds(gp_rho, cfg.beta_sqrt_rho)
    b_q = initial_bounds(gp_q, cfg.beta_sqrt_q) if bounds_q is None else bounds_q
    state = update_safe_sets(initial_safe_sets(domain, env.seeds), b_q, domain, params)
    batches = compute_batches(state.union)
    solved = batched_greedy(b_rho.upper, b_rho.lower, domain, batches, cfg.r, cfg.path_restricted)
    stuck = [False] * n
    safety = SafetyLog()
    recommender = IntermediateRecommender(domain, env.seeds, cfg.r, cfg.path_restricted, cfg.clamp_lower)
    history: list[SafeRoundLog] = []
    converged = stalled = False

    for rnd in range(cfg.max_rounds + 1):
        cov_goals = _goals_excluding(solved.assignment, b_rho.width, n, stuck, state.pessimistic)
        gamma = _gamma(b_rho.width, cov_goals)
        frontier = [np.zeros(domain.n, dtype=bool) if stuck[i] else state.uncertain(i) & solved.disks[i]
                    for i in range(n)]
        recommender.update(solved.assignment, state, b_rho)
        log_args = dict(round=rnd, placements=solved.assignment, pessimistic=state.pessimistic,
                        optimistic=state.optimistic, batches=solved.batches.batches,
                        recommendation=recommender.best.placements)
        if gamma <= cfg.eps_rho and not any(u.any() for u in frontier):
            converged = True
            history.append(SafeRoundLog(phase="done", goals=tuple(cov_goals), sum_max_width=gamma,
                                        rho_observations=(), q_observations=(), **log_args))
            break
        if rnd == cfg.max_rounds:
            history.append(SafeRoundLog(phase="capped", goals=tuple(cov_goals), sum_max_width=gamma,
                                        rho_observations=(), q_observations=(), **log_args))
            break

        start_gamma = gamma
        if gamma > cfg.eps_rho:
            phase, goals = "coverage", list(cov_goals)
        else:
            phase = "exploration"
            goals = [argmax_in(b_q.width, u) for u in frontier]
            if all(g is None for g in goals):
                stalled = True
                history.append(SafeRoundLog(phase="stalled", goals=tuple(goals), sum_max_width=gamma,
                                            rho_observations=(), q_observations=(), **log_args))
                break

        # constraint exploration toward goals that are not yet certified safe
        q_obs = []
        for i, g in enumerate(goals):
            if g is None or state.pessimistic[i][g]:
                continue
            v = safe_expansion_step(state.pessimistic[i], state.optimistic[i], b_q, domain, [g], params,
                                    heuristic)
            if v is None:
                # feasibility does not depend on the goal, so no other unsafe goal helps either
                stuck[i] = True
                continue
            safety.record(env, rnd, i, "q", v, state.pessimistic[i])
            q_obs.append((i, v, observe(env.constraint, [v], env.noise_q, [q_gens[i]])[0]))
        if q_obs:
            gp_q = gp_q.add_observations([o[1] for o in q_obs], [o[2] for o in q_obs])
            b_q = update_bounds(b_q, gp_q, cfg.beta_sqrt_q)
            new_state = update_safe_sets(state, b_q, domain, params)
            for i in range(n):
                if _sets_changed(state, new_state, i):
                    stuck[i] = False
            state = new_state

        new_batches = compute_batches(state.union)
        if not _same_batches(new_batches, batches):
            batches = new_batches
            solved = batched_greedy(b_rho.upper, b_rho.lower, domain, batches, cfg.r, cfg.path_restricted)
        cov_goals = _goals_excluding(solved.assignment, b_rho.width, n, stuck, state.pessimistic)
        gamma = _gamma(b_rho.width, cov_goals)

        rho_obs = []
        active = [(i, g) for i, g in enumerate(cov_goals) if g is not None]
        if gamma > cfg.eps_rho and active and all(state.pessimistic[i][g] for i, g in active):
            for i, g in active:
                safety.record(env, rnd, i, "rho", g, state.pessimistic[i])
                rho_obs.append((i, g, observe(env.density, [g], env.noise_rho, [rho_gens[i]])[0]))
            gp_rho = gp_rho.add_observations([o[1] for o in rho_obs], [o[2] for o in rho_obs])
            b_rho = update_bounds(b_rho, gp_rho, cfg.beta_sqrt_rho)
            solved = batched_greedy(b_rho.upper, b_rho.lower, domain, batches, cfg.r, cfg.path_restricted)

        history.append(SafeRoundLog(phase=phase, goals=tuple(goals), sum_max_width=start_gamma,
                                    rho_observations=tuple(rho_obs), q_observations=tuple(q_obs), **log_args))

    final = solved.assignment
    for a, x in zip(final.agent_ids, final.placements):
        safety.record(env, len(history), a, "placement", x, state.pessimistic[a])
    rec = recommender.best
    pb = compute_batches(state.pessimistic)
    for a, x in zip(rec.agent_ids, rec.placements):
        safety.record(env, len(history), a, "recommendation", x, pb.unions[pb.batch_of(a)])
    return SafeRunResult(final, history, safety, converged, stalled, state, rec, gp_rho, gp_q, b_rho, b_q)


# --- baselines --------------------------------------------------------------------------------

def _coverage_in_pessimistic(env, gp_rho, gp_q, b_rho, b_q, state, cfg, params, rho_gens, q_gens, safety,
                             history, measure_q: bool, round_offset: int, recommender):
    """MaCOpt inside the pessimistic batches; optionally measure q alongside every density sample."""
    domain = env.domain
    n = len(env.seeds)
    converged = False
    solved = None
    for k in range(cfg.max_rounds + 1):
        rnd = round_offset + k
        batches = compute_batches(state.pessimistic)
        solved = batched_greedy(b_rho.upper, b_rho.lower, domain, batches, cfg.r, cfg.path_restricted)
        goals = [None] * n
        for a, g in zip(solved.assignment.agent_ids, uncertainty_goals(solved.assignment, b_rho)):
            goals[a] = g
        gamma = _gamma(b_rho.width, goals)
        recommender.update(solved.assignment, state, b_rho)
        log_args = dict(round=rnd, placements=solved.assignment, goals=tuple(goals), sum_max_width=gamma,
                        pessimistic=state.pessimistic, optimistic=state.optimistic, batches=batches.batches,
                        recommendation=recommender.best.placements)
        if gamma <= cfg.eps_rho or k == cfg.max_rounds:
            converged = gamma <= cfg.eps_rho
            history.append(SafeRoundLog(phase="done" if converged else "capped", rho_observations=(),
                                        q_observations=(), **log_args))
            break
        rho_obs, q_obs = [], []
        for i, g in enumerate(goals):
            arena = batches.unions[batches.batch_of(i)]
            safety.record(env, rnd, i, "rho", g, arena)
            rho_obs.append((i, g, observe(env.density, [g], env.noise_rho, [rho_gens[i]])[0]))
            if measure_q:
                safety.record(env, rnd, i, "q", g, arena)
                q_obs.append((i, g, observe(env.constraint, [g], env.noise_q, [q_gens[i]])[0]))
        gp_rho = gp_rho.add_observations([o[1] for o in rho_obs], [o[2] for o in rho_obs])
        b_rho = update_bounds(b_rho, gp_rho, cfg.beta_sqrt_rho)
        if q_obs:
            gp_q = gp_q.add_observations([o[1] for o in q_obs], [o[2] for o in q_obs])
            b_q = update_bounds(b_q, gp_q, cfg.beta_sqrt_q)
            state = update_safe_sets(state, b_q, domain, params)
        history.append(SafeRoundLog(phase="coverage", rho_observations=tuple(rho_obs),
                                    q_observations=tuple(q_obs), **log_args))
    return solved, gp_rho, gp_q, b_rho, b_q, state, converged


def _finish(env, solved, history, safety, converged, state, recommender, gp_rho, gp_q, b_rho, b_q):
    final = solved.assignment
    pb = compute_batches(state.pessimistic)
    for a, x in zip(final.agent_ids, final.placements):
        safety.record(env, len(history), a, "placement", x, pb.unions[pb.batch_of(a)])
    rec = recommender.best
    for a, x in zip(rec.agent_ids, rec.placements):
        safety.record(env, len(history), a, "recommendation", x, pb.unions[pb.batch_of(a)])
    return SafeRunResult(final, history, safety, converged, False, state, rec, gp_rho, gp_q, b_rho, b_q)


def passivemac_run(env: EnvironmentTruth, gp_rho: GpModel, gp_q: GpModel, cfg: SafemacConfig,
                   rng_seed: int) -> SafeRunResult:
    """Coverage confined to the pessimistic sets, measuring q wherever density is measured."""
    _check_seeds(env)
    domain = env.domain
    n = len(env.seeds)
    params = cfg.safety(env)
    rho_gens = [stream(rng_seed, "rho", i) for i in range(n)]
    q_gens = [stream(rng_seed, "q", i) for i in range(n)]
    b_rho = initial_bounds(gp_rho, cfg.beta_sqrt_rho)
    b_q = initial_bounds(gp_q, cfg.beta_sqrt_q)
    state = update_safe_sets(initial_safe_sets(domain, env.seeds), b_q, domain, params)
    safety = SafetyLog()
    history: list[SafeRoundLog] = []
    recommender = IntermediateRecommender(domain, env.seeds, cfg.r, cfg.path_restricted, cfg.clamp_lower)
    solved, gp_rho, gp_q, b_rho, b_q, state, converged = _coverage_in_pessimistic(
        env, gp_rho, gp_q, b_rho, b_q, state, cfg, params, rho_gens, q_gens, safety, history, True, 0,
        recommender)
    return _finish(env, solved, history, safety, converged, state, recommender, gp_rho, gp_q, b_rho, b_q)


def explore_constraint(env: EnvironmentTruth, gp_q: GpModel, b_q: ConfidenceBounds, state: SafeSetState,
                       cfg: SafemacConfig, q_gens, safety: SafetyLog, history: list, round_offset: int = 0,
                       placements: CoverageAssignment | None = None):
    """Safe expansion toward every uncertain cell until nothing remains or no step is feasible."""
    domain = env.domain
    n = len(env.seeds)
    params = cfg.safety(env)
    heuristic = HEURISTICS[cfg.heuristic]
    stuck = [False] * n
    done = False
    for k in range(cfg.max_rounds):
        q_obs = []
        for i in range(n):
            u = state.uncertain(i)
            if stuck[i] or not u.any():
                continue
            v = safe_expansion_step(state.pessimistic[i], state.optimistic[i], b_q, domain, u, params, heuristic)
            if v is None:
                stuck[i] = True
                continue
            safety.record(env, round_offset + k, i, "q", v, state.pessimistic[i])
            q_obs.append((i, v, observe(env.constraint, [v], env.noise_q, [q_gens[i]])[0]))
        if not q_obs:
            done = True
            break
        gp_q = gp_q.add_observations([o[1] for o in q_obs], [o[2] for o in q_obs])
        b_q = update_bounds(b_q, gp_q, cfg.beta_sqrt_q)
        new_state = update_safe_sets(state, b_q, domain, params)
        for i in range(n):
            if _sets_changed(state, new_state, i):
                stuck[i] = False
        if placements is not None:
            history.append(SafeRoundLog(round_offset + k, "exploration", placements, (None,) * n, math.nan,
                                        (), tuple(q_obs), state.pessimistic, state.optimistic,
                                        compute_batches(state.union).batches, placements.placements))
        state = new_state
    return gp_q, b_q, state, done


def two_stage_run(env: EnvironmentTruth, gp_rho: GpModel, gp_q: GpModel, cfg: SafemacConfig,
                  rng_seed: int) -> SafeRunResult:
    """Explore the whole reachable safe region first, then run coverage inside it.

    Each stage has its own ``max_rounds`` budget; the run counts as converged
    only if both stages finish within it.
    """
    _check_seeds(env)
    domain = env.domain
    n = len(env.seeds)
    params = cfg.safety(env)
    rho_gens = [stream(rng_seed, "rho", i) for i in range(n)]
    q_gens = [stream(rng_seed, "q", i) for i in range(n)]
    b_rho = initial_bounds(gp_rho, cfg.beta_sqrt_rho)
    b_q = initial_bounds(gp_q, cfg.beta_sqrt_q)
    state = update_safe_sets(initial_safe_sets(domain, env.seeds), b_q, domain, params)
    safety = SafetyLog()
    history: list[SafeRoundLog] = []
    recommender = IntermediateRecommender(domain, env.seeds, cfg.r, cfg.path_restricted, cfg.clamp_lower)
    idle = CoverageAssignment(tuple(range(n)), tuple(env.seeds),
                              tuple(np.zeros(domain.n, dtype=bool) for _ in range(n)), 0.0)
    gp_q, b_q, state, explored = explore_constraint(env, gp_q, b_q, state, cfg, q_gens, safety, history, 0, idle)
    solved, gp_rho, gp_q, b_rho, b_q, state, converged = _coverage_in_pessimistic(
        env, gp_rho, gp_q, b_rho, b_q, state, cfg, params, rho_gens, q_gens, safety, history, False,
        len(history), recommender)
    return _finish(env, solved, history, safety, converged and explored, state, recommender,
                   gp_rho, gp_q, b_rho, b_q)
