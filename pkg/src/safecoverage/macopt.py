"""Unconstrained coverage optimization with uncertainty sampling on the density."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .coverage import CoverageAssignment, argmax_in, greedy_ucb
from .domain import GridDomain, SetLike, as_mask, disk_matrix
from .environments import EnvironmentTruth
from .gp import ConfidenceBounds, GpModel, initial_bounds, update_bounds
from .rng import stream

SAMPLERS = ("uncertainty", "hallucinated", "ucb_center")


@dataclass(frozen=True)
class MacoptConfig:
    """Loop settings.

    Parameters
    ----------
    eps_rho : float
        Stop once the summed density width at the goals is at most this.
    beta_sqrt : float
        Confidence multiplier on the posterior standard deviation.
    max_rounds : int
        Cap on measurement rounds; hitting it leaves the run non-converged.
    sampler : str
        Goal rule, one of ``uncertainty``, ``hallucinated``, ``ucb_center``.
    r : int
        Sensing radius in hops.
    """

    eps_rho: float = 0.1
    beta_sqrt: float = 3.0
    max_rounds: int = 300
    sampler: str = "uncertainty"
    r: int = 5
    path_restricted: bool = True

    def __post_init__(self):
        if not self.eps_rho >= 0:
            raise ValueError("eps_rho must be non-negative")
        if self.max_rounds < 1:
            raise ValueError("max_rounds must be at least 1")
        if self.sampler not in SAMPLERS:
            raise ValueError(f"unknown sampler {self.sampler!r}")
        if self.r < 0:
            raise ValueError("r must be non-negative")


@dataclass(frozen=True)
class RoundLog:
    round: int
    placements: CoverageAssignment
    goals: tuple[int, ...]
    sum_max_width: float
    observations: tuple[tuple[int, float], ...]


@dataclass
class MacoptResult:
    final: CoverageAssignment
    history: list[RoundLog]
    converged: bool
    gp: GpModel
    bounds: ConfidenceBounds

    @property
    def samples_rho(self) -> int:
        return sum(len(h.observations) for h in self.history)

    def __iter__(self):
        yield self.final
        yield self.history


def uncertainty_goals(assignment: CoverageAssignment, bounds: ConfidenceBounds) -> list[int]:
    """Widest cell of each effective region; an empty region falls back to the placement."""
    w = bounds.width
    goals = []
    for x, region in zip(assignment.placements, assignment.effective_regions):
        g = argmax_in(w, region)
        goals.append(x if g is None else g)
    return goals


def hallucinated_goals(assignment: CoverageAssignment, bounds: ConfidenceBounds, gp: GpModel) -> list[int]:
    """Like :func:`uncertainty_goals`, but each agent conditions on the earlier agents' goals."""
    sites: list[int] = []
    for x, region in zip(assignment.placements, assignment.effective_regions):
        cells = np.flatnonzero(region)
        if cells.size == 0:
            sites.append(int(x))
            continue
        var = gp.conditioned_variance(cells, sites)
        sites.append(int(cells[np.argmax(var)]))
    return sites


def ucb_center_goals(assignment: CoverageAssignment) -> list[int]:
    return [int(x) for x in assignment.placements]


def pick_goals(sampler: str, assignment: CoverageAssignment, bounds: ConfidenceBounds,
               gp: GpModel) -> list[int]:
    if sampler == "uncertainty":
        return uncertainty_goals(assignment, bounds)
    if sampler == "hallucinated":
        return hallucinated_goals(assignment, bounds, gp)
    if sampler == "ucb_center":
        return ucb_center_goals(assignment)
    raise ValueError(f"unknown sampler {sampler!r}")


def sum_width(bounds: ConfidenceBounds, goals: Sequence[int]) -> float:
    w = bounds.width
    return float(sum(w[g] for g in goals))


def analysis_sum_max_width(assignment: CoverageAssignment, gp: GpModel, beta_sqrt: float,
                           domain: GridDomain, r: int, restrict: SetLike | None = None) -> float:
    """``2 beta^(1/2) C_D sum_i max_{D^{i-}} sigma``, the form used in the convergence analysis.

    ``C_D`` is the largest disk size over the domain divided by ``|V|``.
    """
    m = disk_matrix(domain, r, as_mask(domain, restrict))
    c_d = float(np.diff(m.indptr).max()) / domain.n
    sd = gp.stddev
    total = sum(float(sd[reg].max()) for reg in assignment.effective_regions if reg.any())
    return 2.0 * beta_sqrt * c_d * total


def observe(field: np.ndarray, locations: Sequence[int], noise_std: float,
            gens: Sequence[np.random.Generator]) -> list[float]:
    """Noisy point evaluations, one draw from each location's own stream."""
    return [float(field[v] + noise_std * g.standard_normal()) for v, g in zip(locations, gens)]


def macopt_run(env: EnvironmentTruth, gp: GpModel, cfg: MacoptConfig, rng_seed: int,
               restrict: SetLike | None = None) -> MacoptResult:
    """Greedy on the density bounds, measure at each agent's goal, repeat until certain.

    The last history entry always holds the assignment that ended the loop
    and carries no observations.
    """
    domain = env.domain
    n = len(env.seeds)
    allowed = as_mask(domain, restrict)
    gens = [stream(rng_seed, "rho", i) for i in range(n)]
    bounds = initial_bounds(gp, cfg.beta_sqrt)
    history: list[RoundLog] = []
    converged = False
    for rnd in range(cfg.max_rounds + 1):
        assignment = greedy_ucb(bounds.upper, bounds.lower, domain, n, cfg.r, allowed,
                                path_restricted=cfg.path_restricted).assignment
        goals = pick_goals(cfg.sampler, assignment, bounds, gp)
        gamma = sum_width(bounds, goals)
        if gamma <= cfg.eps_rho or rnd == cfg.max_rounds:
            converged = gamma <= cfg.eps_rho
            history.append(RoundLog(rnd, assignment, tuple(goals), gamma, ()))
            break
        values = observe(env.density, goals, env.noise_rho, gens)
        gp = gp.add_observations(goals, values)
        bounds = update_bounds(bounds, gp, cfg.beta_sqrt)
        history.append(RoundLog(rnd, assignment, tuple(goals), gamma, tuple(zip(goals, values))))
    return MacoptResult(history[-1].placements, history, converged, gp, bounds)
