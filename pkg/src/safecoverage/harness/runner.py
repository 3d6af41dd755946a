"""Execute one (config, seed) pair and turn the outcome into a JSON-ready RunRecord."""
from __future__ import annotations

import json
import math
import signal
from contextlib import contextmanager
from pathlib import Path
from typing import Any

import numpy as np

from ..coverage import BRUTE_FORCE_LIMIT
from ..domain import GridDomain
from ..environments import (EnvironmentTruth, load_environment_dir, obstacle_environment,
                            sample_gp_environment)
from ..gp import GpModel, KernelSpec
from ..macopt import MacoptConfig, macopt_run
from ..metrics import coverage_on, reachable_optimum, reachable_sets
from ..safemac import SafemacConfig, passivemac_run, safemac_run, two_stage_run
from .config import ConfigError, ExperimentConfig

RECORD_FORMAT = "safecoverage-run/1"
ORACLE_FORMAT = "safecoverage-oracle/1"
SAMPLERS = {"macopt": "uncertainty", "macopt_h": "hallucinated", "ucb": "ucb_center"}
SAFE_RUNNERS = {"safemac": safemac_run, "passivemac": passivemac_run, "two_stage": two_stage_run}


class RunTimeout(Exception):
    pass


@contextmanager
def deadline(seconds: float | None):
    """Raise :class:`RunTimeout` in the calling (main) thread after ``seconds``."""
    if not seconds:
        yield
        return

    def _alarm(signum, frame):
        raise RunTimeout()

    previous = signal.signal(signal.SIGALRM, _alarm)
    signal.setitimer(signal.ITIMER_REAL, seconds)
    try:
        yield
    finally:
        signal.setitimer(signal.ITIMER_REAL, 0)
        signal.signal(signal.SIGALRM, previous)


def kernel_of(k) -> KernelSpec:
    return KernelSpec(k.family, k.lengthscale, k.output_scale)


def build_environment(cfg: ExperimentConfig, seed: int) -> EnvironmentTruth:
    if cfg.is_file_environment:
        env = load_environment_dir(cfg.environment_path)
        if len(env.seeds) != cfg.n_agents:
            raise ConfigError("n_agents", f"environment file has {len(env.seeds)} seeds, config asks for "
                                          f"{cfg.n_agents} agents")
        return env
    domain = GridDomain(cfg.grid.width, cfg.grid.height, cfg.grid.spacing)
    if cfg.environment == "gp":
        return sample_gp_environment(domain, kernel_of(cfg.kernel_rho), kernel_of(cfg.kernel_q), seed,
                                     cfg.n_agents, cfg.noise_var_rho, cfg.noise_var_q,
                                     density_transform=cfg.density_transform)
    return obstacle_environment(domain, None, kernel_of(cfg.kernel_rho), seed, cfg.n_agents,
                                cfg.noise_var_rho, cfg.noise_var_q, density_transform=cfg.density_transform)


def _lipschitz(cfg: ExperimentConfig, env: EnvironmentTruth) -> float:
    return cfg.lipschitz if cfg.lipschitz is not None else env.lipschitz_q


def _f(x) -> float | None:
    """Plain float, with NaN mapped to None so records stay strict JSON."""
    if x is None:
        return None
    x = float(x)
    return None if math.isnan(x) else x


def _goal_list(goals) -> list:
    return [None if g is None else int(g) for g in goals]


def _run_algorithm(cfg: ExperimentConfig, env: EnvironmentTruth, seed: int):
    coords = env.domain.coords
    gp_rho = GpModel(kernel_of(cfg.kernel_rho), env.noise_rho ** 2, coords)
    if cfg.algorithm in SAMPLERS:
        mc = MacoptConfig(cfg.eps_rho, cfg.beta_sqrt_rho, cfg.max_rounds, SAMPLERS[cfg.algorithm], cfg.r,
                          cfg.path_restricted)
        return macopt_run(env, gp_rho, mc, seed)
    gp_q = GpModel(kernel_of(cfg.kernel_q), env.noise_q ** 2, coords)
    sc = SafemacConfig(cfg.eps_rho, cfg.eps_q, cfg.beta_sqrt_rho, cfg.beta_sqrt_q, _lipschitz(cfg, env),
                       cfg.max_rounds, "inverse_distance", cfg.r, cfg.path_restricted)
    return SAFE_RUNNERS[cfg.algorithm](env, gp_rho, gp_q, sc, seed)


def _base_record(cfg: ExperimentConfig, seed: int) -> dict[str, Any]:
    return {"format": RECORD_FORMAT, "config_hash": cfg.hash, "seed": int(seed), "algorithm": cfg.algorithm,
            "environment": cfg.environment, "config": cfg.identity()}


def run_one(cfg: ExperimentConfig, seed: int) -> dict[str, Any]:
    """Run one seed; the record depends only on ``(cfg, seed)`` unless the run times out."""
    record = _base_record(cfg, seed)
    try:
        with deadline(cfg.wall_clock_limit):
            env = build_environment(cfg, seed)
            result = _run_algorithm(cfg, env, seed)
    except RunTimeout:
        record.update(timed_out=True, converged=False, rounds=[])
        return record

    domain = env.domain
    reach = np.logical_or.reduce(reachable_sets(env, 0.0, _lipschitz(cfg, env)))
    mass = float(env.density[reach].sum() / domain.n)

    def normalized(placements):
        if mass <= 0:
            return None
        return coverage_on(env.density, domain, placements, cfg.r, reach, cfg.path_restricted) / mass

    safe = cfg.algorithm in SAFE_RUNNERS
    rounds = []
    n_rho = n_q = 0
    for h in result.history:
        if safe:
            n_rho += len(h.rho_observations)
            n_q += len(h.q_observations)
            phase = h.phase
            rec = list(h.recommendation)
        else:
            n_rho += len(h.observations)
            phase = "coverage" if h.observations else "done"
            rec = list(h.placements.placements)
        rounds.append({
            "round": int(h.round), "phase": phase,
            "placements": [int(x) for x in h.placements.placements], "goals": _goal_list(h.goals),
            "sum_max_width": _f(h.sum_max_width), "samples_rho": n_rho, "samples_q": n_q,
            "coverage": _f(normalized(h.placements.placements)),
            "recommendation": [int(x) for x in rec], "recommendation_coverage": _f(normalized(rec)),
        })

    final = [int(x) for x in result.final.placements]
    if safe:
        violations = result.safety.violations
        outside = result.safety.outside_pessimistic
        recommendation = [int(x) for x in result.recommendation.placements]
        stalled = result.stalled
    else:
        measured = [v for h in result.history for v, _ in h.observations] + final
        violations = int(sum(env.constraint[v] < 0 for v in measured))
        outside = None
        recommendation = final
        stalled = False
    record.update(
        timed_out=False, converged=bool(result.converged), stalled=bool(stalled),
        convergence_round=int(result.history[-1].round) if result.converged else None,
        n_rounds=len(result.history),
        seeds=[int(s) for s in env.seeds], lipschitz=_lipschitz(cfg, env),
        reachable_mass=mass, reachable_size=int(reach.sum()),
        final_placements=final,
        final_coverage=coverage_on(env.density, domain, final, cfg.r, reach, cfg.path_restricted),
        final_coverage_normalized=_f(normalized(final)),
        recommendation_placements=recommendation,
        recommendation_coverage_normalized=_f(normalized(recommendation)),
        samples_rho=n_rho, samples_q=n_q, samples_total=n_rho + n_q,
        safety_violations=int(violations), outside_pessimistic=outside,
        rounds=rounds,
    )
    return record


def oracle_one(cfg: ExperimentConfig, seed: int) -> dict[str, Any]:
    """Benchmark values for one seed: reachable mass and per-batch optima at margins 0 and ``eps_q``."""
    env = build_environment(cfg, seed)
    lip = _lipschitz(cfg, env)
    out: dict[str, Any] = {"format": ORACLE_FORMAT, "config_hash": cfg.hash, "seed": int(seed),
                           "environment": cfg.environment, "seeds": [int(s) for s in env.seeds]}
    for label, eps in (("reachable_0", 0.0), ("reachable_eps", cfg.eps_q)):
        sets = reachable_sets(env, eps, lip)
        union = np.logical_or.reduce(sets)
        biggest = max(int(s.sum()) for s in sets)
        exact = float(biggest) ** cfg.n_agents <= BRUTE_FORCE_LIMIT
        opt = reachable_optimum(env, cfg.r, eps, lip, exact=exact, path_restricted=cfg.path_restricted)
        out[label] = {"size": int(union.sum()), "mass": float(env.density[union].sum() / env.domain.n),
                      "batches": [list(b) for b in opt.batches], "values": list(opt.values),
                      "total": opt.total, "exact": exact}
    return out


def dumps_record(record: dict) -> str:
    return json.dumps(record, sort_keys=True, separators=(",", ":"), allow_nan=False) + "\n"


def record_path(out_dir: str | Path, cfg: ExperimentConfig, seed: int, prefix: str = "run") -> Path:
    return Path(out_dir) / f"{prefix}_{cfg.hash}_{int(seed)}.json"


def write_record(record: dict, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps_record(record), encoding="utf-8")
    return path
