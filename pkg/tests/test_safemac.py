import math

import numpy as np
import pytest

from safecoverage.domain import GridDomain
from safecoverage.environments import EnvironmentTruth, obstacle_environment, sample_obstacle_spec
from safecoverage.gp import ConfidenceBounds, GpModel, KernelSpec, initial_bounds
from safecoverage.macopt import MacoptConfig, macopt_run
from safecoverage.rng import stream
from safecoverage.safemac import (IntermediateRecommender, SafemacConfig, SafetyLog, explore_constraint,
                                  passivemac_run, recommend_intermediate, safemac_run, two_stage_run)
from safecoverage.safesets import UnsafeSeedError, initial_safe_sets, true_reachable_set, update_safe_sets

K = KernelSpec()


def gps(d, noise=1e-3):
    return GpModel(K, noise, d.coords), GpModel(K, noise, d.coords)


def small_obstacle(seed, size=10, n=2):
    d = GridDomain(size, size)
    spec = sample_obstacle_spec(d, stream(seed, "blocks"), n_blocks=(1, 2), size=(0.1, 0.3))
    return obstacle_environment(d, spec, K, seed, n_agents=n)


def test_config_validation():
    with pytest.raises(ValueError):
        SafemacConfig(eps_q=-1)
    with pytest.raises(ValueError):
        SafemacConfig(heuristic="random")
    with pytest.raises(ValueError):
        SafemacConfig(lipschitz=0.0)


def test_unsafe_seed_rejected():
    env = small_obstacle(0)
    q = env.constraint.copy()
    q[env.seeds[0]] = -0.1
    with pytest.raises(ValueError):
        EnvironmentTruth(env.domain, env.density, q, env.seeds)
    bad = small_obstacle(0)
    bad.constraint[bad.seeds[0]] = -0.1
    for run in (safemac_run, passivemac_run, two_stage_run):
        with pytest.raises(UnsafeSeedError):
            run(bad, *gps(env.domain), SafemacConfig(r=2), 0)


def test_known_safe_reduces_to_macopt():
    d = GridDomain(10, 10)
    env = small_obstacle(1)
    env = EnvironmentTruth(d, env.density, np.ones(d.n), env.seeds, env.noise_rho, env.noise_q, 1.0)
    big = ConfidenceBounds(np.full(d.n, 100.0), np.full(d.n, 100.0), 3.0)
    gp_rho, gp_q = gps(d)
    safe = safemac_run(env, gp_rho, gp_q, SafemacConfig(eps_rho=0.2, r=2), 4, bounds_q=big)
    plain = macopt_run(env, gp_rho, MacoptConfig(eps_rho=0.2, r=2), 4)
    assert safe.converged and plain.converged
    assert [tuple((g, v) for _, g, v in h.rho_observations) for h in safe.history] == \
        [h.observations for h in plain.history]
    assert safe.final.placements == plain.final.placements
    assert safe.samples_q == 0


@pytest.mark.parametrize("seed", range(4))
def test_safety_small_obstacle(seed):
    env = small_obstacle(seed)
    res = safemac_run(env, *gps(env.domain), SafemacConfig(r=2), seed)
    assert res.safety.violations == 0
    assert res.safety.outside_pessimistic == 0
    assert res.converged
    r0 = [true_reachable_set(env.constraint, env.domain, [s], 0.0, env.lipschitz_q) for s in env.seeds]
    for h in res.history:
        for i, p in enumerate(h.pessimistic):
            assert not (p & ~r0[i]).any()
        # logged sets are the round's starting sets; density is measured after the round's update
        for i, v, _ in h.q_observations:
            assert h.pessimistic[i][v]


def test_history_counts_and_phases():
    env = small_obstacle(2)
    res = safemac_run(env, *gps(env.domain), SafemacConfig(r=2), 2)
    assert res.history[-1].phase == "done"
    assert {h.phase for h in res.history} <= {"coverage", "exploration", "done"}
    assert res.samples_rho == sum(len(h.rho_observations) for h in res.history)
    for h in res.history:
        if h.rho_observations:
            assert h.sum_max_width > 0.15 or math.isnan(h.sum_max_width)


def test_round_cap():
    env = small_obstacle(0)
    res = safemac_run(env, *gps(env.domain), SafemacConfig(r=2, max_rounds=3), 0)
    assert not res.converged and res.history[-1].phase == "capped" and len(res.history) == 4


def test_recommendation_starts_at_seeds():
    d = GridDomain(6, 6)
    assert recommend_intermediate([], d, [3, 20], 1).placements == (3, 20)


def test_recommendation_value_monotone():
    env = small_obstacle(3)
    d = env.domain
    gp_rho, gp_q = gps(d)
    res = safemac_run(env, gp_rho, gp_q, SafemacConfig(r=2), 3)
    recs = [h.recommendation for h in res.history]
    # replay a recommender on the logged sets with fresh bounds that only tighten
    rec = IntermediateRecommender(d, env.seeds, 2)
    b = initial_bounds(gp_rho, 3.0)
    from safecoverage.safesets import SafeSetState
    for h in res.history:
        rec.update(h.placements, SafeSetState(h.pessimistic, h.optimistic), b)
    assert all(np.diff(rec.values) >= 0)
    for i, x in enumerate(recs[-1]):
        assert res.state.pessimistic[i][x] or any(res.state.pessimistic[j][x] for j in range(len(env.seeds)))


def test_passivemac_stays_pessimistic():
    env = small_obstacle(1)
    res = passivemac_run(env, *gps(env.domain), SafemacConfig(r=2), 1)
    assert res.safety.violations == 0 and res.safety.outside_pessimistic == 0
    assert res.samples_q == res.samples_rho
    assert all(h.phase in ("coverage", "done") for h in res.history)


def test_explore_with_exact_bounds_is_empty():
    env = small_obstacle(2)
    d = env.domain
    cfg = SafemacConfig(r=2)
    exact = ConfidenceBounds(env.constraint.copy(), env.constraint.copy(), 3.0)
    state = update_safe_sets(initial_safe_sets(d, env.seeds), exact, d, cfg.safety(env))
    _, _, end, done = explore_constraint(env, GpModel(K, 1e-3, d.coords), exact, state, cfg,
                                         [stream(0, "q", i) for i in range(2)], SafetyLog(), [])
    assert done
    assert all(np.array_equal(a, b) for a, b in zip(end.pessimistic, state.pessimistic))


def test_two_stage_sandwich():
    env = small_obstacle(4, size=8)
    cfg = SafemacConfig(r=2)
    res = two_stage_run(env, *gps(env.domain), cfg, 4)
    assert res.converged and res.safety.violations == 0
    for i, s in enumerate(env.seeds):
        r_eps = true_reachable_set(env.constraint, env.domain, [s], cfg.eps_q, env.lipschitz_q)
        r_0 = true_reachable_set(env.constraint, env.domain, [s], 0.0, env.lipschitz_q)
        assert not (r_eps & ~res.state.optimistic[i]).any()
        assert not (res.state.pessimistic[i] & ~r_0).any()
    explore = [h for h in res.history if h.phase == "exploration"]
    assert all(not h.rho_observations for h in explore)


def test_unbounded_cap_terminates():
    env = small_obstacle(5, size=8)
    res = safemac_run(env, *gps(env.domain), SafemacConfig(r=2, max_rounds=10 ** 6), 5)
    assert res.converged and not res.stalled
