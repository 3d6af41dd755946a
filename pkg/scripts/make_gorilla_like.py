"""Write a synthetic gorilla-format environment (34x34 grid, all-safe constraint).

The density is a smoothed intensity over clustered synthetic nest sites, a
stand-in for a rate function fitted to real nest counts.  The constraint is a
positive constant so every cell is safe (the "sunny day" setting).

Usage::

    python3 scripts/make_gorilla_like.py [--out data/gorilla_like] [--seed 0]
"""
from __future__ import annotations

import argparse
import math

import numpy as np

from safecoverage.domain import GridDomain
from safecoverage.environments import EnvironmentTruth, lipschitz_bound, save_environment
from safecoverage.rng import stream

WIDTH = HEIGHT = 34
SPACING = 0.1
NOISE_VAR_RHO = 1e-3
NOISE_VAR_Q = 7e-3


def nest_sites(rng: np.random.Generator, extent: float, n_clusters: int = 5,
               per_cluster: tuple[int, int] = (10, 60), spread: float = 0.18) -> np.ndarray:
    """Clustered points: cluster sizes vary a lot so a few dominant peaks appear."""
    centers = rng.uniform(0.15 * extent, 0.85 * extent, size=(n_clusters, 2))
    pts = []
    for c in centers:
        k = int(rng.integers(*per_cluster))
        pts.append(c + spread * rng.standard_normal((k, 2)))
    return np.clip(np.vstack(pts), 0.0, extent)


def smoothed_intensity(coords: np.ndarray, sites: np.ndarray, bandwidth: float = 0.25) -> np.ndarray:
    d2 = ((coords[:, None, :] - sites[None, :, :]) ** 2).sum(-1)
    field = np.exp(-0.5 * d2 / bandwidth ** 2).sum(1)
    return field / field.max()


def make(seed: int) -> EnvironmentTruth:
    domain = GridDomain(WIDTH, HEIGHT, SPACING)
    extent = (WIDTH - 1) * SPACING
    sites = nest_sites(stream(seed, "nests"), extent)
    rho = smoothed_intensity(domain.coords, sites)
    q = np.ones(domain.n)
    starts = stream(seed, "starts").choice(domain.n, size=3, replace=False)
    return EnvironmentTruth(domain, rho, q, tuple(int(s) for s in starts), math.sqrt(NOISE_VAR_RHO),
                            math.sqrt(NOISE_VAR_Q), lipschitz_bound(q, domain), name="gorilla_like")


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="data/gorilla_like")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    for path in save_environment(make(args.seed), args.out).values():
        print(path)


if __name__ == "__main__":
    main()
