"""Ground-truth environments: GP-sampled fields, obstacle maps, CSV/JSON grid files."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Sequence

import numpy as np

from .domain import GridDomain
from .gp import KernelSpec
from .rng import stream

FILE_FORMAT = "safecoverage-grid/1"
# generous margin: the q-GP cannot follow sharp constraint kinks exactly
LIPSCHITZ_SAFETY_FACTOR = 2.0
OBSTACLE_INTERIOR_OFFSET = 1e-6


class EnvironmentFileError(ValueError):
    """Invalid environment files; ``code`` names the failure."""

    def __init__(self, code: str, message: str):
        super().__init__(f"[{code}] {message}")
        self.code = code


class SamplingError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class EnvironmentTruth:
    domain: GridDomain
    density: np.ndarray
    constraint: np.ndarray
    seeds: tuple[int, ...]
    noise_rho: float = math.sqrt(1e-3)
    noise_q: float = math.sqrt(1e-3)
    lipschitz_q: float = 1.0
    name: str = "custom"
    obstacles: tuple = field(default=())

    def __post_init__(self):
        if self.density.shape != (self.domain.n,) or self.constraint.shape != (self.domain.n,):
            raise ValueError("fields must have one value per cell")
        if any(self.constraint[s] < 0 for s in self.seeds):
            raise ValueError("every seed must satisfy q >= 0")

    @property
    def safe(self) -> np.ndarray:
        return self.constraint >= 0


def empirical_lipschitz(values: np.ndarray, domain: GridDomain, pairs: str = "all") -> float:
    """Largest ``|f(a) - f(b)| / d(a, b)`` over all cell pairs or over grid edges."""
    values = np.asarray(values, dtype=float)
    if pairs == "edges":
        e = domain.edges
        return float(np.max(np.abs(values[e[:, 0]] - values[e[:, 1]])) / domain.spacing)
    if pairs != "all":
        raise ValueError(pairs)
    d = domain.distances
    diff = np.abs(values[:, None] - values[None, :])
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(d > 0, diff / np.where(d > 0, d, 1.0), 0.0)
    return float(ratio.max())


def lipschitz_bound(values: np.ndarray, domain: GridDomain) -> float:
    return max(LIPSCHITZ_SAFETY_FACTOR * empirical_lipschitz(values, domain), 1e-9)


@lru_cache(maxsize=8)
def _prior_sqrt(kernel: KernelSpec, width: int, height: int, spacing: float) -> np.ndarray:
    coords = GridDomain(width, height, spacing).coords
    cov = kernel(coords, coords)
    evals, evecs = np.linalg.eigh(0.5 * (cov + cov.T))
    return evecs * np.sqrt(np.clip(evals, 0.0, None))


def sample_gp_field(domain: GridDomain, kernel: KernelSpec, rng: np.random.Generator) -> np.ndarray:
    """Exact zero-mean prior draw on every cell (eigendecomposition, clipped at 0)."""
    root = _prior_sqrt(kernel, domain.width, domain.height, float(domain.spacing))
    return root @ rng.standard_normal(domain.n)


def make_density_nonnegative(rho: np.ndarray, mode: str = "shift") -> np.ndarray:
    if mode == "shift":
        return rho - rho.min()
    if mode == "clamp":
        return np.maximum(rho, 0.0)
    raise ValueError(f"unknown density transform {mode!r}")


def choose_seeds(constraint: np.ndarray, n_agents: int, rng: np.random.Generator,
                 margin: float) -> tuple[int, ...] | None:
    ok = np.flatnonzero(constraint >= margin)
    if ok.size == 0:
        return None
    return tuple(int(v) for v in rng.choice(ok, size=n_agents, replace=ok.size < n_agents))


def sample_gp_environment(domain: GridDomain, kernel_rho: KernelSpec, kernel_q: KernelSpec, rng_seed: int,
                          n_agents: int = 3, noise_var_rho: float = 1e-3, noise_var_q: float = 1e-3,
                          seed_margin: float = 0.2, density_transform: str = "shift",
                          max_attempts: int = 100) -> EnvironmentTruth:
    rho = make_density_nonnegative(sample_gp_field(domain, kernel_rho, stream(rng_seed, "rho")),
                                   density_transform)
    for attempt in range(max_attempts):
        q = sample_gp_field(domain, kernel_q, stream(rng_seed, "q", attempt))
        seeds = choose_seeds(q, n_agents, stream(rng_seed, "seeds", attempt), seed_margin)
        if seeds is not None:
            return EnvironmentTruth(domain, rho, q, seeds, math.sqrt(noise_var_rho), math.sqrt(noise_var_q),
                                    lipschitz_bound(q, domain), name="gp")
    raise SamplingError(f"no cell with q >= {seed_margin} after {max_attempts} constraint samples")


@dataclass(frozen=True)
class ObstacleSpec:
    """Axis-aligned blocks as ``((x0, y0), (x1, y1))`` bottom-left / top-right corners."""

    blocks: tuple[tuple[tuple[float, float], tuple[float, float]], ...]

    def validate(self, domain: GridDomain):
        xmax = (domain.width - 1) * domain.spacing
        ymax = (domain.height - 1) * domain.spacing
        for (x0, y0), (x1, y1) in self.blocks:
            if not (x0 <= x1 and y0 <= y1):
                raise ValueError("obstacle corners must be ordered bottom-left, top-right")
            if x0 < -1e-9 or y0 < -1e-9 or x1 > xmax + 1e-9 or y1 > ymax + 1e-9:
                raise ValueError("obstacle outside the domain")


def obstacle_distance(domain: GridDomain, spec: ObstacleSpec) -> np.ndarray:
    """Euclidean distance from each cell center to the nearest block (0 inside)."""
    x, y = domain.coords[:, 0], domain.coords[:, 1]
    best = np.full(domain.n, np.inf)
    for (x0, y0), (x1, y1) in spec.blocks:
        dx = np.maximum.reduce([x0 - x, np.zeros_like(x), x - x1])
        dy = np.maximum.reduce([y0 - y, np.zeros_like(y), y - y1])
        best = np.minimum(best, np.hypot(dx, dy))
    return best


def obstacle_constraint(d_m: np.ndarray) -> np.ndarray:
    q = 1.0 / (1.0 + np.exp(-1.5 * np.asarray(d_m, dtype=float))) - 0.5
    return np.where(np.asarray(d_m) <= 0.0, q - OBSTACLE_INTERIOR_OFFSET, q)


def sample_obstacle_spec(domain: GridDomain, rng: np.random.Generator, n_blocks: tuple[int, int] = (3, 6),
                         size: tuple[float, float] = (0.3, 0.9)) -> ObstacleSpec:
    xmax = (domain.width - 1) * domain.spacing
    ymax = (domain.height - 1) * domain.spacing
    blocks = []
    for _ in range(int(rng.integers(n_blocks[0], n_blocks[1] + 1))):
        w, h = rng.uniform(*size, size=2)
        w, h = min(w, xmax), min(h, ymax)
        x0 = rng.uniform(0.0, xmax - w)
        y0 = rng.uniform(0.0, ymax - h)
        blocks.append(((float(x0), float(y0)), (float(x0 + w), float(y0 + h))))
    return ObstacleSpec(tuple(blocks))


def obstacle_environment(domain: GridDomain, spec: ObstacleSpec | None, kernel_rho: KernelSpec, rng_seed: int,
                         n_agents: int = 3, noise_var_rho: float = 1e-3, noise_var_q: float = 1e-3,
                         seed_margin: float = 0.2, density_transform: str = "shift") -> EnvironmentTruth:
    """Density drawn from the GP prior, constraint from distance to the blocks.

    ``spec=None`` samples random blocks from the run seed.
    """
    if spec is None:
        spec = sample_obstacle_spec(domain, stream(rng_seed, "obstacles"))
    spec.validate(domain)
    q = obstacle_constraint(obstacle_distance(domain, spec))
    if not np.any(q >= 0):
        raise ValueError("every cell lies inside an obstacle")
    rho = make_density_nonnegative(sample_gp_field(domain, kernel_rho, stream(rng_seed, "rho")),
                                   density_transform)
    seeds = choose_seeds(q, n_agents, stream(rng_seed, "seeds"), seed_margin)
    if seeds is None:
        seeds = choose_seeds(q, n_agents, stream(rng_seed, "seeds"), 0.0)
    return EnvironmentTruth(domain, rho, q, seeds, math.sqrt(noise_var_rho), math.sqrt(noise_var_q),
                            lipschitz_bound(q, domain), name="obstacle", obstacles=spec.blocks)


def save_environment(env: EnvironmentTruth, directory: str | Path) -> dict[str, Path]:
    """Write ``density.csv``, ``constraint.csv`` and ``meta.json`` into ``directory``."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    shape = (env.domain.height, env.domain.width)
    paths = {"density": out / "density.csv", "constraint": out / "constraint.csv", "meta": out / "meta.json"}
    np.savetxt(paths["density"], env.density.reshape(shape), delimiter=",", fmt="%.17g")
    np.savetxt(paths["constraint"], env.constraint.reshape(shape), delimiter=",", fmt="%.17g")
    meta = {
        "format": FILE_FORMAT,
        "width": env.domain.width,
        "height": env.domain.height,
        "spacing": env.domain.spacing,
        "seeds": [list(env.domain.row_col(s)) for s in env.seeds],
        "noise_std_rho": env.noise_rho,
        "noise_std_q": env.noise_q,
        "lipschitz_q": env.lipschitz_q,
        "name": env.name,
    }
    paths["meta"].write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return paths


def _read_grid(path: Path, what: str) -> np.ndarray:
    try:
        grid = np.loadtxt(path, delimiter=",", ndmin=2, dtype=float, encoding="utf-8")
    except ValueError as exc:
        raise EnvironmentFileError("parse_error", f"{what}: {exc}") from exc
    if not np.all(np.isfinite(grid)):
        raise EnvironmentFileError("non_finite", f"{what} contains non-finite cells")
    return grid


def load_environment(density_path: str | Path, constraint_path: str | Path, meta_path: str | Path,
                     seeds_path: str | Path | None = None, clamp_density: bool = False) -> EnvironmentTruth:
    """Read a grid environment; seeds come from ``seeds_path`` (CSV of row,col) or the sidecar."""
    meta = json.loads(Path(meta_path).read_text(encoding="utf-8"))
    rho = _read_grid(Path(density_path), "density")
    q = _read_grid(Path(constraint_path), "constraint")
    if rho.shape != q.shape:
        raise EnvironmentFileError("shape_mismatch", f"density {rho.shape} vs constraint {q.shape}")
    height, width = rho.shape
    if (meta.get("height", height), meta.get("width", width)) != (height, width):
        raise EnvironmentFileError("shape_mismatch", "grid shape disagrees with meta.json")
    if clamp_density or meta.get("clamp_density", False):
        rho = np.maximum(rho, 0.0)
    if np.any(rho < 0):
        raise EnvironmentFileError("negative_density", "density must be non-negative")
    domain = GridDomain(width, height, float(meta.get("spacing", 0.1)))
    if seeds_path is not None:
        pairs = np.loadtxt(seeds_path, delimiter=",", ndmin=2, dtype=int)
    else:
        pairs = np.asarray(meta.get("seeds", []), dtype=int).reshape(-1, 2)
    if len(pairs) == 0:
        raise EnvironmentFileError("no_seeds", "no seed locations given")
    try:
        seeds = tuple(domain.index(int(r), int(c)) for r, c in pairs)
    except IndexError as exc:
        raise EnvironmentFileError("bad_seed", str(exc)) from exc
    q_flat, rho_flat = q.ravel(), rho.ravel()
    if any(q_flat[s] < 0 for s in seeds):
        raise EnvironmentFileError("unsafe_seed", "a seed location has q < 0")
    lip = meta.get("lipschitz_q")
    if lip is None:
        lip = lipschitz_bound(q_flat, domain)
    return EnvironmentTruth(domain, rho_flat, q_flat, seeds,
                            float(meta.get("noise_std_rho", math.sqrt(1e-3))),
                            float(meta.get("noise_std_q", math.sqrt(7e-3))),
                            float(lip), name=str(meta.get("name", "file")))


def load_environment_dir(directory: str | Path, **kwargs) -> EnvironmentTruth:
    d = Path(directory)
    return load_environment(d / "density.csv", d / "constraint.csv", d / "meta.json", **kwargs)


def with_seeds(env: EnvironmentTruth, seeds: Sequence[int]) -> EnvironmentTruth:
    return EnvironmentTruth(env.domain, env.density, env.constraint, tuple(int(s) for s in seeds),
                            env.noise_rho, env.noise_q, env.lipschitz_q, env.name, env.obstacles)
