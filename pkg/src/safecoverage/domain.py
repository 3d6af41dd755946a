"""Grid-graph domain: locations, 4-connected adjacency, hop reachability and sensing disks.

Sets of locations are passed around as boolean masks of shape ``(n_cells,)``.
Every function that takes a set also accepts an iterable of location ids.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Union

import numpy as np
import scipy.sparse as sp

SetLike = Union[np.ndarray, Iterable[int]]


class InconsistentAssignmentError(ValueError):
    """A placement lies outside the set it is restricted to."""


@dataclass(frozen=True, eq=False)
class GridDomain:
    """Rectangular 4-connected grid, ids in row-major order.

    Parameters
    ----------
    width, height : int
        Number of columns and rows.
    spacing : float
        Physical length of one cell edge.
    """

    width: int
    height: int
    spacing: float = 0.1
    _disk_cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError("grid must have at least one cell")
        if self.width * self.height < 2:
            raise ValueError("grid must have at least two cells")
        if not self.spacing > 0:
            raise ValueError("spacing must be positive")

    @property
    def n(self) -> int:
        return self.width * self.height

    def __len__(self) -> int:
        return self.n

    def index(self, row: int, col: int) -> int:
        if not (0 <= row < self.height and 0 <= col < self.width):
            raise IndexError(f"cell ({row}, {col}) outside {self.height}x{self.width} grid")
        return row * self.width + col

    def row_col(self, v: int) -> tuple[int, int]:
        return divmod(int(v), self.width)

    @cached_property
    def coords(self) -> np.ndarray:
        rows, cols = np.divmod(np.arange(self.n), self.width)
        return np.column_stack([cols * self.spacing, rows * self.spacing]).astype(float)

    @cached_property
    def adjacency(self) -> sp.csr_matrix:
        ids = np.arange(self.n).reshape(self.height, self.width)
        right = np.column_stack([ids[:, :-1].ravel(), ids[:, 1:].ravel()])
        down = np.column_stack([ids[:-1, :].ravel(), ids[1:, :].ravel()])
        edges = np.vstack([right, down])
        rows = np.concatenate([edges[:, 0], edges[:, 1]])
        cols = np.concatenate([edges[:, 1], edges[:, 0]])
        data = np.ones(len(rows), dtype=np.int32)
        return sp.csr_matrix((data, (rows, cols)), shape=(self.n, self.n))

    @cached_property
    def edges(self) -> np.ndarray:
        """Undirected edge list, shape (n_edges, 2), each edge once with a < b."""
        coo = sp.triu(self.adjacency).tocoo()
        return np.column_stack([coo.row, coo.col])

    def neighbors(self, v: int) -> np.ndarray:
        a = self.adjacency
        return a.indices[a.indptr[v]:a.indptr[v + 1]]

    @cached_property
    def distances(self) -> np.ndarray:
        """Dense pairwise Euclidean distance matrix."""
        rows, cols = np.divmod(np.arange(self.n), self.width)
        dr = rows[:, None] - rows[None, :]
        dc = cols[:, None] - cols[None, :]
        # integer offsets keep axis-aligned neighbors at exactly `spacing`
        return self.spacing * np.sqrt((dr * dr + dc * dc).astype(float))

    def mask(self, ids: SetLike) -> np.ndarray:
        return as_mask(self, ids)

    def full(self) -> np.ndarray:
        return np.ones(self.n, dtype=bool)

    def empty(self) -> np.ndarray:
        return np.zeros(self.n, dtype=bool)


def as_mask(domain: GridDomain, s: SetLike | None) -> np.ndarray:
    """Convert a mask or iterable of ids into a fresh boolean mask."""
    if s is None:
        return np.ones(domain.n, dtype=bool)
    if isinstance(s, np.ndarray) and s.dtype == bool:
        if s.shape != (domain.n,):
            raise ValueError(f"mask has shape {s.shape}, expected ({domain.n},)")
        return s.copy()
    out = np.zeros(domain.n, dtype=bool)
    idx = np.fromiter((int(v) for v in s), dtype=np.int64)
    if idx.size:
        if idx.min() < 0 or idx.max() >= domain.n:
            raise IndexError("location id out of range")
        out[idx] = True
    return out


def ids(mask: np.ndarray) -> list[int]:
    return np.flatnonzero(mask).tolist()


def _step(domain: GridDomain, reached: np.ndarray) -> np.ndarray:
    return (domain.adjacency @ reached.astype(np.int32)) > 0


def n_step_reach(domain: GridDomain, seed: SetLike, n: int, restrict: SetLike | None = None) -> np.ndarray:
    """Seed plus every location within ``n`` hops, walking only inside ``restrict``."""
    if n < 0:
        raise ValueError("n must be non-negative")
    reached = as_mask(domain, seed)
    allowed = as_mask(domain, restrict)
    for _ in range(n):
        grown = reached | (_step(domain, reached) & allowed)
        if np.array_equal(grown, reached):
            break
        reached = grown
    return reached


def reach_closure(domain: GridDomain, seed: SetLike, restrict: SetLike | None = None) -> np.ndarray:
    """Connected-component closure of ``seed`` (fixed point of ``n_step_reach``)."""
    return n_step_reach(domain, seed, domain.n, restrict)


def hop_distance(domain: GridDomain, sources: SetLike, restrict: SetLike | None = None) -> np.ndarray:
    """Multi-source BFS layer index; ``inf`` where unreachable."""
    reached = as_mask(domain, sources)
    allowed = as_mask(domain, restrict)
    dist = np.full(domain.n, np.inf)
    dist[reached] = 0.0
    level = 0
    while True:
        level += 1
        grown = reached | (_step(domain, reached) & allowed)
        new = grown & ~reached
        if not new.any():
            return dist
        dist[new] = level
        reached = grown


def distance(domain: GridDomain, a: int, b: int) -> float:
    (ra, ca), (rb, cb) = domain.row_col(a), domain.row_col(b)
    return float(domain.spacing * np.hypot(ra - rb, ca - cb))


@dataclass(frozen=True)
class Disk:
    center: int
    members: np.ndarray  # sorted ids

    def __len__(self):
        return len(self.members)

    def __contains__(self, v):
        i = np.searchsorted(self.members, v)
        return i < len(self.members) and self.members[i] == v


def disk(domain: GridDomain, center: int, r: int, restrict: SetLike | None = None,
         path_restricted: bool = True) -> Disk:
    """Sensing disk of radius ``r`` hops around ``center``.

    With ``path_restricted`` the BFS never leaves ``restrict``; otherwise the
    unrestricted disk is intersected with ``restrict``.
    """
    allowed = as_mask(domain, restrict)
    if not allowed[center]:
        raise InconsistentAssignmentError(f"center {center} is outside the restriction set")
    if path_restricted:
        members = n_step_reach(domain, [center], r, allowed)
    else:
        members = n_step_reach(domain, [center], r) & allowed
    return Disk(int(center), np.flatnonzero(members))


def disk_matrix(domain: GridDomain, r: int, restrict: SetLike | None = None,
                path_restricted: bool = True) -> sp.csr_matrix:
    """Sparse 0/1 matrix whose row ``c`` is the disk around ``c``.

    Rows of centers outside ``restrict`` are empty. Results are cached on the
    domain keyed by the restriction mask.
    """
    allowed = as_mask(domain, restrict)
    key = (int(r), bool(path_restricted), np.packbits(allowed).tobytes())
    cached = domain._disk_cache.get(key)
    if cached is not None:
        return cached
    if len(domain._disk_cache) > 256:
        domain._disk_cache.clear()
    keep = sp.diags(allowed.astype(np.float64))
    if path_restricted:
        step = (keep @ domain.adjacency @ keep).tocsr()
        reach = keep.tocsr()
        for _ in range(r):
            reach = reach + reach @ step
            reach.data[:] = 1.0
    else:
        full = sp.identity(domain.n, format="csr")
        step = domain.adjacency.astype(np.float64)
        for _ in range(r):
            full = full + full @ step
            full.data[:] = 1.0
        reach = keep @ full @ keep
    reach = sp.csr_matrix(reach)
    reach.eliminate_zeros()
    reach.data[:] = 1.0
    reach.sort_indices()
    domain._disk_cache[key] = reach
    return reach


def disk_mask(domain: GridDomain, center: int, r: int, restrict: SetLike | None = None,
              path_restricted: bool = True) -> np.ndarray:
    m = disk_matrix(domain, r, restrict, path_restricted)
    out = np.zeros(domain.n, dtype=bool)
    out[m.indices[m.indptr[center]:m.indptr[center + 1]]] = True
    return out
