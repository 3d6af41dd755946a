"""Slow, obviously-correct reference implementations used only by the tests."""
from collections import deque
import itertools
import math

import numpy as np


def bfs_ball(width, height, start, n, allowed=None):
    """Plain-Python BFS over (row, col) pairs, independent of the sparse code."""
    seen = {start: 0}
    todo = deque([start])
    while todo:
        r, c = todo.popleft()
        if seen[(r, c)] == n:
            continue
        for dr, dc in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            nr, nc = r + dr, c + dc
            if 0 <= nr < height and 0 <= nc < width and (nr, nc) not in seen:
                if allowed is not None and not allowed[nr * width + nc]:
                    continue
                seen[(nr, nc)] = seen[(r, c)] + 1
                todo.append((nr, nc))
    return {r * width + c for r, c in seen}


def union_coverage(density, width, height, placements, r, allowed=None):
    """Density mass over the union of BFS balls, divided by the cell count."""
    cells = set()
    for x in placements:
        cells |= bfs_ball(width, height, divmod(int(x), width), r, allowed)
    return sum(float(density[v]) for v in cells) / (width * height)


def exhaustive_best(density, width, height, k, r, allowed=None):
    cand = [v for v in range(width * height) if allowed is None or allowed[v]]
    best = -math.inf
    for combo in itertools.combinations_with_replacement(cand, k):
        best = max(best, union_coverage(density, width, height, combo, r, allowed))
    return best


def pairwise_safe(values, coords, base, lipschitz):
    """Double loop: cells v with some z in base and values[z] - L |z - v| >= 0."""
    out = np.zeros(len(coords), dtype=bool)
    for v in range(len(coords)):
        for z in np.flatnonzero(base):
            if values[z] - lipschitz * math.dist(coords[z], coords[v]) >= 0:
                out[v] = True
                break
    return out
