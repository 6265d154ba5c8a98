"""Voxel design space: genomes, viability, enumeration, mutation, and the
single-voxel-change neighborhood graph.

A morphology is an assignment of one of five voxel types to each cell of a
small 2D grid (row-major, row 0 at the top). Reflections and rotations are
*not* identified; every fixed grid counts as a distinct morphology. Each
morphology has a dense integer id: the base-5 number whose k-th digit (least
significant first) is the type of cell k, which gives order-stable keys for
dataset files.
"""

from __future__ import annotations

import functools
from collections import deque
from dataclasses import dataclass
from enum import IntEnum

import numpy as np

N_TYPES = 5
MIN_ACTIVE = 3

# Shapes up to this many cells get a precomputed connectivity lookup table.
_MASK_LUT_MAX_CELLS = 16


class VoxelType(IntEnum):
    EMPTY = 0
    SOFT = 1      # passive, low stiffness
    RIGID = 2     # passive, high stiffness
    ACTIVE_H = 3  # horizontally actuated
    ACTIVE_V = 4  # vertically actuated


ACTIVE_TYPES = (VoxelType.ACTIVE_H, VoxelType.ACTIVE_V)
PASSIVE_TYPES = (VoxelType.SOFT, VoxelType.RIGID)

GridShape = tuple[int, int]


@dataclass(frozen=True)
class Morphology:
    """One fixed grid of voxel types; the unit of the design space."""

    cells: tuple[int, ...]
    shape: GridShape = (3, 3)

    def __post_init__(self):
        rows, cols = self.shape
        if len(self.cells) != rows * cols:
            raise ValueError(
                f"expected {rows * cols} cells for shape {self.shape}, got {len(self.cells)}"
            )
        if any(c < 0 or c >= N_TYPES for c in self.cells):
            raise ValueError(f"cell values must be in [0, {N_TYPES}): {self.cells}")

    def cell(self, row: int, col: int) -> int:
        return self.cells[row * self.shape[1] + col]

    @property
    def active_count(self) -> int:
        return sum(1 for c in self.cells if c in (VoxelType.ACTIVE_H, VoxelType.ACTIVE_V))

    @property
    def passive_count(self) -> int:
        return sum(1 for c in self.cells if c in (VoxelType.SOFT, VoxelType.RIGID))

    @property
    def filled_count(self) -> int:
        return sum(1 for c in self.cells if c != VoxelType.EMPTY)

    @property
    def id(self) -> int:
        return morphology_to_id(self)

    def pretty(self) -> str:
        """Multi-line string with one letter per cell (., S, R, H, V)."""
        letters = ".SRHV"
        rows, cols = self.shape
        return "\n".join(
            "".join(letters[self.cells[r * cols + c]] for c in range(cols))
            for r in range(rows)
        )


def morphology_to_id(m: Morphology) -> int:
    """Base-5 positional encoding; cell 0 is the least-significant digit."""
    value = 0
    for k in reversed(range(len(m.cells))):
        value = value * N_TYPES + m.cells[k]
    return value


def id_to_morphology(value: int, shape: GridShape = (3, 3)) -> Morphology:
    rows, cols = shape
    n = rows * cols
    if not 0 <= value < N_TYPES**n:
        raise ValueError(f"id {value} out of range for shape {shape}")
    digits = []
    for _ in range(n):
        digits.append(value % N_TYPES)
        value //= N_TYPES
    return Morphology(tuple(digits), shape)


def _mask_is_connected(mask: int, shape: GridShape) -> bool:
    """True iff the set bits of `mask` are non-empty and 4-connected."""
    if mask == 0:
        return False
    rows, cols = shape
    start = (mask & -mask).bit_length() - 1
    seen = 1 << start
    queue = deque([start])
    while queue:
        k = queue.popleft()
        r, c = divmod(k, cols)
        for rr, cc in ((r - 1, c), (r + 1, c), (r, c - 1), (r, c + 1)):
            if 0 <= rr < rows and 0 <= cc < cols:
                j = rr * cols + cc
                bit = 1 << j
                if mask & bit and not seen & bit:
                    seen |= bit
                    queue.append(j)
    return seen == mask


@functools.lru_cache(maxsize=None)
def _connected_mask_table(shape: GridShape) -> np.ndarray:
    """Boolean table over all occupancy masks: mask -> 4-connected and non-empty."""
    rows, cols = shape
    n = rows * cols
    if n > _MASK_LUT_MAX_CELLS:
        raise ValueError(f"connectivity table not built for {n} cells")
    table = np.zeros(1 << n, dtype=bool)
    for mask in range(1, 1 << n):
        table[mask] = _mask_is_connected(mask, shape)
    return table


def is_viable(m: Morphology) -> bool:
    """Viability: at least MIN_ACTIVE active voxels and a 4-connected body."""
    if m.active_count < MIN_ACTIVE:
        return False
    mask = 0
    for k, c in enumerate(m.cells):
        if c != VoxelType.EMPTY:
            mask |= 1 << k
    n = len(m.cells)
    if n <= _MASK_LUT_MAX_CELLS:
        return bool(_connected_mask_table(m.shape)[mask])
    return _mask_is_connected(mask, m.shape)


@functools.lru_cache(maxsize=None)
def viability_table(shape: GridShape = (3, 3)) -> np.ndarray:
    """Boolean array over the full id space [0, 5^n): id -> viable.

    Vectorized digit extraction; builds in a couple of seconds for 3x3 and is
    cached for the life of the process (the landscape queries lean on it).
    """
    rows, cols = shape
    n = rows * cols
    ids = np.arange(N_TYPES**n, dtype=np.int64)
    rem = ids.copy()
    mask_idx = np.zeros_like(ids)
    active = np.zeros(ids.shape, dtype=np.int8)
    for k in range(n):
        digit = rem % N_TYPES
        rem //= N_TYPES
        mask_idx += (digit > 0).astype(np.int64) << k
        active += digit >= VoxelType.ACTIVE_H
    return _connected_mask_table(shape)[mask_idx] & (active >= MIN_ACTIVE)


def enumerate_viable(shape: GridShape = (3, 3)) -> np.ndarray:
    """All viable morphology ids in ascending order (int64 array)."""
    return np.flatnonzero(viability_table(shape)).astype(np.int64)


def viable_count(shape: GridShape = (3, 3)) -> int:
    return int(viability_table(shape).sum())


def random_viable(rng: np.random.Generator, shape: GridShape = (3, 3)) -> Morphology:
    """Uniformly random viable morphology."""
    ids = enumerate_viable(shape)
    return id_to_morphology(int(ids[rng.integers(len(ids))]), shape)


def _single_change_variants(m: Morphology):
    """All (cell, new_value) grids at Hamming distance exactly 1, viable only."""
    variants = []
    for k in range(len(m.cells)):
        old = m.cells[k]
        for new in range(N_TYPES):
            if new == old:
                continue
            cells = m.cells[:k] + (new,) + m.cells[k + 1 :]
            candidate = Morphology(cells, m.shape)
            if is_viable(candidate):
                variants.append(candidate)
    return variants


def viable_neighbors(m: Morphology) -> list[Morphology]:
    """Viable morphologies at cell-wise Hamming distance 1, sorted by id."""
    return sorted(_single_change_variants(m), key=morphology_to_id)


def mutate_morphology(m: Morphology, rng: np.random.Generator) -> Morphology:
    """Change exactly one voxel, uniformly over all viable single-cell changes.

    Every viable grid has at least one viable single-voxel variant (e.g. any
    soft cell can become rigid, or an active cell the other active type), so
    an empty option set indicates a caller bug.
    """
    options = _single_change_variants(m)
    assert options, f"viable genome with no viable mutants: {m.cells}"
    return options[int(rng.integers(len(options)))]


def _powers(n: int) -> np.ndarray:
    return N_TYPES ** np.arange(n, dtype=np.int64)


def neighbor_ids(value: int, shape: GridShape = (3, 3)) -> np.ndarray:
    """Viable neighbor ids of a viable id (ascending)."""
    m = id_to_morphology(value, shape)
    return np.array([morphology_to_id(v) for v in viable_neighbors(m)], dtype=np.int64)


def bfs_distances(sources, shape: GridShape = (3, 3), stop_at: int | None = None) -> np.ndarray:
    """Shortest-path distance from the nearest source to every viable id.

    Breadth-first search over the implicit single-voxel-change graph,
    vectorized over whole frontiers. Returns an int32 array over the full id
    space; unreachable or non-viable ids hold -1. With `stop_at`, the search
    ends as soon as that id's distance is fixed (entries beyond it stay -1).
    """
    viable = viability_table(shape)
    n = shape[0] * shape[1]
    powers = _powers(n)
    dist = np.full(viable.shape[0], -1, dtype=np.int32)
    frontier = np.asarray(sources, dtype=np.int64).ravel()
    if frontier.size == 0:
        return dist
    if not viable[frontier].all():
        raise ValueError("BFS sources must be viable ids")
    dist[frontier] = 0
    level = 0
    while frontier.size:
        if stop_at is not None and dist[stop_at] >= 0:
            return dist
        nxt = []
        for k in range(n):
            digit = (frontier // powers[k]) % N_TYPES
            base = frontier - digit * powers[k]
            for v in range(N_TYPES):
                cand = base + v * powers[k]
                keep = (digit != v) & viable[cand] & (dist[cand] < 0)
                if keep.any():
                    cand = cand[keep]
                    dist[cand] = level + 1
                    nxt.append(cand)
        level += 1
        frontier = np.unique(np.concatenate(nxt)) if nxt else np.empty(0, dtype=np.int64)
    return dist


def graph_distance(a: int, b: int, shape: GridShape = (3, 3)) -> int | None:
    """Shortest path length between two viable ids; None if unreachable."""
    viable = viability_table(shape)
    for v in (a, b):
        if not (0 <= v < viable.shape[0]) or not viable[v]:
            raise ValueError(f"id {v} is not a viable morphology")
    if a == b:
        return 0
    dist = bfs_distances([a], shape, stop_at=b)
    d = int(dist[b])
    return None if d < 0 else d
