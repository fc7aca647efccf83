"""
Lower layers of the unit square on a dyadic grid.

A lower layer is a finite union of anchored rectangles [0, x]; on the
grid with k = 2^n cells per side it is a downward closed set of cells,
encoded here by its column heights h_0 >= h_1 >= ... >= h_{k-1}. There are
binom(2k, k) of them (empty cell set included): 6 for k = 2, 70 for k = 4.

The collection A_n of the Example adds the point {0} and the empty set to the
non-empty layers, giving binom(2k, k) + 1 members.
"""

import logging
from dataclasses import dataclass
from itertools import combinations_with_replacement
from math import comb
from typing import List, NamedTuple, Tuple

import numpy as np

from src.errors import CapExceededError, DomainError

logger = logging.getLogger(__name__)

# Largest grid side enumerated on request.
MAX_ENUMERATE_SIDE = 6

# Hard limit for the level-3 gap searches (binom(16, 8) = 12870 layers).
MAX_GRID_SIDE = 8


@dataclass(frozen=True)
class LowerLayerGrid:
    """A downward closed set of cells of the k x k grid, by column heights."""
    k: int
    heights: Tuple[int, ...]

    def __post_init__(self):
        if len(self.heights) != self.k:
            raise DomainError(f"expected {self.k} column heights, got {len(self.heights)}")
        if any(h < 0 or h > self.k for h in self.heights):
            raise DomainError(f"column heights must lie in [0, {self.k}]")
        if any(a < b for a, b in zip(self.heights, self.heights[1:])):
            raise DomainError("column heights must be non-increasing")

    @property
    def cells(self) -> np.ndarray:
        """Boolean k x k occupancy, indexed [column, row]."""
        rows = np.arange(self.k)
        return rows[None, :] < np.array(self.heights)[:, None]

    @property
    def cell_count(self) -> int:
        return int(sum(self.heights))

    @property
    def measure(self) -> float:
        return self.cell_count / float(self.k * self.k)

    def corners(self) -> List[Tuple[float, float]]:
        """Corners x of the maximal rectangles [0, x] whose union is the layer."""
        out = []
        for i, h in enumerate(self.heights):
            if h == 0:
                break
            nxt = self.heights[i + 1] if i + 1 < self.k else 0
            if h > nxt:
                out.append(((i + 1) / self.k, h / self.k))
        return out

    def bitmask(self) -> int:
        mask = 0
        for i, h in enumerate(self.heights):
            for j in range(h):
                mask |= 1 << (i * self.k + j)
        return mask

    def contains(self, other: "LowerLayerGrid") -> bool:
        return all(a >= b for a, b in zip(self.heights, other.heights))


class LowerLayerCount(NamedTuple):
    core: int
    with_conventions: int


def _check_side(k: int, cap: int = MAX_GRID_SIDE) -> int:
    if k < 1:
        raise DomainError(f"grid side must be >= 1, got {k}")
    cap = min(cap, MAX_GRID_SIDE)
    if k > cap:
        raise CapExceededError("lower-layer grid side", k, cap)
    return k


def lower_layers_enumerate(
    grid_size: int, cap: int = MAX_ENUMERATE_SIDE
) -> Tuple[LowerLayerCount, List[LowerLayerGrid]]:
    """
    Enumerate the lower layers of the grid_size x grid_size cell grid.

    Args:
        grid_size: Cells per side
        cap: Largest side accepted; the gap searches of level 3 raise it to
            MAX_GRID_SIDE, never beyond

    Returns:
        (counts, layers): counts.core is binom(2k, k) and includes the empty
        cell set; counts.with_conventions replaces it by the two conventional
        members {0} and the empty set.
    """
    k = _check_side(grid_size, cap)
    layers = [
        LowerLayerGrid(k=k, heights=tuple(sorted(combo, reverse=True)))
        for combo in combinations_with_replacement(range(k + 1), k)
    ]
    layers.sort(key=lambda layer: (layer.cell_count, layer.heights))
    count = LowerLayerCount(core=len(layers), with_conventions=len(layers) + 1)
    assert count.core == comb(2 * k, k)
    logger.debug("%dx%d grid: %d lower layers", k, k, count.core)
    return count, layers


def lower_layers_min_gap(n: int) -> float:
    """
    min over U in A_n and V in A_n strictly containing U of m(V \\ U).

    Computed by exhaustive search over the enumerated layers; it equals one
    cell, 2^-2n.
    """
    if n < 0:
        raise DomainError(f"dyadic level must be >= 0, got {n}")
    k = _check_side(2 ** n)
    _, layers = lower_layers_enumerate(k, cap=MAX_GRID_SIDE)
    masks = np.array([layer.bitmask() for layer in layers], dtype=np.uint64)
    counts = np.array([layer.cell_count for layer in layers], dtype=np.int64)
    best = None
    for mask, count in zip(masks, counts):
        supersets = (masks & mask) == mask
        supersets &= counts > count
        if not supersets.any():
            continue
        gap = int(np.min(counts[supersets] - count))
        best = gap if best is None else min(best, gap)
    if best is None:
        raise DomainError(f"level {n} has no strictly nested pair of lower layers")
    return best / float(k * k)
