"""
Dyadic approximation of the indexing collection.

Mathematical Foundation:
    A_n     = { [0, l / 2^n] : l in {0, ..., 2^n}^N }          |A_n| = (2^n + 1)^N
    g_n(U)  = [0, ceil(2^n u) / 2^n]                          (smallest A_n set containing U)
    C_n(t)  = [0, t^n] \\ U_k [0, (t^n_1, ..., t~^n_k, ..., t^n_N)]

    with, per coordinate, t^n_j = t_j if 2^n t_j is an integer and
    floor(2^n t_j + 1) / 2^n otherwise, and t~^n_j = t^n_j - 2^-n.
    C_n(t) is the half-open dyadic cell (t~^n, t^n] containing t, of
    measure 2^-nN, and C_{n+1}(t) is a subset of C_n(t).
"""

import logging
import math
from dataclasses import dataclass
from itertools import product
from typing import List, Sequence

from src.errors import CapExceededError, DomainError
from src.geometry.rects import CSet, Rect, as_point, rect_intersect

logger = logging.getLogger(__name__)

# Hard limit on the number of sets enumerate_An() may materialize.
MAX_ENUMERATION = 1 << 20


@dataclass(frozen=True)
class DyadicLevel:
    """Level n of the dyadic grid in dimension N."""
    n: int
    dim: int

    def __post_init__(self):
        if self.n < 0:
            raise DomainError(f"dyadic level must be >= 0, got {self.n}")
        if self.dim < 1:
            raise DomainError(f"dimension must be >= 1, got {self.dim}")

    @property
    def step(self) -> float:
        return 2.0 ** -self.n

    @property
    def k_n(self) -> int:
        """Number of non-empty sets of A_n."""
        return (2 ** self.n + 1) ** self.dim


def g_n(rect: Rect, n: int) -> Rect:
    """
    Smallest set of A_n containing rect (ceiling convention).

    Args:
        rect: Non-empty rectangle
        n: Dyadic level

    Returns:
        [0, ceil(2^n u) / 2^n]
    """
    if rect.empty:
        raise DomainError("g_n is defined on non-empty sets only")
    if n < 0:
        raise DomainError(f"dyadic level must be >= 0, got {n}")
    scale = 2 ** n
    return Rect(corner=tuple(math.ceil(c * scale) / scale for c in rect.corner))


def enumerate_An(
    level: DyadicLevel, include_empty: bool = False, cap: int = MAX_ENUMERATION
) -> List[Rect]:
    """
    All sets of A_n, in lexicographic order of their corners.

    The empty set is prepended when include_empty is set; it is not counted
    in level.k_n.
    """
    if level.k_n > cap:
        raise CapExceededError(f"A_{level.n} in dimension {level.dim}", level.k_n, cap)
    scale = 2 ** level.n
    ticks = [i / scale for i in range(scale + 1)]
    sets = [Rect(corner=corner) for corner in product(ticks, repeat=level.dim)]
    if include_empty:
        sets.insert(0, Rect.empty_set())
    logger.debug("enumerated %d sets of A_%d (N=%d)", len(sets), level.n, level.dim)
    return sets


def _neighbourhood_corners(t: Sequence[float], n: int):
    scale = 2 ** n
    upper, lower = [], []
    for tj in t:
        s = tj * scale
        if s == math.floor(s):
            hi = s
        else:
            hi = math.floor(s + 1.0)
        upper.append(hi / scale)
        lower.append((hi - 1.0) / scale)
    return upper, lower


def left_neighbourhood(t: Sequence[float], n: int) -> CSet:
    """
    The dyadic cell C_n(t) of level n containing t, as a set of the class C.

    Args:
        t: Point of the open cube (0,1)^N
        n: Dyadic level

    Returns:
        [0, t^n] minus the N rectangles obtained by lowering one coordinate
        of t^n to t~^n
    """
    point = as_point(t)
    if any(c <= 0.0 or c >= 1.0 for c in point):
        raise DomainError(f"left neighbourhoods need t in the open cube, got {point}")
    if n < 0:
        raise DomainError(f"dyadic level must be >= 0, got {n}")
    upper, lower = _neighbourhood_corners(point, n)
    subtracted = []
    for k in range(len(point)):
        corner = list(upper)
        corner[k] = lower[k]
        subtracted.append(Rect(corner=tuple(corner)))
    return CSet(base=Rect(corner=tuple(upper)), subtracted=tuple(subtracted))


def rectangular_increment(u: Sequence[float], v: Sequence[float]) -> CSet:
    """
    The box (u, v] written as a set of the class C.

    Its measure is prod_i (v_i - u_i), and the increment of a process on it
    is the usual N-dimensional rectangular increment.
    """
    lo, hi = as_point(u), as_point(v)
    if len(lo) != len(hi):
        raise DomainError(f"dimension mismatch: {len(lo)} vs {len(hi)}")
    if any(a > b for a, b in zip(lo, hi)):
        raise DomainError(f"rectangular increment needs u <= v, got {lo} and {hi}")
    subtracted = []
    for i in range(len(hi)):
        corner = list(hi)
        corner[i] = lo[i]
        subtracted.append(Rect(corner=tuple(corner)))
    return CSet(base=Rect(corner=hi), subtracted=tuple(subtracted))


def consistent_ordering(family: Sequence[Rect]) -> List[Rect]:
    """
    Deduplicate family and order it so that A_i strictly inside A_j implies i < j.

    A strict inclusion of anchored rectangles strictly lowers the corner sum,
    so sorting on (corner sum, corner) is consistent.
    """
    unique = {r for r in family}
    return sorted(unique, key=lambda r: (-1.0, ()) if r.empty else (sum(r.corner), r.corner))


def left_neighbourhoods(family: Sequence[Rect]) -> List[CSet]:
    """
    Left neighbourhoods C_i = A_i \\ (A_1 u ... u A_{i-1}) of a consistent ordering.

    Only the maximal proper intersections A_j n A_i are subtracted; their
    union equals the union of all earlier sets met with A_i. For a family
    closed under intersection the measures of the C_i sum to the measure of
    the union of the family.
    """
    ordered = [r for r in consistent_ordering(family) if not r.empty]
    result = []
    for i, a in enumerate(ordered):
        inner = {rect_intersect(b, a) for b in ordered[:i]}
        inner.discard(a)
        inner = {r for r in inner if not r.empty}
        maximal = [
            r for r in inner if not any(o != r and o.contains(r) for o in inner)
        ]
        maximal.sort(key=lambda r: r.corner)
        result.append(CSet(base=a, subtracted=tuple(maximal)))
    return result
