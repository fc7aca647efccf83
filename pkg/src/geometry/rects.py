"""
Rectangles [0, u] of [0,1]^N, the class C of differences U0 \\ (V1 u ... u Vk),
Lebesgue measures and the two distances used on the indexing collection.

Mathematical Foundation:
    m([0,u])        = prod_i u_i
    m(U0 \\ uVi)     = m(U0) - m(U0 n uVi)
    d_m(U, V)       = m(U) + m(V) - 2 m(U n V)          (measure of U sym-diff V)
    d_H([0,u],[0,v]) = max_i |u_i - v_i|                  (sup-norm Hausdorff)

Unions are measured either by inclusion-exclusion over componentwise-min
intersections (exact, merged on identical intersections so nested or repeated
sets cancel) or by a coordinate-compressed sweep over the grid of distinct
corner coordinates.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from decimal import Decimal
from typing import Any, Dict, Iterable, List, Sequence, Tuple, Union

import numpy as np

from src.errors import CapExceededError, DomainError, EmptySetError

logger = logging.getLogger(__name__)

Point = Tuple[float, ...]

# Inclusion-exclusion is used up to this many rectangles in measure_union.
IE_MAX_TERMS = 24

# Coordinates whose 2^20 multiple is integral are written as exact decimals.
_JSON_DYADIC_BITS = 20

MEASURE_TOL = 1e-12


def as_point(coords: Iterable[float]) -> Point:
    """Validate and freeze a point of [0,1]^N."""
    point = tuple(float(c) for c in coords)
    if not point:
        raise DomainError("a point needs at least one coordinate")
    for c in point:
        if not (0.0 <= c <= 1.0):
            raise DomainError(f"coordinate {c} outside [0, 1]")
    return point


@dataclass(frozen=True)
class Rect:
    """
    The rectangle [0, corner] of [0,1]^N, or the empty set.

    The empty set carries an empty corner tuple, so all empty rectangles
    compare equal whatever dimension they were built for.
    """
    corner: Point = ()
    empty: bool = False

    def __post_init__(self):
        if self.empty:
            object.__setattr__(self, "corner", ())
        else:
            object.__setattr__(self, "corner", as_point(self.corner))

    @classmethod
    def of(cls, *coords: float) -> "Rect":
        return cls(corner=tuple(coords))

    @classmethod
    def empty_set(cls) -> "Rect":
        return cls(empty=True)

    @property
    def dim(self) -> int:
        return len(self.corner)

    @property
    def measure(self) -> float:
        if self.empty:
            return 0.0
        return float(np.prod(self.corner))

    def intersect(self, other: "Rect") -> "Rect":
        return rect_intersect(self, other)

    def contains(self, other: "Rect") -> bool:
        """True when other is a subset of self."""
        if other.empty:
            return True
        if self.empty:
            return False
        return all(o <= s for o, s in zip(other.corner, self.corner))

    def contains_point(self, point: Sequence[float]) -> bool:
        if self.empty:
            return False
        return all(0.0 <= p <= c for p, c in zip(point, self.corner))

    def to_json(self) -> Dict[str, Any]:
        if self.empty:
            return {"empty": True}
        return {"corner": [_coord_to_json(c) for c in self.corner]}

    @classmethod
    def from_json(cls, data: Dict[str, Any]) -> "Rect":
        if data.get("empty"):
            return cls.empty_set()
        return cls(corner=tuple(float(c) for c in data["corner"]))

    def __str__(self) -> str:
        if self.empty:
            return "{}"
        return "[0,(" + ",".join(f"{c:g}" for c in self.corner) + ")]"


@dataclass(frozen=True)
class CSet:
    """
    A set C = base \\ (V1 u ... u Vk) of the class C.

    The representation is not canonical: appending a subtracted set already
    covered by another one, duplicating one, or permuting them denotes the
    same point set. Every consumer goes through inclusion_exclusion_terms(),
    which merges identical intersections, so results depend on the point set
    only.
    """
    base: Rect
    subtracted: Tuple[Rect, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "subtracted", tuple(self.subtracted))

    @property
    def k(self) -> int:
        return len(self.subtracted)

    @property
    def measure(self) -> float:
        return measure_cset(self)

    def contains_point(self, point: Sequence[float]) -> bool:
        if not self.base.contains_point(point):
            return False
        return not any(v.contains_point(point) for v in self.subtracted)

    def to_json(self) -> Dict[str, Any]:
        return {"base": self.base.to_json(), "sub": [v.to_json() for v in self.subtracted]}

    @classmethod
    def from_json(cls, data: Dict[str, Any]) -> "CSet":
        return cls(
            base=Rect.from_json(data["base"]),
            subtracted=tuple(Rect.from_json(v) for v in data.get("sub", [])),
        )

    def __str__(self) -> str:
        if not self.subtracted:
            return str(self.base)
        return f"{self.base} \\ {{" + ", ".join(str(v) for v in self.subtracted) + "}"


def _coord_to_json(c: float) -> Union[str, float]:
    scaled = c * (1 << _JSON_DYADIC_BITS)
    if scaled == int(scaled):
        return format(Decimal(c), "f")
    return c


def rect_measure(rect: Rect) -> float:
    """Lebesgue measure of [0, corner]; 0 for the empty set."""
    return rect.measure


def rect_intersect(u: Rect, v: Rect) -> Rect:
    """Componentwise-min corner; empty if either operand is empty."""
    if u.empty or v.empty:
        return Rect.empty_set()
    if u.dim != v.dim:
        raise DomainError(f"dimension mismatch: {u.dim} vs {v.dim}")
    return Rect(corner=tuple(min(a, b) for a, b in zip(u.corner, v.corner)))


def _merge_add(terms: Dict[Rect, int], rect: Rect, coef: int) -> None:
    if rect.empty or coef == 0:
        return
    total = terms.get(rect, 0) + coef
    if total == 0:
        terms.pop(rect, None)
    else:
        terms[rect] = total


def union_terms(rects: Sequence[Rect]) -> Dict[Rect, int]:
    """
    Signed inclusion-exclusion expansion of 1_{R1 u ... u Rk}.

    Returns {intersection rect: integer coefficient}. Identical intersections
    are merged as they appear, so the dictionary stays small for nested or
    repeated inputs.
    """
    terms: Dict[Rect, int] = {}
    for rect in rects:
        if rect.empty:
            continue
        update: Dict[Rect, int] = {}
        for existing, coef in terms.items():
            _merge_add(update, rect_intersect(existing, rect), -coef)
        _merge_add(update, rect, 1)
        for r, c in update.items():
            _merge_add(terms, r, c)
    return terms


def inclusion_exclusion_terms(cset: CSet) -> List[Tuple[int, Rect]]:
    """
    Signed rectangles whose combination is the indicator of cset.

    1_C = 1_{U0} - sum_{S nonempty} (-1)^{|S|-1} 1_{U0 n V_S}
    """
    if cset.k > IE_MAX_TERMS:
        raise CapExceededError("inclusion-exclusion subtracted sets", cset.k, IE_MAX_TERMS)
    terms: Dict[Rect, int] = {}
    _merge_add(terms, cset.base, 1)
    clipped = [rect_intersect(cset.base, v) for v in cset.subtracted]
    for rect, coef in union_terms(clipped).items():
        _merge_add(terms, rect, -coef)
    return [(coef, rect) for rect, coef in terms.items()]


def _measure_union_ie(rects: Sequence[Rect]) -> float:
    return float(sum(coef * rect.measure for rect, coef in union_terms(rects).items()))


def _measure_union_sweep(rects: Sequence[Rect]) -> float:
    corners = np.array([r.corner for r in rects if not r.empty], dtype=float)
    if corners.size == 0:
        return 0.0
    dim = corners.shape[1]
    axes = [np.unique(np.concatenate([[0.0], corners[:, i]])) for i in range(dim)]
    widths = [np.diff(axis) for axis in axes]
    uppers = [axis[1:] for axis in axes]

    covered = np.zeros(tuple(len(u) for u in uppers), dtype=bool)
    for corner in corners:
        mask = np.ones(1, dtype=bool)
        for i in range(dim):
            mask = np.multiply.outer(mask, uppers[i] <= corner[i])
        covered |= mask.reshape(covered.shape)

    volume = np.ones(1)
    for w in widths:
        volume = np.multiply.outer(volume, w)
    return float(np.sum(volume.reshape(covered.shape)[covered]))


def measure_union(rects: Sequence[Rect], method: str = "auto") -> float:
    """
    Exact Lebesgue measure of a finite union of rectangles.

    Args:
        rects: Rectangles to unite
        method: "ie" (inclusion-exclusion), "sweep" or "auto"

    Returns:
        m(R1 u ... u Rk)
    """
    rects = [r for r in rects if not r.empty]
    if not rects:
        return 0.0
    if method == "auto":
        method = "ie" if len(rects) <= IE_MAX_TERMS else "sweep"
    if method == "ie":
        if len(rects) > IE_MAX_TERMS:
            raise CapExceededError("inclusion-exclusion union", len(rects), IE_MAX_TERMS)
        return _measure_union_ie(rects)
    if method == "sweep":
        return _measure_union_sweep(rects)
    raise DomainError(f"unknown union method: {method}")


def measure_cset(cset: CSet, method: str = "auto") -> float:
    """m(U0) - m(U0 n (V1 u ... u Vk)), clamped at 0."""
    if cset.base.empty:
        return 0.0
    if cset.k > IE_MAX_TERMS and method == "ie":
        raise CapExceededError("inclusion-exclusion subtracted sets", cset.k, IE_MAX_TERMS)
    clipped = [rect_intersect(cset.base, v) for v in cset.subtracted]
    return max(0.0, cset.base.measure - measure_union(clipped, method=method))


def d_m(u: Rect, v: Rect) -> float:
    """Measure of the symmetric difference; d_m(empty, U) = m(U)."""
    return max(0.0, u.measure + v.measure - 2.0 * rect_intersect(u, v).measure)


def d_hausdorff(u: Rect, v: Rect) -> float:
    """Sup-norm Hausdorff distance between two non-empty anchored rectangles."""
    if u.empty or v.empty:
        raise EmptySetError("the Hausdorff distance is undefined on the empty set")
    if u.dim != v.dim:
        raise DomainError(f"dimension mismatch: {u.dim} vs {v.dim}")
    return max(abs(a - b) for a, b in zip(u.corner, v.corner))


METRICS = {"d_m": d_m, "d_hausdorff": d_hausdorff}


def pairwise_distances(rects: Sequence[Rect], metric: str = "d_m") -> np.ndarray:
    """Dense matrix of distances between non-empty rectangles."""
    if metric not in METRICS:
        raise DomainError(f"unknown metric: {metric}")
    corners = np.array([r.corner for r in rects], dtype=float)
    if metric == "d_hausdorff":
        return np.max(np.abs(corners[:, None, :] - corners[None, :, :]), axis=2)
    measures = np.prod(corners, axis=1)
    inter = np.prod(np.minimum(corners[:, None, :], corners[None, :, :]), axis=2)
    return np.maximum(0.0, measures[:, None] + measures[None, :] - 2.0 * inter)
