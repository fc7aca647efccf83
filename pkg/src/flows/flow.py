"""
Flows through the rectangle collection and the m-standard projection.

Mathematical Foundation:
    elementary flow   f : [a, b] -> A,  s < t  =>  f(s) c f(t)
    simple flow       f(s) = f_i(s) u f_1(t_1) u ... u f_{i-1}(t_{i-1}),  s in [t_{i-1}, t_i]
    theta(t)          = m(f(t))
    projection        X^{f,m}_t = Delta X_{f(theta^-1(t))}

Along any flow the sets are nested, so d_m(f(u), f(v)) = |theta(u) - theta(v)|
and the projection of SIFBM(H) is a fractional Brownian motion of index H:

    E[X^{f,m}_s X^{f,m}_t] = 1/2 (s^2H + t^2H - |t - s|^2H)

Elementary flows are piecewise linear in the corner coordinates. theta is
inverted by bisection; on a flat stretch of theta the left end is returned.
"""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Sequence, Tuple, Union

import numpy as np

from src.errors import DomainError
from src.gaussian.models import CovModel, kernel_from_measures
from src.gaussian.sampling import SamplePath
from src.geometry.rects import Rect, as_point, measure_union, rect_intersect, union_terms

logger = logging.getLogger(__name__)

BISECTION_STEPS = 200
THETA_TOL = 1e-12

Terms = List[Tuple[int, Rect]]


@dataclass(frozen=True)
class ElementaryFlow:
    """
    A piecewise-linear increasing path t -> [0, corner(t)].

    Attributes:
        breakpoints: (time, corner) pairs, times strictly increasing and
            corners non-decreasing in every coordinate
    """
    breakpoints: Tuple[Tuple[float, Tuple[float, ...]], ...]

    def __post_init__(self):
        points = tuple((float(t), as_point(c)) for t, c in self.breakpoints)
        if len(points) < 2:
            raise DomainError("an elementary flow needs at least two breakpoints")
        dims = {len(c) for _, c in points}
        if len(dims) != 1:
            raise DomainError("breakpoint corners have mixed dimensions")
        for (t0, c0), (t1, c1) in zip(points, points[1:]):
            if t1 <= t0:
                raise DomainError(f"breakpoint times must increase: {t0} then {t1}")
            if any(b < a for a, b in zip(c0, c1)):
                raise DomainError(f"corners must be non-decreasing: {c0} then {c1}")
        object.__setattr__(self, "breakpoints", points)

    @classmethod
    def linear(cls, start: Sequence[float], end: Sequence[float], t0=0.0, t1=1.0):
        return cls(((t0, tuple(start)), (t1, tuple(end))))

    @property
    def dim(self) -> int:
        return len(self.breakpoints[0][1])

    @property
    def domain(self) -> Tuple[float, float]:
        return self.breakpoints[0][0], self.breakpoints[-1][0]

    def at(self, t: float) -> Rect:
        """f(t)."""
        lo, hi = self.domain
        if not (lo <= t <= hi):
            raise DomainError(f"t={t} outside the flow domain [{lo}, {hi}]")
        for (t0, c0), (t1, c1) in zip(self.breakpoints, self.breakpoints[1:]):
            if t <= t1:
                w = (t - t0) / (t1 - t0)
                corner = tuple(min(b, max(a, a + w * (b - a))) for a, b in zip(c0, c1))
                return Rect(corner=corner)
        return Rect(corner=self.breakpoints[-1][1])

    def sets_at(self, t: float) -> List[Rect]:
        return [self.at(t)]

    def to_json(self) -> Dict:
        return {"breakpoints": [{"t": t, "corner": list(c)} for t, c in self.breakpoints]}


@dataclass(frozen=True)
class SimpleFlow:
    """
    Elementary segments chained in time, with the end sets of earlier
    segments accumulated into the current value.
    """
    segments: Tuple[ElementaryFlow, ...] = field(default_factory=tuple)

    def __post_init__(self):
        segments = tuple(self.segments)
        if not segments:
            raise DomainError("a simple flow needs at least one segment")
        for prev, nxt in zip(segments, segments[1:]):
            if nxt.domain[0] != prev.domain[1]:
                raise DomainError("segment domains must be contiguous")
        object.__setattr__(self, "segments", segments)
        for i in range(1, len(segments)):
            ends = [s.at(s.domain[1]) for s in segments[:i]]
            start = segments[i].at(segments[i].domain[0])
            if measure_union(ends + [start]) > measure_union(ends) + THETA_TOL:
                raise DomainError(f"segment {i} does not start inside the accumulated set")

    @property
    def dim(self) -> int:
        return self.segments[0].dim

    @property
    def domain(self) -> Tuple[float, float]:
        return self.segments[0].domain[0], self.segments[-1].domain[1]

    def sets_at(self, t: float) -> List[Rect]:
        """The rectangles whose union is f(t)."""
        lo, hi = self.domain
        if not (lo <= t <= hi):
            raise DomainError(f"t={t} outside the flow domain [{lo}, {hi}]")
        for i, seg in enumerate(self.segments):
            if t <= seg.domain[1]:
                return [s.at(s.domain[1]) for s in self.segments[:i]] + [seg.at(t)]
        return [s.at(s.domain[1]) for s in self.segments]

    def to_json(self) -> Dict:
        return {"segments": [s.to_json() for s in self.segments]}


Flow = Union[ElementaryFlow, SimpleFlow]


def flow_from_json(data: Dict) -> Flow:
    """Parse {"breakpoints": [...]} or {"segments": [{"breakpoints": [...]}, ...]}."""
    try:
        if "segments" in data:
            return SimpleFlow(tuple(flow_from_json(s) for s in data["segments"]))
        return ElementaryFlow(
            tuple((bp["t"], tuple(bp["corner"])) for bp in data["breakpoints"])
        )
    except (KeyError, TypeError) as exc:
        raise DomainError(f"malformed flow descriptor: {exc}") from exc


def load_flow(path: Union[str, Path]) -> Flow:
    return flow_from_json(json.loads(Path(path).read_text()))


def theta(flow: Flow, t: float) -> float:
    """m(f(t))."""
    return measure_union(flow.sets_at(t))


def theta_range(flow: Flow) -> Tuple[float, float]:
    lo, hi = flow.domain
    return theta(flow, lo), theta(flow, hi)


def theta_inverse(flow: Flow, s: float) -> float:
    """
    Right inverse of theta: the smallest t with theta(t) >= s.

    Args:
        flow: Elementary or simple flow
        s: Target measure in the range of theta

    Returns:
        t with |theta(t) - s| <= 1e-12, exact at breakpoints
    """
    s_lo, s_hi = theta_range(flow)
    if not (s_lo - THETA_TOL <= s <= s_hi + THETA_TOL):
        raise DomainError(f"s={s} outside the range [{s_lo}, {s_hi}] of theta")
    knots = _knots(flow)
    values = [theta(flow, t) for t in knots]
    if s <= values[0]:
        return knots[0]
    for (t0, v0), (t1, v1) in zip(zip(knots, values), zip(knots[1:], values[1:])):
        if v1 >= s:
            if v1 == s:
                return t1
            lo, hi = t0, t1
            break
    else:
        return knots[-1]
    for _ in range(BISECTION_STEPS):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if theta(flow, mid) >= s:
            hi = mid
        else:
            lo = mid
    return hi


def _knots(flow: Flow) -> List[float]:
    if isinstance(flow, ElementaryFlow):
        return [t for t, _ in flow.breakpoints]
    knots: List[float] = []
    for seg in flow.segments:
        for t, _ in seg.breakpoints:
            if not knots or t > knots[-1]:
                knots.append(t)
    return knots


def projected_terms(flow: Flow, times: Sequence[float]) -> List[Terms]:
    """Signed rectangles of Delta X over f(theta^-1(t)) for each t."""
    out = []
    for t in times:
        rects = flow.sets_at(theta_inverse(flow, t))
        out.append([(coef, r) for r, coef in union_terms(rects).items()])
    return out


def projected_sets(flow: Flow, times: Sequence[float]) -> List[Rect]:
    """
    The rectangles on which to sample X for the projection at times.

    For an elementary flow this is f(theta^-1(t)) for each t, in order. For a
    simple flow it is the ordered closure of all inclusion-exclusion terms.
    """
    if isinstance(flow, ElementaryFlow):
        return [flow.at(theta_inverse(flow, t)) for t in times]
    family: Dict[Rect, None] = {}
    for terms in projected_terms(flow, times):
        for _, rect in terms:
            family.setdefault(rect, None)
    return list(family)


def projected_values(path: SamplePath, flow: Flow, times: Sequence[float]) -> np.ndarray:
    """replicates x len(times) values of X^{f,m}."""
    out = np.zeros((path.replicates, len(times)))
    for j, terms in enumerate(projected_terms(flow, times)):
        for coef, rect in terms:
            out[:, j] += coef * path.column(rect)
    return out


def _terms_cov(model: CovModel, a: Terms, b: Terms) -> float:
    total = 0.0
    for ca, ra in a:
        for cb, rb in b:
            mi = rect_intersect(ra, rb).measure
            total += ca * cb * float(kernel_from_measures(model, ra.measure, rb.measure, mi))
    return total


def projected_cov(model: CovModel, flow: Flow, s: float, t: float) -> float:
    """Covariance of the projection at times s and t."""
    a, b = projected_terms(flow, [s, t])
    return _terms_cov(model, a, b)


def fbm_cov(H: float, s: float, t: float) -> float:
    """Covariance 1/2 (s^2H + t^2H - |t - s|^2H) of fractional Brownian motion."""
    if not (0.0 < H < 1.0):
        raise DomainError(f"H must lie in (0, 1), got {H}")
    if s < 0 or t < 0:
        raise DomainError("fbm_cov needs non-negative times")
    two_h = 2.0 * H
    return 0.5 * (s ** two_h + t ** two_h - abs(t - s) ** two_h)


def projection_table(
    model: CovModel, flow: Flow, grid: Sequence[float]
) -> List[Dict[str, float]]:
    """Rows (s, t, projected, fbm, absdiff) over grid x grid."""
    H = model.hurst
    terms = projected_terms(flow, grid)
    rows = []
    for i, s in enumerate(grid):
        for j, t in enumerate(grid):
            proj = _terms_cov(model, terms[i], terms[j])
            ref = fbm_cov(H, s, t)
            rows.append(
                {"s": float(s), "t": float(t), "projected": proj, "fbm": ref,
                 "absdiff": abs(proj - ref)}
            )
    return rows
