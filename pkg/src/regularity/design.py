"""
Localized sampling designs for exponent estimation.

Exponents at U0 only look at sets inside a shrinking ball B(U0, rho), so X is
sampled on a few hundred sets around U0 instead of a full dyadic grid. For
each radius rho_j the design holds:

    - axis satellites: U0 with one corner coordinate moved so that
      d(U0, satellite) = 0.999 rho_j exactly
    - the dyadic neighbours of g_n(U0) at level n = ceil(log2(N / rho_j))
      that fall inside the ball
    - pair_budget random corners drawn uniformly in a box around U0 and
      kept when they land inside the ball

Along a flow the same idea gives times s0 +/- rho and uniform times in
[s0 - rho, s0 + rho], mapped through f o theta^-1.
"""

import logging
import math
from dataclasses import dataclass
from itertools import product
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.errors import CapExceededError, DomainError
from src.flows.flow import ElementaryFlow, projected_sets, theta_range
from src.gaussian.models import CovModel
from src.gaussian.sampling import SamplePath, sample_paths
from src.geometry.dyadic import g_n
from src.geometry.rects import METRICS, Rect

logger = logging.getLogger(__name__)

DEFAULT_J_MIN = 2
DEFAULT_J_MAX = 10
DEFAULT_PAIR_BUDGET = 64
MIN_PAIR_BUDGET = 16

# Upper bound on the size of one localized design.
MAX_DESIGN_SETS = 2000

# Satellites sit just inside the ball so that rounding never pushes them out.
SATELLITE_SHRINK = 0.999


@dataclass(frozen=True)
class ScalePlan:
    """
    Center, radii and sampling budget of a localized estimate.

    Attributes:
        center: The set U0 at which exponents are estimated
        radii: Strictly decreasing ball radii rho_j
        pair_budget: Random sets drawn per radius
        metric: "d_m" or "d_hausdorff"
        grid_step: Step of an underlying grid design, if any; radii closer
            than 4 steps are left out of the regressions
    """
    center: Rect
    radii: Tuple[float, ...]
    pair_budget: int = DEFAULT_PAIR_BUDGET
    metric: str = "d_m"
    grid_step: Optional[float] = None

    def __post_init__(self):
        radii = tuple(float(r) for r in self.radii)
        if self.center.empty:
            raise DomainError("the center of a scale plan must be non-empty")
        if not radii:
            raise DomainError("a scale plan needs at least one radius")
        if any(r <= 0 for r in radii):
            raise DomainError("radii must be positive")
        if any(b >= a for a, b in zip(radii, radii[1:])):
            raise DomainError("radii must be strictly decreasing")
        if self.pair_budget < MIN_PAIR_BUDGET:
            raise DomainError(f"pair_budget must be >= {MIN_PAIR_BUDGET}, got {self.pair_budget}")
        if self.metric not in METRICS:
            raise DomainError(f"unknown metric: {self.metric}")
        object.__setattr__(self, "radii", radii)

    @classmethod
    def dyadic(
        cls,
        center: Rect,
        j_min: int = DEFAULT_J_MIN,
        j_max: int = DEFAULT_J_MAX,
        **kwargs,
    ) -> "ScalePlan":
        """Radii rho_j = 2^-j for j = j_min..j_max."""
        if j_max <= j_min:
            raise DomainError(f"need j_min < j_max, got {j_min}..{j_max}")
        return cls(center=center, radii=tuple(2.0 ** -j for j in range(j_min, j_max + 1)), **kwargs)

    @property
    def rho_max(self) -> float:
        return self.radii[0]

    @property
    def rho_min(self) -> float:
        return self.radii[-1]

    def regression_radii(self) -> Tuple[float, ...]:
        if self.grid_step is None:
            return self.radii
        kept = tuple(r for r in self.radii if r >= 4.0 * self.grid_step)
        if len(kept) < len(self.radii):
            logger.info("dropped %d radii within 4 grid steps", len(self.radii) - len(kept))
        return kept

    def to_json(self) -> Dict:
        return {
            "center": self.center.to_json(),
            "radii": list(self.radii),
            "pair_budget": self.pair_budget,
            "metric": self.metric,
            "grid_step": self.grid_step,
        }


def distances_to(center: Rect, sets: Sequence[Rect], metric: str = "d_m") -> np.ndarray:
    """d(center, U) for every U in sets; empty sets are at infinite distance."""
    dim = center.dim
    corners = np.array([r.corner if not r.empty else (np.nan,) * dim for r in sets], dtype=float)
    corners = corners.reshape(len(sets), dim)
    c = np.array(center.corner)
    if metric == "d_hausdorff":
        out = np.max(np.abs(corners - c), axis=1)
    elif metric == "d_m":
        inter = np.prod(np.minimum(corners, c), axis=1)
        out = np.maximum(0.0, np.prod(corners, axis=1) + np.prod(c) - 2.0 * inter)
    else:
        raise DomainError(f"unknown metric: {metric}")
    return np.where(np.isnan(out), np.inf, out)


def _axis_scale(center: Rect, axis: int, metric: str) -> float:
    """Distance moved per unit change of one corner coordinate."""
    if metric == "d_hausdorff":
        return 1.0
    return float(np.prod([c for i, c in enumerate(center.corner) if i != axis]))


def axis_satellites(
    center: Rect, rho: float, metric: str = "d_m", shrink: float = SATELLITE_SHRINK
) -> List[Rect]:
    """Sets at distance shrink * rho from center, one coordinate moved at a time."""
    out = []
    for axis, coord in enumerate(center.corner):
        scale = _axis_scale(center, axis, metric)
        if scale <= 0.0:
            continue
        step = shrink * rho / scale
        for sign in (-1.0, 1.0):
            moved = coord + sign * step
            if 0.0 <= moved <= 1.0:
                corner = list(center.corner)
                corner[axis] = moved
                out.append(Rect(corner=tuple(corner)))
    return out


def satellite_pair(center: Rect, rho_max: float, metric: str = "d_m") -> Tuple[int, float]:
    """
    A coordinate and direction along which satellites stay in the cube up to rho_max.

    Returns:
        (axis, sign) with sign -1.0 (shrinking) preferred
    """
    for sign in (-1.0, 1.0):
        for axis, coord in enumerate(center.corner):
            scale = _axis_scale(center, axis, metric)
            if scale <= 0.0:
                continue
            moved = coord + sign * rho_max / scale
            if 0.0 <= moved <= 1.0:
                return axis, sign
    raise DomainError(
        f"no satellite direction stays inside the cube at radius {rho_max} around {center}"
    )


def satellite_at(center: Rect, rho: float, axis: int, sign: float, metric: str = "d_m") -> Rect:
    """The set at distance exactly rho from center along (axis, sign)."""
    corner = list(center.corner)
    corner[axis] = min(1.0, max(0.0, corner[axis] + sign * rho / _axis_scale(center, axis, metric)))
    return Rect(corner=tuple(corner))


def dyadic_neighbours(center: Rect, rho: float, metric: str = "d_m") -> List[Rect]:
    """g_n(center) and its grid neighbours at level ceil(log2(N / rho)) inside the ball."""
    n = max(0, math.ceil(math.log2(center.dim / rho)))
    step = 2.0 ** -n
    anchor = np.array(g_n(center, n).corner)
    candidates = []
    for offset in product((-1, 0, 1), repeat=center.dim):
        corner = anchor + step * np.array(offset, dtype=float)
        if np.all(corner >= 0.0) and np.all(corner <= 1.0):
            candidates.append(Rect(corner=tuple(float(c) for c in corner)))
    if not candidates:
        return []
    dist = distances_to(center, candidates, metric)
    return [r for r, d in zip(candidates, dist) if d <= rho]


def random_ball_sets(
    center: Rect, rho: float, count: int, rng: np.random.Generator, metric: str = "d_m"
) -> List[Rect]:
    """Up to count uniform corners around center that land in B(center, rho)."""
    dim = center.dim
    c = np.array(center.corner)
    if metric == "d_hausdorff":
        half_width = np.full(dim, rho)
    else:
        scales = np.array([_axis_scale(center, i, metric) for i in range(dim)])
        safe = np.where(scales > 0.0, scales, 1.0)
        half_width = np.where(scales > 0.0, rho / (dim * safe), rho)
    out: List[Rect] = []
    for _ in range(8):
        draws = c + rng.uniform(-1.0, 1.0, size=(4 * count, dim)) * half_width
        draws = np.clip(draws, 0.0, 1.0)
        rects = [Rect(corner=tuple(float(x) for x in row)) for row in draws]
        dist = distances_to(center, rects, metric)
        out.extend(r for r, d in zip(rects, dist) if d <= rho)
        if len(out) >= count:
            break
    return out[:count]


def ball_design(plan: ScalePlan, seed: int = 0, cap: int = MAX_DESIGN_SETS) -> List[Rect]:
    """
    The localized family of sets around plan.center.

    Args:
        plan: Center, radii, budget and metric
        seed: Key of the design randomness (independent of the path seed)
        cap: Hard limit on the number of sets

    Returns:
        Ordered family, center first, without duplicates
    """
    family: Dict[Rect, None] = {plan.center: None}
    for j, rho in enumerate(plan.radii):
        rng = np.random.default_rng([seed, j])
        for rect in axis_satellites(plan.center, rho, plan.metric):
            family.setdefault(rect, None)
        for rect in dyadic_neighbours(plan.center, rho, plan.metric):
            family.setdefault(rect, None)
        for rect in random_ball_sets(plan.center, rho, plan.pair_budget, rng, plan.metric):
            family.setdefault(rect, None)
    if len(family) > cap:
        raise CapExceededError("ball design sets", len(family), cap)
    logger.debug("ball design around %s: %d sets over %d radii", plan.center, len(family),
                 len(plan.radii))
    return list(family)


def sample_ball(
    model: CovModel,
    plan: ScalePlan,
    seed: int,
    replicates: int,
    threads: int = 1,
    design_seed: int = 0,
) -> SamplePath:
    """Sample X on ball_design(plan) with the Philox stream keyed by seed."""
    return sample_paths(model, ball_design(plan, design_seed), seed, replicates, threads=threads)


def flow_design_times(
    flow: ElementaryFlow,
    s0: float,
    radii: Sequence[float],
    pair_budget: int = DEFAULT_PAIR_BUDGET,
    seed: int = 0,
) -> List[float]:
    """Measure times around s0: s0, s0 +/- 0.999 rho and uniform times per radius."""
    lo, hi = theta_range(flow)
    if not (lo <= s0 <= hi):
        raise DomainError(f"s0={s0} outside the range [{lo}, {hi}] of theta")
    times: Dict[float, None] = {float(s0): None}
    for j, rho in enumerate(radii):
        rng = np.random.default_rng([seed, j])
        for s in (s0 - SATELLITE_SHRINK * rho, s0 + SATELLITE_SHRINK * rho):
            if lo <= s <= hi:
                times.setdefault(float(s), None)
        for s in rng.uniform(max(lo, s0 - rho), min(hi, s0 + rho), size=pair_budget):
            times.setdefault(float(s), None)
    return list(times)


def flow_design(
    flow: ElementaryFlow,
    s0: float,
    plan_radii: Sequence[float],
    pair_budget: int = DEFAULT_PAIR_BUDGET,
    seed: int = 0,
) -> Tuple[List[Rect], Rect]:
    """
    Sets f(theta^-1(s)) around s0 and the center f(theta^-1(s0)).

    Along a flow the sets are nested, so d_m between two of them is the
    difference of their measure times.
    """
    if not isinstance(flow, ElementaryFlow):
        raise DomainError("flow designs need an elementary flow")
    times = flow_design_times(flow, s0, plan_radii, pair_budget, seed)
    sets = projected_sets(flow, times)
    return sets, sets[0]
