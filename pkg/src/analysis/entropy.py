"""
Covering numbers and the Dudley entropy integral for rectangles.

Mathematical Foundation:
    N(A, eps) <= k_{n(eps)} <= eps^-q
    J(eps0)   = integral_0^eps0 sqrt(log N(A, eps)) d eps

Covering numbers are computed on the grid A_n by farthest-first traversal:
centers are added one at a time at the point farthest from the current
centers, and N(eps) is the number of centers needed before every grid
point lies within eps. The covering radius only decreases as centers are
added, so N(eps) is non-increasing in eps.
"""

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Sequence, Tuple

import numpy as np
from scipy.integrate import quad, trapezoid

from src.analysis.assumptions import RECTANGLES, CollectionDescriptor, grid_corners
from src.errors import DomainError
from src.regularity.estimators import loglog_fit

logger = logging.getLogger(__name__)

DEFAULT_EPSILONS = tuple(2.0 ** -j for j in range(1, 6))

# Grid step is at most eps / RESOLUTION.
RESOLUTION = 8

# Largest grid the traversal runs on.
MAX_GRID_POINTS = 300_000


def _distances_from(points: np.ndarray, measures: np.ndarray, i: int, metric: str) -> np.ndarray:
    if metric == "d_hausdorff":
        return np.max(np.abs(points - points[i]), axis=1)
    inter = np.prod(np.minimum(points, points[i]), axis=1)
    return np.maximum(0.0, measures + measures[i] - 2.0 * inter)


def _grid_level(desc: CollectionDescriptor, eps_min: float) -> int:
    if desc.kind != RECTANGLES:
        raise DomainError("covering numbers are computed for rectangles only")
    if not (0.0 < eps_min <= 0.5):
        raise DomainError(f"eps must lie in (0, 1/2], got {eps_min}")
    n = max(1, math.ceil(math.log2(RESOLUTION / eps_min)))
    if (2 ** n + 1) ** desc.dim > MAX_GRID_POINTS:
        raise DomainError(f"eps={eps_min} is below the resolvable scale in dimension {desc.dim}")
    return n


def covering_radii(desc: CollectionDescriptor, eps_min: float) -> np.ndarray:
    """
    Covering radius after k farthest-first centers, k = 1, 2, ...

    The traversal stops once the radius is <= eps_min.
    """
    n = _grid_level(desc, eps_min)
    points = grid_corners(n, desc.dim) / 2.0 ** n
    measures = np.prod(points, axis=1)
    nearest = _distances_from(points, measures, 0, desc.metric)
    radii = [float(nearest.max())]
    while radii[-1] > eps_min:
        far = int(np.argmax(nearest))
        nearest = np.minimum(nearest, _distances_from(points, measures, far, desc.metric))
        radii.append(float(nearest.max()))
    logger.debug("grid A_%d (N=%d): %d centers reach %.4g", n, desc.dim, len(radii), radii[-1])
    return np.array(radii)


def _count(radii: np.ndarray, eps: float) -> int:
    return int(np.argmax(radii <= eps * (1.0 + 1e-12))) + 1


def covering_number(desc: CollectionDescriptor, eps: float) -> int:
    """Number of eps-balls covering A (greedy, on a grid of step <= eps / 8)."""
    return _count(covering_radii(desc, eps), eps)


@dataclass
class EntropyReport:
    """
    Covering numbers on a grid of scales.

    Attributes:
        epsilons: Scales, decreasing
        covering: N(A, eps) per scale
        bound: eps^-q with q the dimension
        q_entropy: Slope of log N against log(1/eps)
        dudley: Entropy integral up to epsilons[0]
        tail: Part of the integral below the smallest scale
    """
    collection: Dict[str, Any]
    epsilons: List[float]
    covering: List[int]
    bound: List[float]
    q_entropy: float
    dudley: float
    tail: float
    notes: List[str] = field(default_factory=list)

    def to_json(self) -> Dict[str, Any]:
        return asdict(self)

    def table(self) -> List[Dict[str, Any]]:
        return [
            {"eps": e, "covering": c, "bound": b, "within_bound": c <= b}
            for e, c, b in zip(self.epsilons, self.covering, self.bound)
        ]


def covering_table(
    desc: CollectionDescriptor, epsilons: Sequence[float] = DEFAULT_EPSILONS
) -> EntropyReport:
    """Covering numbers at every scale from one traversal, and the Dudley integral."""
    eps = np.array(sorted(set(float(e) for e in epsilons), reverse=True))
    if eps.size < 2:
        raise DomainError("need at least two scales")
    if eps[0] > 0.5 or eps[-1] <= 0.0:
        raise DomainError(f"scales must lie in (0, 1/2], got {eps.tolist()}")
    radii = covering_radii(desc, float(eps[-1]))
    counts = [_count(radii, e) for e in eps]
    q, log_c, _ = loglog_fit(-np.log(eps), np.log(counts))
    dudley, tail = dudley_integral(eps, counts, q, log_c)
    return EntropyReport(
        collection=desc.to_json(),
        epsilons=eps.tolist(),
        covering=counts,
        bound=(eps ** -float(desc.dim)).tolist(),
        q_entropy=q,
        dudley=dudley,
        tail=tail,
        notes=["below the smallest scale N(eps) is extrapolated as C eps^-q_entropy"],
    )


def dudley_integral(
    epsilons: Sequence[float], counts: Sequence[int], q: float, log_c: float
) -> Tuple[float, float]:
    """
    Trapezoidal integral of sqrt(log N) over the given scales plus the tail
    integral of sqrt(log C + q log(1/eps)) from 0 to the smallest scale.

    Returns:
        (total, tail)
    """
    eps = np.asarray(epsilons, dtype=float)
    order = np.argsort(eps)
    eps = eps[order]
    values = np.sqrt(np.log(np.asarray(counts, dtype=float)[order]))
    body = float(trapezoid(values, eps))
    q = max(q, 0.0)

    def integrand(e):
        return math.sqrt(max(0.0, log_c + q * math.log(1.0 / e)))

    tail, _ = quad(integrand, 0.0, float(eps[0]), limit=200)
    return body + tail, float(tail)
