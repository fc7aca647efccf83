"""
Diagnostics for the discretization assumption of an indexing collection.

Mathematical Foundation:
    (H1)  sup_{V in A_{n+1}} d(V, g_n(V)) <= M1 k_n^(-1/q)
    (H2)  sum_n k_n^-delta N_n < inf for all delta > 0, with
          N_n = max_{U in A_n} #{V in A_n : V strictly contains U, d(U,V) <= 3 M1 k_n^(-1/q)}
    admissibility: sum_n k_{n+1} / k_n^(1+delta) < inf for all delta > 0

The exponent q is fitted by least squares on
    log gap_n = -(1/q) log k_n + c
over the enumerated levels. Summability cannot be proved from finitely many
terms; the ratio test only separates SATISFIED from INCONCLUSIVE.

Two collections are supported: anchored rectangles [0, x] of [0,1]^N with the
dyadic subclasses A_n, and lower layers of [0,1]^2 on the 2^n x 2^n grid.
Lower layers fail (H1) because their minimal gap 2^-2n decays polynomially
while k_n >= 2^(2^n) grows doubly exponentially.
"""

import logging
import math
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import gammaln
from scipy.stats import linregress

from src.errors import CapExceededError, DomainError
from src.gaussian.models import CovModel
from src.gaussian.sampling import delta_increment, sample_paths
from src.geometry.dyadic import MAX_ENUMERATION, left_neighbourhood
from src.geometry.lower_layers import (
    MAX_GRID_SIDE,
    lower_layers_enumerate,
    lower_layers_min_gap,
)
from src.geometry.rects import METRICS, Rect
from src.regularity.estimators import pc_closure

logger = logging.getLogger(__name__)

RECTANGLES = "rectangles"
LOWER_LAYERS = "lower_layers"
COLLECTIONS = (RECTANGLES, LOWER_LAYERS)

SATISFIED = "SATISFIED"
VIOLATED = "VIOLATED"
INCONCLUSIVE = "INCONCLUSIVE"

# Default level ranges of the rectangle collections, by dimension.
DEFAULT_LEVELS = {1: (2, 8), 2: (2, 6), 3: (2, 4)}
LOWER_LAYERS_MAX_LEVEL = 2

DEFAULT_DELTAS = (0.1, 0.5, 1.0)
DEFAULT_Q_GRID = (0.5, 1.0, 2.0, 4.0, 8.0)
RATIO_THRESHOLD = 0.95
CONFIRMATION_SAMPLES = 10_000
EXTRAPOLATION_MAX_LEVEL = 40
ETA_MAX_LEVEL = 30
ETA_RADII = tuple(2.0 ** -j for j in range(2, 11))
ETA_OFFSET = 1.0 / 64.0
_REL_TOL = 1e-12

VC_NOTE = (
    "The entropy bound K eps^(-2v) |ln eps|^v of a VC class of dimension v "
    "is not evaluated."
)


@dataclass(frozen=True)
class CollectionDescriptor:
    """
    An indexing collection together with its dyadic subclasses.

    Attributes:
        kind: "rectangles" or "lower_layers"
        dim: Dimension N of the unit cube (2 for lower layers)
        level_min: First level n of A_n
        level_max: Last level n of A_n
        metric: "d_m" or "d_hausdorff" (rectangles only)
        M1: Normalization of the (H1) bound used by compute_Nn
    """
    kind: str
    dim: int = 2
    level_min: int = 2
    level_max: int = 6
    metric: str = "d_m"
    M1: float = 1.0

    def __post_init__(self):
        if self.kind not in COLLECTIONS:
            raise DomainError(f"unknown collection: {self.kind}")
        if self.dim < 1:
            raise DomainError(f"dimension must be >= 1, got {self.dim}")
        if self.metric not in METRICS:
            raise DomainError(f"unknown metric: {self.metric}")
        if self.M1 <= 0:
            raise DomainError(f"M1 must be positive, got {self.M1}")
        if self.level_min < 0 or self.level_max < self.level_min:
            raise DomainError(f"bad level range {self.level_min}..{self.level_max}")
        if self.kind == LOWER_LAYERS:
            if self.dim != 2:
                raise DomainError("lower layers are implemented in dimension 2 only")
            if self.metric != "d_m":
                raise DomainError("lower layers are compared with d_m only")
            if self.level_max > LOWER_LAYERS_MAX_LEVEL:
                raise CapExceededError("lower-layer level", self.level_max, LOWER_LAYERS_MAX_LEVEL)
        else:
            size = (2 ** (self.level_max + 1) + 1) ** self.dim
            if size > MAX_ENUMERATION:
                raise CapExceededError(f"A_{self.level_max + 1} in dimension {self.dim}", size,
                                       MAX_ENUMERATION)

    @classmethod
    def rectangles(
        cls,
        dim: int,
        metric: str = "d_m",
        level_min: Optional[int] = None,
        level_max: Optional[int] = None,
    ) -> "CollectionDescriptor":
        lo, hi = DEFAULT_LEVELS.get(dim, (1, 2))
        return cls(
            kind=RECTANGLES,
            dim=dim,
            level_min=lo if level_min is None else level_min,
            level_max=hi if level_max is None else level_max,
            metric=metric,
        )

    @classmethod
    def lower_layers(cls, level_max: int = LOWER_LAYERS_MAX_LEVEL) -> "CollectionDescriptor":
        return cls(kind=LOWER_LAYERS, dim=2, level_min=0, level_max=level_max)

    @property
    def levels(self) -> List[int]:
        return list(range(self.level_min, self.level_max + 1))

    def to_json(self) -> Dict[str, Any]:
        return asdict(self)


# ============ Cardinalities ============

def log_k(kind: str, dim: int, n: int) -> float:
    """log k_n: (2^n + 1)^N for rectangles, binom(2^(n+1), 2^n) for lower layers."""
    if kind == RECTANGLES:
        return dim * math.log(2.0 ** n + 1.0)
    side = 2.0 ** n
    return float(gammaln(2.0 * side + 1.0) - 2.0 * gammaln(side + 1.0))


def k_sequence(desc: CollectionDescriptor, levels: Optional[Sequence[int]] = None) -> List[int]:
    """Exact k_n (core count for lower layers)."""
    out = []
    for n in desc.levels if levels is None else levels:
        if desc.kind == RECTANGLES:
            out.append((2 ** n + 1) ** desc.dim)
        else:
            out.append(math.comb(2 ** (n + 1), 2 ** n))
    return out


# ============ Approximation gaps ============

def grid_corners(n: int, dim: int) -> np.ndarray:
    """Integer corners l of A_n (corner = l / 2^n), in the order of enumerate_An."""
    side = 2 ** n + 1
    if side ** dim > MAX_ENUMERATION:
        raise CapExceededError(f"A_{n} in dimension {dim}", side ** dim, MAX_ENUMERATION)
    return np.indices((side,) * dim).reshape(dim, -1).T


def _gap_values(fine: np.ndarray, n: int, metric: str) -> Tuple[np.ndarray, np.ndarray]:
    """Gaps d(V, g_n(V)) for integer corners of A_{n+1}, with the g_n corners."""
    coarse = (fine + 1) // 2
    v = fine / 2.0 ** (n + 1)
    g = coarse / 2.0 ** n
    if metric == "d_hausdorff":
        return np.max(g - v, axis=1), coarse
    return np.prod(g, axis=1) - np.prod(v, axis=1), coarse


@lru_cache(maxsize=64)
def _rect_gap(dim: int, n: int, metric: str) -> Tuple[float, Tuple[int, ...], Tuple[int, ...]]:
    fine = grid_corners(n + 1, dim)
    gaps, coarse = _gap_values(fine, n, metric)
    best = int(np.argmax(gaps))
    return float(gaps[best]), tuple(int(c) for c in fine[best]), tuple(int(c) for c in coarse[best])


def _coarse_heights(heights: Sequence[int]) -> Tuple[int, ...]:
    """Heights of the smallest level-n layer containing a level-(n+1) layer."""
    return tuple((heights[2 * c] + 1) // 2 for c in range(len(heights) // 2))


@lru_cache(maxsize=8)
def _layer_gap(n: int) -> Tuple[float, Tuple[int, ...], Tuple[int, ...]]:
    _, layers = lower_layers_enumerate(2 ** (n + 1), cap=MAX_GRID_SIDE)
    best, witness = -1, None
    for layer in layers:
        coarse = _coarse_heights(layer.heights)
        gap = 4 * sum(coarse) - layer.cell_count
        if gap > best:
            best, witness = gap, (layer.heights, coarse)
    return best / float(4 ** (n + 1)), witness[0], witness[1]


def sup_gap(desc: CollectionDescriptor, n: int) -> Tuple[float, Dict[str, Any]]:
    """
    Exact sup over V in A_{n+1} of d(V, g_n(V)).

    Returns:
        (gap, witness): the witness names V and g_n(V) (corners for
        rectangles, column heights for lower layers)
    """
    if desc.kind == RECTANGLES:
        gap, fine, coarse = _rect_gap(desc.dim, n, desc.metric)
        witness = {
            "set": Rect(corner=tuple(c / 2.0 ** (n + 1) for c in fine)).to_json(),
            "approximation": Rect(corner=tuple(c / 2.0 ** n for c in coarse)).to_json(),
        }
    else:
        gap, fine, coarse = _layer_gap(n)
        witness = {"set": {"heights": list(fine)}, "approximation": {"heights": list(coarse)}}
    witness.update({"level": n, "gap": gap})
    return gap, witness


def sampled_gap(
    desc: CollectionDescriptor, n: int, samples: int, rng: np.random.Generator
) -> float:
    """Max gap over a random sample of A_{n+1}; a lower bound on sup_gap."""
    if desc.kind == RECTANGLES:
        fine = rng.integers(0, 2 ** (n + 1) + 1, size=(samples, desc.dim))
        gaps, _ = _gap_values(fine, n, desc.metric)
        return float(gaps.max())
    _, layers = lower_layers_enumerate(2 ** (n + 1), cap=MAX_GRID_SIDE)
    picks = rng.integers(0, len(layers), size=samples)
    best = 0
    for i in np.unique(picks):
        layer = layers[int(i)]
        best = max(best, 4 * sum(_coarse_heights(layer.heights)) - layer.cell_count)
    return best / float(4 ** (n + 1))


# ============ (H1) ============

@dataclass
class DiscretizationFit:
    """
    Least-squares fit of log gap_n = -(1/q) log k_n + c.

    Attributes:
        q: Fitted discretization exponent (None when the gaps do not decay)
        stderr: Standard error of q (delta method on the slope)
        levels: Levels used
        k_sequence: k_n per level
        gaps: Exact sup gaps per level
        sampled_gaps: Confirmation maxima over random samples
        r2: R^2 of the fit
    """
    q: Optional[float]
    stderr: Optional[float]
    levels: List[int]
    k_sequence: List[int]
    gaps: List[float]
    sampled_gaps: List[float]
    r2: Optional[float] = None
    witnesses: List[Dict[str, Any]] = field(default_factory=list)


def fit_discretization_exponent(
    desc: CollectionDescriptor, seed: int = 0, samples: int = CONFIRMATION_SAMPLES
) -> DiscretizationFit:
    """
    Fit the discretization exponent q over desc.levels.

    Raises:
        DomainError: fewer than 3 levels
    """
    levels = desc.levels
    if len(levels) < 3:
        raise DomainError(f"need at least 3 levels to fit q, got {levels}")
    rng = np.random.default_rng(seed)
    gaps, witnesses, sampled = [], [], []
    for n in levels:
        gap, witness = sup_gap(desc, n)
        gaps.append(gap)
        witnesses.append(witness)
        sampled.append(sampled_gap(desc, n, samples, rng))
    ks = k_sequence(desc)
    gap_arr = np.array(gaps)
    ok = gap_arr > 0.0
    fit = DiscretizationFit(q=None, stderr=None, levels=levels, k_sequence=ks, gaps=gaps,
                            sampled_gaps=sampled, witnesses=witnesses)
    if ok.sum() < 3:
        logger.warning("%s: gaps vanish at %d levels; q undetermined", desc.kind, int((~ok).sum()))
        return fit
    log_ks = np.array([log_k(desc.kind, desc.dim, n) for n in levels])
    result = linregress(log_ks[ok], np.log(gap_arr[ok]))
    if result.slope >= 0:
        logger.warning("%s: gaps do not decay with k_n (slope %.3f)", desc.kind, result.slope)
        return fit
    fit.q = float(-1.0 / result.slope)
    fit.stderr = float(result.stderr / result.slope ** 2)
    fit.r2 = float(result.rvalue ** 2)
    logger.info("%s N=%d %s: q=%.4f +- %.4f", desc.kind, desc.dim, desc.metric, fit.q, fit.stderr)
    return fit


@dataclass
class H1Result:
    """Per-level (H1) check at a given q."""
    q: float
    M1: float
    levels: List[int]
    gaps: List[float]
    bounds: List[float]
    passed: List[bool]
    witness: Optional[Dict[str, Any]] = None
    extrapolated: bool = False

    @property
    def holds(self) -> bool:
        return self.witness is None


def _extrapolated_witness(desc: CollectionDescriptor, q: float, M1: float) -> Optional[Dict]:
    """
    First level beyond the enumerated ones where a single-cell layer breaks (H1).

    The layer made of one cell of A_{n+1} has gap 3 * 4^-(n+1) to its level-n
    approximation, while the bound M1 k_n^(-1/q) decays like 2^(-2^n / q).
    """
    for n in range(desc.level_max + 1, EXTRAPOLATION_MAX_LEVEL + 1):
        gap = 3.0 * 4.0 ** -(n + 1)
        bound = M1 * math.exp(-log_k(desc.kind, desc.dim, n) / q)
        if gap > bound:
            return {
                "level": n,
                "gap": gap,
                "bound": bound,
                "set": Rect(corner=(2.0 ** -(n + 1),) * 2).to_json(),
                "approximation": Rect(corner=(2.0 ** -n,) * 2).to_json(),
            }
    return None


def check_H1(
    desc: CollectionDescriptor, q: float, gaps: Optional[Sequence[float]] = None
) -> H1Result:
    """
    Check sup gap_n <= M1 k_n^(-1/q) level by level.

    M1 is the ratio observed at the coarsest level. For lower layers, when
    every enumerated level passes, the check is carried to deeper levels
    with the exact k_n and an explicit single-cell witness.
    """
    if q <= 0:
        raise DomainError(f"q must be positive, got {q}")
    levels = desc.levels
    witnesses = [sup_gap(desc, n)[1] for n in levels]
    gap_list = [w["gap"] for w in witnesses] if gaps is None else list(gaps)
    decay = [math.exp(-log_k(desc.kind, desc.dim, n) / q) for n in levels]
    M1 = gap_list[0] / decay[0]
    bounds = [M1 * d for d in decay]
    passed = [g <= b * (1.0 + _REL_TOL) for g, b in zip(gap_list, bounds)]
    result = H1Result(q=float(q), M1=M1, levels=levels, gaps=gap_list, bounds=bounds,
                      passed=passed)
    for ok, witness, bound in zip(passed, witnesses, bounds):
        if not ok:
            result.witness = dict(witness, bound=bound)
            return result
    if desc.kind == LOWER_LAYERS:
        result.witness = _extrapolated_witness(desc, q, M1)
        result.extrapolated = result.witness is not None
    return result


# ============ (H2) and admissibility ============

@dataclass
class Summability:
    """Ratio test of a series from its first terms."""
    delta: float
    terms: List[float]
    partial_sums: List[float]
    last_ratio: Optional[float]
    verdict: str


def summability(delta: float, log_terms: Sequence[float],
                threshold: float = RATIO_THRESHOLD) -> Summability:
    """
    SATISFIED when the last term ratio is <= threshold and the last term is
    below the first; INCONCLUSIVE otherwise.
    """
    log_terms = np.asarray(log_terms, dtype=float)
    terms = np.exp(log_terms)
    last_ratio = float(np.exp(log_terms[-1] - log_terms[-2])) if log_terms.size >= 2 else None
    ok = last_ratio is not None and last_ratio <= threshold and log_terms[-1] < log_terms[0]
    return Summability(
        delta=float(delta),
        terms=terms.tolist(),
        partial_sums=np.cumsum(terms).tolist(),
        last_ratio=last_ratio,
        verdict=SATISFIED if ok else INCONCLUSIVE,
    )


def check_admissibility(
    source: Union[CollectionDescriptor, Sequence[float]],
    deltas: Sequence[float] = DEFAULT_DELTAS,
) -> Dict[float, Summability]:
    """
    Ratio tests of k_{n+1} / k_n^(1+delta).

    Args:
        source: A descriptor (k_n in closed form up to level_max + 1) or
            the sequence k_n itself, for consecutive n
        deltas: Exponents delta to test
    """
    if isinstance(source, CollectionDescriptor):
        levels = source.levels + [source.level_max + 1]
        logs = np.array([log_k(source.kind, source.dim, n) for n in levels])
    else:
        logs = np.log(np.asarray(source, dtype=float))
    if logs.size < 3:
        raise DomainError("need k_n at 3 or more consecutive levels")
    out = {}
    for delta in deltas:
        if delta <= 0:
            raise DomainError(f"delta must be positive, got {delta}")
        out[float(delta)] = summability(delta, logs[1:] - (1.0 + delta) * logs[:-1])
    return out


def compute_Nn(desc: CollectionDescriptor, level: int, q: float, M1: Optional[float] = None) -> int:
    """
    N_n: max over U in A_n of the strict supersets V in A_n with
    d(U, V) <= 3 M1 k_n^(-1/q).
    """
    if q <= 0:
        raise DomainError(f"q must be positive, got {q}")
    M1 = desc.M1 if M1 is None else M1
    radius = 3.0 * M1 * math.exp(-log_k(desc.kind, desc.dim, level) / q) * (1.0 + _REL_TOL)
    if desc.kind == LOWER_LAYERS:
        side = 2 ** level
        if side > MAX_GRID_SIDE:
            raise CapExceededError("lower-layer grid side", side, MAX_GRID_SIDE)
        _, layers = lower_layers_enumerate(side, cap=MAX_GRID_SIDE)
        masks = np.array([layer.bitmask() for layer in layers], dtype=np.uint64)
        counts = np.array([layer.cell_count for layer in layers], dtype=np.int64)
        best = 0
        for mask, count in zip(masks, counts):
            sup = ((masks & mask) == mask) & (counts > count)
            sup &= (counts - count) / float(side * side) <= radius
            best = max(best, int(sup.sum()))
        return best
    corners = grid_corners(level, desc.dim)
    points = corners / 2.0 ** level
    measures = np.prod(points, axis=1)
    best = 0
    chunk = max(1, 4_000_000 // len(points))
    for start in range(0, len(points), chunk):
        u = corners[start:start + chunk]
        ge = np.all(corners[None, :, :] >= u[:, None, :], axis=2)
        strict = ge & np.any(corners[None, :, :] > u[:, None, :], axis=2)
        if desc.metric == "d_hausdorff":
            dist = np.max(points[None, :, :] - points[start:start + chunk][:, None, :], axis=2)
        else:
            dist = measures[None, :] - measures[start:start + chunk][:, None]
        count = np.sum(strict & (dist <= radius), axis=1)
        best = max(best, int(count.max()))
    return best


@dataclass
class H2Result:
    q: float
    M1: float
    levels: List[int]
    N_n: List[int]
    series: Dict[float, Summability]


def check_H2(
    desc: CollectionDescriptor,
    q: float,
    M1: Optional[float] = None,
    deltas: Sequence[float] = DEFAULT_DELTAS,
) -> H2Result:
    """Ratio tests of k_n^-delta N_n over desc.levels (at least 4)."""
    levels = desc.levels
    if len(levels) < 4:
        raise DomainError(f"need at least 4 levels for (H2), got {levels}")
    if M1 is None:
        M1 = check_H1(desc, q).M1
    n_n = [compute_Nn(desc, n, q, M1) for n in levels]
    logs_k = np.array([log_k(desc.kind, desc.dim, n) for n in levels])
    series = {}
    # N_n = 0 is counted as 1 to keep the logs finite
    log_n = np.log(np.maximum(np.array(n_n, dtype=float), 1.0))
    for delta in deltas:
        series[float(delta)] = summability(delta, log_n - delta * logs_k)
    logger.debug("%s: N_n = %s", desc.kind, n_n)
    return H2Result(q=float(q), M1=M1, levels=levels, N_n=n_n, series=series)


# ============ Condition on the ball ============

@dataclass
class EtaResult:
    eta_hat: float
    worst_center: List[float]
    worst_radius: float
    samples: int


def _eta_at(u0: np.ndarray, rho: float) -> float:
    """max over n and U near U0 of d_m(U, g_n(U)) / rho with U, g_n(U), gap inside B(U0, rho)."""
    n = np.arange(ETA_MAX_LEVEL + 1)[:, None]
    scale = 2.0 ** n
    lower = np.floor(u0[None, :] * scale) / scale
    step = 1.0 / scale
    best = 0.0
    m0 = float(np.prod(u0))
    candidates = [np.minimum(lower + ETA_OFFSET * step, 1.0), np.broadcast_to(u0, lower.shape)]
    for u in candidates:
        g = np.ceil(u * scale) / scale
        mu, mg = np.prod(u, axis=1), np.prod(g, axis=1)
        d_u = m0 + mu - 2.0 * np.prod(np.minimum(u, u0[None, :]), axis=1)
        d_g = m0 + mg - 2.0 * np.prod(np.minimum(g, u0[None, :]), axis=1)
        gap = mg - mu
        ok = (d_u <= rho) & (d_g <= rho) & (gap <= rho)
        if ok.any():
            best = max(best, float(np.max(gap[ok])) / rho)
    return best


def check_eqHypFin(
    desc: CollectionDescriptor,
    samples: int = 100,
    seed: int = 0,
    radii: Sequence[float] = ETA_RADII,
) -> EtaResult:
    """
    Estimate eta = inf over U0 and rho of the best d_m(U, g_n(U)) / rho.

    Centers U0 are drawn with corners uniform in [0.05, 0.95]^N; for each
    rho and n the candidates are U0 itself and the set whose corner sits
    1/64 of a cell above the lower corner of the level-n cell of U0.
    """
    if desc.kind != RECTANGLES:
        raise DomainError("the ball condition is checked on rectangles only")
    rng = np.random.default_rng(seed)
    centers = rng.uniform(0.05, 0.95, size=(samples, desc.dim))
    worst = (math.inf, None, None)
    for u0 in centers:
        for rho in radii:
            value = _eta_at(u0, rho)
            if value < worst[0]:
                worst = (value, u0, rho)
    eta, u0, rho = worst
    logger.info("eta_hat=%.4f at U0=%s rho=%g", eta, np.round(u0, 4).tolist(), rho)
    return EtaResult(eta_hat=float(eta), worst_center=u0.tolist(), worst_radius=float(rho),
                     samples=samples)


# ============ Point mass jumps ============

def point_mass_jumps(
    model: CovModel,
    t: Sequence[float],
    levels: Sequence[int],
    seed: int,
    replicates: int,
    threads: int = 1,
) -> np.ndarray:
    """Delta X over C_n(t) per replicate (rows) and level (columns)."""
    levels = sorted(set(int(n) for n in levels))
    path = sample_paths(model, pc_closure(t, levels), seed, replicates, threads=threads)
    return np.column_stack([delta_increment(path, left_neighbourhood(t, n)) for n in levels])


# ============ Reports ============

@dataclass
class AssumptionReport:
    """
    Outcome of the assumption diagnostics on one collection.

    Attributes:
        collection: Descriptor (JSON)
        k_sequence: k_n per level
        sup_gap: Exact sup gaps per level
        q_fit / q_stderr: Fitted discretization exponent
        q_used: Smallest tested q at which (H1) holds
        h1_pass: Per-level (H1) outcome at q_used (or the last q tried)
        h1_by_q: q -> (H1) holds at every level
        N_n, h2: (H2) neighbour counts and ratio tests
        admissibility: Ratio tests of k_{n+1} / k_n^(1+delta)
        eta_hat: Ball condition estimate (rectangles)
        verdict: SATISFIED, VIOLATED or INCONCLUSIVE
        witness: Level and sets breaking (H1) when VIOLATED
    """
    collection: Dict[str, Any]
    levels: List[int]
    k_sequence: List[int]
    sup_gap: List[float]
    sampled_gap: List[float]
    q_fit: Optional[float]
    q_stderr: Optional[float]
    q_used: Optional[float]
    M1: Optional[float]
    h1_pass: List[bool]
    h1_bound: List[float]
    h1_by_q: Dict[float, bool]
    N_n: List[int]
    h2: Dict[float, Dict[str, Any]]
    admissibility: Dict[float, Dict[str, Any]]
    eta_hat: Optional[float]
    verdict: str
    witness: Optional[Dict[str, Any]] = None
    layers: Optional[Dict[str, Any]] = None
    notes: List[str] = field(default_factory=list)

    def __post_init__(self):
        if self.verdict == VIOLATED and not self.witness:
            raise DomainError("a VIOLATED verdict needs a witness")

    def to_json(self) -> Dict[str, Any]:
        data = asdict(self)
        for key in ("h1_by_q", "h2", "admissibility"):
            data[key] = {str(k): v for k, v in data[key].items()}
        return data

    def table(self) -> List[Dict[str, Any]]:
        """Rows (level, k_n, gap, bound, pass)."""
        return [
            {"level": n, "k_n": k, "sup_gap": g, "bound": b, "pass": p}
            for n, k, g, b, p in zip(self.levels, self.k_sequence, self.sup_gap, self.h1_bound,
                                     self.h1_pass)
        ]


def _q_candidates(q_fit: Optional[float], stderr: Optional[float]) -> List[float]:
    if q_fit is None:
        return list(DEFAULT_Q_GRID)
    q_check = q_fit + 2.0 * (stderr or 0.0)
    return [q_check] + [q for q in DEFAULT_Q_GRID if q > q_check]


def check_assumptions(
    desc: CollectionDescriptor,
    seed: int = 0,
    deltas: Sequence[float] = DEFAULT_DELTAS,
    samples: int = CONFIRMATION_SAMPLES,
    eta_samples: int = 100,
) -> AssumptionReport:
    """
    Run every diagnostic and combine them into a verdict.

    (H1) is tried at q_fit + 2 stderr and then at the larger values of
    DEFAULT_Q_GRID; the first q at which it holds is used for (H2). The
    verdict is VIOLATED when (H1) fails for every q tried, SATISFIED when
    (H1) holds and every ratio test passes, INCONCLUSIVE otherwise.
    """
    notes = [VC_NOTE]
    if len(desc.levels) >= 3:
        fit = fit_discretization_exponent(desc, seed, samples)
        gaps, sampled = fit.gaps, fit.sampled_gaps
    else:
        fit = None
        gaps = [sup_gap(desc, n)[0] for n in desc.levels]
        sampled = []
        notes.append("fewer than 3 levels: q not fitted")

    h1_by_q: Dict[float, bool] = {}
    chosen: Optional[H1Result] = None
    last: Optional[H1Result] = None
    for q in _q_candidates(fit.q if fit else None, fit.stderr if fit else None):
        last = check_H1(desc, q, gaps)
        h1_by_q[float(q)] = last.holds
        if last.holds:
            chosen = last
            break
    if desc.kind == LOWER_LAYERS and chosen is None:
        for q in DEFAULT_Q_GRID:
            if float(q) not in h1_by_q:
                h1_by_q[float(q)] = check_H1(desc, q, gaps).holds

    admissibility = check_admissibility(desc, deltas)
    h2: Dict[float, Summability] = {}
    n_n: List[int] = []
    if chosen is not None:
        if len(desc.levels) >= 4:
            h2_result = check_H2(desc, chosen.q, chosen.M1, deltas)
            h2, n_n = h2_result.series, h2_result.N_n
        else:
            notes.append("fewer than 4 levels: (H2) not tested")

    eta = None
    if desc.kind == RECTANGLES and desc.metric == "d_m":
        eta = check_eqHypFin(desc, samples=eta_samples, seed=seed).eta_hat

    if chosen is None:
        verdict = VIOLATED if last is not None and last.witness else INCONCLUSIVE
    else:
        tests = list(admissibility.values()) + list(h2.values())
        good = h2 and all(s.verdict == SATISFIED for s in tests)
        verdict = SATISFIED if good else INCONCLUSIVE
    if verdict == INCONCLUSIVE:
        notes.append("finitely many levels cannot establish summability")

    shown = chosen or last
    report = AssumptionReport(
        collection=desc.to_json(),
        levels=desc.levels,
        k_sequence=k_sequence(desc),
        sup_gap=gaps,
        sampled_gap=sampled,
        q_fit=fit.q if fit else None,
        q_stderr=fit.stderr if fit else None,
        q_used=chosen.q if chosen else None,
        M1=shown.M1,
        h1_pass=shown.passed,
        h1_bound=shown.bounds,
        h1_by_q=h1_by_q,
        N_n=n_n,
        h2={d: asdict(s) for d, s in h2.items()},
        admissibility={d: asdict(s) for d, s in admissibility.items()},
        eta_hat=eta,
        verdict=verdict,
        witness=None if chosen else (last.witness if last else None),
        notes=notes,
    )
    logger.info("%s N=%d: verdict %s", desc.kind, desc.dim, verdict)
    return report


def lower_layers_report(n_max: int = LOWER_LAYERS_MAX_LEVEL, seed: int = 0) -> AssumptionReport:
    """
    Assumption report of the lower layers of [0,1]^2 up to level n_max.

    Adds the exact counts k_n (core and with the {0}, empty set conventions),
    the check k_n >= 2^(2^n) and the minimal gap 2^-2n per level.
    """
    if not 0 <= n_max <= LOWER_LAYERS_MAX_LEVEL:
        raise CapExceededError("lower-layer level", n_max, LOWER_LAYERS_MAX_LEVEL)
    desc = CollectionDescriptor.lower_layers(level_max=n_max)
    report = check_assumptions(desc, seed=seed)
    counts, gaps = [], []
    for n in desc.levels:
        count, _ = lower_layers_enumerate(2 ** n, cap=MAX_GRID_SIDE)
        counts.append({
            "level": n,
            "core": count.core,
            "with_conventions": count.with_conventions,
            "lower_bound": 2 ** (2 ** n),
            "holds": count.core >= 2 ** (2 ** n),
        })
        gaps.append({"level": n, "min_gap": lower_layers_min_gap(n), "expected": 4.0 ** -n})
    report.layers = {"counts": counts, "min_gaps": gaps}
    report.notes.append("only the dyadic subclasses are tested")
    return report
