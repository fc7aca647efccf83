"""
Kolmogorov criterion verification on a finite design.

Mathematical Foundation:
    E|X_U - X_V|^alpha <= K d(U,V)^(q + beta)   =>   X is locally gamma-Hölder
    for every gamma in (0, beta / alpha)

    Gaussian case: E|X_U - X_V|^alpha = E|Z|^alpha (E|X_U - X_V|^2)^(alpha/2),
    so for SIFBM(H) the moment exponent is s = alpha H and beta = s - q.

When beta <= 0 the moment order is doubled until beta > 0 (or the order cap
is reached). Sampled paths are then checked against |X_U - X_V| <= L d^gamma
for all pairs below a threshold h.
"""

import logging
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.errors import DomainError
from src.gaussian.models import CovModel, increment_var_matrix
from src.gaussian.sampling import sample_paths
from src.geometry.dyadic import DyadicLevel, enumerate_An
from src.geometry.rects import Rect, pairwise_distances
from src.regularity.deterministic import gaussian_abs_moment
from src.regularity.estimators import loglog_fit

logger = logging.getLogger(__name__)

MAX_ALPHA = 64
DEFAULT_L_MAX = 10.0
DEFAULT_GAMMA_FRACTION = 0.5
MAX_MOMENT_PAIRS = 20000

# The Hölder bound is only credited when it covers at least this many
# dyadic octaves of pair distances above the closest pair.
MIN_OCTAVES = 3

# Default grid levels for the Kolmogorov design, by dimension.
DESIGN_LEVELS = {1: 8, 2: 4, 3: 2}

INAPPLICABLE = "criterion inapplicable at this q"


def default_design(dim: int) -> List[Rect]:
    """The non-degenerate sets of A_n with n from DESIGN_LEVELS."""
    if dim not in DESIGN_LEVELS:
        raise DomainError(f"no default Kolmogorov design in dimension {dim}")
    sets = enumerate_An(DyadicLevel(DESIGN_LEVELS[dim], dim))
    return [r for r in sets if r.measure > 0.0]


@dataclass
class KolmogorovReport:
    """
    Moment fit and path verification of the Kolmogorov criterion.

    Attributes:
        model: Generating model (JSON)
        alpha_requested: Moment order asked for
        alpha_used: Moment order after escalation
        escalations: (alpha, s, beta) for every order tried
        s: Fitted moment exponent at alpha_used
        q: Discretization exponent
        beta: s - q
        gamma_bound: beta / alpha when the criterion applies
        applicable: beta > 0 was reached
        message: Human-readable status
        pass_rates: gamma -> fraction of replicates with a finite (L, h*), L <= l_max
        thresholds: gamma -> median h* over the passing replicates
    """
    model: Dict
    alpha_requested: int
    alpha_used: int
    escalations: List[Tuple[int, float, float]]
    s: float
    q: float
    beta: float
    gamma_bound: Optional[float]
    applicable: bool
    message: str
    l_max: float = DEFAULT_L_MAX
    replicates: int = 0
    design_size: int = 0
    pass_rates: Dict[float, float] = field(default_factory=dict)
    thresholds: Dict[float, Optional[float]] = field(default_factory=dict)

    def to_json(self) -> Dict:
        data = asdict(self)
        data["pass_rates"] = {str(k): v for k, v in self.pass_rates.items()}
        data["thresholds"] = {str(k): v for k, v in self.thresholds.items()}
        return data


def _design_pairs(
    sets: Sequence[Rect], metric: str, max_pairs: int, seed: int
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    dist = pairwise_distances(sets, metric)
    pi, pj = np.triu_indices(len(sets), 1)
    d = dist[pi, pj]
    keep = d > 0.0
    pi, pj, d = pi[keep], pj[keep], d[keep]
    if pi.size > max_pairs:
        chosen = np.sort(np.random.default_rng(seed).choice(pi.size, max_pairs, replace=False))
        pi, pj, d = pi[chosen], pj[chosen], d[chosen]
    return pi, pj, d


def moment_exponent(
    model: CovModel,
    sets: Sequence[Rect],
    alpha: float,
    metric: str = "d_m",
    max_pairs: int = MAX_MOMENT_PAIRS,
    seed: int = 0,
) -> Tuple[float, float, float]:
    """
    Fit E|X_U - X_V|^alpha = K d^s over pairs of sets.

    Returns:
        (s, log K, R^2)
    """
    pi, pj, d = _design_pairs(sets, metric, max_pairs, seed)
    if d.size < 2:
        raise DomainError("the design needs at least two pairs at positive distance")
    incvar = increment_var_matrix(model, list(sets))[pi, pj]
    keep = incvar > 0.0
    moments = gaussian_abs_moment(alpha) * incvar[keep] ** (alpha / 2.0)
    s, log_k, r2 = loglog_fit(np.log(d[keep]), np.log(moments))
    return s, log_k, r2


def holder_pass(
    values: np.ndarray,
    pi: np.ndarray,
    pj: np.ndarray,
    d: np.ndarray,
    gamma: float,
    l_max: float = DEFAULT_L_MAX,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Per replicate, the largest dyadic h with max_{d <= h} |dX| / d^gamma <= l_max.

    Returns:
        (passed, h_star): h_star is nan where no admissible h covers
        MIN_OCTAVES octaves above the closest pair
    """
    floor = float(d.min()) * 2.0 ** MIN_OCTAVES
    top = int(np.ceil(-np.log2(d.max())))
    bottom = int(np.floor(-np.log2(floor)))
    thresholds = [2.0 ** -k for k in range(min(top, bottom), bottom + 1)]
    order = np.argsort(d)
    d_sorted = d[order]
    cuts = np.searchsorted(d_sorted, thresholds, side="right")
    scale = d_sorted ** gamma
    passed = np.zeros(values.shape[0], dtype=bool)
    h_star = np.full(values.shape[0], np.nan)
    for rep, row in enumerate(values):
        ratios = np.abs(row[pi[order]] - row[pj[order]]) / scale
        running = np.maximum.accumulate(ratios)
        for h, cut in zip(thresholds, cuts):
            if cut > 0 and h >= floor and running[cut - 1] <= l_max:
                passed[rep] = True
                h_star[rep] = h
                break
    return passed, h_star


def kolmogorov_harness(
    model: CovModel,
    alpha: int = 4,
    design: Optional[Sequence[Rect]] = None,
    gamma_grid: Optional[Sequence[float]] = None,
    q: Optional[float] = None,
    seed: int = 0,
    replicates: int = 100,
    metric: str = "d_m",
    l_max: float = DEFAULT_L_MAX,
    max_alpha: int = MAX_ALPHA,
    dim: int = 2,
) -> KolmogorovReport:
    """
    Fit the moment exponent, derive the admissible gamma range, verify paths.

    Args:
        model: Covariance model
        alpha: Even moment order to start from
        design: Finite family of rectangles (default_design(dim) if omitted)
        gamma_grid: Exponents to verify (half the bound if omitted)
        q: Discretization exponent (the dimension if omitted)
        seed: Philox key for the sampled paths
        replicates: Number of sampled paths
        metric: Distance of the criterion
        l_max: Largest accepted Hölder constant
        max_alpha: Last moment order tried

    Returns:
        KolmogorovReport; when beta stays <= 0 the verification is skipped
    """
    if alpha < 2 or alpha % 2:
        raise DomainError(f"alpha must be an even integer >= 2, got {alpha}")
    sets = list(design) if design is not None else default_design(dim)
    dim = sets[0].dim
    q = float(dim) if q is None else float(q)
    if q <= 0:
        raise DomainError(f"q must be positive, got {q}")

    escalations = []
    order = alpha
    while True:
        s, _, _ = moment_exponent(model, sets, order, metric, seed=seed)
        beta = s - q
        escalations.append((order, s, beta))
        if beta > 0 or order * 2 > max_alpha:
            break
        logger.info("beta=%.3f <= 0 at alpha=%d; doubling the moment order", beta, order)
        order *= 2

    report = KolmogorovReport(
        model=model.to_json(),
        alpha_requested=alpha,
        alpha_used=order,
        escalations=escalations,
        s=s,
        q=q,
        beta=beta,
        gamma_bound=beta / order if beta > 0 else None,
        applicable=beta > 0,
        message="ok" if beta > 0 else INAPPLICABLE,
        l_max=l_max,
        design_size=len(sets),
    )
    if not report.applicable:
        logger.warning("%s: %s (alpha up to %d)", model, INAPPLICABLE, order)
        return report

    grid = list(gamma_grid) if gamma_grid else [DEFAULT_GAMMA_FRACTION * report.gamma_bound]
    for g in grid:
        if not (0.0 < g < report.gamma_bound):
            raise DomainError(f"gamma={g} outside the admissible range (0, {report.gamma_bound})")
    path = sample_paths(model, sets, seed, replicates)
    pi, pj, d = _design_pairs(sets, metric, len(sets) ** 2, seed)
    report.replicates = replicates
    for g in grid:
        passed, h_star = holder_pass(path.values, pi, pj, d, g, l_max)
        report.pass_rates[float(g)] = float(passed.mean())
        report.thresholds[float(g)] = float(np.median(h_star[passed])) if passed.any() else None
    return report
