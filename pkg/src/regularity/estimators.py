"""
Empirical Hölder exponents of sampled set-indexed paths.

Mathematical Foundation:
    osc(rho)      = sup_{U, V in B(U0, rho)} |X_U - X_V|
    pointwise     alpha(U0)   ~ slope of log osc(rho_j) against log rho_j
    local         alpha~(U0)  ~ min of log|X_U - X_V| / log d(U, V) over pairs of
                                B(U0, rho_min) ("ratio"), or the slope of log max
                                {|X_U - X_V| : d(U,V) in band j} against log rho_j ("bands")
    C-exponents   the same with U c V (nested pairs only)
    pc exponent   alpha^pc(t) ~ slope of log |Delta X_{C_n(t)}| against log m(C_n(t))

Every estimate is computed replicate by replicate and aggregated by the
median. Local estimates are reported as computed; the count of replicates
with local > pointwise + ORDER_SLACK is kept in the diagnostics.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.errors import DegenerateEstimateError, DomainError
from src.flows.flow import ElementaryFlow, projected_sets, theta_range
from src.gaussian.models import SIFBM, CovModel
from src.gaussian.sampling import SamplePath, closure_family, delta_increment, sample_paths
from src.geometry.dyadic import left_neighbourhood
from src.geometry.rects import Rect, pairwise_distances
from src.regularity.design import ScalePlan, distances_to

logger = logging.getLogger(__name__)

POINTWISE = "pointwise"
LOCAL = "local"
POINTWISE_C = "pointwiseC"
LOCAL_C = "localC"
PC = "pc"
DET_POINTWISE = "detPointwise"
DET_LOCAL = "detLocal"
DET_PC = "detPc"
KINDS = (POINTWISE, LOCAL, POINTWISE_C, LOCAL_C, PC, DET_POINTWISE, DET_LOCAL, DET_PC)

LOCAL_METHODS = ("ratio", "bands")

# Estimator noise allowed on alpha~ <= alpha.
ORDER_SLACK = 0.05

MIN_RADII = 4
MIN_PC_LEVELS = 3

# Pairs closer than this fraction of rho_min are left out of local estimates.
MIN_PAIR_FRACTION = 1e-3

_BALL_TOL = 1e-12

CSV_FIELDS = ["kind", "replicate", "estimate", "target", "rho_min", "rho_max"]


@dataclass
class ExponentReport:
    """
    Aggregated exponent estimate.

    Attributes:
        kind: One of KINDS
        estimate: Median over replicates (inf when every replicate is degenerate)
        scale_range: (smallest, largest) scale used in the regression
        regression_r2: Median R^2 of the replicate regressions
        pairs_used: Number of pairs (or levels) entering each replicate
        target: Theoretical value, when known
        replicate_estimates: Per replicate slopes
        zero_increments: Zero oscillations or increments excluded from the logs
        degenerate: No replicate had enough usable points
        diagnostics: Extra values (raw local slope, per level ratios, ...)
    """
    kind: str
    estimate: float
    scale_range: Tuple[float, float]
    regression_r2: float
    pairs_used: int
    target: Optional[float] = None
    replicate_estimates: List[float] = field(default_factory=list)
    zero_increments: int = 0
    degenerate: bool = False
    diagnostics: Dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DomainError(f"unknown exponent kind: {self.kind}")
        if not (0.0 <= self.regression_r2 <= 1.0):
            raise DomainError(f"R^2 must lie in [0, 1], got {self.regression_r2}")
        if not math.isfinite(self.estimate) and not self.degenerate:
            raise DomainError("a non-degenerate report needs a finite estimate")

    @property
    def error(self) -> Optional[float]:
        if self.target is None or self.degenerate:
            return None
        return abs(self.estimate - self.target)

    def to_json(self) -> Dict:
        return {
            "kind": self.kind,
            "estimate": self.estimate if math.isfinite(self.estimate) else None,
            "degenerate": self.degenerate,
            "scale_range": list(self.scale_range),
            "regression_r2": self.regression_r2,
            "pairs_used": self.pairs_used,
            "target": self.target,
            "zero_increments": self.zero_increments,
            "replicates": len(self.replicate_estimates),
            "diagnostics": self.diagnostics,
        }

    def csv_rows(self) -> List[Dict]:
        """Long format: one row per replicate."""
        lo, hi = self.scale_range
        return [
            {
                "kind": self.kind,
                "replicate": i,
                "estimate": est if math.isfinite(est) else "inf",
                "target": "" if self.target is None else self.target,
                "rho_min": lo,
                "rho_max": hi,
            }
            for i, est in enumerate(self.replicate_estimates)
        ]


# ============ Regression helpers ============

def loglog_fit(x: Sequence[float], y: Sequence[float]) -> Tuple[float, float, float]:
    """Least-squares slope, intercept and R^2 of y on x."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    slope, intercept = np.polyfit(x, y, 1)
    residual = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - float(np.sum(residual ** 2)) / ss_tot
    return float(slope), float(intercept), min(1.0, max(0.0, r2))


def replicate_slopes(
    log_x: np.ndarray, log_y: np.ndarray, min_points: int
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Slopes of each row of log_y against log_x.

    Non-finite entries (log of zero) are dropped; rows left with fewer than
    min_points entries get slope inf and R^2 nan.
    """
    log_y = np.atleast_2d(log_y)
    slopes = np.full(log_y.shape[0], np.inf)
    r2 = np.full(log_y.shape[0], np.nan)
    for rep, row in enumerate(log_y):
        ok = np.isfinite(row)
        if ok.sum() < min_points:
            continue
        slopes[rep], _, r2[rep] = loglog_fit(log_x[ok], row[ok])
    return slopes, r2


def _report(
    kind: str,
    slopes: np.ndarray,
    r2: np.ndarray,
    scale_range: Tuple[float, float],
    pairs_used: int,
    target: Optional[float],
    zero_increments: int,
    diagnostics: Optional[Dict] = None,
) -> ExponentReport:
    finite = np.isfinite(slopes)
    estimate = float(np.median(slopes)) if slopes.size else math.inf
    degenerate = not math.isfinite(estimate)
    if degenerate:
        logger.warning("%s estimate degenerate: %d of %d replicates usable", kind,
                       int(finite.sum()), slopes.size)
    good_r2 = r2[np.isfinite(r2)]
    return ExponentReport(
        kind=kind,
        estimate=estimate,
        scale_range=(float(scale_range[0]), float(scale_range[1])),
        regression_r2=float(np.median(good_r2)) if good_r2.size else 0.0,
        pairs_used=int(pairs_used),
        target=target,
        replicate_estimates=[float(s) for s in slopes],
        zero_increments=int(zero_increments),
        degenerate=degenerate,
        diagnostics=diagnostics or {},
    )


def _safe_log(values: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(values)


def default_target(path: SamplePath) -> Optional[float]:
    return path.model.hurst if path.model is not None else None


# ============ Ball geometry ============

def _inside(dist: np.ndarray, rho: float) -> np.ndarray:
    return dist <= rho * (1.0 + _BALL_TOL)


def _nested_mask(sets: Sequence[Rect]) -> np.ndarray:
    """mask[i, j] is True when sets i and j are comparable under inclusion."""
    corners = np.array([r.corner for r in sets], dtype=float)
    below = np.all(corners[:, None, :] <= corners[None, :, :], axis=2)
    return below | below.T


class _Ball:
    """Sets of a path inside B(center, rho_max) and their pairs."""

    def __init__(self, path: SamplePath, plan: ScalePlan, ordered: bool):
        dist = distances_to(plan.center, path.sets, plan.metric)
        self.index = np.flatnonzero(_inside(dist, plan.rho_max))
        self.dist = dist[self.index]
        self.values = path.values[:, self.index]
        sets = [path.sets[i] for i in self.index]
        pi, pj = np.triu_indices(len(sets), 1)
        if ordered and len(sets) > 1:
            keep = _nested_mask(sets)[pi, pj]
            pi, pj = pi[keep], pj[keep]
        self.pair_i, self.pair_j = pi, pj
        if len(sets) > 1:
            self.pair_dist = pairwise_distances(sets, plan.metric)[pi, pj]
        else:
            self.pair_dist = pi * 0.0
        # A pair lies in B(center, rho) when both of its sets do.
        self.pair_radius = np.maximum(self.dist[pi], self.dist[pj]) if pi.size else pi * 0.0
        self.ordered = ordered

    @property
    def pairs(self) -> int:
        return int(self.pair_i.size)


def oscillation(
    path: SamplePath, center: Rect, rho: float, metric: str = "d_m", ordered: bool = False
) -> np.ndarray:
    """
    max |X_U - X_V| over sampled sets U, V of B(center, rho), per replicate.

    Args:
        path: Sampled path holding a design around center
        center: U0
        rho: Ball radius
        metric: "d_m" or "d_hausdorff"
        ordered: Restrict to nested pairs U c V

    Returns:
        Array of length path.replicates
    """
    dist = distances_to(center, path.sets, metric)
    index = np.flatnonzero(_inside(dist, rho))
    if index.size < 2:
        raise DomainError(f"fewer than 2 sampled sets in B({center}, {rho})")
    values = path.values[:, index]
    if not ordered:
        return values.max(axis=1) - values.min(axis=1)
    sets = [path.sets[i] for i in index]
    pi, pj = np.triu_indices(len(sets), 1)
    keep = _nested_mask(sets)[pi, pj]
    if not keep.any():
        return np.zeros(path.replicates)
    pi, pj = pi[keep], pj[keep]
    return np.max(np.abs(values[:, pi] - values[:, pj]), axis=1)


def _oscillation_profile(ball: _Ball, radii: np.ndarray) -> np.ndarray:
    """replicates x len(radii) oscillations."""
    reps = ball.values.shape[0]
    out = np.zeros((reps, len(radii)))
    if not ball.ordered:
        for j, rho in enumerate(radii):
            members = _inside(ball.dist, rho)
            if members.sum() >= 2:
                vals = ball.values[:, members]
                out[:, j] = vals.max(axis=1) - vals.min(axis=1)
        return out
    if not ball.pairs:
        return out
    order = np.argsort(ball.pair_radius, kind="stable")
    radius_sorted = ball.pair_radius[order]
    cut = np.searchsorted(radius_sorted, radii * (1.0 + _BALL_TOL), side="right")
    pi, pj = ball.pair_i[order], ball.pair_j[order]
    for rep in range(reps):
        row = ball.values[rep]
        running = np.maximum.accumulate(np.abs(row[pi] - row[pj]))
        out[rep] = np.where(cut > 0, running[np.maximum(cut - 1, 0)], 0.0)
    return out


def _checked_radii(plan: ScalePlan) -> np.ndarray:
    radii = np.array(plan.regression_radii())
    if radii.size < MIN_RADII:
        raise DomainError(f"need at least {MIN_RADII} regression radii, got {radii.size}")
    return radii


# ============ Estimators ============

def estimate_pointwise(
    path: SamplePath,
    plan: ScalePlan,
    ordered: bool = False,
    target: Optional[float] = None,
) -> ExponentReport:
    """
    Pointwise exponent at plan.center.

    Args:
        path: Path sampled on a design around plan.center
        plan: Radii and metric
        ordered: Use nested pairs only (pointwise C-exponent)
        target: Theoretical value; defaults to the hurst index of path.model

    Returns:
        ExponentReport of kind "pointwise" or "pointwiseC"
    """
    radii = _checked_radii(plan)
    ball = _Ball(path, plan, ordered)
    if ball.index.size < 2:
        raise DomainError(f"fewer than 2 sampled sets in B({plan.center}, {plan.rho_max})")
    osc = _oscillation_profile(ball, radii)
    zeros = int(np.sum(osc == 0.0))
    if zeros:
        logger.info("excluded %d zero oscillations from the regression", zeros)
    slopes, r2 = replicate_slopes(np.log(radii), _safe_log(osc), MIN_RADII)
    n = ball.index.size
    pairs = ball.pairs if ordered else n * (n - 1) // 2
    return _report(
        POINTWISE_C if ordered else POINTWISE,
        slopes,
        r2,
        (radii[-1], radii[0]),
        pairs,
        default_target(path) if target is None else target,
        zeros,
        {"sets_in_ball": int(n)},
    )


def _band_slopes(ball: _Ball, radii: np.ndarray) -> Tuple[np.ndarray, np.ndarray, int]:
    """Slope of log max |X_U - X_V| per distance band (radii[j+1], radii[j]]."""
    reps = ball.values.shape[0]
    usable = (ball.pair_dist >= MIN_PAIR_FRACTION * radii[-1]) & (ball.pair_dist > 0.0)
    ascending = radii[::-1]
    slot = np.searchsorted(ascending, ball.pair_dist * (1.0 - _BALL_TOL), side="left")
    usable &= slot < ascending.size
    band = (radii.size - 1 - slot)[usable]
    order = np.argsort(band, kind="stable")
    band = band[order]
    pi, pj = ball.pair_i[usable][order], ball.pair_j[usable][order]
    present, starts = np.unique(band, return_index=True)
    maxima = np.zeros((reps, radii.size))
    if present.size:
        for rep in range(reps):
            row = ball.values[rep]
            maxima[rep, present] = np.maximum.reduceat(np.abs(row[pi] - row[pj]), starts)
    zeros = int(np.sum(maxima == 0.0))
    slopes, r2 = replicate_slopes(np.log(radii), _safe_log(maxima), MIN_RADII)
    return slopes, r2, zeros


def _ratio_estimates(ball: _Ball, rho_min: float) -> Tuple[np.ndarray, int]:
    """min of log|X_U - X_V| / log d(U, V) over pairs of the smallest ball."""
    reps = ball.values.shape[0]
    keep = (ball.pair_radius <= rho_min * (1.0 + _BALL_TOL))
    keep &= ball.pair_dist >= MIN_PAIR_FRACTION * rho_min
    keep &= ball.pair_dist < 1.0
    pi, pj, d = ball.pair_i[keep], ball.pair_j[keep], ball.pair_dist[keep]
    out = np.full(reps, np.inf)
    zeros = 0
    if not d.size:
        return out, zeros
    log_d = np.log(d)
    for rep in range(reps):
        row = ball.values[rep]
        diff = np.abs(row[pi] - row[pj])
        nonzero = diff > 0.0
        zeros += int(np.sum(~nonzero))
        if nonzero.any():
            out[rep] = float(np.min(np.log(diff[nonzero]) / log_d[nonzero]))
    return out, zeros


def estimate_local(
    path: SamplePath,
    plan: ScalePlan,
    method: str = "ratio",
    ordered: bool = False,
    target: Optional[float] = None,
) -> ExponentReport:
    """
    Local exponent at plan.center.

    Args:
        path: Path sampled on a design around plan.center
        plan: Radii and metric
        method: "ratio" (min of log|dX| / log d over the smallest ball) or
            "bands" (regression over distance bands)
        ordered: Use nested pairs only (local C-exponent)
        target: Theoretical value; defaults to the hurst index of path.model

    Returns:
        ExponentReport of kind "local" or "localC"; diagnostics["above_pointwise"]
        counts replicates whose local value exceeds the pointwise one by more
        than ORDER_SLACK
    """
    if method not in LOCAL_METHODS:
        raise DomainError(f"unknown local method: {method}")
    pointwise = estimate_pointwise(path, plan, ordered, target)
    radii = _checked_radii(plan)
    ball = _Ball(path, plan, ordered)
    if method == "bands":
        raw, r2, zeros = _band_slopes(ball, radii)
    else:
        raw, zeros = _ratio_estimates(ball, radii[-1])
        r2 = np.full(raw.size, np.nan)
    excess = raw - np.array(pointwise.replicate_estimates)
    above = int(np.sum(np.isfinite(excess) & (excess > ORDER_SLACK)))
    if above:
        logger.warning("local above pointwise + %.2f on %d of %d replicates", ORDER_SLACK,
                       above, raw.size)
    return _report(
        LOCAL_C if ordered else LOCAL,
        raw,
        r2,
        (radii[-1], radii[0]),
        ball.pairs,
        pointwise.target,
        zeros,
        {
            "method": method,
            "above_pointwise": above,
            "pointwise_median": pointwise.estimate if not pointwise.degenerate else None,
        },
    )


def estimate_C_exponents(
    path: SamplePath, plan: ScalePlan, method: str = "ratio", target: Optional[float] = None
) -> Tuple[ExponentReport, ExponentReport]:
    """Pointwise and local C-exponents, from nested pairs U c V only."""
    return (
        estimate_pointwise(path, plan, ordered=True, target=target),
        estimate_local(path, plan, method=method, ordered=True, target=target),
    )


# ============ Pointwise continuity ============

def pc_target(model: CovModel, dim: int) -> float:
    """
    Deterministic pc exponent of the model on rectangles of [0,1]^dim.

    The increment over C_n(t) of SIFBM(H) has variance of order 2^-2nH
    against m(C_n(t)) = 2^-nN, giving H / N; at H = 1/2 the leading
    coefficient vanishes and the value is 1/2 as for SIBM and SIOU.
    """
    if model.kind == SIFBM and model.H < 0.5:
        return float(model.H) / dim
    return 0.5


def _checked_levels(levels: Sequence[int]) -> List[int]:
    levels = sorted(set(int(n) for n in levels))
    if len(levels) < MIN_PC_LEVELS:
        raise DomainError(f"need at least {MIN_PC_LEVELS} levels, got {levels}")
    if levels[0] < 0:
        raise DomainError("levels must be >= 0")
    return levels


def pc_closure(t: Sequence[float], levels: Sequence[int]) -> List[Rect]:
    """Rectangles needed for Delta X over C_n(t) at every level, jointly."""
    return closure_family(left_neighbourhood(t, n) for n in _checked_levels(levels))


def estimate_pc_path(
    path: SamplePath, t: Sequence[float], levels: Sequence[int], target: Optional[float] = None
) -> ExponentReport:
    """
    pc exponent at t from a path carrying the closure of {C_n(t)}.

    Raises:
        DegenerateEstimateError: a replicate keeps fewer than 3 non-zero levels
    """
    levels = _checked_levels(levels)
    cells = [left_neighbourhood(t, n) for n in levels]
    jumps = np.column_stack([delta_increment(path, c) for c in cells])
    measures = np.array([c.measure for c in cells])
    magnitude = np.abs(jumps)
    zeros = int(np.sum(magnitude == 0.0))
    if zeros:
        logger.info("dropped %d zero increments at t=%s", zeros, tuple(t))
    slopes, r2 = replicate_slopes(np.log(measures), _safe_log(magnitude), MIN_PC_LEVELS)
    if not np.all(np.isfinite(slopes)):
        bad = int(np.sum(~np.isfinite(slopes)))
        raise DegenerateEstimateError(
            f"pc at t={tuple(t)}: {bad} replicates keep fewer than {MIN_PC_LEVELS} non-zero levels"
        )
    return _report(
        PC,
        slopes,
        r2,
        (measures[-1], measures[0]),
        len(levels),
        target,
        zeros,
        {"levels": levels, "t": list(t)},
    )


def estimate_pc(
    model: CovModel,
    t: Sequence[float],
    levels: Sequence[int],
    seed: int,
    replicates: int,
    threads: int = 1,
) -> ExponentReport:
    """
    Sample the closure of {C_n(t) : n in levels} jointly and estimate alpha^pc(t).

    Args:
        model: Covariance model
        t: Point of the open cube
        levels: At least three dyadic levels
        seed: Philox key
        replicates: Number of replicates

    Returns:
        ExponentReport of kind "pc" with target pc_target(model, len(t))
    """
    family = pc_closure(t, levels)
    path = sample_paths(model, family, seed, replicates, threads=threads)
    return estimate_pc_path(path, t, levels, target=pc_target(model, len(t)))


# ============ Chirp ============

def chirp_value(x: np.ndarray, gamma: float, delta: float) -> np.ndarray:
    """|x|^gamma sin(|x|^-delta), 0 at x = 0."""
    x = np.abs(np.asarray(x, dtype=float))
    out = np.zeros_like(x)
    nz = x > 0.0
    out[nz] = x[nz] ** gamma * np.sin(x[nz] ** -delta)
    return out


def chirp_exponents(gamma: float, delta: float) -> Tuple[float, float]:
    """(pointwise, local) exponents of the chirp at 0."""
    return gamma, gamma / (1.0 + delta)


def chirp_path(
    flow: ElementaryFlow,
    s0: float,
    offsets: Sequence[float],
    gamma: float,
    delta: float,
) -> Tuple[SamplePath, Rect]:
    """
    Deterministic path X_{f(theta^-1(s))} = chirp(s - s0) along a flow.

    Args:
        flow: Elementary flow carrying the path
        s0: Measure time of the center
        offsets: Offsets s - s0 of the sampled sets
        gamma: Amplitude exponent, > 0
        delta: Frequency exponent, > 0

    Returns:
        (path, center) with center = f(theta^-1(s0)) first in path.sets
    """
    if gamma <= 0 or delta <= 0:
        raise DomainError("chirp exponents gamma and delta must be positive")
    lo, hi = theta_range(flow)
    if not (lo <= s0 <= hi):
        raise DomainError(f"s0={s0} outside the range [{lo}, {hi}] of theta")
    times = [float(s0)] + sorted(
        {float(s0 + o) for o in offsets if o != 0.0 and lo <= s0 + o <= hi}
    )
    sets = projected_sets(flow, times)
    values = chirp_value(np.array(times) - s0, gamma, delta)
    return SamplePath(sets, values[None, :]), sets[0]
