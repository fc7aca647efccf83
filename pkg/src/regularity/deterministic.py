"""
Deterministic exponents from the analytic incremental variance.

Mathematical Foundation:
    detPointwise  sup{a : E|X_U - X_V|^2 = O(rho^2a) on B(U0, rho)}
    detLocal      sup{a : E|X_U - X_V|^2 = O(d(U,V)^2a) near U0}
    detPc         sup{a : E[(Delta X_{C_n(t)})^2] = O(m(C_n(t))^2a)}

For SIFBM(H), E|X_U - X_V|^2 = d_m(U,V)^2H, so both the pointwise and the
local value are H. The incremental variance only depends on d_m, and it is
non-decreasing in d_m for every model here, so its sup over the ball is
reached at the largest distance: one satellite per radius along a fixed
direction is enough.

Gaussian moments: E|Z|^p = 2^(p/2) Gamma((p+1)/2) / sqrt(pi), which is
(p-1)!! for even p.
"""

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Sequence, Tuple

import numpy as np
from scipy.special import gamma as gamma_fn

from src.errors import DegenerateEstimateError, DomainError
from src.gaussian.models import SIOU, CovModel, increment_var, variance_of_cset
from src.geometry.dyadic import left_neighbourhood
from src.regularity.design import ScalePlan, distances_to, satellite_at, satellite_pair
from src.regularity.estimators import (
    DET_LOCAL,
    DET_PC,
    DET_POINTWISE,
    MIN_PC_LEVELS,
    MIN_RADII,
    ExponentReport,
    loglog_fit,
    pc_target,
)

logger = logging.getLogger(__name__)


def gaussian_abs_moment(p: float) -> float:
    """E|Z|^p for a standard normal Z."""
    if p <= 0:
        raise DomainError(f"moment order must be positive, got {p}")
    return float(2.0 ** (p / 2.0) * gamma_fn((p + 1.0) / 2.0) / math.sqrt(math.pi))


def deterministic_exponents(
    model: CovModel, plan: ScalePlan
) -> Tuple[ExponentReport, ExponentReport]:
    """
    Deterministic pointwise and local exponents at plan.center.

    Args:
        model: Covariance model
        plan: Center, at least four radii, metric

    Returns:
        (detPointwise, detLocal) reports; no randomness involved
    """
    radii = np.array(plan.radii)
    if radii.size < MIN_RADII:
        raise DomainError(f"need at least {MIN_RADII} radii, got {radii.size}")
    axis, sign = satellite_pair(plan.center, plan.rho_max, plan.metric)
    satellites = [satellite_at(plan.center, rho, axis, sign, plan.metric) for rho in radii]
    dist = distances_to(plan.center, satellites, plan.metric)
    incvar = np.array([increment_var(model, plan.center, p) for p in satellites])
    if np.any(incvar <= 0.0) or np.any(dist <= 0.0):
        raise DegenerateEstimateError(f"zero incremental variance near {plan.center}")
    half_log = 0.5 * np.log(incvar)
    reports = []
    for kind, x in ((DET_POINTWISE, np.log(radii)), (DET_LOCAL, np.log(dist))):
        slope, _, r2 = loglog_fit(x, half_log)
        reports.append(
            ExponentReport(
                kind=kind,
                estimate=slope,
                scale_range=(float(radii[-1]), float(radii[0])),
                regression_r2=r2,
                pairs_used=int(radii.size),
                target=model.hurst,
                replicate_estimates=[slope],
                diagnostics={"satellite_axis": axis, "satellite_sign": sign},
            )
        )
    logger.debug("%s at %s: detPointwise %.6f", model, plan.center, reports[0].estimate)
    return reports[0], reports[1]


def left_neighbourhood_variances(
    model: CovModel, t: Sequence[float], levels: Sequence[int]
) -> Tuple[np.ndarray, np.ndarray]:
    """E[(Delta X_{C_n(t)})^2] and m(C_n(t)) at every level."""
    cells = [left_neighbourhood(t, n) for n in levels]
    variances = np.array([variance_of_cset(model, c) for c in cells])
    measures = np.array([c.measure for c in cells])
    return variances, measures


def siou_pc_ratio(model: CovModel, t: Sequence[float]) -> float:
    """
    Limit of E[(Delta Y_{C_n(t)})^2] / m(C_n(t)) for SIOU in dimension 2.

    Expanding the incremental variance to second order in d_m gives
    sigma^2 (1 + 2 gamma t1 t2).
    """
    if model.kind != SIOU:
        raise DomainError(f"expected an SIOU model, got {model}")
    if len(t) != 2:
        raise DomainError("the SIOU ratio is derived for points of [0,1]^2")
    return model.sigma ** 2 * (1.0 + 2.0 * model.gamma * t[0] * t[1])


def deterministic_pc(model: CovModel, t: Sequence[float], levels: Sequence[int]) -> ExponentReport:
    """
    Deterministic pc exponent at t.

    Half the slope of log E[(Delta X_{C_n(t)})^2] against log m(C_n(t)),
    with the variances from the full inclusion-exclusion expansion.
    """
    levels = sorted(set(int(n) for n in levels))
    if len(levels) < MIN_PC_LEVELS:
        raise DomainError(f"need at least {MIN_PC_LEVELS} levels, got {levels}")
    variances, measures = left_neighbourhood_variances(model, t, levels)
    ok = variances > 0.0
    if ok.sum() < MIN_PC_LEVELS:
        raise DegenerateEstimateError(f"fewer than {MIN_PC_LEVELS} levels with positive variance")
    slope, _, r2 = loglog_fit(np.log(measures[ok]), np.log(variances[ok]))
    return ExponentReport(
        kind=DET_PC,
        estimate=0.5 * slope,
        scale_range=(float(measures[-1]), float(measures[0])),
        regression_r2=r2,
        pairs_used=int(ok.sum()),
        target=pc_target(model, len(t)),
        replicate_estimates=[0.5 * slope],
        diagnostics={
            "levels": levels,
            "variances": variances.tolist(),
            "ratios": (variances / measures).tolist(),
        },
    )


@dataclass
class PcMomentReport:
    """
    Gaussian pc criterion E|Delta X_{C_n}|^p <= K m(C_n)^q.

    Attributes:
        p: Moment order
        q: Fitted exponent of the moment bound
        K: Smallest constant making the bound hold at every level
        gamma_max: Upper end of the admissible range (0, q / p)
        levels: Levels used
        moments: E|Delta X_{C_n}|^p per level
    """
    p: float
    q: float
    K: float
    gamma_max: float
    levels: List[int] = field(default_factory=list)
    moments: List[float] = field(default_factory=list)

    def to_json(self) -> Dict:
        return asdict(self)


def pc_moment_check(
    model: CovModel, t: Sequence[float], levels: Sequence[int], p: float = 2.0
) -> PcMomentReport:
    """Largest q with E|Delta X_{C_n(t)}|^p <= K m(C_n(t))^q from the analytic variance."""
    levels = sorted(set(int(n) for n in levels))
    if len(levels) < MIN_PC_LEVELS:
        raise DomainError(f"need at least {MIN_PC_LEVELS} levels, got {levels}")
    variances, measures = left_neighbourhood_variances(model, t, levels)
    moments = gaussian_abs_moment(p) * variances ** (p / 2.0)
    q, _, _ = loglog_fit(np.log(measures), np.log(moments))
    K = float(np.max(moments / measures ** q))
    return PcMomentReport(
        p=float(p),
        q=q,
        K=K,
        gamma_max=q / p,
        levels=levels,
        moments=moments.tolist(),
    )
