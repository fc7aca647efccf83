"""
Analytic covariance kernels of set-indexed Gaussian processes.

Mathematical Foundation:
    SIBM:       E[X_U X_V] = m(U n V)
    SIFBM(H):   E[X_U X_V] = 1/2 (m(U)^2H + m(V)^2H - d_m(U,V)^2H),   H in (0, 1/2]
    SIOU(s, g): E[X_U X_V] = s^2 / (2g) exp(-g d_m(U,V))

    E|X_U - X_V|^2 = d_m^2H                       (SIFBM, SIBM with H = 1/2)
                   = (s^2 / g)(1 - exp(-g d_m))   (SIOU)

Variances of linear combinations sum c_i X_{U_i} are evaluated as

    Var = (sum c_i) (sum c_i v_i) - 1/2 sum_ij c_i c_j E|X_i - X_j|^2

which equals sum_ij c_i c_j cov_ij and avoids the cancellation of the
direct double sum when the coefficients add up to zero (class C increments).
"""

import logging
from dataclasses import dataclass
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from src.errors import CapExceededError, DomainError
from src.geometry.rects import CSet, Rect, inclusion_exclusion_terms, rect_intersect

logger = logging.getLogger(__name__)

SIBM = "sibm"
SIFBM = "sifbm"
SIOU = "siou"
KINDS = (SIBM, SIFBM, SIOU)

# Default limit on the number of sets in one covariance matrix.
MAX_COV_SETS = 4096


@dataclass(frozen=True)
class CovModel:
    """
    A set-indexed Gaussian model.

    Attributes:
        kind: "sibm", "sifbm" or "siou"
        H: Self-similarity index (SIFBM only, in (0, 1/2])
        sigma: Noise scale (SIOU only)
        gamma: Mean reversion rate (SIOU only)
    """
    kind: str
    H: Optional[float] = None
    sigma: Optional[float] = None
    gamma: Optional[float] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DomainError(f"unknown model kind: {self.kind}")
        if self.kind == SIFBM:
            if self.H is None or not (0.0 < self.H <= 0.5):
                raise DomainError("H must lie in (0, 0.5]")
        if self.kind == SIOU:
            if self.sigma is None or self.sigma <= 0:
                raise DomainError("sigma must be positive")
            if self.gamma is None or self.gamma <= 0:
                raise DomainError("gamma must be positive")

    @classmethod
    def sibm(cls) -> "CovModel":
        return cls(kind=SIBM)

    @classmethod
    def sifbm(cls, H: float) -> "CovModel":
        return cls(kind=SIFBM, H=H)

    @classmethod
    def siou(cls, sigma: float = 1.0, gamma: float = 1.0) -> "CovModel":
        return cls(kind=SIOU, sigma=sigma, gamma=gamma)

    @property
    def hurst(self) -> float:
        """Exponent of the increment variance in d_m near 0 (1/2 for SIBM and SIOU)."""
        if self.kind == SIFBM:
            return float(self.H)
        return 0.5

    def to_json(self) -> Dict:
        data = {"kind": self.kind}
        if self.kind == SIFBM:
            data["H"] = self.H
        if self.kind == SIOU:
            data.update(sigma=self.sigma, gamma=self.gamma)
        return data

    @classmethod
    def from_json(cls, data: Dict) -> "CovModel":
        return cls(
            kind=data["kind"], H=data.get("H"), sigma=data.get("sigma"), gamma=data.get("gamma")
        )

    def __str__(self) -> str:
        if self.kind == SIFBM:
            return f"SIFBM(H={self.H:g})"
        if self.kind == SIOU:
            return f"SIOU(sigma={self.sigma:g}, gamma={self.gamma:g})"
        return "SIBM"


def kernel_from_measures(model: CovModel, mu, mv, mi):
    """
    Covariance from m(U), m(V) and m(U n V); accepts scalars or arrays.
    """
    mu, mv, mi = np.asarray(mu, float), np.asarray(mv, float), np.asarray(mi, float)
    if model.kind == SIBM:
        return mi
    dist = np.maximum(0.0, mu + mv - 2.0 * mi)
    if model.kind == SIFBM:
        two_h = 2.0 * model.H
        return 0.5 * (mu ** two_h + mv ** two_h - dist ** two_h)
    return model.sigma ** 2 / (2.0 * model.gamma) * np.exp(-model.gamma * dist)


def increment_var_from_distance(model: CovModel, dist):
    """E|X_U - X_V|^2 as a function of d_m(U, V); accepts scalars or arrays."""
    dist = np.maximum(0.0, np.asarray(dist, float))
    if model.kind == SIBM:
        return dist
    if model.kind == SIFBM:
        return dist ** (2.0 * model.H)
    return -(model.sigma ** 2 / model.gamma) * np.expm1(-model.gamma * dist)


def cov(model: CovModel, u: Rect, v: Rect) -> float:
    """Covariance E[X_U X_V]."""
    return float(kernel_from_measures(model, u.measure, v.measure, rect_intersect(u, v).measure))


def increment_var(model: CovModel, u: Rect, v: Rect) -> float:
    """Closed form of E|X_U - X_V|^2."""
    dist = u.measure + v.measure - 2.0 * rect_intersect(u, v).measure
    return float(increment_var_from_distance(model, dist))


def _measure_arrays(sets: Sequence[Rect]) -> Tuple[np.ndarray, np.ndarray]:
    dims = {r.dim for r in sets if not r.empty}
    if len(dims) > 1:
        raise DomainError(f"sets of mixed dimensions: {sorted(dims)}")
    dim = dims.pop() if dims else 1
    corners = np.array([r.corner if not r.empty else (0.0,) * dim for r in sets], dtype=float)
    corners = corners.reshape(len(sets), dim)
    measures = np.prod(corners, axis=1)
    inter = np.prod(np.minimum(corners[:, None, :], corners[None, :, :]), axis=2)
    return measures, inter


def build_cov_matrix(model: CovModel, sets: Sequence[Rect], cap: int = MAX_COV_SETS) -> np.ndarray:
    """
    Covariance matrix of (X_U) over a finite family of sets.

    Args:
        model: Covariance model
        sets: Ordered family of rectangles
        cap: Hard limit on the family size

    Returns:
        Symmetric len(sets) x len(sets) matrix
    """
    if len(sets) > cap:
        raise CapExceededError("covariance matrix sets", len(sets), cap)
    if not sets:
        return np.zeros((0, 0))
    measures, inter = _measure_arrays(sets)
    matrix = kernel_from_measures(model, measures[:, None], measures[None, :], inter)
    return 0.5 * (matrix + matrix.T)


def increment_var_matrix(model: CovModel, sets: Sequence[Rect]) -> np.ndarray:
    """Matrix of E|X_U - X_V|^2 over a finite family."""
    if not sets:
        return np.zeros((0, 0))
    measures, inter = _measure_arrays(sets)
    dist = measures[:, None] + measures[None, :] - 2.0 * inter
    return increment_var_from_distance(model, dist)


def combination_variance(model: CovModel, terms: Sequence[Tuple[float, Rect]]) -> float:
    """Var(sum c_i X_{U_i}) for signed terms (c_i, U_i)."""
    if not terms:
        return 0.0
    coefs = np.array([c for c, _ in terms], dtype=float)
    sets = [r for _, r in terms]
    variances = np.array([cov(model, r, r) for r in sets])
    incvar = increment_var_matrix(model, sets)
    total = coefs.sum() * float(coefs @ variances) - 0.5 * float(coefs @ incvar @ coefs)
    return max(0.0, total)


def variance_of_cset(model: CovModel, cset: CSet) -> float:
    """E[(Delta X_C)^2] from the inclusion-exclusion expansion of C."""
    return combination_variance(model, inclusion_exclusion_terms(cset))
