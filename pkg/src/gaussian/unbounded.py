"""
Brownian motion is unbounded over the class C: an adaptive demonstration.

The strip [0,1] x [0,h] is cut into k vertical cells of area h/k. The
increments of the set-indexed Brownian motion on the cells are independent
N(0, h/k). Keeping only the cells with a positive increment gives a set
C(omega) of the class C with lambda(C) close to h/2, while

    E[W_C] = k E[Z+] sqrt(h/k) = sqrt(k h / (2 pi))

grows without bound in k.
"""

import logging
import math
from dataclasses import asdict, dataclass
from typing import Dict, List, Sequence

import numpy as np

from src.errors import DomainError
from src.gaussian.sampling import normal_block
from src.geometry.rects import CSet, Rect

logger = logging.getLogger(__name__)

GROWTH_CELLS = tuple(2 ** p for p in range(6, 13))


@dataclass
class UnboundedReport:
    """Monte Carlo summary of W_C(omega) = sum of the positive cell increments."""
    h: float
    cells: int
    replicates: int
    mean_wc: float
    stderr_wc: float
    lambda_c: float
    theoretical_mean: float

    @property
    def relative_error(self) -> float:
        return abs(self.mean_wc - self.theoretical_mean) / self.theoretical_mean

    def to_dict(self) -> Dict:
        data = asdict(self)
        data["relative_error"] = self.relative_error
        return data


def _check(h: float, cells: int) -> None:
    if not (0.0 < h < 1.0):
        raise DomainError(f"h must lie in (0, 1), got {h}")
    if cells < 1 or cells & (cells - 1):
        raise DomainError(f"cells must be a power of 2, got {cells}")


def strip_cells(h: float, cells: int) -> List[CSet]:
    """The k cells [0,(x_i,h)] \\ [0,(x_{i-1},h)] of the strip, x_i = i/k."""
    _check(h, cells)
    out = []
    for i in range(1, cells + 1):
        base = Rect.of(i / cells, h)
        sub = (Rect.of((i - 1) / cells, h),) if i > 1 else ()
        out.append(CSet(base=base, subtracted=sub))
    return out


def adaptive_set(increments: Sequence[float], h: float) -> List[CSet]:
    """C(omega): the cells whose increment is positive."""
    cells = strip_cells(h, len(increments))
    return [c for c, inc in zip(cells, increments) if inc > 0.0]


def cell_increments(h: float, cells: int, seed: int, replicates: int) -> np.ndarray:
    """replicates x cells matrix of independent N(0, h/cells) increments."""
    _check(h, cells)
    return math.sqrt(h / cells) * normal_block(seed, replicates, cells)


def demo_unbounded(h: float, cells: int, seed: int, replicates: int) -> UnboundedReport:
    """
    Sample W_C(omega) and lambda(C(omega)) over replicates.

    Args:
        h: Strip height in (0, 1)
        cells: Number of cells k, a power of 2
        seed: Stream key
        replicates: Number of independent replicates

    Returns:
        UnboundedReport comparing the mean of W_C to sqrt(k h / (2 pi))
    """
    if replicates < 1:
        raise DomainError(f"replicates must be >= 1, got {replicates}")
    inc = cell_increments(h, cells, seed, replicates)
    positive = inc > 0.0
    wc = np.where(positive, inc, 0.0).sum(axis=1)
    lam = positive.sum(axis=1) * (h / cells)
    stderr = float(wc.std(ddof=1) / math.sqrt(replicates)) if replicates > 1 else 0.0
    report = UnboundedReport(
        h=h,
        cells=cells,
        replicates=replicates,
        mean_wc=float(wc.mean()),
        stderr_wc=stderr,
        lambda_c=float(lam.mean()),
        theoretical_mean=math.sqrt(cells * h / (2.0 * math.pi)),
    )
    logger.debug("k=%d: mean W_C %.4f vs %.4f", cells, report.mean_wc, report.theoretical_mean)
    return report


def growth_table(
    h: float, seed: int, replicates: int, cells: Sequence[int] = GROWTH_CELLS
) -> Dict:
    """
    Mean W_C over a range of k and the slope of the mean against sqrt(k).

    The slope is compared with sqrt(h / (2 pi)).
    """
    rows = [demo_unbounded(h, k, seed + i, replicates) for i, k in enumerate(cells)]
    x = np.sqrt(np.array([r.cells for r in rows], dtype=float))
    y = np.array([r.mean_wc for r in rows])
    slope, intercept = np.polyfit(x, y, 1)
    return {
        "rows": [r.to_dict() for r in rows],
        "slope": float(slope),
        "intercept": float(intercept),
        "theoretical_slope": math.sqrt(h / (2.0 * math.pi)),
    }
