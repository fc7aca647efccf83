"""
Joint Gaussian sampling over finite families of sets and class C increments.

Mathematical Foundation:
    X = L z,  L L^T = Sigma (+ eps I),  z ~ N(0, I)
    Delta X_C = X_{U0} - sum_{S nonempty} (-1)^{|S|-1} X_{U0 n V_S}

Normal variates come from a Philox counter-based stream keyed by the seed,
with the replicate index in the high counter word, pushed through the
inverse normal CDF. A replicate's values therefore do not depend on how
replicates are split across threads.
"""

import csv
import io
import json
import logging
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Union

import numpy as np
from scipy import linalg
from scipy.special import ndtri

from src.errors import DomainError, FactorizationError, MissingSetError
from src.gaussian.models import MAX_COV_SETS, CovModel, build_cov_matrix
from src.geometry.rects import CSet, Rect, inclusion_exclusion_terms

logger = logging.getLogger(__name__)

JITTER_START = 1e-12
JITTER_MAX = 1e-6
JITTER_FACTOR = 10.0

BINARY_MAGIC = b"SIDX1"

# Uniforms are (2k + 1) 2^-53 for the top 52 bits k of each raw draw,
# strictly inside (0, 1).
_UNIFORM_SHIFT = np.uint64(12)
_UNIFORM_SCALE = 2.0 ** -53

_MASK64 = (1 << 64) - 1


@dataclass
class PSDFactor:
    """
    A factor of a covariance matrix and the repairs that were needed.

    Attributes:
        factor: Matrix F with F F^T equal to the (repaired) covariance
        jitter_applied: Diagonal jitter added before the factorization succeeded
        clipped_eigs: Number of negative eigenvalues clipped to zero
        method: "cholesky", "jitter" or "eigen"
    """
    factor: np.ndarray
    jitter_applied: float = 0.0
    clipped_eigs: int = 0
    method: str = "cholesky"

    def reconstruct(self) -> np.ndarray:
        return self.factor @ self.factor.T


def psd_factorize(
    matrix: np.ndarray,
    jitter_start: float = JITTER_START,
    jitter_max: float = JITTER_MAX,
) -> PSDFactor:
    """
    Factorize a symmetric positive semidefinite matrix.

    Tries a plain Cholesky factorization, then Cholesky with diagonal jitter
    escalating x10 from jitter_start up to jitter_max, then a symmetric
    eigendecomposition with negative eigenvalues clipped to zero.

    Args:
        matrix: Symmetric covariance matrix
        jitter_start: First jitter value tried
        jitter_max: Largest jitter value tried

    Returns:
        PSDFactor recording what was done
    """
    matrix = np.asarray(matrix, dtype=float)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise DomainError(f"expected a square matrix, got shape {matrix.shape}")
    if matrix.size == 0:
        return PSDFactor(factor=np.zeros((0, 0)))
    if not np.all(np.isfinite(matrix)):
        raise FactorizationError("covariance matrix has non-finite entries")
    scale = max(1.0, float(np.max(np.abs(matrix))))
    if not np.allclose(matrix, matrix.T, rtol=0.0, atol=1e-12 * scale):
        raise DomainError("covariance matrix is not symmetric")

    try:
        return PSDFactor(factor=linalg.cholesky(matrix, lower=True), method="cholesky")
    except linalg.LinAlgError:
        pass

    eye = np.eye(matrix.shape[0])
    jitter = jitter_start
    while jitter <= jitter_max * (1.0 + 1e-9):
        try:
            factor = linalg.cholesky(matrix + jitter * eye, lower=True)
            logger.info("covariance factorized with jitter %.1e", jitter)
            return PSDFactor(factor=factor, jitter_applied=jitter, method="jitter")
        except linalg.LinAlgError:
            jitter *= JITTER_FACTOR

    eigvals, eigvecs = linalg.eigh(matrix)
    negative = int(np.sum(eigvals < 0.0))
    clipped = np.clip(eigvals, 0.0, None)
    logger.warning(
        "jitter up to %.1e failed; clipped %d negative eigenvalues (min %.3e)",
        jitter_max, negative, float(eigvals.min()),
    )
    factor = eigvecs * np.sqrt(clipped)[None, :]
    if not np.all(np.isfinite(factor)):
        raise FactorizationError("eigenvalue repair produced non-finite factor")
    return PSDFactor(factor=factor, clipped_eigs=negative, method="eigen")


def replicate_bitgen(seed: int, replicate: int) -> np.random.Philox:
    """Philox stream keyed by seed, with the replicate index in the top counter word."""
    return np.random.Philox(
        key=np.array([seed & _MASK64, 0], dtype=np.uint64),
        counter=np.array([0, 0, 0, replicate & _MASK64], dtype=np.uint64),
    )


def replicate_generator(seed: int, replicate: int) -> np.random.Generator:
    return np.random.Generator(replicate_bitgen(seed, replicate))


def standard_normals(seed: int, replicate: int, size: int) -> np.ndarray:
    """size N(0,1) variates of one replicate; entry i belongs to set index i."""
    raw = replicate_bitgen(seed, replicate).random_raw(size)
    k = (np.asarray(raw, dtype=np.uint64) >> _UNIFORM_SHIFT).astype(np.float64)
    uniforms = (2.0 * k + 1.0) * _UNIFORM_SCALE
    return ndtri(uniforms)


def normal_block(seed: int, replicates: int, size: int, threads: int = 1) -> np.ndarray:
    """replicates x size matrix of N(0,1) variates, independent of threads."""
    out = np.empty((replicates, size))

    def fill(rep: int) -> None:
        out[rep] = standard_normals(seed, rep, size)

    if threads > 1 and replicates > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(fill, range(replicates)))
    else:
        for rep in range(replicates):
            fill(rep)
    return out


@dataclass(eq=False)
class SamplePath:
    """
    Realization of X over a finite family of sets.

    Attributes:
        sets: Ordered family of rectangles
        values: replicates x len(sets) array
        seed: Seed of the Philox stream (None for deterministic paths)
        model: Generating model (None for deterministic paths)
        factor_info: Repairs applied to the covariance factor
    """
    sets: List[Rect]
    values: np.ndarray
    seed: Optional[int] = None
    model: Optional[CovModel] = None
    factor_info: Dict = field(default_factory=dict)

    def __post_init__(self):
        self.sets = list(self.sets)
        values = np.asarray(self.values, dtype=float)
        if values.ndim == 1:
            values = values[None, :]
        if values.ndim != 2 or values.shape[1] != len(self.sets):
            raise DomainError(f"values of shape {values.shape} do not match {len(self.sets)} sets")
        self.values = values
        self._index = {}
        for i, rect in enumerate(self.sets):
            self._index.setdefault(rect, i)

    @property
    def replicates(self) -> int:
        return self.values.shape[0]

    def has(self, rect: Rect) -> bool:
        return rect in self._index

    def index_of(self, rect: Rect) -> int:
        if rect not in self._index:
            raise MissingSetError(rect)
        return self._index[rect]

    def column(self, rect: Rect) -> np.ndarray:
        """Values of X_rect across replicates."""
        return self.values[:, self.index_of(rect)]

    def replicate(self, rep: int) -> "SamplePath":
        return SamplePath(self.sets, self.values[rep: rep + 1], self.seed, self.model,
                          dict(self.factor_info))

    @classmethod
    def from_function(
        cls, sets: Sequence[Rect], fn: Callable[[Rect], float], replicates: int = 1
    ) -> "SamplePath":
        """Deterministic path X_U = fn(U), repeated over replicates."""
        row = np.array([fn(r) for r in sets], dtype=float)
        return cls(list(sets), np.tile(row, (replicates, 1)))

    def metadata(self) -> Dict:
        return {
            "seed": self.seed,
            "model": self.model.to_json() if self.model else None,
            "replicates": self.replicates,
            "factor": self.factor_info,
        }


def sample_paths(
    model: CovModel,
    sets: Sequence[Rect],
    seed: int,
    replicates: int,
    threads: int = 1,
    cap: int = MAX_COV_SETS,
) -> SamplePath:
    """
    Sample replicates of (X_U) over sets from the model's covariance.

    Args:
        model: Covariance model
        sets: Ordered family of rectangles
        seed: Stream key; identical inputs give bit-identical values
        replicates: Number of independent replicates
        threads: Worker threads for normal generation

    Returns:
        SamplePath with values of shape (replicates, len(sets))
    """
    if replicates < 1:
        raise DomainError(f"replicates must be >= 1, got {replicates}")
    sets = list(sets)
    if not sets:
        return SamplePath(sets, np.zeros((replicates, 0)), seed, model)
    matrix = build_cov_matrix(model, sets, cap=cap)
    psd = psd_factorize(matrix)
    z = normal_block(seed, replicates, len(sets), threads=threads)
    values = z @ psd.factor.T
    info = {"method": psd.method, "jitter": psd.jitter_applied, "clipped_eigs": psd.clipped_eigs}
    logger.debug("sampled %d x %d values of %s (%s)", replicates, len(sets), model, psd.method)
    return SamplePath(sets, values, seed, model, info)


def closure_sets(cset: CSet) -> List[Rect]:
    """Rectangles whose values delta_increment() needs for cset."""
    return [rect for _, rect in inclusion_exclusion_terms(cset)]


def closure_family(csets: Iterable[CSet], extra: Iterable[Rect] = ()) -> List[Rect]:
    """Ordered union of the closures of several sets, after the extra rectangles."""
    family: Dict[Rect, None] = {}
    for rect in extra:
        family.setdefault(rect, None)
    for cset in csets:
        for rect in closure_sets(cset):
            family.setdefault(rect, None)
    return list(family)


def delta_increment(path: SamplePath, cset: CSet) -> np.ndarray:
    """
    The increment Delta X_C per replicate, by inclusion-exclusion.

    Raises:
        MissingSetError: a rectangle of the expansion is not in path.sets
    """
    total = np.zeros(path.replicates)
    for coef, rect in inclusion_exclusion_terms(cset):
        total += coef * path.column(rect)
    return total


# ============ Serialization ============

def _header_cell(rect: Rect) -> str:
    return json.dumps(rect.to_json(), separators=(",", ":"))


def write_csv(path: SamplePath, target: Union[str, Path], comments: Iterable[str] = ()) -> None:
    """One row per replicate, one column per set; header cells are set JSON."""
    buffer = io.StringIO()
    for line in comments:
        buffer.write(f"# {line}\n")
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow([_header_cell(r) for r in path.sets])
    for row in path.values:
        writer.writerow([repr(float(v)) for v in row])
    Path(target).write_text(buffer.getvalue())


def read_csv(source: Union[str, Path]) -> SamplePath:
    lines = [ln for ln in Path(source).read_text().splitlines() if not ln.startswith("#")]
    rows = list(csv.reader(lines))
    if not rows:
        raise DomainError(f"{source}: no header row")
    sets = [Rect.from_json(json.loads(cell)) for cell in rows[0]]
    values = np.array([[float(v) for v in row] for row in rows[1:]], dtype=float)
    return SamplePath(sets, values.reshape(len(rows) - 1, len(sets)))


def write_binary(path: SamplePath, target: Union[str, Path], meta: Optional[Dict] = None) -> None:
    """
    Layout: magic "SIDX1", uint32 header length, UTF-8 JSON header
    (sets + metadata), uint64 replicates, uint64 sets, then little-endian
    float64 values in row-major order.
    """
    header = json.dumps(
        {"sets": [r.to_json() for r in path.sets], "meta": {**path.metadata(), **(meta or {})}},
        separators=(",", ":"),
        sort_keys=True,
    ).encode("utf-8")
    with open(target, "wb") as fh:
        fh.write(BINARY_MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        fh.write(struct.pack("<QQ", path.replicates, len(path.sets)))
        fh.write(np.ascontiguousarray(path.values, dtype="<f8").tobytes())


def read_binary(source: Union[str, Path]) -> SamplePath:
    data = Path(source).read_bytes()
    if not data.startswith(BINARY_MAGIC):
        raise DomainError(f"{source}: not a SIDX1 sample file")
    offset = len(BINARY_MAGIC)
    (hlen,) = struct.unpack_from("<I", data, offset)
    offset += 4
    header = json.loads(data[offset: offset + hlen].decode("utf-8"))
    offset += hlen
    reps, nsets = struct.unpack_from("<QQ", data, offset)
    offset += 16
    values = np.frombuffer(data, dtype="<f8", count=reps * nsets, offset=offset)
    meta = header.get("meta", {})
    model = CovModel.from_json(meta["model"]) if meta.get("model") else None
    return SamplePath(
        [Rect.from_json(r) for r in header["sets"]],
        values.reshape(reps, nsets).astype(float),
        meta.get("seed"),
        model,
        meta.get("factor") or {},
    )
