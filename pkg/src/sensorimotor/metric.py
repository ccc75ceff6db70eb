"""
Periodicity-aware distances between motor configurations and the modified
Hausdorff distance between sampled kernel manifolds, plus the (tiled,
parallel) pairwise distance matrix.
"""

import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass
from pathlib import Path
from time import perf_counter
from typing import TYPE_CHECKING, Any

import numpy as np
import numpy.typing as npt
from numba import njit

from ._records import read_record, write_record
from .concurrent import process_map
from .errors import ArtifactError, MetricError

if TYPE_CHECKING:
    from .kernel_sampler import KernelManifold

__all__ = [
    "wrap_diff",
    "signed_wrap",
    "canonical_angles",
    "motor_distance",
    "hausdorff",
    "distance_row",
    "distance_matrix",
    "DistanceMatrix",
]
log = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi
MATRIX_MAGIC = b"SMDIST01"
FORMAT_VERSION = 1


def wrap_diff(u: Any) -> Any:
    """
    Fold a difference of canonical angles into [-π, π]:
    2π - u above π, -2π - u below -π, u otherwise.

    The folded value has the magnitude of the shortest angular difference
    (its sign is flipped on the wrapping branches). Inputs beyond one turn
    are first reduced with `fmod`.

    >>> wrap_diff(0.0)
    0.0
    >>> round(wrap_diff(1.5 * math.pi), 12) == round(math.pi / 2, 12)
    True
    """
    if np.ndim(u) == 0:
        u = math.fmod(float(u), TWO_PI)
        if u > math.pi:
            return TWO_PI - u
        if u < -math.pi:
            return -TWO_PI - u
        return u
    u = np.fmod(np.asarray(u, dtype=np.float64), TWO_PI)
    return np.where(u > math.pi, TWO_PI - u, np.where(u < -math.pi, -TWO_PI - u, u))


def signed_wrap(u: Any) -> Any:
    """Shortest signed angular displacement, in [-π, π]."""
    return u - TWO_PI * np.round(np.asarray(u) / TWO_PI)


def canonical_angles(m: npt.ArrayLike) -> npt.NDArray[np.float64]:
    """Angles reduced to [0, 2π)."""
    out = np.mod(np.asarray(m, dtype=np.float64), TWO_PI)
    out[out >= TWO_PI] = 0.0
    return out


def motor_distance(a: npt.ArrayLike, b: npt.ArrayLike) -> float:
    """
    Euclidean distance on the joint torus: per-joint differences are
    wrapped before squaring. Bounded by π·√N.
    """
    a = np.asarray(a, dtype=np.float64).reshape(-1)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    if a.shape != b.shape:
        raise MetricError(f"dimension mismatch {a.shape[0]} != {b.shape[0]}")
    h = wrap_diff(canonical_angles(a) - canonical_angles(b))
    return float(np.sqrt(np.sum(h * h)))


@njit(cache=True, nogil=True)
def _directed_sq(A, B, early_exit):  # pragma: no cover
    # max over a in A of min over b in B of the squared wrapped distance
    pi = np.pi
    two_pi = 2.0 * np.pi
    cmax = 0.0
    for i in range(A.shape[0]):
        cmin = np.inf
        for j in range(B.shape[0]):
            acc = 0.0
            for k in range(A.shape[1]):
                u = A[i, k] - B[j, k]
                if u > pi:
                    u = two_pi - u
                elif u < -pi:
                    u = -two_pi - u
                acc += u * u
            if acc < cmin:
                cmin = acc
                # this row can no longer raise the running max
                if early_exit and cmin < cmax:
                    break
        if cmin > cmax:
            cmax = cmin
    return cmax


def _as_samples(x: "KernelManifold | npt.ArrayLike") -> npt.NDArray[np.float64]:
    samples = getattr(x, "samples", x)
    arr = np.asarray(samples, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] == 0:
        raise MetricError("manifold has no samples")
    return arr


def _hausdorff_canonical(A: np.ndarray, B: np.ndarray, early_exit: bool = True) -> float:
    return math.sqrt(max(_directed_sq(A, B, early_exit), _directed_sq(B, A, early_exit)))


def hausdorff(
    A: "KernelManifold | npt.ArrayLike",
    B: "KernelManifold | npt.ArrayLike",
    early_exit: bool = True,
) -> float:
    """
    Modified Hausdorff distance: the larger of the two directed max-min
    distances between the sample sets of `A` and `B` under `motor_distance`.

    Parameters
    ----------
    A, B  : KernelManifold or array_like, shape (S, N)
    early_exit  : bool, optional
        Prune inner loops once they cannot raise the running max. The
        result is bit-identical either way [default: True].
    """
    a, b = _as_samples(A), _as_samples(B)
    if a.shape[1] != b.shape[1]:
        raise MetricError(f"dimension mismatch {a.shape[1]} != {b.shape[1]}")
    return _hausdorff_canonical(canonical_angles(a), canonical_angles(b), early_exit)


def distance_row(
    manifold: "KernelManifold | npt.ArrayLike",
    manifolds: "Sequence[KernelManifold | npt.ArrayLike]",
) -> npt.NDArray[np.float64]:
    """Distances from one (new) manifold to each of a stored set."""
    a = canonical_angles(_as_samples(manifold))
    out = np.empty(len(manifolds))
    for j, other in enumerate(manifolds):
        b = _as_samples(other)
        if b.shape[1] != a.shape[1]:
            raise MetricError(f"dimension mismatch {a.shape[1]} != {b.shape[1]}", pair=(-1, j))
        out[j] = _hausdorff_canonical(a, canonical_angles(b))
    return out


# Installed once per worker by `_install_samples` instead of pickled per tile.
_SAMPLES: np.ndarray | None = None


def _install_samples(samples: np.ndarray) -> None:
    global _SAMPLES
    _SAMPLES = samples


def _tile(bi: int, bj: int, block: int) -> tuple[int, int, np.ndarray]:
    S = _SAMPLES
    assert S is not None
    n = S.shape[0]
    rows = range(bi, min(bi + block, n))
    cols = range(bj, min(bj + block, n))
    out = np.zeros((len(rows), len(cols)))
    for r, i in enumerate(rows):
        for c, j in enumerate(cols):
            if j <= i:
                continue
            d = _hausdorff_canonical(S[i], S[j])
            if not math.isfinite(d):
                raise MetricError("non-finite distance", pair=(i, j))
            out[r, c] = d
    return bi, bj, out


def _stack(manifolds: "Sequence[KernelManifold | npt.ArrayLike]") -> np.ndarray:
    arrays = [_as_samples(m) for m in manifolds]
    shapes = {a.shape for a in arrays}
    if len(shapes) != 1:
        raise MetricError(f"manifolds must share one sample count and dimension, got {shapes}")
    S = canonical_angles(np.stack(arrays))
    bad = np.flatnonzero(~np.isfinite(S).all(axis=(1, 2)))
    if bad.size:
        i = int(bad[0])
        raise MetricError("non-finite samples", pair=(i, i))
    return S


def distance_matrix(
    manifolds: "Sequence[KernelManifold | npt.ArrayLike]",
    workers: int = 1,
    block: int = 64,
    ids: Sequence[int] | None = None,
    **meter_kwargs: Any,
) -> "DistanceMatrix":
    """
    Pairwise modified Hausdorff distances.

    The upper triangle is cut into `block`×`block` tiles computed by
    `workers` processes; each unordered pair is evaluated once and the
    result does not depend on the worker count.

    Parameters
    ----------
    manifolds  : sequence of KernelManifold
        At least two, all with the same sample count.
    workers  : int, optional
        Worker processes [default: 1].
    block  : int, optional
        Tile edge [default: 64].
    ids  : sequence of int, optional
        Ordering key stored with the matrix [default: 0..n-1].
    **meter_kwargs
        Passed to the progress meter.
    """
    if len(manifolds) < 2:
        raise MetricError(f"need at least 2 manifolds, got {len(manifolds)}")
    if block < 1:
        raise MetricError("block must be positive")
    S = _stack(manifolds)
    n = S.shape[0]
    starts = range(0, n, block)
    tiles = [(bi, bj) for bi in starts for bj in starts if bj >= bi]
    meter_kwargs.setdefault("desc", "metric")
    meter_kwargs.setdefault("unit", "tile")

    t0 = perf_counter()
    results = process_map(
        _tile,
        [t[0] for t in tiles],
        [t[1] for t in tiles],
        [block] * len(tiles),
        max_workers=workers,
        chunksize=1,
        initializer=_install_samples,
        initargs=(S,),
        **meter_kwargs,
    )
    values = np.zeros((n, n))
    for bi, bj, out in results:
        values[bi : bi + out.shape[0], bj : bj + out.shape[1]] = out
    iu = np.triu_indices(n, k=1)
    values[iu[1], iu[0]] = values[iu]
    elapsed = perf_counter() - t0
    pairs = n * (n - 1) // 2
    log.info(
        "%d pairs in %.2fs (%.0f pairs/s, %d workers)",
        pairs,
        elapsed,
        pairs / elapsed if elapsed else float("inf"),
        workers,
    )
    return DistanceMatrix(values, tuple(ids) if ids is not None else tuple(range(n)))


@dataclass(frozen=True, eq=False)
class DistanceMatrix:
    """
    Symmetric matrix of internal distances with zero diagonal.

    Parameters
    ----------
    values  : ndarray, shape (n, n)
    manifold_ids  : tuple of int
        Identifier of the manifold behind each row.
    """

    values: npt.NDArray[np.float64]
    manifold_ids: tuple[int, ...]

    def __post_init__(self) -> None:
        v = np.array(self.values, dtype=np.float64)
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise MetricError(f"distance matrix must be square, got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise MetricError("distance matrix has non-finite entries")
        if not np.array_equal(v, v.T):
            raise MetricError("distance matrix is not symmetric")
        if np.any(np.diag(v) != 0) or np.any(v < 0):
            raise MetricError("distance matrix needs a zero diagonal and nonnegative entries")
        ids = tuple(int(i) for i in self.manifold_ids)
        if len(ids) != v.shape[0]:
            raise MetricError(f"{len(ids)} ids for {v.shape[0]} rows")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "manifold_ids", ids)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, DistanceMatrix):
            return NotImplemented
        return self.manifold_ids == other.manifold_ids and np.array_equal(
            self.values, other.values
        )

    def upper_triangle(self) -> npt.NDArray[np.float64]:
        """Off-diagonal entries, row-major over i < j."""
        return self.values[np.triu_indices(self.n, k=1)]

    def subset(self, indices: Sequence[int]) -> "DistanceMatrix":
        idx = np.asarray(indices, dtype=np.intp)
        if idx.size == 0:
            raise MetricError("empty selection")
        return DistanceMatrix(
            self.values[np.ix_(idx, idx)], tuple(self.manifold_ids[i] for i in idx)
        )

    def save_binary(self, path: Path | str) -> Path:
        return write_record(
            path,
            MATRIX_MAGIC,
            {"format_version": FORMAT_VERSION, "n": self.n, "ids": list(self.manifold_ids)},
            {"upper": self.upper_triangle()},
        )

    @classmethod
    def load_binary(cls, path: Path | str) -> "DistanceMatrix":
        meta, arrays = read_record(path, MATRIX_MAGIC)
        if meta.get("format_version") != FORMAT_VERSION:
            raise ArtifactError(f"{path}: unsupported format version {meta.get('format_version')}")
        n = int(meta["n"])
        upper = arrays["upper"]
        if upper.shape != (n * (n - 1) // 2,):
            raise ArtifactError(f"{path}: expected {n * (n - 1) // 2} entries, got {upper.size}")
        values = np.zeros((n, n))
        iu = np.triu_indices(n, k=1)
        values[iu] = upper
        values[iu[1], iu[0]] = upper
        return cls(values, tuple(meta["ids"]))

    def save_csv(self, path: Path | str) -> Path:
        path = Path(path)
        np.savetxt(
            path,
            self.values,
            fmt="%.17g",
            delimiter=",",
            header=",".join(map(str, self.manifold_ids)),
            comments="",
        )
        return path

    @classmethod
    def load_csv(cls, path: Path | str) -> "DistanceMatrix":
        path = Path(path)
        if not path.is_file():
            raise ArtifactError(f"missing artifact: {path}")
        with open(path, encoding="utf-8") as fd:
            header = fd.readline().strip()
        try:
            ids = tuple(int(i) for i in header.split(","))
            values = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        except ValueError as e:
            raise ArtifactError(f"{path}: malformed distance matrix ({e})") from e
        return cls(values, ids)
