"""
Low-dimensional projection of the internal distance matrix: Curvilinear
Component Analysis, with classical MDS as its warm start and linear
cross-check.
"""

import csv
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import numpy.typing as npt
from scipy.linalg import eigh, orthogonal_procrustes

from .errors import ArtifactError, ConfigError, MetricError
from .metric import DistanceMatrix

__all__ = [
    "CcaSchedule",
    "EmbeddingResult",
    "cca",
    "classical_mds",
    "neighborhood_preservation",
    "procrustes_residual",
    "residual_variance",
    "pairwise_distances",
]
log = logging.getLogger(__name__)


@dataclass(frozen=True)
class CcaSchedule:
    """
    Annealing schedule of `cca`.

    The neighbourhood radius and the step size decay geometrically from
    their start to their end values over `epochs`; every epoch visits all
    points once in a seeded random order.

    Parameters
    ----------
    epochs  : int, optional
        [default: 50].
    lambda_start, lambda_end  : float, optional
        Neighbourhood radii; None means the 90th and 10th percentile of
        the off-diagonal input distances.
    rate_start, rate_end  : float, optional
        [default: 0.5, 0.01].
    seed  : int, optional
        Seeds the visiting order and the warm-start noise [default: 0].
    init_noise  : float, optional
        Gaussian noise added to the MDS warm start, relative to the
        coordinate standard deviation [default: 0.01].
    """

    epochs: int = 50
    lambda_start: float | None = None
    lambda_end: float | None = None
    rate_start: float = 0.5
    rate_end: float = 0.01
    seed: int = 0
    init_noise: float = 0.01

    def __post_init__(self) -> None:
        if self.epochs < 1:
            raise ConfigError("epochs must be at least 1")
        if not self.rate_start >= self.rate_end > 0:
            raise ConfigError("need rate_start >= rate_end > 0")
        if self.lambda_end is not None and not self.lambda_end > 0:
            raise ConfigError("lambda_end must be positive")
        if (
            self.lambda_start is not None
            and self.lambda_end is not None
            and self.lambda_start < self.lambda_end
        ):
            raise ConfigError("need lambda_start >= lambda_end")
        if self.init_noise < 0:
            raise ConfigError("init_noise must be nonnegative")

    def radii(self, X: npt.NDArray[np.float64]) -> tuple[float, float]:
        """(lambda_start, lambda_end) with percentile defaults resolved against `X`."""
        off = X[np.triu_indices(X.shape[0], k=1)]
        positive = off[off > 0]
        lam0 = self.lambda_start
        lam1 = self.lambda_end
        if lam0 is None:
            lam0 = float(np.percentile(positive, 90)) if positive.size else 1.0
        if lam1 is None:
            lam1 = float(np.percentile(positive, 10)) if positive.size else lam0
        return lam0, min(lam1, lam0)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


@dataclass(frozen=True, eq=False)
class EmbeddingResult:
    """
    Coordinates of every manifold in the projection space.

    Parameters
    ----------
    coords  : ndarray, shape (n, d)
        Rows follow the distance-matrix ordering.
    params  : CcaSchedule or None
        Schedule used (None for classical MDS).
    final_stress  : float
        RMS of (input − output distance) over the pairs within the final
        neighbourhood radius in either space (all pairs for MDS); NaN
        when no pair is that close.
    stress_history  : tuple of float
        Stress at the end of every epoch.
    eigenvalues  : ndarray or None
        Full double-centred spectrum, descending (MDS only).
    ids  : tuple of int
        Manifold identifiers per row.
    """

    coords: npt.NDArray[np.float64]
    params: CcaSchedule | None = None
    final_stress: float = 0.0
    stress_history: tuple[float, ...] = ()
    eigenvalues: npt.NDArray[np.float64] | None = None
    ids: tuple[int, ...] = field(default=())
    method: str = "cca"

    def __post_init__(self) -> None:
        coords = np.array(self.coords, dtype=np.float64)
        if coords.ndim != 2 or coords.shape[1] < 1:
            raise ConfigError(f"coords must have shape (n, d >= 1), got {coords.shape}")
        if not np.all(np.isfinite(coords)):
            raise MetricError("embedding has non-finite coordinates")
        object.__setattr__(self, "coords", coords)
        if not self.ids:
            object.__setattr__(self, "ids", tuple(range(coords.shape[0])))
        elif len(self.ids) != coords.shape[0]:
            raise ConfigError(f"{len(self.ids)} ids for {coords.shape[0]} rows")

    @property
    def d(self) -> int:
        return self.coords.shape[1]

    def to_dict(self) -> dict[str, Any]:
        return {
            "method": self.method,
            "schedule": self.params.to_dict() if self.params is not None else None,
            "final_stress": self.final_stress,
            "stress_history": list(self.stress_history),
            "eigenvalues": None if self.eigenvalues is None else self.eigenvalues.tolist(),
            "ids": list(self.ids),
            "coords": self.coords.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "EmbeddingResult":
        schedule = data.get("schedule")
        eig = data.get("eigenvalues")
        return cls(
            np.asarray(data["coords"], dtype=np.float64),
            CcaSchedule(**schedule) if schedule is not None else None,
            float(data["final_stress"]),
            tuple(data.get("stress_history", ())),
            None if eig is None else np.asarray(eig),
            tuple(data["ids"]),
            data.get("method", "cca"),
        )

    def save_json(self, path: Path | str) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_dict(), sort_keys=True, indent=1) + "\n")
        return path

    @classmethod
    def load_json(cls, path: Path | str) -> "EmbeddingResult":
        path = Path(path)
        if not path.is_file():
            raise ArtifactError(f"missing artifact: {path}")
        try:
            return cls.from_dict(json.loads(path.read_text()))
        except (KeyError, TypeError, json.JSONDecodeError) as e:
            raise ArtifactError(f"{path}: malformed embedding ({e})") from e

    def save_csv(self, path: Path | str) -> Path:
        """One row per manifold: id, coord1..coordd."""
        path = Path(path)
        with open(path, "w", newline="", encoding="utf-8") as fd:
            writer = csv.writer(fd, lineterminator="\n")
            writer.writerow(["id", *(f"coord{k + 1}" for k in range(self.d))])
            for i, row in zip(self.ids, self.coords):
                writer.writerow([i, *(f"{v:.17g}" for v in row)])
        return path


def pairwise_distances(coords: npt.ArrayLike) -> npt.NDArray[np.float64]:
    """Euclidean distances between rows, evaluated exactly as `cca` evaluates them."""
    Y = np.asarray(coords, dtype=np.float64)
    if Y.ndim == 1:
        Y = Y[:, None]
    return np.stack([np.linalg.norm(Y - Y[i], axis=1) for i in range(Y.shape[0])])


def _values(X: DistanceMatrix | npt.ArrayLike) -> npt.NDArray[np.float64]:
    v = X.values if isinstance(X, DistanceMatrix) else np.asarray(X, dtype=np.float64)
    if v.ndim != 2 or v.shape[0] != v.shape[1]:
        raise MetricError(f"distance matrix must be square, got {v.shape}")
    if not np.all(np.isfinite(v)):
        raise MetricError("distance matrix has non-finite entries")
    return v


def _ids(X: DistanceMatrix | npt.ArrayLike) -> tuple[int, ...]:
    return X.manifold_ids if isinstance(X, DistanceMatrix) else ()


def _stress(X: np.ndarray, Y: np.ndarray, lam: float) -> float:
    iu = np.triu_indices(X.shape[0], k=1)
    x, y = X[iu], Y[iu]
    if not x.size:
        return 0.0
    near = (x <= lam) | (y <= lam)
    if not near.any():
        return math.nan
    return float(np.sqrt(np.mean((x[near] - y[near]) ** 2)))


def classical_mds(X: DistanceMatrix | npt.ArrayLike, d: int = 3) -> EmbeddingResult:
    """
    Torgerson scaling: eigendecomposition of the double-centred squared
    distances, keeping the top `d` components. Eigenvector signs are fixed
    so that each column's largest-magnitude entry is positive.
    """
    if d < 1:
        raise ConfigError("d must be at least 1")
    D = _values(X)
    n = D.shape[0]
    J = np.eye(n) - np.full((n, n), 1.0 / n)
    B = -0.5 * J @ (D * D) @ J
    w, V = eigh((B + B.T) / 2)
    order = np.argsort(w, kind="stable")[::-1]
    w, V = w[order], V[:, order]
    k = min(d, n)
    V = V[:, :k]
    pivots = np.argmax(np.abs(V), axis=0)
    V = V * np.sign(V[pivots, np.arange(k)])
    coords = np.zeros((n, d))
    coords[:, :k] = V * np.sqrt(np.clip(w[:k], 0.0, None))
    stress = _stress(D, pairwise_distances(coords), np.inf)
    return EmbeddingResult(coords, None, stress, (), w, _ids(X), "mds")


def residual_variance(eigenvalues: npt.ArrayLike, d: int) -> float:
    """Share of the positive spectrum beyond the first `d` components."""
    w = np.sort(np.asarray(eigenvalues, dtype=np.float64))[::-1]
    pos = np.clip(w, 0.0, None)
    total = pos.sum()
    if total <= 0:
        return 0.0
    return float(pos[d:].sum() / total)


def cca(
    X: DistanceMatrix | npt.ArrayLike,
    d: int = 3,
    schedule: CcaSchedule | None = None,
    init: npt.ArrayLike | None = None,
) -> EmbeddingResult:
    """
    Curvilinear Component Analysis.

    Each epoch visits every point i in random order and moves every other
    point j whose input or output distance to i lies within the current
    radius along (y_j − y_i), so that their output distance Y_ij moves
    toward X_ij by the current rate.

    Parameters
    ----------
    X  : DistanceMatrix or ndarray, shape (n, n)
    d  : int, optional
        Output dimension [default: 3].
    schedule  : CcaSchedule, optional
    init  : array_like, shape (n, d), optional
        Initial coordinates [default: classical MDS plus noise].
    """
    if d < 1:
        raise ConfigError("d must be at least 1")
    schedule = schedule or CcaSchedule()
    D = _values(X)
    n = D.shape[0]
    rng = np.random.default_rng(schedule.seed)

    if init is None:
        Y = classical_mds(D, d).coords
        scale = float(Y.std()) or 1.0
        Y = Y + rng.normal(0.0, schedule.init_noise * scale, size=Y.shape)
    else:
        Y = np.array(init, dtype=np.float64)
        if Y.shape != (n, d):
            raise ConfigError(f"init must have shape {(n, d)}, got {Y.shape}")

    lam0, lam1 = schedule.radii(D)
    r0, r1 = schedule.rate_start, schedule.rate_end
    history = []
    lam = lam0
    for epoch in range(schedule.epochs):
        frac = epoch / (schedule.epochs - 1) if schedule.epochs > 1 else 1.0
        lam = lam0 * (lam1 / lam0) ** frac
        rate = r0 * (r1 / r0) ** frac
        for i in rng.permutation(n):
            diff = Y - Y[i]
            dist = np.linalg.norm(diff, axis=1)
            # within the radius in either the input or the output space
            near = ((dist <= lam) | (D[i] <= lam)) & (dist > 0)
            near[i] = False
            if not near.any():
                continue
            coef = rate * (D[i, near] - dist[near]) / dist[near]
            Y[near] += coef[:, None] * diff[near]
        history.append(_stress(D, pairwise_distances(Y), lam))
        log.debug("cca epoch %d: lambda=%.4g rate=%.4g stress=%.4g", epoch, lam, rate, history[-1])

    final = history[-1] if history else 0.0
    if math.isnan(final):
        log.warning("cca: no pair within the final radius %.4g, stress undefined", lam)
    log.info("cca: %d points, d=%d, final stress %.4g", n, d, final)
    return EmbeddingResult(Y, schedule, final, tuple(history), None, _ids(X), "cca")


def _neighbours(row: np.ndarray, i: int, k: int) -> set[int]:
    order = np.argsort(row, kind="stable")
    return set(order[order != i][:k].tolist())


def neighborhood_preservation(
    X: DistanceMatrix | npt.ArrayLike,
    E: EmbeddingResult | npt.ArrayLike,
    k: int = 10,
) -> float:
    """
    Mean share |A ∩ B| / k of the k nearest neighbours each point keeps
    between the input distances (A) and the embedding (B). Ties go to the
    lower index. Random embeddings score about k/(n−1).
    """
    D = _values(X)
    n = D.shape[0]
    if not 1 <= k < n:
        raise ConfigError(f"k must be in [1, {n - 1}], got {k}")
    coords = E.coords if isinstance(E, EmbeddingResult) else np.asarray(E, dtype=np.float64)
    if coords.shape[0] != n:
        raise ConfigError(f"embedding has {coords.shape[0]} rows for {n} points")
    Y = pairwise_distances(coords)
    overlap = [len(_neighbours(D[i], i, k) & _neighbours(Y[i], i, k)) / k for i in range(n)]
    return float(np.mean(overlap))


def procrustes_residual(reference: npt.ArrayLike, coords: npt.ArrayLike) -> float:
    """
    RMS point residual of `coords` against `reference` after centring both
    and applying the best orthogonal transform (rotation or reflection).
    """
    A = np.asarray(reference, dtype=np.float64)
    B = np.asarray(coords, dtype=np.float64)
    if A.ndim == 1:
        A = A[:, None]
    if B.ndim == 1:
        B = B[:, None]
    if A.shape[0] != B.shape[0]:
        raise ConfigError("reference and coords need the same number of points")
    d = max(A.shape[1], B.shape[1])
    A = np.pad(A - A.mean(axis=0), ((0, 0), (0, d - A.shape[1])))
    B = np.pad(B - B.mean(axis=0), ((0, 0), (0, d - B.shape[1])))
    R, _ = orthogonal_procrustes(B, A)
    return float(np.sqrt(np.mean(np.sum((B @ R - A) ** 2, axis=1))))
