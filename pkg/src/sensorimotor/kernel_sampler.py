"""
Kernel manifolds: the closed loop of motor configurations that keep the
retina at one pose, traced by null-space continuation from a seed
configuration and resampled to evenly spaced points.
"""

import logging
import math
from collections.abc import Sequence
from dataclasses import asdict, dataclass
from functools import cached_property
from pathlib import Path
from typing import Any, NamedTuple

import numpy as np
import numpy.typing as npt

from ._records import read_record, write_record
from .errors import (
    ArtifactError,
    ConfigError,
    NonClosureError,
    NumericalError,
    SingularityError,
    SplitManifoldError,
)
from .kinematics import (
    N_JOINTS,
    MotorConfig,
    RetinaPose,
    as_motor_config,
    base_distance,
    forward_kinematics,
    jacobian,
    pose_vector,
)
from .metric import signed_wrap, wrap_diff

__all__ = [
    "ContinuationParams",
    "KernelManifold",
    "ManifoldSet",
    "null_direction",
    "trace_kernel",
    "resample_loop",
    "sample_manifold",
    "pose_drift",
    "save_manifold_set",
    "load_manifold_set",
]
log = logging.getLogger(__name__)

SINGULAR_TOL = 1e-8
SIGN_TOL = 1e-6
SAMPLE_COUNT = 100
MANIFOLD_MAGIC = b"SMMANIF1"
FORMAT_VERSION = 1


@dataclass(frozen=True)
class ContinuationParams:
    """
    Parameters
    ----------
    mu  : float, optional
        Step length in joint space [default: 1e-3].
    epsilon  : float, optional
        Loop-closure distance to the seed [default: 1e-2].
    min_steps  : int, optional
        Closure is only tested from this step on [default: 50].
    max_steps  : int, optional
        Safety cap; None means 10·⌈2π·√N/mu⌉.
    correct  : bool, optional
        Follow every step with one Newton projection back onto the seed
        pose [default: False, plain Euler continuation].
    count  : int, optional
        Samples kept after resampling [default: 100].
    """

    mu: float = 1e-3
    epsilon: float = 1e-2
    min_steps: int = 50
    max_steps: int | None = None
    correct: bool = False
    count: int = SAMPLE_COUNT

    def __post_init__(self) -> None:
        if not 0 < self.mu < self.epsilon:
            raise ConfigError(f"need 0 < mu < epsilon, got mu={self.mu}, epsilon={self.epsilon}")
        if self.min_steps < 2:
            raise ConfigError("min_steps must be at least 2")
        if self.max_steps is not None and self.max_steps <= self.min_steps:
            raise ConfigError("max_steps must exceed min_steps")
        if self.count < 3:
            raise ConfigError("count must be at least 3")

    def resolved_max_steps(self, n: int = N_JOINTS) -> int:
        if self.max_steps is not None:
            return self.max_steps
        return max(10 * math.ceil(2 * math.pi * math.sqrt(n) / self.mu), self.min_steps + 1)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


@dataclass(frozen=True, eq=False)
class KernelManifold:
    """
    Evenly resampled closed loop of motor configurations sharing one pose.

    Parameters
    ----------
    samples  : ndarray, shape (count, 4)
        Unreduced joint angles in loop order; sample 0 is the seed.
    seed_config  : ndarray, shape (4,)
    raw_count  : int
        Continuation steps taken before resampling.
    """

    samples: npt.NDArray[np.float64]
    seed_config: MotorConfig
    raw_count: int

    def __post_init__(self) -> None:
        samples = np.array(self.samples, dtype=np.float64)
        if samples.ndim != 2 or samples.shape[0] < 1:
            raise ConfigError(f"samples must have shape (S, N), got {samples.shape}")
        samples.flags.writeable = False
        seed = np.array(self.seed_config, dtype=np.float64).reshape(-1)
        seed.flags.writeable = False
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "seed_config", seed)
        object.__setattr__(self, "raw_count", int(self.raw_count))

    def __len__(self) -> int:
        return self.samples.shape[0]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, KernelManifold):
            return NotImplemented
        return (
            self.raw_count == other.raw_count
            and np.array_equal(self.seed_config, other.seed_config)
            and np.array_equal(self.samples, other.samples)
        )

    @cached_property
    def pose(self) -> RetinaPose:
        """Pose of the seed configuration."""
        return forward_kinematics(self.seed_config)

    def to_dict(self) -> dict[str, Any]:
        return {
            "seed_config": self.seed_config.tolist(),
            "raw_count": self.raw_count,
            "samples": self.samples.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "KernelManifold":
        try:
            return cls(
                np.asarray(data["samples"]), np.asarray(data["seed_config"]), data["raw_count"]
            )
        except KeyError as e:
            raise ConfigError(f"manifold record lacks {e}") from e


def null_direction(m: npt.ArrayLike) -> npt.NDArray[np.float64]:
    """
    Unit vector spanning the Jacobian kernel at `m`.

    The sign is fixed so that the first coordinate exceeding 1e-6 in
    magnitude is positive.

    Raises
    ------
    SingularityError
        If the Jacobian has rank < 3 (second-smallest singular value of
        the 3×4 matrix, counting the implicit zero, below 1e-8).
    """
    _, s, vt = np.linalg.svd(jacobian(m))
    if s[-1] < SINGULAR_TOL:
        raise SingularityError(
            f"Jacobian kernel is not one-dimensional (singular values {s})", singular_values=s
        )
    v = vt[-1]
    for vi in v:
        if abs(vi) > SIGN_TOL:
            if vi < 0:
                v = -v
            break
    return v / np.linalg.norm(v)


def _closure_gap(a: np.ndarray, b: np.ndarray) -> float:
    h = wrap_diff(a - b)
    return float(np.sqrt(np.sum(h * h)))


def trace_kernel(m0: npt.ArrayLike, params: ContinuationParams | None = None) -> list[MotorConfig]:
    """
    Walk the Jacobian kernel from `m0` in steps of `params.mu` until the
    trace returns within `params.epsilon` of `m0` (wrapped distance) after
    at least `params.min_steps` steps.

    The step direction keeps the orientation of the previous one, so the
    walk never reverses at the SVD's arbitrary sign.

    Returns
    -------
    out  : list of ndarray
        Raw trace starting at `m0`; `len(out) - 1` steps were taken.

    Raises
    ------
    SplitManifoldError
        If the retina is within one segment of the base.
    SingularityError
        If the walk meets a singular configuration.
    NonClosureError
        If `max_steps` is reached first.
    """
    params = params or ContinuationParams()
    m0 = as_motor_config(m0)
    pose = forward_kinematics(m0)
    if base_distance(pose) <= 1.0:
        raise SplitManifoldError(
            f"base distance {base_distance(pose):.4f} <= 1: the kernel splits into two loops"
        )
    target = pose_vector(m0)
    max_steps = params.resolved_max_steps(m0.shape[0])
    mu = params.mu

    trace = [m0]
    m = m0
    v_prev: np.ndarray | None = None
    for step in range(1, max_steps + 1):
        v = null_direction(m)
        if v_prev is not None and v @ v_prev < 0:
            v = -v
        m = m + mu * v
        if params.correct:
            m = m - np.linalg.pinv(jacobian(m)) @ (pose_vector(m) - target)
        trace.append(m)
        v_prev = v
        if step >= params.min_steps and _closure_gap(m, m0) <= params.epsilon:
            log.debug("loop closed after %d steps", step)
            return trace
    raise NonClosureError(
        f"no closure within {max_steps} steps",
        steps=max_steps,
        gap=_closure_gap(m, m0),
    )


def resample_loop(
    raw: Sequence[npt.ArrayLike] | npt.NDArray[np.float64],
    count: int = SAMPLE_COUNT,
    raw_count: int | None = None,
) -> KernelManifold:
    """
    `count` points at equal arc-length spacing around the closed loop `raw`.

    Arc length includes the closing segment from the last point back to the
    first (wrapped per joint); points are linearly interpolated in the
    unwrapped chart of the trace, and sample 0 is `raw[0]`.
    """
    pts = np.asarray(raw, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[0] < 3:
        raise ConfigError("a loop needs at least 3 points")
    if count < 1:
        raise ConfigError("count must be positive")
    closing = signed_wrap(pts[0] - pts[-1])
    ext = np.vstack([pts, pts[-1] + closing])
    seg = np.linalg.norm(np.diff(ext, axis=0), axis=1)
    arc = np.concatenate([[0.0], np.cumsum(seg)])
    total = arc[-1]
    if not total > 0:
        raise NumericalError("loop has zero length")
    t = total * np.arange(count) / count
    samples = np.column_stack([np.interp(t, arc, ext[:, k]) for k in range(pts.shape[1])])
    samples[0] = pts[0]
    return KernelManifold(samples, pts[0], pts.shape[0] - 1 if raw_count is None else raw_count)


def sample_manifold(m0: npt.ArrayLike, params: ContinuationParams | None = None) -> KernelManifold:
    params = params or ContinuationParams()
    return resample_loop(trace_kernel(m0, params), params.count)


def pose_drift(
    manifold: KernelManifold | npt.ArrayLike, seed: npt.ArrayLike | None = None
) -> float:
    """
    Largest pose deviation from the seed pose over the samples (or raw
    trace) given, with alpha compared on the circle.
    """
    if isinstance(manifold, KernelManifold):
        samples = manifold.samples
        seed = manifold.seed_config if seed is None else seed
    else:
        samples = np.asarray(manifold, dtype=np.float64)
        seed = samples[0] if seed is None else seed
    ref = forward_kinematics(seed)
    worst = 0.0
    for m in samples:
        p = forward_kinematics(m)
        dalpha = float(signed_wrap(p.alpha - ref.alpha))
        worst = max(worst, math.sqrt((p.x - ref.x) ** 2 + (p.y - ref.y) ** 2 + dalpha**2))
    return worst


class ManifoldSet(NamedTuple):
    """Contents of a manifold-set file."""

    manifolds: list[KernelManifold]
    experiment_seed: int
    params: ContinuationParams


def save_manifold_set(
    path: Path | str,
    manifolds: Sequence[KernelManifold],
    *,
    experiment_seed: int,
    params: ContinuationParams,
) -> Path:
    if not manifolds:
        raise ConfigError("no manifolds to save")
    return write_record(
        path,
        MANIFOLD_MAGIC,
        {
            "format_version": FORMAT_VERSION,
            "experiment_seed": experiment_seed,
            "params": params.to_dict(),
            "raw_counts": [m.raw_count for m in manifolds],
        },
        {
            "samples": np.stack([m.samples for m in manifolds]),
            "seed_configs": np.stack([m.seed_config for m in manifolds]),
        },
    )


def load_manifold_set(path: Path | str) -> ManifoldSet:
    meta, arrays = read_record(path, MANIFOLD_MAGIC)
    if meta.get("format_version") != FORMAT_VERSION:
        raise ArtifactError(f"{path}: unsupported format version {meta.get('format_version')}")
    try:
        samples, seeds = arrays["samples"], arrays["seed_configs"]
        manifolds = [
            KernelManifold(s, m0, rc) for s, m0, rc in zip(samples, seeds, meta["raw_counts"])
        ]
        params = ContinuationParams(**meta["params"])
    except (KeyError, TypeError) as e:
        raise ArtifactError(f"{path}: malformed manifold set ({e})") from e
    return ManifoldSet(manifolds, int(meta["experiment_seed"]), params)
