"""
Forward kinematics and Jacobian of the planar arm: three unit segments
plus a fourth rotary joint orienting the retina at the end-point.
"""

import math
from dataclasses import dataclass
from typing import Literal, NamedTuple
from warnings import warn

import numpy as np
import numpy.typing as npt

from .errors import ConfigError, SensorimotorWarning

TWO_PI = 2.0 * math.pi
N_JOINTS = 4
SEGMENTS = 3

MotorConfig = npt.NDArray[np.float64]
"""Joint angles in radians, shape (N,), each interpreted modulo 2π."""


def as_motor_config(values: npt.ArrayLike, n: int = N_JOINTS) -> MotorConfig:
    """Validate and copy `values` into a float64 motor configuration of length `n`."""
    m = np.array(values, dtype=np.float64).reshape(-1)
    if m.shape != (n,):
        raise ConfigError(f"motor configuration must have {n} joints, got {m.shape[0]}")
    if not np.all(np.isfinite(m)):
        raise ConfigError("motor configuration has non-finite angles")
    return m


class RetinaPose(NamedTuple):
    """External configuration of the retina: lens position and optical-axis angle."""

    x: float
    y: float
    alpha: float

    @property
    def position(self) -> tuple[float, float]:
        return (self.x, self.y)


def base_distance(pose: RetinaPose) -> float:
    return math.hypot(pose.x, pose.y)


def _chain(m: MotorConfig) -> tuple[float, float, float, float]:
    """Unreduced (x, y, alpha, position angle of the last segment)."""
    t1 = m[0]
    t12 = t1 + m[1]
    t123 = t12 + m[2]
    x = math.cos(t1) + math.cos(t12) + math.cos(t123)
    y = math.sin(t1) + math.sin(t12) + math.sin(t123)
    return x, y, t123 + m[3], t123


def pose_vector(m: MotorConfig) -> npt.NDArray[np.float64]:
    """
    (alpha, x, y) with alpha left unreduced, in the row order of `jacobian`.
    Continuation works in this chart so alpha never jumps at 2π.
    """
    x, y, alpha, _ = _chain(m)
    return np.array([alpha, x, y])


def forward_kinematics(m: npt.ArrayLike) -> RetinaPose:
    """
    Retina pose for motor configuration `m`; alpha reduced to [0, 2π).

    >>> forward_kinematics([0, 0, 0, 0])
    RetinaPose(x=3.0, y=0.0, alpha=0.0)
    """
    m = as_motor_config(m)
    x, y, alpha, _ = _chain(m)
    alpha = alpha % TWO_PI
    if alpha == TWO_PI:  # -tiny % 2π rounds up
        alpha = 0.0
    return RetinaPose(float(x), float(y), float(alpha))


def jacobian(m: npt.ArrayLike) -> npt.NDArray[np.float64]:
    """
    3×4 Jacobian with rows (∂alpha/∂m, ∂x/∂m, ∂y/∂m).
    """
    m = np.asarray(m, dtype=np.float64)
    t1 = m[0]
    t12 = t1 + m[1]
    t123 = t12 + m[2]
    s1, s12, s123 = math.sin(t1), math.sin(t12), math.sin(t123)
    c1, c12, c123 = math.cos(t1), math.cos(t12), math.cos(t123)
    return np.array(
        [
            [1.0, 1.0, 1.0, 1.0],
            [-s1 - s12 - s123, -s12 - s123, -s123, 0.0],
            [c1 + c12 + c123, c12 + c123, c123, 0.0],
        ]
    )


def inverse_kinematics(
    x: float,
    y: float,
    alpha: float,
    elbow: Literal["up", "down"] = "up",
    wrist: float | None = None,
) -> MotorConfig:
    """
    One motor configuration reaching pose (x, y, alpha).

    The last segment is pointed along `wrist` (default: the bearing of
    (x, y) from the base), the first two segments solve the remaining
    two-link problem on the chosen elbow branch, and joint 4 takes up
    whatever orientation is left.

    Raises
    ------
    ConfigError
        If the wrist point is out of reach of the first two segments.
    """
    if wrist is None:
        wrist = math.atan2(y, x)
    wx = x - math.cos(wrist)
    wy = y - math.sin(wrist)
    c2 = (wx * wx + wy * wy - 2.0) / 2.0
    if not -1.0 <= c2 <= 1.0:
        raise ConfigError(f"pose ({x:.3f}, {y:.3f}) unreachable with wrist angle {wrist:.3f}")
    m2 = math.acos(c2)
    if elbow == "down":
        m2 = -m2
    m1 = math.atan2(wy, wx) - math.atan2(math.sin(m2), 1.0 + math.cos(m2))
    m3 = wrist - m1 - m2
    return np.array([m1, m2, m3, alpha - wrist])


@dataclass(frozen=True)
class WorkingSpace:
    """
    Axis-aligned rectangle of admissible retina positions.

    The defaults (height 2, width 1.5, centred 1.75 units in front of the
    base) keep every point between 1 and 3 units from the base.
    """

    center: tuple[float, float] = (1.75, 0.0)
    width: float = 1.5
    height: float = 2.0

    def __post_init__(self) -> None:
        if len(self.center) != 2 or not all(map(math.isfinite, self.center)):
            raise ConfigError("working space center must be two finite numbers")
        if not (self.width > 0 and self.height > 0):
            raise ConfigError("working space width and height must be positive")
        object.__setattr__(self, "center", (float(self.center[0]), float(self.center[1])))
        if not self.within_reach():
            warn(
                f"working space {self} is not inside the reachable annulus 1 <= r <= 3",
                SensorimotorWarning,
                stacklevel=3,
            )

    @property
    def bounds(self) -> tuple[float, float, float, float]:
        """(xmin, xmax, ymin, ymax)"""
        cx, cy = self.center
        return (
            cx - self.width / 2,
            cx + self.width / 2,
            cy - self.height / 2,
            cy + self.height / 2,
        )

    def corners(self) -> list[tuple[float, float]]:
        xmin, xmax, ymin, ymax = self.bounds
        return [(xmin, ymin), (xmax, ymin), (xmax, ymax), (xmin, ymax)]

    def within_reach(self) -> bool:
        xmin, xmax, ymin, ymax = self.bounds
        # farthest point is a corner, nearest is the clamp of the origin
        far = max(math.hypot(cx, cy) for cx, cy in self.corners())
        near = math.hypot(min(max(0.0, xmin), xmax), min(max(0.0, ymin), ymax))
        # closed annulus: the default rectangle touches r = 1 at (1, 0)
        return near >= 1.0 and far <= SEGMENTS

    def contains(self, pose: RetinaPose) -> bool:
        return in_working_space(pose, self)


def in_working_space(pose: RetinaPose, ws: WorkingSpace) -> bool:
    """Closed-rectangle membership of the retina position; alpha is unrestricted."""
    xmin, xmax, ymin, ymax = ws.bounds
    return xmin <= pose.x <= xmax and ymin <= pose.y <= ymax
