"""
Environments of point light sources and the sensory maps of the agents:
the pinhole retina carried by the arm and the two-sensor toy agents.
"""

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal

import numpy as np
import numpy.typing as npt

from .errors import ArtifactError, ConfigError, DegenerateGeometryError
from .kinematics import RetinaPose

__all__ = [
    "Environment",
    "SensoryVector",
    "RetinaGeometry",
    "ToyGeometry",
    "Region",
    "DEFAULT_REGION",
    "random_environment",
    "random_toy_environment",
    "project_source",
    "retina_response",
    "toy_response",
    "toy_external",
    "save_environment",
    "load_environment",
]

AgentKind = Literal["one_motor", "two_motor"]
SensoryVector = npt.NDArray[np.float64]
"""Nonnegative cell excitations, shape (K,)."""

Region = tuple[float, float, float, float]
"""(xmin, xmax, ymin, ymax)"""

DEFAULT_REGION: Region = (-1.0, 4.0, -3.0, 3.0)
COINCIDENCE_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class Environment:
    """
    Point light sources, immutable once built.

    Parameters
    ----------
    sources  : array_like, shape (L, 2)
        World positions of the sources.
    seed  : int, optional
        Seed the sources were drawn with (informational).
    """

    sources: npt.NDArray[np.float64]
    seed: int | None = None

    def __post_init__(self) -> None:
        src = np.array(self.sources, dtype=np.float64)
        if src.ndim != 2 or src.shape[1] != 2 or src.shape[0] < 1:
            raise ConfigError(f"sources must have shape (L >= 1, 2), got {src.shape}")
        if not np.all(np.isfinite(src)):
            raise ConfigError("source positions must be finite")
        src.flags.writeable = False
        object.__setattr__(self, "sources", src)

    def __len__(self) -> int:
        return self.sources.shape[0]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Environment):
            return NotImplemented
        return self.seed == other.seed and np.array_equal(self.sources, other.sources)

    def __hash__(self) -> int:
        return hash((self.seed, self.sources.tobytes()))

    def to_dict(self) -> dict:
        # float repr is shortest round-trip, so JSON text reloads bit-exactly
        return {"seed": self.seed, "sources": self.sources.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "Environment":
        try:
            return cls(np.asarray(data["sources"], dtype=np.float64), data.get("seed"))
        except (KeyError, TypeError) as e:
            raise ConfigError(f"malformed environment document: {e}") from e

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "Environment":
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as e:
            raise ConfigError(f"malformed environment document: {e}") from e


def save_environment(path: Path | str, env: Environment) -> Path:
    path = Path(path)
    path.write_text(env.to_json() + "\n", encoding="utf-8")
    return path


def load_environment(path: Path | str) -> Environment:
    path = Path(path)
    if not path.is_file():
        raise ArtifactError(f"missing environment file: {path}")
    return Environment.from_json(path.read_text(encoding="utf-8"))


def _check_region(region: Region) -> None:
    xmin, xmax, ymin, ymax = region
    if not (xmin < xmax and ymin < ymax):
        raise ConfigError(f"empty region {region}")


def random_environment(
    l_count: int = 10, region: Region = DEFAULT_REGION, seed: int = 0
) -> Environment:
    """`l_count` sources drawn uniformly over `region`, reproducible from `seed`."""
    if l_count < 1:
        raise ConfigError("an environment needs at least one source")
    _check_region(region)
    xmin, xmax, ymin, ymax = region
    rng = np.random.default_rng(seed)
    xs = rng.uniform(xmin, xmax, size=l_count)
    ys = rng.uniform(ymin, ymax, size=l_count)
    return Environment(np.column_stack([xs, ys]), seed)


@dataclass(frozen=True)
class RetinaGeometry:
    """
    Pinhole retina: `cell_positions` lie on the image line at distance
    `focal_distance` behind the lens. Sources further than `fov_halfangle`
    from the optical axis do not project.
    """

    focal_distance: float = 0.2
    cell_positions: tuple[float, ...] = field(
        default_factory=lambda: tuple(np.linspace(-0.5, 0.5, 6).tolist())
    )
    fov_halfangle: float = 1.2

    def __post_init__(self) -> None:
        cells = tuple(float(c) for c in self.cell_positions)
        object.__setattr__(self, "cell_positions", cells)
        if not self.focal_distance > 0:
            raise ConfigError("focal_distance must be positive")
        if not 0 < self.fov_halfangle < math.pi / 2:
            raise ConfigError("fov_halfangle must be in (0, pi/2)")
        if len(cells) < 1 or any(b <= a for a, b in zip(cells, cells[1:])):
            raise ConfigError("cell positions must be strictly increasing")
        if not np.allclose(cells, [-c for c in reversed(cells)], rtol=0, atol=1e-12):
            raise ConfigError("cell positions must be symmetric about 0")

    @property
    def cells(self) -> npt.NDArray[np.float64]:
        return np.asarray(self.cell_positions)


def _wrap(u: float) -> float:
    # bearing into [-π, π); inputs stay within one turn of it
    return (u + math.pi) % (2 * math.pi) - math.pi


def project_source(
    pose: RetinaPose, geom: RetinaGeometry, source: tuple[float, float] | npt.ArrayLike
) -> float | None:
    """
    Retinal coordinate of `source` seen from `pose`, or None outside the field of view.

    Raises
    ------
    DegenerateGeometryError
        If the source coincides with the lens.
    """
    sx, sy = (float(v) for v in np.asarray(source, dtype=np.float64))
    dx, dy = sx - pose.x, sy - pose.y
    if math.hypot(dx, dy) <= COINCIDENCE_TOL:
        raise DegenerateGeometryError(f"source ({sx}, {sy}) coincides with the lens")
    beta = _wrap(math.atan2(dy, dx) - pose.alpha)
    if abs(beta) >= geom.fov_halfangle:
        return None
    return geom.focal_distance * math.tan(beta)


def retina_response(pose: RetinaPose, geom: RetinaGeometry, env: Environment) -> SensoryVector:
    """
    Cell excitations: each visible source adds a unit-width Gaussian
    footprint around its projection, attenuated by its distance to the lens.
    """
    cells = geom.cells
    out = np.zeros(cells.shape[0])
    for sx, sy in env.sources:
        p = project_source(pose, geom, (sx, sy))
        if p is None:
            continue
        dist = math.hypot(sx - pose.x, sy - pose.y)
        out += np.exp(-((cells - p) ** 2)) / dist
    return out


@dataclass(frozen=True)
class ToyGeometry:
    """
    T-shaped toy agent moving along the x-axis: two sensors at lateral
    `offsets` and height `sensor_height`; sources are drawn in `source_band`.
    """

    offsets: tuple[float, float] = (-0.25, 0.25)
    sensor_height: float = 0.25
    source_band: Region = (-2.0, 6.0, 1.0, 3.0)

    def __post_init__(self) -> None:
        if self.offsets[0] == self.offsets[1]:
            raise ConfigError("toy sensors must have distinct offsets")
        _check_region(self.source_band)

    def sensor_positions(self, x: float) -> npt.NDArray[np.float64]:
        return np.array([[x + off, self.sensor_height] for off in self.offsets])


def random_toy_environment(
    seed: int, l_count: int = 5, geom: ToyGeometry | None = None
) -> Environment:
    return random_environment(l_count, (geom or ToyGeometry()).source_band, seed)


def toy_external(agent_kind: AgentKind, m: npt.ArrayLike) -> float:
    """Position of the toy agent on its rail: m1 for one motor, m1 + m2 for two."""
    m = np.asarray(m, dtype=np.float64).reshape(-1)
    expected = {"one_motor": 1, "two_motor": 2}.get(agent_kind)
    if expected is None:
        raise ConfigError(f"unknown toy agent kind {agent_kind!r}")
    if m.shape[0] != expected:
        raise ConfigError(f"{agent_kind} agent takes {expected} motor value(s), got {m.shape[0]}")
    return float(m.sum())


def toy_response(
    agent_kind: AgentKind,
    m: npt.ArrayLike,
    env: Environment,
    geom: ToyGeometry | None = None,
) -> SensoryVector:
    """Inverse-square excitation of the two toy sensors."""
    geom = geom or ToyGeometry()
    x = toy_external(agent_kind, m)
    out = np.zeros(2)
    for k, (px, py) in enumerate(geom.sensor_positions(x)):
        d2 = (env.sources[:, 0] - px) ** 2 + (env.sources[:, 1] - py) ** 2
        if np.any(d2 <= COINCIDENCE_TOL**2):
            raise DegenerateGeometryError(f"a source coincides with sensor {k + 1}")
        out[k] = np.sum(1.0 / d2)
    return out
