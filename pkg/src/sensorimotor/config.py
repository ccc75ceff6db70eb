"""
Experiment configuration: frozen, self-validating dataclasses read from a
TOML document whose tables mirror them.

```toml
manifolds = 300
master_seed = 7

[workspace]
center = [1.75, 0.0]

[continuation]
mu = 1e-3

[environments]
count = 3
```
"""

import tomllib
from dataclasses import asdict, dataclass, field, fields, is_dataclass, replace
from pathlib import Path
from typing import Any

from .embedding import CcaSchedule
from .errors import ConfigError
from .kernel_sampler import ContinuationParams
from .kinematics import WorkingSpace
from .sensor import DEFAULT_REGION, Region
from .utils import canonical_json, derive_seed, sha256_hex

__all__ = [
    "EnvironmentSpec",
    "EmbeddingSpec",
    "ProbeSpec",
    "ToySpec",
    "AnalysisThresholds",
    "ExperimentConfig",
    "WorkingSpace",
    "ContinuationParams",
    "CcaSchedule",
]


def _region(value: Any) -> Region:
    try:
        xmin, xmax, ymin, ymax = (float(v) for v in value)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"region must be [xmin, xmax, ymin, ymax], got {value!r}") from e
    if not (xmin < xmax and ymin < ymax):
        raise ConfigError(f"empty region {value!r}")
    return (xmin, xmax, ymin, ymax)


@dataclass(frozen=True)
class EnvironmentSpec:
    """
    Random test environments. Environment `i` is seeded with `seeds[i]`,
    or with a seed derived from the master seed when `seeds` is empty.
    """

    count: int = 3
    sources: int = 10
    region: Region = DEFAULT_REGION
    seeds: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "region", _region(self.region))
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        if self.count < 1:
            raise ConfigError("environments.count must be at least 1")
        if self.sources < 1:
            raise ConfigError("environments.sources must be at least 1")
        if self.seeds and len(self.seeds) != self.count:
            raise ConfigError(f"{len(self.seeds)} environment seeds for {self.count} environments")

    def seed_for(self, master_seed: int, index: int) -> int:
        return self.seeds[index] if self.seeds else derive_seed(master_seed, "environment", index)


@dataclass(frozen=True)
class EmbeddingSpec:
    """
    Output dimension plus the CCA schedule; `seed` None derives the
    schedule seed from the master seed.
    """

    d: int = 3
    epochs: int = 50
    lambda_start: float | None = None
    lambda_end: float | None = None
    rate_start: float = 0.5
    rate_end: float = 0.01
    init_noise: float = 0.01
    seed: int | None = None

    def __post_init__(self) -> None:
        if self.d < 1:
            raise ConfigError("embedding.d must be at least 1")
        self.schedule(0)

    def schedule(self, master_seed: int) -> CcaSchedule:
        return CcaSchedule(
            epochs=self.epochs,
            lambda_start=self.lambda_start,
            lambda_end=self.lambda_end,
            rate_start=self.rate_start,
            rate_end=self.rate_end,
            seed=self.seed if self.seed is not None else derive_seed(master_seed, "embed"),
            init_noise=self.init_noise,
        )


@dataclass(frozen=True)
class ProbeSpec:
    """
    Deterministic probe families for the topology diagnostics.

    Parameters
    ----------
    sweep_steps  : int
        Orientations per fixed-position sweep.
    sweep_centers  : tuple of (x, y)
        Sweep positions; empty means the working-space centre.
    sheet_orientations  : int
        Fixed-orientation grids checked for flatness.
    nx, ny  : int
        Grid resolution of sheets and surfaces.
    surfaces  : bool
        Also trace and embed the probe surfaces with the explored manifolds.
    surface_orientations  : int
    """

    sweep_steps: int = 12
    sweep_centers: tuple[tuple[float, float], ...] = ()
    sheet_orientations: int = 4
    nx: int = 6
    ny: int = 6
    surfaces: bool = False
    surface_orientations: int = 8

    def __post_init__(self) -> None:
        try:
            centers = tuple((float(x), float(y)) for x, y in self.sweep_centers)
        except (TypeError, ValueError) as e:
            raise ConfigError(f"probes.sweep_centers must be [[x, y], ...]: {e}") from e
        object.__setattr__(self, "sweep_centers", centers)
        if self.sweep_steps < 3:
            raise ConfigError("probes.sweep_steps must be at least 3")
        if self.sheet_orientations < 1 or self.surface_orientations < 1:
            raise ConfigError("probe orientation counts must be positive")
        if self.nx < 2 or self.ny < 2:
            raise ConfigError("probe grids need at least 2 points per side")

    def centers(self, ws: WorkingSpace) -> tuple[tuple[float, float], ...]:
        return self.sweep_centers or (ws.center,)


@dataclass(frozen=True)
class ToySpec:
    """
    Toy-agent experiment: `positions` rail positions over `x_range`, each
    reached by agent 2 through `per_set` motor pairs spread over `m1_span`.
    """

    environments: int = 2
    sources: int = 5
    positions: int = 9
    per_set: int = 7
    x_range: tuple[float, float] = (0.0, 4.0)
    m1_span: float = 2.0
    agent1_samples: int = 41

    def __post_init__(self) -> None:
        object.__setattr__(self, "x_range", tuple(float(v) for v in self.x_range))
        if self.environments < 1 or self.sources < 1:
            raise ConfigError("toy environments and sources must be positive")
        if self.positions < 2 or self.per_set < 2 or self.agent1_samples < 2:
            raise ConfigError("toy sample counts must be at least 2")
        if len(self.x_range) != 2 or not self.x_range[0] < self.x_range[1]:
            raise ConfigError("toy.x_range must be [low, high] with low < high")
        if not self.m1_span > 0:
            raise ConfigError("toy.m1_span must be positive")


@dataclass(frozen=True)
class AnalysisThresholds:
    """Pass/fail thresholds of the analysis stage."""

    tau_sense: float | None = None
    tau_pose: float = 1e-2
    richness_factor: float = 10.0
    max_loop_ratio: float = 2.0
    min_open_ratio: float = 3.0
    max_sheet_residual: float = 0.1
    min_correlation: float = 0.8
    correlation_weight: float = 1.0
    neighbors: int = 10
    min_neighborhood: float = 0.6

    def __post_init__(self) -> None:
        if self.tau_sense is not None and not self.tau_sense > 0:
            raise ConfigError("analysis.tau_sense must be positive")
        if not self.tau_pose > 0:
            raise ConfigError("analysis.tau_pose must be positive")
        if not 0 < self.max_loop_ratio < self.min_open_ratio:
            raise ConfigError("need 0 < max_loop_ratio < min_open_ratio")
        if not -1 <= self.min_correlation <= 1:
            raise ConfigError("analysis.min_correlation must be in [-1, 1]")
        if self.neighbors < 1:
            raise ConfigError("analysis.neighbors must be positive")


# execution-only fields: they never change an artifact's bytes
_EXECUTION = ("out", "workers", "stage_cache")
_TABLES = {
    "workspace": WorkingSpace,
    "continuation": ContinuationParams,
    "environments": EnvironmentSpec,
    "embedding": EmbeddingSpec,
    "probes": ProbeSpec,
    "toy": ToySpec,
    "analysis": AnalysisThresholds,
}


def _build(cls: Any, table: Any, name: str) -> Any:
    if not isinstance(table, dict):
        raise ConfigError(f"[{name}] must be a table")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(table) - known)
    if unknown:
        raise ConfigError(f"unknown key(s) in [{name}]: {', '.join(unknown)}")
    values = {k: tuple(v) if isinstance(v, list) else v for k, v in table.items()}
    try:
        return cls(**values)
    except TypeError as e:
        raise ConfigError(f"[{name}]: {e}") from e


@dataclass(frozen=True)
class ExperimentConfig:
    """
    Root configuration of one run.

    Parameters
    ----------
    manifolds  : int
        Number of explored configurations M [default: 2500].
    master_seed  : int
        Fixes every random stream of the run.
    failure_budget  : int
        Numerical tracing failures tolerated before exploration aborts.
    out  : Path
        Run directory.
    workers  : int
        Worker processes for exploration, metric and probe tracing.
    stage_cache  : bool
        Skip stages whose recorded inputs and outputs are unchanged.
    """

    manifolds: int = 2500
    master_seed: int = 0
    failure_budget: int = 100
    workspace: WorkingSpace = field(default_factory=WorkingSpace)
    continuation: ContinuationParams = field(default_factory=ContinuationParams)
    environments: EnvironmentSpec = field(default_factory=EnvironmentSpec)
    embedding: EmbeddingSpec = field(default_factory=EmbeddingSpec)
    probes: ProbeSpec = field(default_factory=ProbeSpec)
    toy: ToySpec = field(default_factory=ToySpec)
    analysis: AnalysisThresholds = field(default_factory=AnalysisThresholds)
    out: Path = Path("run")
    workers: int = 1
    stage_cache: bool = True

    def __post_init__(self) -> None:
        object.__setattr__(self, "out", Path(self.out))
        if self.manifolds < 2:
            raise ConfigError("manifolds must be at least 2")
        if self.failure_budget < 0:
            raise ConfigError("failure_budget must be nonnegative")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")
        if self.master_seed < 0:
            raise ConfigError("master_seed must be nonnegative")

    @classmethod
    def from_mapping(cls, data: dict[str, Any]) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown configuration key(s): {', '.join(unknown)}")
        kwargs = {}
        for key, value in data.items():
            table_cls = _TABLES.get(key)
            kwargs[key] = _build(table_cls, value, key) if table_cls is not None else value
        try:
            return cls(**kwargs)
        except TypeError as e:
            raise ConfigError(str(e)) from e

    @classmethod
    def from_toml(cls, path: Path | str) -> "ExperimentConfig":
        path = Path(path)
        try:
            with open(path, "rb") as fd:
                data = tomllib.load(fd)
        except FileNotFoundError as e:
            raise ConfigError(f"config file not found: {path}") from e
        except tomllib.TOMLDecodeError as e:
            raise ConfigError(f"{path}: {e}") from e
        return cls.from_mapping(data)

    def with_overrides(self, **overrides: Any) -> "ExperimentConfig":
        """`dataclasses.replace` ignoring None values (unset CLI flags)."""
        return replace(self, **{k: v for k, v in overrides.items() if v is not None})

    def to_dict(self, execution: bool = True) -> dict[str, Any]:
        out: dict[str, Any] = {}
        for f in fields(self):
            if not execution and f.name in _EXECUTION:
                continue
            value = getattr(self, f.name)
            if is_dataclass(value):
                value = asdict(value)  # type: ignore[arg-type]
            elif isinstance(value, Path):
                value = str(value)
            out[f.name] = value
        return out

    def section_hash(self, *names: str) -> str:
        """Hash of the named top-level entries, used as a stage input key."""
        full = self.to_dict(execution=False)
        return sha256_hex(canonical_json({name: full[name] for name in names}))

    @property
    def config_hash(self) -> str:
        return sha256_hex(canonical_json(self.to_dict(execution=False)))
