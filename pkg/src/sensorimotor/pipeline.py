"""
Pipeline stages of one run directory:

    explore   manifolds.bin, exploration.json
    metric    distances.bin, distances.csv
    embed     embedding.csv, embedding.json, embedding_poses.csv
    toy       toy.json
    analyze   environments/env_*.json, reports.json, summary.txt

Every stage records its input hash and the SHA-256 of its outputs in
`manifest.json`; with the stage cache on, a stage whose record still
matches is skipped.
"""

import csv
import json
import logging
import math
import platform
from dataclasses import dataclass, field
from importlib.metadata import PackageNotFoundError, version
from pathlib import Path
from typing import Any

import numpy as np

from .analysis import (
    NeighborhoodCheck,
    ProbeFamily,
    TopologyReport,
    ToyReport,
    alpha_loop_diagnostic,
    alpha_sweep,
    check_environment_invariance,
    external_correlation,
    fixed_alpha_grid,
    probe_surfaces,
    render_summary,
    sheet_flatness,
    toy_experiment,
)
from .concurrent import process_map
from .config import ExperimentConfig
from .embedding import EmbeddingResult, cca, neighborhood_preservation
from .errors import (
    ArtifactError,
    ExplorationError,
    NumericalError,
    SingularityError,
    WorkspaceRejectionError,
)
from .kernel_sampler import (
    ContinuationParams,
    KernelManifold,
    load_manifold_set,
    null_direction,
    sample_manifold,
    save_manifold_set,
)
from .kinematics import RetinaPose, base_distance, forward_kinematics, in_working_space
from .metric import DistanceMatrix, distance_matrix, distance_row
from .progress import StageMeter
from .sensor import random_environment, random_toy_environment, save_environment
from .utils import canonical_json, derive_seed, sha256_file, sha256_hex

__all__ = [
    "RunManifest",
    "ExplorationStats",
    "run_exploration",
    "run_metric",
    "run_embedding",
    "run_surfaces",
    "run_toy",
    "run_analysis",
]
log = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi
ABORT_MIN_DRAWS = 1000
ABORT_ACCEPTANCE = 0.01

MANIFOLDS = "manifolds.bin"
EXPLORATION = "exploration.json"
DISTANCES = "distances.bin"
DISTANCES_CSV = "distances.csv"
EMBEDDING_CSV = "embedding.csv"
EMBEDDING_JSON = "embedding.json"
EMBEDDING_POSES = "embedding_poses.csv"
TOY = "toy.json"
REPORTS = "reports.json"
SUMMARY = "summary.txt"


def _package_version() -> str:
    try:
        return version("sensorimotor")
    except PackageNotFoundError:  # pragma: no cover
        return "0.0.0"


def _write_json(path: Path, obj: Any) -> Path:
    path.write_text(json.dumps(obj, sort_keys=True, indent=1) + "\n", encoding="utf-8")
    return path


def _require(path: Path) -> Path:
    if not path.is_file():
        raise ArtifactError(f"missing artifact: {path} (run the upstream stage first)")
    return path


class RunManifest:
    """
    `manifest.json` of a run directory: config hash, versions and one
    record per stage {input, outputs: {name: sha256}}.
    """

    def __init__(self, out: Path, config_hash: str, stages: dict | None = None) -> None:
        self.out = Path(out)
        self.config_hash = config_hash
        self.stages: dict[str, dict[str, Any]] = stages or {}

    @property
    def path(self) -> Path:
        return self.out / "manifest.json"

    @classmethod
    def load(cls, out: Path | str, config_hash: str) -> "RunManifest":
        out = Path(out)
        path = out / "manifest.json"
        stages = {}
        if path.is_file():
            try:
                stages = json.loads(path.read_text(encoding="utf-8")).get("stages", {})
            except json.JSONDecodeError:
                log.warning("ignoring unreadable %s", path)
        return cls(out, config_hash, stages)

    def is_fresh(self, stage: str, input_hash: str) -> bool:
        record = self.stages.get(stage)
        if record is None or record.get("input") != input_hash:
            return False
        for name, digest in record.get("outputs", {}).items():
            path = self.out / name
            if not path.is_file() or sha256_file(path) != digest:
                return False
        return True

    def record(self, stage: str, input_hash: str, outputs: list[Path]) -> None:
        self.stages[stage] = {
            "input": input_hash,
            "outputs": {str(p.relative_to(self.out)): sha256_file(p) for p in outputs},
        }
        self.save()

    def save(self) -> Path:
        self.out.mkdir(parents=True, exist_ok=True)
        return _write_json(
            self.path,
            {
                "config_hash": self.config_hash,
                "versions": {
                    "sensorimotor": _package_version(),
                    "numpy": np.__version__,
                    "python": platform.python_version(),
                },
                "stages": self.stages,
            },
        )


def _manifest(cfg: ExperimentConfig) -> RunManifest:
    cfg.out.mkdir(parents=True, exist_ok=True)
    return RunManifest.load(cfg.out, cfg.config_hash)


def _cached(cfg: ExperimentConfig, manifest: RunManifest, stage: str, input_hash: str) -> bool:
    if cfg.stage_cache and manifest.is_fresh(stage, input_hash):
        log.info("%s: inputs unchanged, using cached outputs", stage)
        return True
    return False


# -- exploration --------------------------------------------------------------


@dataclass
class ExplorationStats:
    """Counts up to (and including) the draw of the last accepted configuration."""

    draws: int = 0
    accepted: int = 0
    rejected_workspace: int = 0
    rejected_split: int = 0
    rejected_singular: int = 0
    failures: dict[str, int] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {
            "draws": self.draws,
            "accepted": self.accepted,
            "rejected_workspace": self.rejected_workspace,
            "rejected_split": self.rejected_split,
            "rejected_singular": self.rejected_singular,
            "failures": dict(sorted(self.failures.items())),
        }


def _trace_candidate(m0: np.ndarray, params: ContinuationParams) -> tuple[str, Any]:
    try:
        return "ok", sample_manifold(m0, params)
    except NumericalError as e:
        return type(e).__name__, str(e)


class _CandidateStream:
    """Serial random draws with workspace and singularity rejection."""

    def __init__(self, cfg: ExperimentConfig) -> None:
        self.rng = np.random.default_rng(derive_seed(cfg.master_seed, "explore"))
        self.ws = cfg.workspace
        self.stats = ExplorationStats()
        self.passed = 0

    def draw(self) -> tuple[np.ndarray, ExplorationStats]:
        stats = self.stats
        while True:
            if stats.draws >= ABORT_MIN_DRAWS and self.passed / stats.draws < ABORT_ACCEPTANCE:
                raise WorkspaceRejectionError(
                    f"only {self.passed} of {stats.draws} random configurations reach the"
                    f" working space {self.ws}: check its size and position",
                    draws=stats.draws,
                    accepted=self.passed,
                )
            m = self.rng.uniform(0.0, TWO_PI, size=4)
            stats.draws += 1
            pose = forward_kinematics(m)
            if not in_working_space(pose, self.ws):
                stats.rejected_workspace += 1
                continue
            self.passed += 1
            if base_distance(pose) <= 1.0:
                stats.rejected_split += 1
                continue
            try:
                null_direction(m)
            except SingularityError:
                stats.rejected_singular += 1
                continue
            return m, ExplorationStats(**{**stats.to_dict(), "failures": {}})


def explore(cfg: ExperimentConfig) -> tuple[list[KernelManifold], ExplorationStats]:
    """
    Draw configurations uniformly over [0, 2π)⁴ until `cfg.manifolds`
    kernel manifolds are traced.

    Candidates are drawn serially, as many as are still missing per round,
    and traced by the worker pool; they are accepted in draw order, so the
    result does not depend on the worker count.
    """
    stream = _CandidateStream(cfg)
    params = cfg.continuation
    accepted: list[KernelManifold] = []
    failures: dict[str, int] = {}
    snapshot = ExplorationStats()
    with StageMeter(desc="explore", total=cfg.manifolds, unit="manifold") as meter:
        while len(accepted) < cfg.manifolds:
            need = cfg.manifolds - len(accepted)
            drawn = [stream.draw() for _ in range(need)]
            results = process_map(
                _trace_candidate,
                [m for m, _ in drawn],
                [params] * len(drawn),
                max_workers=cfg.workers,
                chunksize=1,
                disable=True,
            )
            for (m, stats), (status, value) in zip(drawn, results):
                if status != "ok":
                    failures[status] = failures.get(status, 0) + 1
                    log.warning("draw %d: %s: %s", stats.draws, status, value)
                    if sum(failures.values()) > cfg.failure_budget:
                        raise ExplorationError(
                            f"{sum(failures.values())} tracing failures exceed the budget"
                            f" of {cfg.failure_budget}"
                        )
                    continue
                accepted.append(value)
                snapshot = stats
                meter.update()
                if len(accepted) == cfg.manifolds:
                    break
    snapshot.accepted = len(accepted)
    snapshot.failures = failures
    log.info(
        "explore: %d accepted of %d draws (%d outside working space, %d split, %d singular,"
        " %d tracing failures)",
        snapshot.accepted,
        snapshot.draws,
        snapshot.rejected_workspace,
        snapshot.rejected_split,
        snapshot.rejected_singular,
        sum(failures.values()),
    )
    return accepted, snapshot


def run_exploration(cfg: ExperimentConfig) -> Path:
    """Explore and persist the manifold set; returns its path."""
    manifest = _manifest(cfg)
    input_hash = cfg.section_hash(
        "manifolds", "master_seed", "failure_budget", "workspace", "continuation"
    )
    path = cfg.out / MANIFOLDS
    if _cached(cfg, manifest, "explore", input_hash):
        return path
    manifolds, stats = explore(cfg)
    save_manifold_set(path, manifolds, experiment_seed=cfg.master_seed, params=cfg.continuation)
    stats_path = _write_json(cfg.out / EXPLORATION, stats.to_dict())
    manifest.record("explore", input_hash, [path, stats_path])
    return path


# -- metric -------------------------------------------------------------------


def run_metric(cfg: ExperimentConfig, manifold_file: Path | None = None) -> Path:
    """Distance matrix of the explored manifolds (binary and CSV); returns the binary path."""
    manifest = _manifest(cfg)
    src = _require(manifold_file or cfg.out / MANIFOLDS)
    input_hash = sha256_hex(canonical_json({"manifolds": sha256_file(src)}))
    path = cfg.out / DISTANCES
    if _cached(cfg, manifest, "metric", input_hash):
        return path
    manifolds = load_manifold_set(src).manifolds
    dm = distance_matrix(manifolds, workers=cfg.workers)
    dm.save_binary(path)
    csv_path = dm.save_csv(cfg.out / DISTANCES_CSV)
    manifest.record("metric", input_hash, [path, csv_path])
    return path


# -- probe tracing ------------------------------------------------------------


def _trace_configs(configs: np.ndarray, cfg: ExperimentConfig, desc: str) -> list[KernelManifold]:
    return process_map(
        sample_manifold,
        list(configs),
        [cfg.continuation] * len(configs),
        max_workers=cfg.workers,
        chunksize=1,
        desc=desc,
        unit="manifold",
    )


def run_surfaces(cfg: ExperimentConfig) -> tuple[list[KernelManifold], list[ProbeFamily]]:
    """Trace the fixed-orientation probe surfaces over the working space."""
    families = probe_surfaces(
        cfg.workspace, cfg.probes.surface_orientations, cfg.probes.nx, cfg.probes.ny
    )
    configs = np.concatenate([f.configs for f in families])
    return _trace_configs(configs, cfg, "surfaces"), families


# -- embedding ----------------------------------------------------------------


def _extend(dm: DistanceMatrix, extra: list[KernelManifold], known: list[KernelManifold]):
    """Grow `dm` by the rows of `extra` manifolds, one `distance_row` each."""
    n, k = dm.n, len(extra)
    values = np.zeros((n + k, n + k))
    values[:n, :n] = dm.values
    everything = [*known, *extra]
    for r, m in enumerate(extra):
        row = distance_row(m, everything)
        row[n + r] = 0.0
        values[n + r, :] = row
    # mirror so each pair holds one value
    iu = np.triu_indices(n + k, k=1)
    values[iu] = values.T[iu]
    return DistanceMatrix(values, (*dm.manifold_ids, *range(n, n + k)))


def _write_poses(path: Path, rows: list[tuple[int, str, RetinaPose]]) -> Path:
    with open(path, "w", newline="", encoding="utf-8") as fd:
        writer = csv.writer(fd, lineterminator="\n")
        writer.writerow(["id", "kind", "x", "y", "alpha"])
        for i, kind, p in rows:
            writer.writerow([i, kind, f"{p.x:.17g}", f"{p.y:.17g}", f"{p.alpha:.17g}"])
    return path


def run_embedding(cfg: ExperimentConfig, matrix_file: Path | None = None) -> Path:
    """
    CCA projection of the distance matrix; with probe surfaces enabled the
    surface manifolds are appended to the matrix first. Returns the CSV path.
    """
    manifest = _manifest(cfg)
    src = _require(matrix_file or cfg.out / DISTANCES)
    manifolds_path = _require(cfg.out / MANIFOLDS)
    input_hash = sha256_hex(
        canonical_json(
            {
                "distances": sha256_file(src),
                "manifolds": sha256_file(manifolds_path),
                "config": cfg.section_hash("master_seed", "embedding", "probes", "continuation"),
            }
        )
    )
    path = cfg.out / EMBEDDING_CSV
    if _cached(cfg, manifest, "embed", input_hash):
        return path

    dm = DistanceMatrix.load_binary(src)
    manifolds = load_manifold_set(manifolds_path).manifolds
    rows = [(i, "explored", m.pose) for i, m in zip(dm.manifold_ids, manifolds)]
    if cfg.probes.surfaces:
        surfaces, families = run_surfaces(cfg)
        dm = _extend(dm, surfaces, manifolds)
        poses = [p for f in families for p in f.poses]
        rows += [(dm.n - len(surfaces) + j, "surface", p) for j, p in enumerate(poses)]

    result = cca(dm, cfg.embedding.d, cfg.embedding.schedule(cfg.master_seed))
    result.save_csv(path)
    json_path = result.save_json(cfg.out / EMBEDDING_JSON)
    poses_path = _write_poses(cfg.out / EMBEDDING_POSES, rows)
    manifest.record("embed", input_hash, [path, json_path, poses_path])
    return path


# -- toy agents ---------------------------------------------------------------


def toy_reports(cfg: ExperimentConfig) -> dict[str, ToyReport]:
    """Run both toy agents in the same random rail environments."""
    spec = cfg.toy
    envs = [
        random_toy_environment(derive_seed(cfg.master_seed, "toy", i), spec.sources)
        for i in range(spec.environments)
    ]
    lo, hi = spec.x_range
    one = toy_experiment("one_motor", envs, np.linspace(lo, hi, spec.agent1_samples))
    offsets = np.linspace(-spec.m1_span / 2, spec.m1_span / 2, spec.per_set)
    # every position x is reached by the pairs (x/2 + t, x/2 - t)
    pairs = np.array(
        [(x / 2 + t, x / 2 - t) for x in np.linspace(lo, hi, spec.positions) for t in offsets]
    )
    two = toy_experiment("two_motor", envs, pairs)
    return {"toy_one_motor": one, "toy_two_motor": two}


def run_toy(cfg: ExperimentConfig) -> tuple[dict[str, Any], bool]:
    """Both toy experiments; writes `toy.json` and returns it with the overall verdict."""
    manifest = _manifest(cfg)
    input_hash = cfg.section_hash("master_seed", "toy")
    path = cfg.out / TOY
    if _cached(cfg, manifest, "toy", input_hash):
        document = json.loads(path.read_text(encoding="utf-8"))
        return document, bool(document["passed"])
    reports = toy_reports(cfg)
    passed = all(r.passed for r in reports.values())
    document = {name: r.to_dict() for name, r in reports.items()}
    document["passed"] = passed
    manifest.record("toy", input_hash, [_write_json(path, document)])
    return document, passed


# -- analysis -----------------------------------------------------------------


def _family_matrix(configs: np.ndarray, cfg: ExperimentConfig, desc: str) -> DistanceMatrix:
    return distance_matrix(_trace_configs(configs, cfg, desc), workers=1, disable=True)


def topology_report(
    cfg: ExperimentConfig, dm: DistanceMatrix, poses: list[RetinaPose]
) -> TopologyReport:
    """Orientation sweeps, half-sweep controls, fixed-orientation sheets and correlation."""
    th = cfg.analysis
    loops, controls = [], []
    for center in cfg.probes.centers(cfg.workspace):
        full = alpha_sweep(center, cfg.probes.sweep_steps)
        half = alpha_sweep(center, cfg.probes.sweep_steps, span=math.pi)
        loops += alpha_loop_diagnostic(
            _family_matrix(full.configs, cfg, "sweep"), full.poses, th.max_loop_ratio
        )
        controls += alpha_loop_diagnostic(
            _family_matrix(half.configs, cfg, "half sweep"), half.poses, th.max_loop_ratio
        )
    residuals, planar = [], []
    for k in range(cfg.probes.sheet_orientations):
        alpha = TWO_PI * k / cfg.probes.sheet_orientations
        sheet = fixed_alpha_grid(cfg.workspace, alpha, cfg.probes.nx, cfg.probes.ny)
        sheet_dm = _family_matrix(sheet.configs, cfg, "sheet")
        residuals.append(sheet_flatness(sheet_dm))
        # within a sheet the pose distance is the (x, y) distance
        rank = external_correlation(sheet_dm, sheet.poses, weight=0.0)
        planar.append(rank.value if rank.applicable else None)
    correlation = external_correlation(dm, poses, th.correlation_weight)
    return TopologyReport(
        loops,
        residuals,
        correlation,
        controls,
        planar,
        max_residual=th.max_sheet_residual,
        min_correlation=th.min_correlation,
        min_open_ratio=th.min_open_ratio,
    )


def run_analysis(cfg: ExperimentConfig) -> tuple[dict[str, Any], bool]:
    """
    All verdicts over the run directory. Writes `reports.json` and the
    human-readable `summary.txt`; returns the reports document and whether
    every check passed.

    Raises
    ------
    ArtifactError
        If the manifold set, distance matrix or embedding is missing.
    """
    manifest = _manifest(cfg)
    manifolds_path = _require(cfg.out / MANIFOLDS)
    distances_path = _require(cfg.out / DISTANCES)
    embedding_path = _require(cfg.out / EMBEDDING_JSON)
    sections = ("master_seed", "workspace", "continuation", "environments", "probes")
    input_hash = sha256_hex(
        canonical_json(
            {
                "manifolds": sha256_file(manifolds_path),
                "distances": sha256_file(distances_path),
                "embedding": sha256_file(embedding_path),
                "config": cfg.section_hash(*sections, "toy", "analysis"),
            }
        )
    )
    reports_path = cfg.out / REPORTS
    if _cached(cfg, manifest, "analyze", input_hash):
        document = json.loads(reports_path.read_text(encoding="utf-8"))
        return document, bool(document["passed"])

    th = cfg.analysis
    manifolds = load_manifold_set(manifolds_path).manifolds
    dm = DistanceMatrix.load_binary(distances_path)
    embedding = EmbeddingResult.load_json(embedding_path)
    if dm.n != len(manifolds):
        raise ArtifactError(f"{dm.n}-row distance matrix for {len(manifolds)} manifolds")

    env_dir = cfg.out / "environments"
    env_dir.mkdir(exist_ok=True)
    spec = cfg.environments
    envs, outputs = [], []
    for i in range(spec.count):
        env = random_environment(spec.sources, spec.region, spec.seed_for(cfg.master_seed, i))
        outputs.append(save_environment(env_dir / f"env_{i}.json", env))
        envs.append(env)

    reports: dict[str, Any] = {}
    if len(envs) >= 2:
        reports["invariance"] = check_environment_invariance(
            manifolds,
            envs,
            tau_sense=th.tau_sense,
            tau_pose=th.tau_pose,
            richness_factor=th.richness_factor,
        )
    else:
        log.warning("invariance check skipped: it needs at least 2 environments")
    reports["topology"] = topology_report(cfg, dm, [m.pose for m in manifolds])
    if dm.n > th.neighbors:
        value = neighborhood_preservation(dm, embedding.coords[: dm.n], th.neighbors)
        reports["embedding"] = NeighborhoodCheck(value, th.neighbors, th.min_neighborhood)
    else:
        log.warning("neighbourhood check skipped: %d manifolds for k=%d", dm.n, th.neighbors)
    reports.update(toy_reports(cfg))

    passed = all(r.passed for r in reports.values())
    document: dict[str, Any] = {name: r.to_dict() for name, r in reports.items()}
    document["passed"] = passed
    document["config_hash"] = cfg.config_hash
    outputs.append(_write_json(reports_path, document))
    summary_path = cfg.out / SUMMARY
    summary_path.write_text(
        render_summary(reports) + f"\noverall {'PASS' if passed else 'FAIL'}\n", encoding="utf-8"
    )
    outputs.append(summary_path)
    manifest.record("analyze", input_hash, outputs)
    log.info("analysis: %s", "PASS" if passed else "FAIL")
    return document, passed
