"""
Verdicts over a finished run: environment invariance of the kernel
manifolds, topology of the internal representation (orientation loops,
flat fixed-orientation sheets, agreement with the external pose) and the
toy-agent demonstrations.
"""

import itertools
import logging
import math
from collections.abc import Sequence
from dataclasses import asdict, dataclass, field
from functools import partial
from typing import Any, Literal

import numpy as np
import numpy.typing as npt
from scipy.cluster.hierarchy import fclusterdata
from scipy.spatial.distance import directed_hausdorff
from scipy.stats import pearsonr, spearmanr

from .embedding import classical_mds, pairwise_distances
from .errors import ConfigError, ProbeFamilyError
from .kernel_sampler import KernelManifold
from .kinematics import RetinaPose, WorkingSpace, forward_kinematics, inverse_kinematics
from .metric import DistanceMatrix, signed_wrap
from .sensor import Environment, RetinaGeometry, ToyGeometry, retina_response, toy_response
from .utils import paint

__all__ = [
    "InvarianceReport",
    "LoopScore",
    "CorrelationResult",
    "NeighborhoodCheck",
    "TopologyReport",
    "ToyReport",
    "ProbeFamily",
    "check_environment_invariance",
    "pose_tolerance",
    "alpha_loop_diagnostic",
    "external_correlation",
    "external_distances",
    "sheet_flatness",
    "toy_experiment",
    "alpha_sweep",
    "fixed_alpha_grid",
    "probe_surfaces",
    "render_summary",
]
log = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi
LEVEL_SET_THRESHOLD = 1e-9


def _verdict(ok: bool, colour: bool = False) -> str:
    if not colour:
        return "PASS" if ok else "FAIL"
    return paint("PASS", "green") if ok else paint("FAIL", "red")


# -- environment invariance ---------------------------------------------------


@dataclass
class InvarianceReport:
    """
    Parameters
    ----------
    spreads  : ndarray, shape (manifolds, environments)
        Max over samples of ‖σ_E(m[k]) − σ_E(m[0])‖∞.
    tolerances  : ndarray, shape (manifolds, environments)
        Sensory tolerance of each manifold in each environment.
    tau_sense  : list of float
        Median tolerance per environment, the unit of the richness check.
    richness  : list of float or None
        Mean ∞-distance between the seed responses of different manifolds
        per environment (None with a single manifold).
    flagged  : list of (manifold, environment)
        Pairs whose spread exceeds their tolerance.
    """

    spreads: npt.NDArray[np.float64]
    tolerances: npt.NDArray[np.float64]
    tau_sense: list[float]
    richness: list[float] | None
    richness_factor: float
    flagged: list[tuple[int, int]] = field(default_factory=list)

    @property
    def max_spread(self) -> float:
        return float(self.spreads.max()) if self.spreads.size else 0.0

    @property
    def rich(self) -> bool:
        if self.richness is None:
            return True
        return all(r >= self.richness_factor * t for r, t in zip(self.richness, self.tau_sense))

    @property
    def passed(self) -> bool:
        return not self.flagged and self.rich

    def to_dict(self) -> dict[str, Any]:
        return {
            "passed": self.passed,
            "max_spread": self.max_spread,
            "spreads": self.spreads.tolist(),
            "tolerances": self.tolerances.tolist(),
            "tau_sense": self.tau_sense,
            "richness": self.richness,
            "richness_factor": self.richness_factor,
            "rich": self.rich,
            "flagged": [
                {
                    "manifold": i,
                    "environment": e,
                    "spread": float(self.spreads[i, e]),
                    "tolerance": float(self.tolerances[i, e]),
                }
                for i, e in self.flagged
            ],
        }


def pose_tolerance(
    pose: RetinaPose, env: Environment, geom: RetinaGeometry, tau_pose: float
) -> float:
    """
    Largest ∞-norm response change over the corners of the box of half
    width `tau_pose` around `pose` in (x, y, α).

    Sources crossing the field-of-view edge inside the box count in full.
    """
    base = retina_response(pose, geom, env)
    steps = (-tau_pose, 0.0, tau_pose)
    worst = 0.0
    for dx, dy, da in itertools.product(steps, repeat=3):
        if dx == dy == da == 0.0:
            continue
        moved = RetinaPose(pose.x + dx, pose.y + dy, pose.alpha + da)
        worst = max(worst, float(np.abs(retina_response(moved, geom, env) - base).max()))
    return worst


def check_environment_invariance(
    manifolds: Sequence[KernelManifold],
    environments: Sequence[Environment],
    geom: RetinaGeometry | None = None,
    tau_sense: float | None = None,
    tau_pose: float = 1e-2,
    richness_factor: float = 10.0,
) -> InvarianceReport:
    """
    Sensory spread of every manifold in every environment.

    Without an explicit `tau_sense` each manifold's tolerance in an
    environment is the response change its seed pose can undergo within
    `tau_pose` (see `pose_tolerance`). The report passes when no spread
    exceeds its tolerance and, in every environment, different manifolds
    are on average at least `richness_factor` median tolerances apart.
    """
    if len(environments) < 2:
        raise ConfigError("invariance needs at least 2 environments")
    if not manifolds:
        raise ConfigError("no manifolds to check")
    if tau_sense is None and not tau_pose > 0:
        raise ConfigError("tau_pose must be positive")
    geom = geom or RetinaGeometry()
    poses = [[forward_kinematics(m) for m in man.samples] for man in manifolds]

    shape = (len(manifolds), len(environments))
    spreads = np.zeros(shape)
    tolerances = np.full(shape, tau_sense if tau_sense is not None else 0.0)
    taus: list[float] = []
    richness: list[float] | None = [] if len(manifolds) > 1 else None
    flagged = []
    for e, env in enumerate(environments):
        responses = [np.stack([retina_response(p, geom, env) for p in ps]) for ps in poses]
        seeds = np.stack([r[0] for r in responses])
        for i, r in enumerate(responses):
            spreads[i, e] = np.abs(r - r[0]).max()
            if tau_sense is None:
                tolerances[i, e] = pose_tolerance(poses[i][0], env, geom, tau_pose)
        taus.append(float(np.median(tolerances[:, e])))
        if richness is not None:
            gaps = np.abs(seeds[:, None, :] - seeds[None, :, :]).max(axis=2)
            richness.append(float(gaps[np.triu_indices(len(manifolds), k=1)].mean()))
        for i in np.flatnonzero(spreads[:, e] > tolerances[:, e]):
            flagged.append((int(i), e))
            log.warning(
                "manifold %d in environment %d: spread %.3g exceeds tolerance %.3g",
                i,
                e,
                spreads[i, e],
                tolerances[i, e],
            )

    report = InvarianceReport(spreads, tolerances, taus, richness, richness_factor, flagged)
    log.info(
        "invariance: max spread %.3g over %d manifolds x %d environments, %d flagged: %s",
        report.max_spread,
        len(manifolds),
        len(environments),
        len(flagged),
        "PASS" if report.passed else "FAIL",
    )
    return report


# -- probe families -----------------------------------------------------------


@dataclass
class ProbeFamily:
    """Deterministic motor configurations with known poses, built by inverse kinematics."""

    kind: Literal["alpha_sweep", "surface"]
    configs: npt.NDArray[np.float64]
    poses: list[RetinaPose]
    label: str = ""

    def __len__(self) -> int:
        return len(self.poses)


def _family(kind: Any, targets: list[tuple[float, float, float]], label: str) -> ProbeFamily:
    configs = np.stack([inverse_kinematics(x, y, a) for x, y, a in targets])
    return ProbeFamily(kind, configs, [forward_kinematics(m) for m in configs], label)


def alpha_sweep(
    center: tuple[float, float], steps: int = 12, span: float = TWO_PI, start: float = 0.0
) -> ProbeFamily:
    """`steps` orientations start + span·k/steps at one fixed position."""
    if steps < 3:
        raise ConfigError("an alpha sweep needs at least 3 steps")
    x, y = center
    targets = [(x, y, start + span * k / steps) for k in range(steps)]
    return _family("alpha_sweep", targets, f"sweep@({x:g},{y:g})")


def fixed_alpha_grid(ws: WorkingSpace, alpha: float, nx: int = 6, ny: int = 6) -> ProbeFamily:
    """Uniform `nx`×`ny` grid of positions over the working space at orientation `alpha`."""
    if nx < 2 or ny < 2:
        raise ConfigError("a probe grid needs at least 2 points per side")
    xmin, xmax, ymin, ymax = ws.bounds
    targets = [
        (float(x), float(y), alpha)
        for y in np.linspace(ymin, ymax, ny)
        for x in np.linspace(xmin, xmax, nx)
    ]
    return _family("surface", targets, f"alpha={alpha:.4f}")


def probe_surfaces(
    ws: WorkingSpace, orientations: int = 8, nx: int = 6, ny: int = 6
) -> list[ProbeFamily]:
    """Fixed-orientation grids at `orientations` equally spaced angles over [0, 2π)."""
    if orientations < 1:
        raise ConfigError("need at least one orientation")
    return [fixed_alpha_grid(ws, TWO_PI * k / orientations, nx, ny) for k in range(orientations)]


# -- topology -----------------------------------------------------------------


@dataclass
class LoopScore:
    """Closure of one fixed-position family ordered by orientation."""

    center: tuple[float, float]
    alphas: list[float]
    consecutive: list[float]
    closing: float
    max_ratio: float

    @property
    def median_consecutive(self) -> float:
        return float(np.median(self.consecutive))

    @property
    def ratio(self) -> float:
        med = self.median_consecutive
        if med == 0:
            return math.inf if self.closing > 0 else 1.0
        return self.closing / med

    @property
    def closed(self) -> bool:
        return self.ratio <= self.max_ratio

    def to_dict(self) -> dict[str, Any]:
        out = asdict(self)
        out.update(
            ratio=self.ratio, closed=self.closed, median_consecutive=self.median_consecutive
        )
        if math.isinf(out["ratio"]):
            out["ratio"] = None
        return out


def alpha_loop_diagnostic(
    dm: DistanceMatrix,
    poses: Sequence[RetinaPose],
    max_ratio: float = 2.0,
    position_tol: float = 1e-6,
) -> list[LoopScore]:
    """
    Find every group of at least 3 poses sharing one position, order each
    by orientation and compare the first-to-last internal distance with
    the median consecutive one.

    Raises
    ------
    ProbeFamilyError
        If no such group exists.
    """
    if len(poses) != dm.n:
        raise ConfigError(f"{len(poses)} poses for a {dm.n}-row distance matrix")
    groups: list[tuple[tuple[float, float], list[int]]] = []
    for i, p in enumerate(poses):
        for (cx, cy), members in groups:
            if math.hypot(p.x - cx, p.y - cy) <= position_tol:
                members.append(i)
                break
        else:
            groups.append(((p.x, p.y), [i]))

    scores = []
    for center, members in groups:
        if len(members) < 3:
            continue
        order = sorted(members, key=lambda i: (poses[i].alpha % TWO_PI, i))
        consecutive = [float(dm.values[a, b]) for a, b in zip(order, order[1:])]
        scores.append(
            LoopScore(
                center,
                [poses[i].alpha % TWO_PI for i in order],
                consecutive,
                float(dm.values[order[-1], order[0]]),
                max_ratio,
            )
        )
    if not scores:
        raise ProbeFamilyError("no fixed-position orientation sweep among the poses")
    for s in scores:
        log.info("alpha loop at (%.3f, %.3f): ratio %.3f", *s.center, s.ratio)
    return scores


@dataclass
class CorrelationResult:
    """Spearman correlation of internal against external distances."""

    value: float
    applicable: bool
    n_pairs: int

    def to_dict(self) -> dict[str, Any]:
        return {
            "value": self.value if self.applicable else None,
            "applicable": self.applicable,
            "n_pairs": self.n_pairs,
        }


@dataclass
class NeighborhoodCheck:
    """k-nearest-neighbour preservation of the embedding."""

    value: float
    k: int
    min_value: float = 0.6

    @property
    def passed(self) -> bool:
        return self.value >= self.min_value

    def to_dict(self) -> dict[str, Any]:
        return {
            "value": self.value,
            "k": self.k,
            "min_value": self.min_value,
            "passed": self.passed,
        }


def external_distances(poses: Sequence[RetinaPose], weight: float = 1.0) -> np.ndarray:
    """Condensed (i < j) distances sqrt(Δx² + Δy² + weight·Δα²) with Δα on the circle."""
    P = np.array([[p.x, p.y, p.alpha] for p in poses])
    iu = np.triu_indices(len(poses), k=1)
    dx = P[iu[0], 0] - P[iu[1], 0]
    dy = P[iu[0], 1] - P[iu[1], 1]
    da = signed_wrap(P[iu[0], 2] - P[iu[1], 2])
    return np.sqrt(dx * dx + dy * dy + weight * da * da)


def external_correlation(
    dm: DistanceMatrix, poses: Sequence[RetinaPose], weight: float = 1.0
) -> CorrelationResult:
    """
    Rank agreement between internal distances and the external pose
    distance. Constant inputs make the statistic undefined and are
    reported as not applicable.
    """
    if len(poses) != dm.n:
        raise ConfigError(f"{len(poses)} poses for a {dm.n}-row distance matrix")
    internal = dm.upper_triangle()
    external = external_distances(poses, weight)
    n_pairs = int(internal.size)
    if n_pairs < 2 or np.ptp(internal) == 0 or np.ptp(external) == 0:
        log.warning("external correlation not applicable: constant distances")
        return CorrelationResult(math.nan, False, n_pairs)
    rho = float(spearmanr(internal, external).statistic)
    log.info("internal/external Spearman correlation %.4f over %d pairs", rho, n_pairs)
    return CorrelationResult(rho, True, n_pairs)


def sheet_flatness(dm: DistanceMatrix) -> float:
    """
    Residual variance 1 − r² between a sheet's internal distances and the
    distances of its 2-D classical-MDS embedding (0 for a planar sheet).
    """
    internal = dm.upper_triangle()
    if internal.size < 2 or np.ptp(internal) == 0:
        return 0.0
    planar = pairwise_distances(classical_mds(dm, 2).coords)[np.triu_indices(dm.n, k=1)]
    if np.ptp(planar) == 0:
        return 1.0
    r = float(pearsonr(internal, planar).statistic)
    return max(0.0, 1.0 - r * r)


@dataclass
class TopologyReport:
    """
    Orientation loops (`loops`, expected closed), half-sweep controls
    (`controls`, expected open), fixed-orientation sheet residuals and the
    internal/external distance correlation. `sheet_correlations` holds each
    sheet's rank agreement with the planar (x, y) distances of its poses.
    """

    loops: list[LoopScore]
    slice_residuals: list[float]
    correlation: CorrelationResult
    controls: list[LoopScore] = field(default_factory=list)
    sheet_correlations: list[float | None] = field(default_factory=list)
    max_residual: float = 0.1
    min_correlation: float = 0.8
    min_open_ratio: float = 3.0

    @property
    def loops_closed(self) -> bool:
        return all(s.closed for s in self.loops)

    @property
    def controls_open(self) -> bool:
        return all(s.ratio >= self.min_open_ratio for s in self.controls)

    @property
    def sheets_flat(self) -> bool:
        return all(r <= self.max_residual for r in self.slice_residuals)

    @property
    def correlated(self) -> bool:
        return self.correlation.applicable and self.correlation.value >= self.min_correlation

    @property
    def passed(self) -> bool:
        return self.loops_closed and self.controls_open and self.sheets_flat and self.correlated

    def to_dict(self) -> dict[str, Any]:
        return {
            "passed": self.passed,
            "loops_closed": self.loops_closed,
            "controls_open": self.controls_open,
            "sheets_flat": self.sheets_flat,
            "correlated": self.correlated,
            "loops": [s.to_dict() for s in self.loops],
            "controls": [s.to_dict() for s in self.controls],
            "slice_residuals": self.slice_residuals,
            "sheet_correlations": self.sheet_correlations,
            "correlation": self.correlation.to_dict(),
            "thresholds": {
                "max_ratio": self.loops[0].max_ratio if self.loops else None,
                "max_residual": self.max_residual,
                "min_correlation": self.min_correlation,
                "min_open_ratio": self.min_open_ratio,
            },
        }


# -- toy agents ---------------------------------------------------------------


@dataclass
class ToyReport:
    """
    Agent 1 fields describe how its sensory curve changes between
    environments; agent 2 fields describe the level sets recovered from
    its sensorimotor data (one set per rail position x).
    """

    agent_kind: str
    n_environments: int
    curves: list[list[list[float]]] = field(default_factory=list)
    curve_discrepancy: float | None = None
    curve_hausdorff: float | None = None
    set_x: list[float] = field(default_factory=list)
    set_sizes: list[int] = field(default_factory=list)
    slopes: list[float | None] = field(default_factory=list)
    max_sum_deviation: float | None = None
    line_distances: list[list[float]] = field(default_factory=list)
    line_distance_error: float | None = None
    set_hausdorff: list[list[float]] = field(default_factory=list)
    partition_consistent: bool | None = None
    agent_consistency: float | None = None
    internal_coordinate: list[float] = field(default_factory=list)
    max_deviation: float = 1e-6
    max_relative_error: float = 0.01

    @property
    def passed(self) -> bool:
        if self.agent_kind == "one_motor":
            return self.n_environments < 2 or (self.curve_discrepancy or 0.0) > 1e-9
        return (
            self.max_sum_deviation is not None
            and self.max_sum_deviation <= self.max_deviation
            and (self.line_distance_error or 0.0) <= self.max_relative_error
            and bool(self.partition_consistent)
        )

    def to_dict(self) -> dict[str, Any]:
        out = asdict(self)
        out["passed"] = self.passed
        return out


def _canonical_labels(labels: np.ndarray) -> tuple[int, ...]:
    seen: dict[int, int] = {}
    return tuple(seen.setdefault(int(lb), len(seen)) for lb in labels)


def _level_sets(S: np.ndarray) -> np.ndarray:
    if S.shape[0] == 1:
        return np.ones(1, dtype=int)
    return fclusterdata(S, t=LEVEL_SET_THRESHOLD, criterion="distance", method="single")


def _tls_line(points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(centroid, unit normal) of the total-least-squares line through `points`."""
    centroid = points.mean(axis=0)
    _, _, vt = np.linalg.svd(points - centroid)
    return centroid, vt[-1]


def toy_experiment(
    agent_kind: Literal["one_motor", "two_motor"],
    environments: Sequence[Environment],
    motor_samples: npt.ArrayLike,
    geom: ToyGeometry | None = None,
) -> ToyReport:
    """
    Parameters
    ----------
    agent_kind  : {'one_motor', 'two_motor'}
    environments  : sequence of Environment
    motor_samples  : array_like, shape (n,) or (n, 1) for one motor, (n, 2) for two
    geom  : ToyGeometry, optional
    """
    if agent_kind not in ("one_motor", "two_motor"):
        raise ConfigError(f"unknown toy agent kind {agent_kind!r}")
    if not environments:
        raise ConfigError("toy experiment needs at least one environment")
    geom = geom or ToyGeometry()
    n_motors = 1 if agent_kind == "one_motor" else 2
    M = np.asarray(motor_samples, dtype=np.float64).reshape(-1, n_motors)
    if M.shape[0] < 1:
        raise ConfigError("no motor samples")
    report = ToyReport(agent_kind, len(environments))
    responses = [
        np.stack([toy_response(agent_kind, m, env, geom) for m in M]) for env in environments
    ]

    if agent_kind == "one_motor":
        report.curves = [S.tolist() for S in responses]
        if len(environments) > 1:
            disc, haus = 0.0, 0.0
            for a in range(len(responses)):
                for b in range(a + 1, len(responses)):
                    A, B = responses[a], responses[b]
                    disc = max(disc, float(np.abs(A - B).max()))
                    haus = max(haus, directed_hausdorff(A, B)[0], directed_hausdorff(B, A)[0])
            report.curve_discrepancy, report.curve_hausdorff = disc, float(haus)
        log.info("toy agent 1: sensory discrepancy %s", report.curve_discrepancy)
        return report

    labels = _level_sets(responses[0])
    report.partition_consistent = all(
        _canonical_labels(_level_sets(S)) == _canonical_labels(labels) for S in responses[1:]
    )
    sums = M.sum(axis=1)
    sets = [np.flatnonzero(labels == lb) for lb in np.unique(labels)]
    sets.sort(key=lambda idx: (float(sums[idx].mean()), int(idx[0])))
    report.set_x = [float(sums[idx].mean()) for idx in sets]
    report.set_sizes = [int(idx.size) for idx in sets]
    report.max_sum_deviation = max(
        float(np.abs(sums[idx] - x).max()) for idx, x in zip(sets, report.set_x)
    )

    lines = [_tls_line(M[idx]) if idx.size >= 2 else None for idx in sets]
    for line in lines:
        normal = None if line is None else line[1]
        # set of one point, or a vertical line in (m1, m2)
        if normal is None or normal[1] == 0:
            report.slopes.append(None)
        else:
            report.slopes.append(float(-normal[0] / normal[1]))
    k = len(sets)
    line_d = np.zeros((k, k))
    set_h = np.zeros((k, k))
    worst = 0.0
    for a in range(k):
        for b in range(a + 1, k):
            A, B = M[sets[a]], M[sets[b]]
            set_h[a, b] = set_h[b, a] = max(
                directed_hausdorff(A, B)[0], directed_hausdorff(B, A)[0]
            )
            la = lines[a]
            if la is None:
                continue
            centroid, normal = la
            line_d[a, b] = line_d[b, a] = abs(float(normal @ (B.mean(axis=0) - centroid)))
            oracle = abs(report.set_x[a] - report.set_x[b]) / math.sqrt(2)
            if oracle > 0:
                worst = max(worst, abs(line_d[a, b] - oracle) / oracle)
    report.line_distances = line_d.tolist()
    report.set_hausdorff = set_h.tolist()
    report.line_distance_error = worst

    # agent 2 sees exactly what agent 1 sees at the same rail position
    report.agent_consistency = 0.0
    for S, env in zip(responses, environments):
        rail = np.stack([toy_response("one_motor", [s], env, geom) for s in sums])
        report.agent_consistency = max(report.agent_consistency, float(np.abs(S - rail).max()))
    if k >= 2:
        q = classical_mds(line_d, 1).coords[:, 0]
        # orient the internal coordinate along increasing x
        if q[-1] < q[0]:
            q = -q
        report.internal_coordinate = q.tolist()
    log.info(
        "toy agent 2: %d level sets, max |m1+m2 - x| %.3g, line error %.3g",
        k,
        report.max_sum_deviation,
        worst,
    )
    return report


# -- summary ------------------------------------------------------------------


def render_summary(reports: dict[str, Any], colour: bool = False) -> str:
    """Human-readable verdict lines for the reports of one run, ANSI-coloured on request."""
    verdict = partial(_verdict, colour=colour)
    lines = []
    inv = reports.get("invariance")
    if inv is not None:
        lines.append(
            f"environment invariance  {verdict(inv.passed)}"
            f"  max spread {inv.max_spread:.3g}, {len(inv.flagged)} flagged"
        )
    topo = reports.get("topology")
    if topo is not None:
        ratios = ", ".join(f"{s.ratio:.2f}" for s in topo.loops)
        lines.append(f"alpha loops closed      {verdict(topo.loops_closed)}  ratios [{ratios}]")
        if topo.controls:
            ratios = ", ".join(f"{s.ratio:.2f}" for s in topo.controls)
            lines.append(
                f"half sweeps open        {verdict(topo.controls_open)}  ratios [{ratios}]"
            )
        worst = max(topo.slice_residuals, default=0.0)
        lines.append(
            f"fixed-alpha sheets flat {verdict(topo.sheets_flat)}  max residual {worst:.3g}"
        )
        corr = topo.correlation
        value = f"{corr.value:.3f}" if corr.applicable else "n/a"
        lines.append(f"external correlation    {verdict(topo.correlated)}  spearman {value}")
    nbr = reports.get("embedding")
    if nbr is not None:
        lines.append(
            f"neighbourhoods kept     {verdict(nbr.passed)}"
            f"  k={nbr.k} preservation {nbr.value:.3f}"
        )
    for name in ("toy_one_motor", "toy_two_motor"):
        toy = reports.get(name)
        if toy is not None:
            lines.append(f"{name:<23} {verdict(toy.passed)}")
    return "\n".join(lines)
