import logging
import math

import numpy as np
from colorama import Fore
from pytest import approx, mark, raises

from sensorimotor.analysis import (
    CorrelationResult,
    LoopScore,
    NeighborhoodCheck,
    TopologyReport,
    alpha_loop_diagnostic,
    alpha_sweep,
    check_environment_invariance,
    external_correlation,
    external_distances,
    fixed_alpha_grid,
    pose_tolerance,
    probe_surfaces,
    render_summary,
    sheet_flatness,
)
from sensorimotor.embedding import pairwise_distances
from sensorimotor.errors import ConfigError, ProbeFamilyError
from sensorimotor.kernel_sampler import KernelManifold, sample_manifold
from sensorimotor.kinematics import RetinaPose, WorkingSpace, forward_kinematics
from sensorimotor.metric import DistanceMatrix, distance_matrix
from sensorimotor.sensor import Environment, RetinaGeometry, random_environment

TWO_PI = 2 * math.pi
# sources well ahead of the arm so no manifold passes close to one
FAR_REGION = (3.2, 4.5, -2.5, 2.5)


def far_environments(*seeds):
    return [random_environment(8, region=FAR_REGION, seed=s) for s in seeds]


def circular_dm(alphas):
    gap = np.abs(np.subtract.outer(alphas, alphas)) % TWO_PI
    return DistanceMatrix(np.minimum(gap, TWO_PI - gap), tuple(range(len(alphas))))


def linear_dm(alphas):
    return DistanceMatrix(np.abs(np.subtract.outer(alphas, alphas)), tuple(range(len(alphas))))


def test_invariance_passes(grid_manifolds):
    report = check_environment_invariance(
        grid_manifolds, far_environments(1, 2), richness_factor=2.0
    )
    assert report.spreads.shape == (len(grid_manifolds), 2)
    assert report.tolerances.shape == report.spreads.shape
    assert (report.spreads <= report.tolerances).all()
    assert report.flagged == []
    assert report.rich
    assert report.passed
    assert report.to_dict()["passed"] is True


def test_invariance_flags_drifted_manifold(grid_manifolds, caplog):
    samples = grid_manifolds[4].samples.copy()
    samples[7, 3] += 0.5
    drifted = KernelManifold(samples, grid_manifolds[4].seed_config, 0)
    manifolds = [*grid_manifolds[:4], drifted, *grid_manifolds[5:]]
    with caplog.at_level(logging.WARNING):
        report = check_environment_invariance(manifolds, far_environments(1, 2))
    assert (4, 0) in report.flagged
    assert (4, 1) in report.flagged
    assert not report.passed
    assert "manifold 4 in environment 0" in caplog.text
    (entry,) = [f for f in report.to_dict()["flagged"] if f["environment"] == 0]
    assert entry["manifold"] == 4
    assert entry["spread"] > entry["tolerance"]


def test_invariance_explicit_tolerance(grid_manifolds):
    report = check_environment_invariance(grid_manifolds, far_environments(1, 2), tau_sense=1e9)
    assert report.tau_sense == [1e9, 1e9]
    assert (report.tolerances == 1e9).all()
    assert report.flagged == []
    # no manifold pair is 10 tolerances apart
    assert not report.rich


def test_invariance_needs_two_environments(grid_manifolds):
    with raises(ConfigError):
        check_environment_invariance(grid_manifolds, far_environments(1))
    with raises(ConfigError):
        check_environment_invariance(grid_manifolds, far_environments(1, 2), tau_pose=0.0)


def test_pose_tolerance_scales_with_box():
    env = Environment([[2.0, 0.0]])
    pose = RetinaPose(0.0, 0.0, 0.0)
    small = pose_tolerance(pose, env, RetinaGeometry(), 1e-3)
    large = pose_tolerance(pose, env, RetinaGeometry(), 1e-2)
    assert 0 < small < large < 0.05


def test_pose_tolerance_covers_field_of_view_edge():
    # a source just inside the field of view leaves it within the box
    bearing = RetinaGeometry().fov_halfangle - 5e-3
    env = Environment([[2 * math.cos(bearing), 2 * math.sin(bearing)]])
    assert pose_tolerance(RetinaPose(0.0, 0.0, 0.0), env, RetinaGeometry(), 1e-2) > 0.45


def test_alpha_sweep_family():
    family = alpha_sweep((1.75, 0.2), steps=12)
    assert len(family) == 12
    assert family.configs.shape == (12, 4)
    for k, (m, pose) in enumerate(zip(family.configs, family.poses)):
        assert forward_kinematics(m) == pose
        assert pose.x == approx(1.75, abs=1e-12)
        assert pose.y == approx(0.2, abs=1e-12)
        gap = abs(pose.alpha - TWO_PI * k / 12) % TWO_PI
        assert min(gap, TWO_PI - gap) < 1e-12
    # one fixed position: configurations differ in the last joint only
    assert np.allclose(family.configs[:, :3], family.configs[0, :3])


def test_fixed_alpha_grid_covers_working_space():
    ws = WorkingSpace()
    family = fixed_alpha_grid(ws, 1.0, nx=3, ny=4)
    xs = sorted({round(p.x, 9) for p in family.poses})
    ys = sorted({round(p.y, 9) for p in family.poses})
    assert xs == [1.0, 1.75, 2.5]
    assert ys == approx([-1.0, -1 / 3, 1 / 3, 1.0])
    assert all(abs(p.alpha - 1.0) < 1e-12 for p in family.poses)
    assert len(probe_surfaces(ws, orientations=3, nx=2, ny=2)) == 3


def test_probe_family_errors():
    with raises(ConfigError):
        alpha_sweep((1.75, 0.0), steps=2)
    with raises(ConfigError):
        fixed_alpha_grid(WorkingSpace(), 0.0, nx=1)
    with raises(ConfigError):
        probe_surfaces(WorkingSpace(), orientations=0)


def test_alpha_loop_closed_on_circle():
    alphas = TWO_PI * np.arange(12) / 12
    poses = [RetinaPose(2.0, 0.0, a) for a in alphas]
    (score,) = alpha_loop_diagnostic(circular_dm(alphas), poses)
    assert score.center == (2.0, 0.0)
    assert score.ratio == approx(1.0)
    assert score.closed


def test_alpha_loop_open_on_half_sweep():
    alphas = math.pi * np.arange(12) / 12
    poses = [RetinaPose(2.0, 0.0, a) for a in alphas]
    (score,) = alpha_loop_diagnostic(linear_dm(alphas), poses)
    assert score.ratio == approx(11.0)
    assert not score.closed


def test_alpha_loop_orders_by_orientation():
    alphas = TWO_PI * np.array([3, 0, 2, 1, 4]) / 5
    poses = [RetinaPose(2.0, 0.0, a) for a in alphas]
    (score,) = alpha_loop_diagnostic(circular_dm(alphas), poses)
    assert score.alphas == sorted(score.alphas)
    assert score.consecutive == approx([TWO_PI / 5] * 4)


def test_alpha_loop_groups_positions():
    alphas = TWO_PI * np.arange(4) / 4
    poses = [RetinaPose(2.0, 0.0, a) for a in alphas] + [RetinaPose(1.5, 0.5, a) for a in alphas]
    values = np.zeros((8, 8))
    values[:4, :4] = circular_dm(alphas).values
    values[4:, 4:] = circular_dm(alphas).values
    scores = alpha_loop_diagnostic(DistanceMatrix(values, tuple(range(8))), poses)
    assert [s.center for s in scores] == [(2.0, 0.0), (1.5, 0.5)]


def test_alpha_loop_needs_a_sweep():
    poses = [RetinaPose(1.0 + i, 0.0, 0.0) for i in range(4)]
    dm = linear_dm(np.arange(4.0))
    with raises(ProbeFamilyError):
        alpha_loop_diagnostic(dm, poses)
    with raises(ConfigError):
        alpha_loop_diagnostic(dm, poses[:3])


def test_loop_score_zero_median():
    assert LoopScore((0.0, 0.0), [0, 1, 2], [0.0, 0.0], 1.0, 2.0).ratio == math.inf
    assert LoopScore((0.0, 0.0), [0, 1, 2], [0.0, 0.0], 0.0, 2.0).closed
    assert LoopScore((0.0, 0.0), [0, 1, 2], [0.0, 0.0], 1.0, 2.0).to_dict()["ratio"] is None


def test_external_distances():
    poses = [RetinaPose(0.0, 0.0, 0.1), RetinaPose(3.0, 4.0, TWO_PI - 0.1)]
    assert external_distances(poses, weight=0.0) == approx([5.0])
    assert external_distances(poses, weight=1.0) == approx([math.sqrt(25 + 0.04)])


def test_external_correlation_perfect():
    rng = np.random.default_rng(0)
    xy, alpha = rng.uniform(1, 2, (20, 2)), rng.uniform(0, 6, 20)
    poses = [RetinaPose(x, y, a) for (x, y), a in zip(xy, alpha)]
    values = np.zeros((20, 20))
    values[np.triu_indices(20, k=1)] = external_distances(poses)
    dm = DistanceMatrix(values + values.T, tuple(range(20)))
    result = external_correlation(dm, poses)
    assert result.applicable
    assert result.value == approx(1.0)
    assert result.n_pairs == 190


def test_external_correlation_unrelated():
    rng = np.random.default_rng(1)
    n = 150
    poses = [RetinaPose(*xy, a) for xy, a in zip(rng.uniform(1, 2, (n, 2)), rng.uniform(0, 6, n))]
    dm = DistanceMatrix(pairwise_distances(rng.normal(size=(n, 3))), tuple(range(n)))
    assert abs(external_correlation(dm, poses).value) < 0.1


def test_external_correlation_not_applicable(caplog):
    poses = [RetinaPose(2.0, 0.0, 0.0)] * 3
    dm = DistanceMatrix(np.ones((3, 3)) - np.eye(3), (0, 1, 2))
    with caplog.at_level(logging.WARNING):
        result = external_correlation(dm, poses)
    assert not result.applicable
    assert result.to_dict()["value"] is None
    assert "not applicable" in caplog.text


def test_sheet_flatness():
    rng = np.random.default_rng(2)
    P = rng.uniform(0, 1, (30, 2))
    assert sheet_flatness(DistanceMatrix(pairwise_distances(P), tuple(range(30)))) < 1e-9
    # an isotropic cloud has no good planar picture
    Q = rng.normal(size=(60, 3))
    assert sheet_flatness(DistanceMatrix(pairwise_distances(Q), tuple(range(60)))) > 0.1
    assert sheet_flatness(DistanceMatrix(np.ones((3, 3)) - np.eye(3), (0, 1, 2))) == 0.0
    assert sheet_flatness(DistanceMatrix(np.zeros((3, 3)), (0, 1, 2))) == 0.0


def test_sheet_distances_ignore_orientation(grid_manifolds):
    """Turning the whole sheet in the last joint leaves its internal distances unchanged."""
    shift = np.array([0.0, 0.0, 0.0, 1.3])
    turned = [
        KernelManifold(m.samples + shift, m.seed_config + shift, m.raw_count)
        for m in grid_manifolds
    ]
    sheet = distance_matrix(grid_manifolds, disable=True)
    assert np.allclose(sheet.values, distance_matrix(turned, disable=True).values, atol=1e-9)
    assert sheet_flatness(sheet) < 0.1


def test_topology_report_verdicts():
    closed = LoopScore((2.0, 0.0), [0.0, 1.0, 2.0], [1.0, 1.0], 1.2, 2.0)
    open_ = LoopScore((2.0, 0.0), [0.0, 1.0, 2.0], [1.0, 1.0], 5.0, 2.0)
    good = CorrelationResult(0.9, True, 10)
    report = TopologyReport([closed], [0.01], good, [open_])
    assert report.passed
    assert report.to_dict()["thresholds"]["max_ratio"] == 2.0
    assert not TopologyReport([open_], [0.01], good).passed
    assert not TopologyReport([closed], [0.01], good, [closed]).passed
    assert not TopologyReport([closed], [0.5], good).passed
    assert not TopologyReport([closed], [0.01], CorrelationResult(math.nan, False, 1)).passed


def test_render_summary():
    report = TopologyReport(
        [LoopScore((2.0, 0.0), [0.0, 1.0, 2.0], [1.0, 1.0], 1.0, 2.0)],
        [0.02],
        CorrelationResult(0.95, True, 10),
    )
    text = render_summary({"topology": report, "embedding": NeighborhoodCheck(0.4, 10)})
    assert "alpha loops closed" in text
    assert "spearman 0.950" in text
    assert "k=10 preservation 0.400" in text
    assert "FAIL" in text
    assert "PASS" in text
    assert "\033[" not in text
    coloured = render_summary({"topology": report}, colour=True)
    assert Fore.GREEN + "PASS" in coloured


@mark.slow
def test_traced_alpha_sweep_closes(fast_params):
    """Kernel manifolds of a full orientation sweep form a loop; a half sweep does not."""
    full = alpha_sweep((1.75, 0.0), steps=8)
    half = alpha_sweep((1.75, 0.0), steps=8, span=math.pi)

    def score(family):
        dm = distance_matrix([sample_manifold(m, fast_params) for m in family.configs])
        (s,) = alpha_loop_diagnostic(dm, family.poses)
        return s

    assert score(full).closed
    assert score(half).ratio >= 3.0
