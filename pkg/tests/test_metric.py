import math

import numpy as np
from pytest import approx, mark, raises

from sensorimotor.errors import ArtifactError, MetricError
from sensorimotor.metric import (
    DistanceMatrix,
    canonical_angles,
    distance_matrix,
    distance_row,
    hausdorff,
    motor_distance,
    signed_wrap,
    wrap_diff,
)

TWO_PI = 2 * math.pi


def naive_hausdorff(A, B):
    """Reference double loop over `motor_distance`."""
    d = np.array([[motor_distance(a, b) for b in B] for a in A])
    return max(d.min(axis=1).max(), d.min(axis=0).max())


def random_sets(rng, n_sets=6, size=15, dim=4):
    return [rng.uniform(-10, 10, (size, dim)) for _ in range(n_sets)]


@mark.parametrize(
    "u,expected",
    [(0.0, 0.0), (1.0, 1.0), (-1.0, -1.0), (math.pi, math.pi), (4.0, TWO_PI - 4.0)],
)
def test_wrap_diff_branches(u, expected):
    assert wrap_diff(u) == approx(expected)


def test_wrap_diff_magnitude_is_shortest_arc():
    rng = np.random.default_rng(0)
    u = rng.uniform(-3 * TWO_PI, 3 * TWO_PI, 500)
    assert np.all(np.abs(wrap_diff(u)) <= math.pi + 1e-12)
    assert np.allclose(np.abs(wrap_diff(u)), np.abs(signed_wrap(u)))


def test_canonical_angles_range():
    out = canonical_angles([-1e-20, TWO_PI, -3.0, 7.0])
    assert np.all((out >= 0) & (out < TWO_PI))
    assert out[1] == 0.0


def test_motor_distance_properties():
    rng = np.random.default_rng(1)
    for _ in range(50):
        a, b, c = rng.uniform(-10, 10, (3, 4))
        assert motor_distance(a, a) == 0.0
        assert motor_distance(a, b) == approx(motor_distance(b, a))
        assert motor_distance(a, c) <= motor_distance(a, b) + motor_distance(b, c) + 1e-12
        assert motor_distance(a, b) <= math.pi * 2 + 1e-12
        shift = TWO_PI * rng.integers(-3, 4, 4)
        assert motor_distance(a + shift, b) == approx(motor_distance(a, b), abs=1e-9)


def test_motor_distance_wraps():
    assert motor_distance([0.1, 0, 0, 0], [TWO_PI - 0.1, 0, 0, 0]) == approx(0.2)


def test_motor_distance_dimension_mismatch():
    with raises(MetricError):
        motor_distance([0, 0, 0, 0], [0, 0, 0])


def test_hausdorff_matches_naive():
    rng = np.random.default_rng(2)
    sets = random_sets(rng)
    for A in sets:
        for B in sets:
            assert hausdorff(A, B) == approx(naive_hausdorff(A, B), rel=1e-12)


def test_hausdorff_early_exit_is_bit_identical():
    rng = np.random.default_rng(3)
    sets = random_sets(rng, n_sets=8, size=30)
    for A in sets:
        for B in sets:
            assert hausdorff(A, B, early_exit=True) == hausdorff(A, B, early_exit=False)


def test_hausdorff_basic_properties():
    rng = np.random.default_rng(4)
    A, B = random_sets(rng, n_sets=2)
    assert hausdorff(A, A) == 0.0
    assert hausdorff(A, B) == hausdorff(B, A)
    assert hausdorff(A, A[::-1]) == 0.0
    assert hausdorff(A, A + TWO_PI) == approx(0.0, abs=1e-12)


def test_hausdorff_single_points():
    assert hausdorff([[0.0, 0, 0, 0]], [[0.5, 0, 0, 0]]) == approx(0.5)


def test_hausdorff_empty():
    with raises(MetricError):
        hausdorff(np.empty((0, 4)), [[0.0, 0, 0, 0]])


def test_distance_matrix_matches_pairwise(grid_manifolds):
    dm = distance_matrix(grid_manifolds, block=5, disable=True)
    n = len(grid_manifolds)
    assert dm.n == n
    assert dm.manifold_ids == tuple(range(n))
    for i in range(n):
        for j in range(n):
            assert dm.values[i, j] == hausdorff(grid_manifolds[i], grid_manifolds[j])


def test_distance_matrix_block_independent(grid_manifolds):
    a = distance_matrix(grid_manifolds, block=1, disable=True)
    b = distance_matrix(grid_manifolds, block=64, disable=True)
    assert a == b


@mark.slow
def test_distance_matrix_workers_independent(grid_manifolds):
    serial = distance_matrix(grid_manifolds, workers=1, block=3, disable=True)
    parallel = distance_matrix(grid_manifolds, workers=2, block=3, disable=True)
    assert serial == parallel


def test_distance_row(grid_manifolds):
    dm = distance_matrix(grid_manifolds, disable=True)
    assert np.array_equal(distance_row(grid_manifolds[2], grid_manifolds), dm.values[2])


def test_distance_matrix_errors():
    with raises(MetricError):
        distance_matrix([np.zeros((3, 4))])
    with raises(MetricError):
        distance_matrix([np.zeros((3, 4)), np.zeros((4, 4))])
    with raises(MetricError) as exc:
        distance_matrix([np.zeros((3, 4)), np.full((3, 4), np.nan)])
    assert exc.value.pair == (1, 1)


@mark.parametrize(
    "values",
    [
        [[0.0, 1.0], [2.0, 0.0]],
        [[1.0, 1.0], [1.0, 0.0]],
        [[0.0, -1.0], [-1.0, 0.0]],
        [[0.0, math.inf], [math.inf, 0.0]],
        [[0.0, 1.0, 2.0]],
    ],
)
def test_distance_matrix_validation(values):
    with raises(MetricError):
        DistanceMatrix(np.array(values), tuple(range(len(values))))


def test_subset():
    dm = DistanceMatrix(np.array([[0, 1, 2], [1, 0, 3], [2, 3, 0.0]]), (7, 8, 9))
    sub = dm.subset([2, 0])
    assert sub.manifold_ids == (9, 7)
    assert sub.values.tolist() == [[0.0, 2.0], [2.0, 0.0]]
    with raises(MetricError):
        dm.subset([])


def test_binary_file_exact(tmp_path, grid_manifolds):
    dm = distance_matrix(grid_manifolds, disable=True)
    first = dm.save_binary(tmp_path / "a.bin")
    second = DistanceMatrix.load_binary(first).save_binary(tmp_path / "b.bin")
    assert DistanceMatrix.load_binary(first) == dm
    assert first.read_bytes() == second.read_bytes()


def test_csv_file_exact(tmp_path, grid_manifolds):
    dm = distance_matrix(grid_manifolds, disable=True)
    path = dm.save_csv(tmp_path / "d.csv")
    assert path.read_text().splitlines()[0] == ",".join(map(str, range(dm.n)))
    assert DistanceMatrix.load_csv(path) == dm


def test_load_errors(tmp_path):
    with raises(ArtifactError):
        DistanceMatrix.load_binary(tmp_path / "missing.bin")
    bad = tmp_path / "bad.bin"
    bad.write_bytes(b"NOTADIST" + b"\0" * 16)
    with raises(ArtifactError):
        DistanceMatrix.load_binary(bad)
    with raises(ArtifactError):
        DistanceMatrix.load_csv(tmp_path / "missing.csv")
