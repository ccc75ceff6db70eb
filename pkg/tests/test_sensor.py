import math

import numpy as np
from pytest import approx, mark, raises

from sensorimotor.errors import ArtifactError, ConfigError, DegenerateGeometryError
from sensorimotor.kinematics import RetinaPose
from sensorimotor.sensor import (
    DEFAULT_REGION,
    Environment,
    RetinaGeometry,
    ToyGeometry,
    load_environment,
    project_source,
    random_environment,
    random_toy_environment,
    retina_response,
    save_environment,
    toy_external,
    toy_response,
)


def test_environment_is_immutable():
    env = Environment([[1.0, 2.0]])
    with raises(ValueError):
        env.sources[0, 0] = 5.0
    assert len(env) == 1


@mark.parametrize("sources", [[], [[1.0, 2.0, 3.0]], [[math.nan, 0.0]]])
def test_environment_invalid(sources):
    with raises(ConfigError):
        Environment(sources)


def test_random_environment_reproducible():
    a = random_environment(10, seed=5)
    assert a == random_environment(10, seed=5)
    assert a != random_environment(10, seed=6)
    xmin, xmax, ymin, ymax = DEFAULT_REGION
    assert np.all((a.sources[:, 0] >= xmin) & (a.sources[:, 0] <= xmax))
    assert np.all((a.sources[:, 1] >= ymin) & (a.sources[:, 1] <= ymax))


def test_random_environment_invalid():
    with raises(ConfigError):
        random_environment(0)
    with raises(ConfigError):
        random_environment(3, region=(1.0, 0.0, 0.0, 1.0))


def test_environment_json_exact(tmp_path):
    env = random_environment(7, seed=11)
    assert Environment.from_json(env.to_json()) == env
    path = save_environment(tmp_path / "env.json", env)
    assert load_environment(path) == env
    assert hash(load_environment(path)) == hash(env)


def test_environment_load_errors(tmp_path):
    with raises(ArtifactError):
        load_environment(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with raises(ConfigError):
        load_environment(bad)


def test_project_source_on_axis():
    geom = RetinaGeometry()
    assert project_source(RetinaPose(0.0, 0.0, 0.0), geom, (5.0, 0.0)) == 0.0
    p = project_source(RetinaPose(0.0, 0.0, 0.0), geom, (1.0, 1.0))
    assert p == approx(geom.focal_distance * math.tan(math.pi / 4))


def test_project_source_rotated_pose():
    geom = RetinaGeometry()
    # a pose facing +y sees a source straight ahead at retinal coordinate 0
    assert project_source(RetinaPose(1.0, 1.0, math.pi / 2), geom, (1.0, 4.0)) == approx(0.0)


def test_project_source_outside_field_of_view():
    geom = RetinaGeometry()
    assert project_source(RetinaPose(0.0, 0.0, 0.0), geom, (-1.0, 0.0)) is None
    assert project_source(RetinaPose(0.0, 0.0, 0.0), geom, (0.0, 1.0)) is None


def test_project_source_coincident():
    with raises(DegenerateGeometryError):
        project_source(RetinaPose(1.0, 1.0, 0.0), RetinaGeometry(), (1.0, 1.0))


def test_retina_response_single_source():
    geom = RetinaGeometry()
    env = Environment([[3.0, 0.0]])
    r = retina_response(RetinaPose(1.0, 0.0, 0.0), geom, env)
    assert r.shape == (6,)
    assert np.allclose(r, np.exp(-(geom.cells**2)) / 2.0)
    # symmetric cells around an on-axis projection
    assert np.allclose(r, r[::-1])


def test_retina_response_invisible_sources():
    env = Environment([[-3.0, 0.0], [1.0, -3.0]])
    assert not retina_response(RetinaPose(1.0, 0.0, 0.0), RetinaGeometry(), env).any()


def test_retina_response_depends_only_on_pose():
    env = random_environment(10, seed=2)
    geom = RetinaGeometry()
    pose = RetinaPose(1.5, 0.4, 0.3)
    shifted = RetinaPose(1.5, 0.4, 0.3 + 2 * math.pi)
    assert np.allclose(retina_response(pose, geom, env), retina_response(shifted, geom, env))


@mark.parametrize(
    "kwargs",
    [
        {"focal_distance": 0.0},
        {"fov_halfangle": 2.0},
        {"cell_positions": (0.1, -0.1)},
        {"cell_positions": (-0.5, 0.0, 0.2)},
    ],
)
def test_retina_geometry_invalid(kwargs):
    with raises(ConfigError):
        RetinaGeometry(**kwargs)


def test_toy_external():
    assert toy_external("one_motor", [1.5]) == 1.5
    assert toy_external("two_motor", [1.0, 0.5]) == 1.5
    with raises(ConfigError):
        toy_external("two_motor", [1.0])
    with raises(ConfigError):
        toy_external("three_motor", [1.0])  # type: ignore[arg-type]


def test_toy_response_factors_through_position():
    env = random_toy_environment(seed=4)
    one = toy_response("one_motor", [1.25], env)
    assert np.allclose(toy_response("two_motor", [0.25, 1.0], env), one)
    assert np.allclose(toy_response("two_motor", [2.0, -0.75], env), one)


def test_toy_response_inverse_square():
    geom = ToyGeometry()
    env = Environment([[0.0, 1.25]])
    r = toy_response("one_motor", [0.25], env, geom)
    # sensors at (0, 0.25) and (0.5, 0.25)
    assert r[0] == approx(1.0)
    assert r[1] == approx(1.0 / 1.25)


def test_toy_response_coincident():
    env = Environment([[0.25, 0.25]])
    with raises(DegenerateGeometryError):
        toy_response("one_motor", [0.0], env)


def test_toy_environment_band():
    env = random_toy_environment(seed=9, l_count=20)
    xmin, xmax, ymin, ymax = ToyGeometry().source_band
    assert len(env) == 20
    assert np.all((env.sources[:, 1] >= ymin) & (env.sources[:, 1] <= ymax))
    assert np.all((env.sources[:, 0] >= xmin) & (env.sources[:, 0] <= xmax))
