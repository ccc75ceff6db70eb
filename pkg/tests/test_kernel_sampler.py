import math

import numpy as np
from pytest import approx, mark, raises

from sensorimotor.errors import (
    ArtifactError,
    ConfigError,
    NonClosureError,
    NumericalError,
    SingularityError,
    SplitManifoldError,
)
from sensorimotor.kernel_sampler import (
    ContinuationParams,
    KernelManifold,
    load_manifold_set,
    null_direction,
    pose_drift,
    resample_loop,
    sample_manifold,
    save_manifold_set,
    trace_kernel,
)
from sensorimotor.kinematics import forward_kinematics, inverse_kinematics, jacobian
from sensorimotor.metric import motor_distance

SEED = inverse_kinematics(1.75, 0.3, 0.8)


def test_null_direction_is_kernel():
    rng = np.random.default_rng(0)
    for m in rng.uniform(0, 2 * math.pi, (20, 4)):
        if math.hypot(*forward_kinematics(m)[:2]) < 1.05:
            continue
        v = null_direction(m)
        assert np.linalg.norm(v) == approx(1.0)
        assert np.allclose(jacobian(m) @ v, 0.0, atol=1e-10)
        first = v[np.abs(v) > 1e-6][0]
        assert first > 0


def test_null_direction_singular():
    """Stretched arm: the position rows lose rank."""
    with raises(SingularityError) as exc:
        null_direction([0.0, 0.0, 0.0, 0.0])
    assert exc.value.singular_values is not None


def test_trace_kernel_closes(fast_params):
    raw = trace_kernel(SEED, fast_params)
    assert np.array_equal(raw[0], SEED)
    assert len(raw) - 1 >= fast_params.min_steps
    assert motor_distance(raw[-1], raw[0]) <= fast_params.epsilon + 1e-12
    assert pose_drift(raw) < 1e-8


def test_trace_kernel_steps_have_length_mu():
    params = ContinuationParams(mu=2e-3, epsilon=2e-2)
    raw = np.array(trace_kernel(SEED, params))
    steps = np.linalg.norm(np.diff(raw, axis=0), axis=1)
    assert np.allclose(steps, params.mu)


def test_trace_kernel_never_reverses():
    raw = np.array(trace_kernel(SEED, ContinuationParams(mu=2e-3, epsilon=2e-2)))
    steps = np.diff(raw, axis=0)
    assert np.all(np.einsum("ij,ij->i", steps[1:], steps[:-1]) > 0)


def test_trace_kernel_split():
    m0 = inverse_kinematics(0.8, 0.2, 0.0)
    with raises(SplitManifoldError):
        trace_kernel(m0)


def test_trace_kernel_non_closure():
    params = ContinuationParams(mu=4e-3, epsilon=2e-2, max_steps=60)
    with raises(NonClosureError) as exc:
        trace_kernel(SEED, params)
    assert exc.value.steps == 60
    assert exc.value.gap > params.epsilon


def test_sample_manifold_pose_constant(fast_params):
    manifold = sample_manifold(SEED, fast_params)
    assert len(manifold) == fast_params.count
    assert np.array_equal(manifold.samples[0], SEED)
    # chords between raw points leave the manifold by their sagitta only
    assert pose_drift(manifold) < 1e-3
    assert manifold.pose == forward_kinematics(SEED)


@mark.slow
def test_euler_drift_is_bounded():
    """Plain Euler continuation at the default step closes with bounded pose drift."""
    params = ContinuationParams()
    raw = trace_kernel(SEED, params)
    assert pose_drift(raw) < 1e-2


def test_sample_manifold_deterministic(fast_params):
    assert sample_manifold(SEED, fast_params) == sample_manifold(SEED, fast_params)


def test_resample_loop_circle():
    t = np.linspace(0, 2 * math.pi, 400, endpoint=False)
    # uneven parametrisation of a circle in the first two joints
    s = t + 0.3 * np.sin(t)
    raw = np.column_stack([np.cos(s), np.sin(s), np.zeros_like(s), np.zeros_like(s)])
    manifold = resample_loop(raw, count=50)
    closed = np.vstack([manifold.samples, manifold.samples[:1]])
    gaps = np.linalg.norm(np.diff(closed, axis=0), axis=1)
    assert np.allclose(gaps, gaps.mean(), rtol=1e-3)
    assert manifold.raw_count == 399


def test_resample_loop_wrapped_closing_segment():
    """A loop that winds once around joint 4 is closed through the 2π wrap."""
    t = np.linspace(0, 2 * math.pi, 100, endpoint=False)
    raw = np.column_stack([np.zeros_like(t), np.zeros_like(t), np.zeros_like(t), t])
    manifold = resample_loop(raw, count=10)
    assert np.allclose(np.diff(manifold.samples[:, 3]), 2 * math.pi / 10)


def test_resample_loop_errors():
    with raises(ConfigError):
        resample_loop(np.zeros((2, 4)))
    with raises(NumericalError):
        resample_loop(np.zeros((5, 4)))


@mark.parametrize(
    "kwargs",
    [
        {"mu": 0.0},
        {"mu": 0.1, "epsilon": 0.01},
        {"min_steps": 1},
        {"max_steps": 10},
        {"count": 2},
    ],
)
def test_continuation_params_invalid(kwargs):
    with raises(ConfigError):
        ContinuationParams(**kwargs)


def test_resolved_max_steps():
    assert ContinuationParams().resolved_max_steps(4) == 10 * math.ceil(4 * math.pi / 1e-3)
    assert ContinuationParams(max_steps=500).resolved_max_steps() == 500


def test_kernel_manifold_immutable(fast_params):
    manifold = sample_manifold(SEED, fast_params)
    with raises(ValueError):
        manifold.samples[0, 0] = 1.0
    assert KernelManifold.from_dict(manifold.to_dict()) == manifold


def test_manifold_set_file(tmp_path, grid_manifolds, fast_params):
    path = save_manifold_set(
        tmp_path / "m.bin", grid_manifolds, experiment_seed=7, params=fast_params
    )
    loaded = load_manifold_set(path)
    assert loaded.experiment_seed == 7
    assert loaded.params == fast_params
    assert loaded.manifolds == grid_manifolds
    again = save_manifold_set(
        tmp_path / "n.bin", loaded.manifolds, experiment_seed=7, params=loaded.params
    )
    assert path.read_bytes() == again.read_bytes()


def test_manifold_set_errors(tmp_path, fast_params):
    with raises(ConfigError):
        save_manifold_set(tmp_path / "m.bin", [], experiment_seed=0, params=fast_params)
    with raises(ArtifactError):
        load_manifold_set(tmp_path / "missing.bin")
