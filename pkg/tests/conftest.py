"""Shared pytest config."""

import sys

import numpy as np
from pytest import fixture

from sensorimotor.config import ExperimentConfig
from sensorimotor.kernel_sampler import ContinuationParams, sample_manifold
from sensorimotor.kinematics import inverse_kinematics
from sensorimotor.progress import StageMeter

# coarser than the defaults so a loop traces in a few thousand steps
FAST = ContinuationParams(mu=4e-3, epsilon=2e-2, correct=True, count=40)


@fixture(autouse=True)
def pretest_posttest():
    """Fixture for all tests ensuring environment cleanup"""
    sys.setswitchinterval(1)

    n = len(StageMeter._instances)
    if n:
        StageMeter._instances.clear()
        raise OSError(f"{n} `StageMeter` instances still in existence PRE-test")
    yield
    n = len(StageMeter._instances)
    if n:
        StageMeter._instances.clear()
        raise OSError(f"{n} `StageMeter` instances still in existence POST-test")


@fixture(scope="session")
def fast_params():
    return FAST


@fixture(scope="session")
def grid_manifolds():
    """Kernel manifolds of a 4x3 position grid at one orientation."""
    seeds = [
        inverse_kinematics(x, y, 0.5)
        for y in np.linspace(-0.6, 0.6, 3)
        for x in np.linspace(1.4, 2.2, 4)
    ]
    return [sample_manifold(m, FAST) for m in seeds]


def small_config_for(out):
    """Desk-scale run writing to `out`."""
    return ExperimentConfig.from_mapping(
        {
            "manifolds": 12,
            "master_seed": 3,
            "continuation": {"mu": 4e-3, "epsilon": 2e-2, "correct": True, "count": 40},
            "environments": {"count": 2, "sources": 6},
            "embedding": {"epochs": 10},
            "probes": {"sweep_steps": 8, "sheet_orientations": 1, "nx": 3, "ny": 3},
            "toy": {"positions": 5, "per_set": 4, "agent1_samples": 9},
            "analysis": {"neighbors": 3},
            "out": str(out),
        }
    )


@fixture
def small_config(tmp_path):
    return small_config_for(tmp_path / "run")


@fixture(scope="session")
def small_config_factory():
    return small_config_for
