import numpy as np
import pytest

from dabsp.gmm import GaussianComponent, GmmBelief
from dabsp.world import Box, EventRegion, MotionModel, ObservationModel, Scene, World

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


def make_world(scenes, obs_cov=0.01, motion_cov=0.01, alias_groups=()):
    """Scenes given as (id, anchor, shift, [(lo, hi, density), ...])."""
    built = tuple(
        Scene(sid, anchor, shift, EventRegion([Box(lo, hi, dens) for lo, hi, dens in boxes]))
        for sid, anchor, shift, boxes in scenes
    )
    d = len(scenes[0][1])
    return World(built, MotionModel(motion_cov * np.eye(d)), ObservationModel(obs_cov * np.eye(d)), alias_groups)


def gaussian(mean, cov):
    return GmmBelief.gaussian(mean, cov)


def mixture(weights, means, covs):
    return GmmBelief.from_unnormalized(weights, tuple(GaussianComponent(m, c) for m, c in zip(means, covs)))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
