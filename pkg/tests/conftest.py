import os
import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

from treeberg import BranchingSpec, build_measure, build_tree  # noqa: E402
from treeberg.bergman import BergmanProjector  # noqa: E402
from treeberg.filtration import DyadicSystem  # noqa: E402

settings.register_profile("default", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def make(spec, depth, alpha=2.0, normalize=True):
    if isinstance(spec, int):
        spec = BranchingSpec.constant(spec)
    t = build_tree(spec, depth)
    mu = build_measure(t, alpha, normalize)
    return t, mu


def q_levels(tree):
    return tuple(int(tree.q[j]) for j in range(tree.depth))


@pytest.fixture
def small():
    """constant(2), alpha 2, depth 3, normalized."""
    t, mu = make(2, 3)
    return t, mu, DyadicSystem(t, mu), BergmanProjector(t, mu)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
