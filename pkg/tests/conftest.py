import os

import numpy as np
import pytest

from safefilter import two_actuator as ta
from safefilter.synthesis import SynthesisConfig, analyze_reachable_set, synthesize_filter

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
CONFIG = os.path.join(ROOT, "configs", "two_actuator.json")


@pytest.fixture(scope="session")
def plant():
    return ta.plant()


@pytest.fixture(scope="session")
def sets():
    return ta.sets()


@pytest.fixture(scope="session")
def analysis(plant, sets):
    return analyze_reachable_set(plant, sets, ta.ANALYSIS_ALPHA)


@pytest.fixture(scope="session")
def outcome(plant, sets):
    return synthesize_filter(plant, sets, SynthesisConfig(**ta.SCALARS))


@pytest.fixture(scope="session")
def config_path():
    return CONFIG


def random_stable(rng, n, m, p, margin=(0.5, 2.0), with_d=True):
    """Random stable system with its spectrum shifted left of ``-margin``."""
    from safefilter.lti import StateSpaceModel

    M = rng.standard_normal((n, n))
    A = M - (np.max(np.linalg.eigvals(M).real) + rng.uniform(*margin)) * np.eye(n)
    D = rng.standard_normal((p, m)) if with_d else np.zeros((p, m))
    return StateSpaceModel(A, rng.standard_normal((n, m)), rng.standard_normal((p, n)), D)


def random_spd(rng, d, low=0.2, high=5.0):
    U, _ = np.linalg.qr(rng.standard_normal((d, d)))
    return U @ np.diag(rng.uniform(low, high, d)) @ U.T
