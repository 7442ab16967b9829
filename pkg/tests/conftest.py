import numpy as np
import pytest

from cdmbd.requirements import Requirement, RequirementProfile

ESPRESSO = RequirementProfile("espresso", (
    Requirement("R1", 1, 47.5, 7.5, 1.5),
    Requirement("R2", 0, 88.0, 4.0, 1.0),
    Requirement("R3", 6, 3.0, 1.0, 0.8),
    Requirement("R4", 4, 35.0, 7.0, 0.5),
))
TRAVEL_MUG = RequirementProfile("travel_mug", (
    Requirement("R1", 1, 30.0, 8.0, 1.5),
    Requirement("R2", 0, 80.0, 4.0, 1.0),
    Requirement("R3", 6, 8.0, 2.0, 0.8),
    Requirement("R4", 4, 50.0, 8.0, 0.5),
))


@pytest.fixture
def espresso():
    return ESPRESSO


@pytest.fixture
def travel_mug():
    return TRAVEL_MUG


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def blobs(n_per=(5, 6, 7), T=20, sep=10.0, noise=0.1, seed=0):
    """Three well separated node groups in 7 channels (T x N x 7)."""
    r = np.random.default_rng(seed)
    centers = np.array([[0.0] * 7, [sep] * 7, [-sep] * 7])
    labels = np.concatenate([np.full(k, i) for i, k in enumerate(n_per)])
    Y = centers[labels][None] + noise * r.normal(size=(T, labels.size, 7))
    return Y, labels


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", {}) if mod else {}
    if lines:
        terminalreporter.section("acceptance criteria")
        for n in sorted(lines):
            terminalreporter.write_line(lines[n])
