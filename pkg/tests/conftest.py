import math

import numpy as np
import pytest

from moving_source.geometry import DomainSpec, PhysicsConfig, Trajectory, axis_sensors

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@pytest.fixture
def ref_dom():
    return DomainSpec(d_center=(0, 0, 0), d_radius=1.0, omega_center=(0, 0, 0), omega_radius=3.0)


@pytest.fixture
def ref_cfg():
    return PhysicsConfig(c=1.0, lam=4 * math.pi, T=5.0, c0_bound=0.5)


@pytest.fixture
def helix_cfg():
    return PhysicsConfig(c=1.0, lam=1.0, T=5.0, c0_bound=0.6)


@pytest.fixture
def ref_sensors(ref_dom):
    return axis_sensors(ref_dom)


@pytest.fixture
def helix():
    return Trajectory.helical(center=(0.0, 0.0, -0.5), radius=0.5, omega=1.0, vz=0.2)


@pytest.fixture
def quadratic():
    return Trajectory.polynomial(np.array([[-0.5, 0.1, 0.2], [0.15, 0.05, -0.08], [0.01, -0.02, 0.0]]))
