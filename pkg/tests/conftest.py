import numpy as np
import pytest

from modaltest.cli import data_path
from modaltest.rig import RigModel, load_model_config, load_noise_spec


def sdof_rig(f_n=10.0, zeta=0.05, m=1.0):
    k = m * (2 * np.pi * f_n) ** 2
    return RigModel(masses=[m], stiffness=[[k]], modal_damping=[zeta], node_map={"1:z": 0})


def chain_rig(masses, springs, zetas, node_map=None):
    """Grounded spring chain: ``springs[0]`` ties DOF 0 to ground, ``springs[i]`` ties i-1 to i."""
    n = len(masses)
    K = np.zeros((n, n))
    for i, k in enumerate(springs):
        K[i, i] += k
        if i > 0:
            K[i - 1, i - 1] += k
            K[i - 1, i] -= k
            K[i, i - 1] -= k
    node_map = node_map or {f"{i + 1}:z": i for i in range(n)}
    return RigModel(masses=masses, stiffness=K, modal_damping=zetas, node_map=node_map)


@pytest.fixture(scope="session")
def demo_config():
    return load_model_config(data_path("rig-12dof.json"))


@pytest.fixture(scope="session")
def pump_noise():
    return load_noise_spec(data_path("noise-pumps.json"))


# one line per acceptance criterion, filled by test_acceptance.py
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(ACCEPTANCE):
            terminalreporter.write_line(line)
