import numpy as np
import pytest

from hamflow.presets import get_preset


@pytest.fixture(scope="session")
def ex1():
    return get_preset("ex1").field


@pytest.fixture(scope="session")
def ex2():
    return get_preset("ex2").field


@pytest.fixture(scope="session")
def ex3():
    return get_preset("ex3").field


@pytest.fixture(scope="session")
def ex4():
    return get_preset("ex4").field


@pytest.fixture(scope="session")
def abnormal():
    return get_preset("abnormal").field


@pytest.fixture(scope="session")
def torus_demo():
    return get_preset("torus-demo").field


def random_spn_field(rng: np.random.Generator, n: int = 2,
                     h2_pos: bool = True, h3_pos: bool = True,
                     shift: float = 0.3):
    """A random constant field with optionally definite H2/H3 blocks."""
    from hamflow.hamiltonian import constant_field

    A = rng.standard_normal((n, n))

    def sym(definite):
        S = rng.standard_normal((n, n))
        if definite:
            return S @ S.T + shift * np.eye(n)
        return 0.5 * (S + S.T)

    return constant_field(A, sym(h2_pos), sym(h3_pos))
