import numpy as np
import pytest

from folilab import circle_model, clifford_torus, torus_revolution


@pytest.fixture(scope="session")
def circle():
    return circle_model()


@pytest.fixture(scope="session")
def clifford1():
    return clifford_torus(1.0)


@pytest.fixture(scope="session")
def clifford_r2():
    return clifford_torus(np.sqrt(2.0))


@pytest.fixture(scope="session")
def torus():
    return torus_revolution(2.0, 1.0)


@pytest.fixture(scope="session")
def all_models(circle, clifford1, clifford_r2, torus):
    return [circle, clifford1, clifford_r2, torus]


def random_points(model, n, seed=0, lo=-10.0, hi=10.0):
    rng = np.random.default_rng(seed)
    return rng.uniform(lo, hi, (n, model.dim))
