import numpy as np
import pytest

from hingedplate import MaterialParams, Mesh, SeriesState
from hingedplate.solver import PlateOperator


@pytest.fixture(scope="session")
def params():
    """Wide test profile: sigma = 0.2, half-width l = 0.1."""
    return MaterialParams(sigma=0.2, half_width=0.1)


@pytest.fixture(scope="session")
def slim_params():
    """Bridge-deck aspect profile: sigma = 0.2, l = pi/150."""
    return MaterialParams(sigma=0.2, half_width=np.pi / 150)


@pytest.fixture(scope="session")
def state(params):
    return SeriesState(params, m_max=200)


@pytest.fixture(scope="session")
def mesh_small(params):
    return Mesh(16, 4, params.half_width)


@pytest.fixture(scope="session")
def mesh_mid(params):
    return Mesh(32, 8, params.half_width)


@pytest.fixture(scope="session")
def operator_small(mesh_small, params):
    return PlateOperator.build(mesh_small, params)


@pytest.fixture(scope="session")
def operator_mid(mesh_mid, params):
    return PlateOperator.build(mesh_mid, params)
