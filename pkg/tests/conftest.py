import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from adiabaticity import hamiltonian as hm
from adiabaticity import spectral as sp

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

OMEGA0, THETA = 10.0, 0.01


@pytest.fixture(scope="session")
def schwinger_slow():
    """Adiabatic Schwinger run over two drive periods, upper level tracked."""
    model = hm.schwinger(OMEGA0, THETA, 1.0, (0.0, 4 * np.pi))
    grid = np.linspace(0.0, 4 * np.pi, 2001)
    curve = sp.eigencurves(model, grid, sp.pancharatnam(1))
    return model, curve


@pytest.fixture(scope="session")
def schwinger_resonant():
    model = hm.schwinger(OMEGA0, THETA, OMEGA0, (0.0, 20 * np.pi))
    grid = np.linspace(0.0, 20 * np.pi, 2001)
    curve = sp.eigencurves(model, grid, sp.pancharatnam(1))
    return model, curve


@pytest.fixture(scope="session")
def cycling_curve():
    model = hm.cycling_lz(100.0, 1.0, 17.0)
    grid = np.linspace(0.0, 2 * np.pi, 2001)
    return model, sp.eigencurves(model, grid)
