import numpy as np
import pytest
from hypothesis import settings

from cavcool import model

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile("default")

TWO_PI = model.TWO_PI
KAPPA = TWO_PI * 1.01e6
OMEGA_T = TWO_PI * 480e3


@pytest.fixture
def fig4_physics():
    """Spectral-measurement parameters: N = 450, Delta = 2 pi 70 MHz, R = 1.2e9 /s, delta = -kappa/2."""
    return model.reference_physics()


@pytest.fixture
def fig2_physics():
    return model.reference_physics(atom_number=2800, atom_detuning=TWO_PI * 140e6, scattering_rate=1.1e5,
                               mixing_rate=1.6e5)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def fig2_result():
    from cavcool import scenarios

    return scenarios.run_fig2()


@pytest.fixture(scope="session")
def fig3_result():
    from cavcool import scenarios

    return scenarios.run_fig3()


@pytest.fixture(scope="session")
def fig4_result():
    from cavcool import scenarios

    return scenarios.run_fig4()
