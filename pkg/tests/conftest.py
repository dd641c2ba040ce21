import numpy as np
import pytest
import torch

from fluctsnn.kernel import KernelParams, kernel_integrals_numeric

DT = 0.002  # simulation time step in seconds


@pytest.fixture(scope="session")
def eps_exc():
    """Discrete-time kernel integrals for the default 20/10 ms neuron."""
    return kernel_integrals_numeric(KernelParams(0.020, 0.010), DT)


@pytest.fixture(scope="session")
def eps_inh():
    """Discrete-time kernel integrals for the fast 10/5 ms inhibitory neuron."""
    return kernel_integrals_numeric(KernelParams(0.010, 0.005), DT)


@pytest.fixture(autouse=True)
def _single_thread():
    torch.set_num_threads(max(1, torch.get_num_threads()))
    yield


@pytest.fixture
def rng():
    return np.random.default_rng(0)
