import numpy as np
import pytest

import selftarget._kernels_numba as kernels_numba
import selftarget._kernels_numpy as kernels_numpy
import selftarget.backend as backend_mod

KERNEL_MODULES = {"numpy": kernels_numpy, "numba": kernels_numba}


@pytest.fixture(params=["numpy", "numba"])
def kernel_backend(request, monkeypatch):
    """Run the test once per kernel backend, routed through the ops layer."""
    monkeypatch.setattr(backend_mod, "_kernels", KERNEL_MODULES[request.param])
    monkeypatch.setattr(backend_mod, "_name", request.param)
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
