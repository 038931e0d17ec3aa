import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from attractorlab.nonlinearity import NonlinearTerm
from attractorlab.spectral import make_basis

# f == 0 (pure heat equation); admissible constants only on desk-scale
# ranges, which is all the linear-exactness tests need.
ZERO_TERM = NonlinearTerm(
    name="zero",
    f=lambda u: np.zeros_like(np.asarray(u, dtype=float)),
    F=lambda u: np.zeros_like(np.asarray(u, dtype=float)),
    fprime=lambda u: np.zeros_like(np.asarray(u, dtype=float)),
    C1=1.0, C2=1.0, alpha=1e-9, D1=1.0, D2=1.0, delta=1e-9,
)


@pytest.fixture(scope="session")
def basis8():
    return make_basis(8)


@pytest.fixture(scope="session")
def basis16():
    return make_basis(16)


@pytest.fixture(scope="session")
def basis32():
    return make_basis(32)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
