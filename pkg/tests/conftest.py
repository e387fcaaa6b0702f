import numpy as np
import pytest

from vcool.fock import FockBasis, Operator
from vcool.thermal import DensityMatrix


@pytest.fixture
def rng():
    return np.random.default_rng(20240617)


def random_density(basis: FockBasis, rng, rank=None) -> DensityMatrix:
    d = basis.dim
    r = d if rank is None else rank
    g = rng.normal(size=(d, r)) + 1j * rng.normal(size=(d, r))
    m = g @ g.conj().T
    return DensityMatrix(basis, m / np.trace(m).real)


def random_hermitian_op(basis: FockBasis, rng, real=False) -> Operator:
    d = basis.dim
    g = rng.normal(size=(d, d))
    if not real:
        g = g + 1j * rng.normal(size=(d, d))
    return Operator(basis, basis, (g + g.conj().T) / 2, hermitian=True)
