from __future__ import annotations

import warnings

import pytest

from kgl.galerkin import BasisSpec, assemble_operator
from kgl.kernels import hard_spheres, maxwell_molecules


@pytest.fixture(scope="session")
def maxwell_op66():
    return assemble_operator(maxwell_molecules(), BasisSpec(6, 6))


@pytest.fixture(scope="session")
def hs_op66():
    return assemble_operator(hard_spheres(), BasisSpec(6, 6))


@pytest.fixture(scope="session")
def hs_op33():
    return assemble_operator(hard_spheres(), BasisSpec(3, 3))


@pytest.fixture(autouse=True)
def _quiet_integration_warnings():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", category=DeprecationWarning)
        yield
