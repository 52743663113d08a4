from __future__ import annotations

import math

import numpy as np
import pytest

from kgl.errors import ConfigurationError, DomainError, NegativityError
from kgl.states import (
    GaussianState,
    h_functional,
    maxwellian_eval,
    moments_of,
    reference_state,
    state_from_config,
)


def test_reference_state_is_unit_exponential():
    s = reference_state(3)
    v = np.array([[0.0, 0.0, 0.0], [1.0, 0.5, -0.3]])
    assert np.allclose(maxwellian_eval(s, v), np.exp(-np.sum(v**2, axis=1)), rtol=1e-14)


def test_state_validation():
    with pytest.raises(DomainError):
        GaussianState(-1.0, (0, 0, 0), 1.0)
    with pytest.raises(DomainError):
        GaussianState(1.0, (0, 0, 0), 0.0)


def test_moments_recover_state():
    s = GaussianState(2.0, (0.3, -0.2, 0.1), 0.7)
    got = moments_of(lambda v: maxwellian_eval(s, v))
    assert got.rho == pytest.approx(2.0, rel=1e-10)
    assert np.allclose(got.u, s.u, atol=1e-10)
    assert got.T == pytest.approx(0.7, rel=1e-10)


def test_moments_reject_zero_mass():
    with pytest.raises(DomainError):
        moments_of(lambda v: np.zeros(v.shape[:-1]))


def test_h_functional_of_gaussian():
    s = GaussianState(1.0, (0, 0, 0), 1.0)
    # H(M) = rho log(rho (2 pi T)^{-3/2}) - 3 rho / 2
    want = math.log((2 * math.pi) ** -1.5) - 1.5
    assert h_functional(lambda v: maxwellian_eval(s, v)) == pytest.approx(want, rel=1e-9)


def test_h_functional_negativity():
    base = reference_state()
    tiny = lambda v: maxwellian_eval(base, v) - 1e-13
    h_functional(tiny)
    with pytest.raises(NegativityError):
        h_functional(lambda v: maxwellian_eval(base, v) - 1e-3)


def test_state_from_config():
    assert state_from_config("reference") == reference_state()
    s = state_from_config({"rho": 1.0, "u": [0, 0, 0], "T": 1.0})
    assert s.T == 1.0
    with pytest.raises(ConfigurationError):
        state_from_config({"rho": 1.0})
