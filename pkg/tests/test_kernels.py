from __future__ import annotations

import math

import numpy as np
import pytest

from kgl.errors import ConfigurationError, DomainError, UnsupportedError
from kgl.kernels import (
    AngularPart,
    CollisionKernel,
    KineticPart,
    angular_constant_cb,
    angular_norm,
    collision_frequency,
    eval_kernel,
    hard_spheres,
    kernel_descriptor,
    kernel_from_config,
    maxwell_molecules,
    noncutoff_kernel,
    nu_zero,
    power_law_kernel,
)
from kgl.quadrature import build_sphere_rule


def test_eval_kernel_products():
    k = hard_spheres(2.0)
    assert eval_kernel(k, 3.0, 0.2) == pytest.approx(6.0)
    m = maxwell_molecules(angular=AngularPart.one_plus_cos())
    assert np.allclose(eval_kernel(m, [1.0, 5.0], [-1.0, 0.5]), [0.0, 1.5])


def test_eval_kernel_domain():
    with pytest.raises(DomainError):
        eval_kernel(hard_spheres(), -1.0, 0.0)
    with pytest.raises(DomainError):
        eval_kernel(hard_spheres(), 1.0, 1.5)
    with pytest.raises(DomainError):
        eval_kernel(noncutoff_kernel(1.0, 0.5), 1.0, 1.0)


def test_singular_angular_part_near_zero():
    a = AngularPart.singular(0.5, c_b=2.0)
    th = np.array([1e-3, 1e-2])
    assert np.allclose(a.of_theta(th), 2.0 * th ** (-2.5))
    assert not a.is_cutoff


def test_gamma_range_checked():
    with pytest.raises(DomainError):
        power_law_kernel(1.5)
    with pytest.raises(DomainError):
        power_law_kernel(-3.0)
    assert power_law_kernel(-2.5).gamma == -2.5


def test_kinetic_validation():
    with pytest.raises(DomainError):
        KineticPart.hard_spheres(0.0)
    with pytest.raises(ConfigurationError):
        KineticPart("hard_spheres", 0.5, 1.0)


def test_truncated_kinetic_part():
    kp = KineticPart.hard_spheres().truncated(1.0)
    assert np.allclose(kp(np.array([0.5, 1.0, 2.0])), [0.0, 1.0, 2.0])


def test_hypphi_sampled():
    CollisionKernel(KineticPart.hard_spheres(), AngularPart.one(), hypPhi_params=(0.5, 0.5))
    with pytest.raises(DomainError):
        CollisionKernel(KineticPart.hard_spheres(), AngularPart.one(), hypPhi_params=(0.5, 0.6))
    with pytest.raises(DomainError):
        CollisionKernel(KineticPart.power_law(-1.0), AngularPart.one(), hypPhi_params=(1.0, 0.1))


def test_angular_norm():
    assert angular_norm(AngularPart.one()) == pytest.approx(4 * math.pi, rel=1e-13)
    assert angular_norm(AngularPart.one_plus_cos()) == pytest.approx(4 * math.pi, rel=1e-13)
    with pytest.raises(UnsupportedError):
        angular_norm(AngularPart.singular(0.5))


def test_cb_constant_angular():
    est = angular_constant_cb(AngularPart.one(), build_sphere_rule(3, 17))
    assert est.value == pytest.approx(4 * math.pi, rel=1e-6)


def test_cb_one_plus_cos_minimised_antipodal():
    est = angular_constant_cb(AngularPart.one_plus_cos(), build_sphere_rule(3, 17))
    assert est.value == pytest.approx(2 * math.pi, rel=1e-6)
    assert est.cos_angle == pytest.approx(-1.0, abs=1e-6)


def test_cb_two_dimensions():
    est = angular_constant_cb(AngularPart.one(), build_sphere_rule(2, 16))
    assert est.value == pytest.approx(2 * math.pi, rel=1e-6)


def test_cb_errors():
    zero = AngularPart.from_callable(lambda c: np.zeros_like(c))
    with pytest.raises(DomainError):
        angular_constant_cb(zero, build_sphere_rule(3, 11))
    with pytest.raises(UnsupportedError):
        angular_constant_cb(AngularPart.singular(0.5), build_sphere_rule(3, 11))
    with pytest.raises(ConfigurationError):
        angular_constant_cb(AngularPart.one(), build_sphere_rule(3, 11), search_grid=4)


def test_nu_zero_values():
    assert nu_zero(hard_spheres()) == pytest.approx(8 * math.pi**2, rel=1e-10)
    assert nu_zero(hard_spheres(2.0)) == pytest.approx(16 * math.pi**2, rel=1e-10)
    assert nu_zero(maxwell_molecules()) == pytest.approx(4 * math.pi**2.5, rel=1e-12)
    assert nu_zero(maxwell_molecules(N=2)) == pytest.approx(2 * math.pi**2, rel=1e-10)


def test_nu_zero_unsupported():
    with pytest.raises(UnsupportedError):
        nu_zero(power_law_kernel(-1.0))
    with pytest.raises(UnsupportedError):
        nu_zero(noncutoff_kernel(1.0, 0.5))


def test_collision_frequency_increases_for_hard_spheres():
    r = np.linspace(0.0, 5.0, 200)
    nu = collision_frequency(hard_spheres(), r[:, None] * np.array([0.0, 0.0, 1.0]))
    assert np.all(np.diff(nu) > 0)
    # large speed: nu ~ 4 pi * pi^{3/2} |v|
    assert nu[-1] / (4 * math.pi * math.pi**1.5 * 5.0) == pytest.approx(1.0, rel=0.02)


def test_collision_frequency_maxwell_flat():
    v = np.random.default_rng(0).normal(size=(10, 3))
    assert np.allclose(collision_frequency(maxwell_molecules(), v), 4 * math.pi**2.5, rtol=1e-12)


def test_config_roundtrip():
    k = kernel_from_config({"kinetic": {"family": "power_law", "gamma": 0.5, "C_phi": 2.0},
                            "angular": {"family": "cutoff", "expr": "one"}})
    d = kernel_descriptor(k)
    assert d["kinetic"] == {"family": "power_law", "gamma": 0.5, "C_phi": 2.0, "r_min": 0.0}
    s = kernel_from_config({"kinetic": {"family": "power_law", "gamma": 1.0},
                            "angular": {"family": "singular", "alpha": 0.5, "c_b": 1.0}})
    assert kernel_descriptor(s)["angular"]["alpha"] == 0.5
    with pytest.raises(ConfigurationError):
        kernel_from_config({"kinetic": {"family": "bogus"}})
