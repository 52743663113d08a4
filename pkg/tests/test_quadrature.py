from __future__ import annotations

import math

import numpy as np
import pytest
from scipy import special

from kgl.errors import ConfigurationError, DomainError
from kgl.quadrature import (
    build_gauss_hermite,
    build_graded_angular,
    build_radial_rule,
    build_sphere_rule,
    gauss_legendre_interval,
    sphere_area,
    split_sphere_rule,
)


def test_sphere_areas():
    assert sphere_area(2) == pytest.approx(2 * math.pi, rel=1e-15)
    assert sphere_area(3) == pytest.approx(4 * math.pi, rel=1e-15)


@pytest.mark.parametrize("N", [1, 2, 3])
def test_gauss_hermite_total_mass(N):
    rule = build_gauss_hermite(N, 8)
    assert rule.weights.sum() == pytest.approx(math.pi ** (N / 2), rel=1e-13)
    assert rule.nodes.shape == (8**N, N)


def test_gauss_hermite_exact_moments():
    rule = build_gauss_hermite(3, 6)
    v = rule.nodes
    # exact up to degree 2q - 1 = 11 per axis
    got = rule.integrate(v[:, 0] ** 4 * v[:, 1] ** 2 * v[:, 2] ** 6)
    want = special.gamma(2.5) * special.gamma(1.5) * special.gamma(3.5)
    assert got == pytest.approx(want, rel=1e-13)
    assert abs(rule.integrate(v[:, 0] ** 3 * v[:, 2])) < 1e-14


def test_gauss_hermite_scaled_rule():
    rule = build_gauss_hermite(3, 8).scaled(2.0)
    s2 = np.sum(rule.nodes**2, axis=1)
    # int exp(-2|x|^2) |x|^2 dx = (pi/2)^{3/2} * 3/4
    assert rule.integrate(s2) == pytest.approx((math.pi / 2) ** 1.5 * 0.75, rel=1e-13)


@pytest.mark.parametrize("q", [1, 65])
def test_gauss_hermite_order_checked(q):
    with pytest.raises(DomainError):
        build_gauss_hermite(3, q)


def test_gauss_legendre_interval():
    x, w = gauss_legendre_interval(5, 1.0, 3.0)
    assert w.sum() == pytest.approx(2.0, rel=1e-15)
    assert float(w @ x**9) == pytest.approx((3.0**10 - 1.0) / 10.0, rel=1e-13)


@pytest.mark.parametrize("degree", [5, 11, 17])
def test_sphere_rule_exactness(degree):
    S = build_sphere_rule(3, degree)
    x, y, z = S.nodes.T
    assert S.weights.sum() == pytest.approx(4 * math.pi, rel=1e-14)
    # int x^2 y^2 z^2 over S^2 = 4 pi / 105
    if degree >= 6:
        assert S.integrate(x**2 * y**2 * z**2) == pytest.approx(4 * math.pi / 105, rel=1e-13)
    assert abs(S.integrate(x**degree)) < 1e-13 or degree % 2 == 0


def test_sphere_rule_two_dimensions():
    S = build_sphere_rule(2, 8)
    assert S.integrate(S.nodes[:, 0] ** 8) == pytest.approx(2 * math.pi * 35 / 128, rel=1e-13)


@pytest.mark.parametrize("degree", [-1, 36])
def test_sphere_degree_checked(degree):
    with pytest.raises(ConfigurationError):
        build_sphere_rule(3, degree)


def test_split_rule_handles_kink():
    S = split_sphere_rule(9)
    z = S.nodes[:, 2]
    assert S.integrate(np.abs(z)) == pytest.approx(2 * math.pi, rel=1e-13)


@pytest.mark.parametrize("alpha", [0.25, 0.5, 1.0, 1.5])
def test_graded_rule_integrates_singular_weight(alpha):
    g = build_graded_angular(alpha, 24, 8)
    # int_0^pi theta^{1-alpha} d theta after the sin(theta) ~ theta cancellation
    got = g.integrate(g.nodes ** (-(1.0 + alpha)) * g.nodes**2)
    assert got == pytest.approx(math.pi ** (2 - alpha) / (2 - alpha), rel=1e-10)


def test_graded_rule_geometric_panels():
    g = build_graded_angular(0.5, 10, 6)
    ratios = g.edges[2:] / g.edges[1:-1]
    assert np.allclose(ratios, 2.0)
    assert g.edges[-1] == pytest.approx(math.pi)
    assert g.nodes.size == 60


def test_graded_rule_arguments():
    with pytest.raises(DomainError):
        build_graded_angular(2.0, 12)
    with pytest.raises(ConfigurationError):
        build_graded_angular(0.5, 3)


@pytest.mark.parametrize("power", [2.0, 3.0, 2.5, 1.0])
def test_radial_rule_moments(power):
    rad = build_radial_rule(power, 10, a=0.5)
    want = 0.5 * 0.5 ** (-(power + 1) / 2) * special.gamma((power + 1) / 2)
    assert rad.weights.sum() == pytest.approx(want, rel=1e-13)
    # exact for r^{power} r^{2k} exp(-a r^2), k < 2 * order
    got = float(rad.weights @ rad.nodes**6)
    want6 = 0.5 * 0.5 ** (-(power + 7) / 2) * special.gamma((power + 7) / 2)
    assert got == pytest.approx(want6, rel=1e-12)


def test_radial_rule_power_checked():
    with pytest.raises(DomainError):
        build_radial_rule(-1.0, 4)
