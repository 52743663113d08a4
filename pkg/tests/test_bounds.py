from __future__ import annotations

import math

import pytest

from kgl.bounds import (
    bound_report,
    chain_bound,
    explicit_gap_constant,
    lambda_zero,
    optimized_bound_limit_zero,
    optimized_gap_bound,
    scaling_law,
)
from kgl.errors import DomainError
from kgl.states import GaussianState, reference_state


def test_lambda_zero():
    assert lambda_zero() == pytest.approx((math.pi / 2) ** 1.5 * 4 * math.pi / 3, rel=1e-15)
    with pytest.raises(DomainError):
        lambda_zero(2)


def test_explicit_constant():
    assert explicit_gap_constant(1.0, 4 * math.pi, 0.0) == pytest.approx(1 / 32, rel=1e-15)
    assert explicit_gap_constant(2.0, 4 * math.pi, 1.0) == pytest.approx(2 * math.exp(-4) / 32)
    with pytest.raises(DomainError):
        explicit_gap_constant(0.0, 1.0, 1.0)
    with pytest.raises(DomainError):
        explicit_gap_constant(1.0, 1.0, -1.0)


def test_chain_vanishes_at_ends():
    assert chain_bound(0.0, 1.0) == 0.0
    assert chain_bound(10.0, 1.0) < 1e-100
    assert chain_bound(0.0, 0.0) == pytest.approx(math.pi / 24)


def test_hard_sphere_optimum():
    R, val = optimized_gap_bound(1.0)
    assert R == pytest.approx(1 / math.sqrt(8), rel=1e-8)
    assert 0.0396 <= val <= 0.0398
    assert val == pytest.approx(chain_bound(1 / math.sqrt(8), 1.0), rel=1e-12)


def test_optimum_tends_to_maxwell_limit():
    assert optimized_gap_bound(1e-6)[1] == pytest.approx(optimized_bound_limit_zero(), rel=1e-4)


def test_scaling_law():
    s = GaussianState(2.0, (0, 0, 0), 4.0)
    assert scaling_law(1.5, 1.0, 3, s) == pytest.approx(2.0 * 4.0**2 * 1.5)
    assert scaling_law(1.0, 1.0, 3, reference_state()) == pytest.approx(math.pi**1.5 / 4)


def test_report_consistency():
    rep = bound_report(1.0)
    assert rep.optimized_bound == rep.paper_chain_bound
    assert rep.C_Phi_b == pytest.approx(0.006701280351255521, rel=1e-12)
    # the literal product lives at the reference state; transporting the chain value there agrees
    assert rep.literal_product_bound == pytest.approx(
        scaling_law(rep.paper_chain_bound, 1.0, 3, reference_state()), rel=1e-12)
    assert rep.nu0 == pytest.approx(8 * math.pi**2, rel=1e-10)
    assert rep.state_scaled["reference"] == pytest.approx(0.0552619508275176, rel=1e-12)
