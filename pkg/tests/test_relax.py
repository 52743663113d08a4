from __future__ import annotations

import math

import numpy as np
import pytest

from kgl.errors import ConfigurationError, DomainError, NegativityError, StabilityError, UnsupportedError
from kgl.kernels import AngularPart, CollisionKernel, KineticPart, hard_spheres, maxwell_molecules
from kgl.kernels import noncutoff_kernel, power_law_kernel
from kgl.relax import (
    DistributionGrid,
    DVMOperator,
    RelaxationTrace,
    conserve_project,
    discrete_maxwellian,
    fit_decay_rate,
    q_dvm,
    rk4_step,
    run_relaxation,
    two_bump_datum,
)

N, L, DEG = 8, 4.2, 7


@pytest.fixture(scope="module")
def hs_dvm():
    return DVMOperator(hard_spheres(), L, N, DEG)


@pytest.fixture(scope="module")
def bumps():
    return DistributionGrid.from_function(two_bump_datum(), N, L)


def test_grid_geometry(bumps):
    assert bumps.h == pytest.approx(2 * L / N)
    assert bumps.velocities.shape == (N**3, 3)
    assert np.all(np.linalg.norm(bumps.velocities[bumps.active], axis=1) <= L)
    assert bumps.values.ravel()[~bumps.active].sum() == 0.0


def test_grid_validation():
    with pytest.raises(NegativityError):
        DistributionGrid(L, 4, -np.ones((4, 4, 4)))
    with pytest.raises(DomainError):
        DistributionGrid(L, 4, np.zeros((4, 4, 4)))


def test_two_bump_datum_moments():
    x, w = np.polynomial.legendre.leggauss(160)
    x, w = 5.0 * x, 5.0 * w
    X = np.stack(np.meshgrid(x, x, x, indexing="ij"), axis=-1).reshape(-1, 3)
    W = np.einsum("i,j,k->ijk", w, w, w).ravel()
    f = W * two_bump_datum()(X)
    rho = f.sum()
    assert rho == pytest.approx(math.pi**1.5, rel=1e-10)
    assert np.allclose(f @ X, 0.0, atol=1e-10)
    assert f @ np.sum(X**2, axis=1) / (3 * rho) == pytest.approx(0.5, rel=1e-10)
    # anisotropic: unequal directional temperatures
    Txyz = (f @ X**2) / rho
    assert np.ptp(Txyz) > 0.01


def test_discrete_maxwellian_matches_moments(bumps):
    M = discrete_maxwellian(bumps)
    assert np.allclose(bumps.with_values(M).moments(), bumps.moments(), rtol=1e-12, atol=1e-12)


def test_unsupported_kernels():
    with pytest.raises(UnsupportedError):
        DVMOperator(noncutoff_kernel(1.0, 0.5), L, N, DEG)
    with pytest.raises(UnsupportedError):
        DVMOperator(power_law_kernel(-1.0), L, N, DEG)


def test_equilibrium_is_stationary(hs_dvm, bumps):
    M = discrete_maxwellian(bumps)
    r = q_dvm(bumps.with_values(M), hs_dvm, M)
    assert np.max(np.abs(r.q)) <= 1e-12 * r.loss_rate.max()


def test_keyed_and_general_paths_agree(hs_dvm, bumps):
    flat = CollisionKernel(KineticPart.hard_spheres(), AngularPart.from_callable(np.ones_like))
    gen = DVMOperator(flat, L, N, DEG)
    assert not gen.keyed and hs_dvm.keyed
    M = discrete_maxwellian(bumps)
    a, b = q_dvm(bumps, hs_dvm, M), q_dvm(bumps, gen, M)
    assert np.max(np.abs(a.q - b.q)) <= 1e-12 * np.max(np.abs(a.q))
    assert a.dropped_rate == pytest.approx(b.dropped_rate, rel=1e-10)


def test_projection_zeroes_moments(hs_dvm, bumps):
    q = q_dvm(bumps, hs_dvm).q
    Phi = bumps.invariant_matrix()
    for weight in ("uniform", "maxwellian"):
        p = conserve_project(q, bumps, weight).ravel()[bumps.active]
        assert np.max(np.abs(Phi.T @ p)) <= 1e-12 * np.max(np.abs(q))
    with pytest.raises(ConfigurationError):
        conserve_project(q, bumps, "bogus")


def test_entropy_production_nonpositive(hs_dvm, bumps):
    q = conserve_project(q_dvm(bumps, hs_dvm).q, bumps, "maxwellian")
    act = bumps.active
    f = bumps.values.ravel()[act]
    assert float(q.ravel()[act] @ np.log(f)) < 0.0


def test_angular_dependent_operator_conserves(bumps):
    op = DVMOperator(maxwell_molecules(angular=AngularPart.one_plus_cos()), L, N, DEG)
    M = discrete_maxwellian(bumps)
    q = conserve_project(q_dvm(bumps, op, M).q, bumps, "maxwellian", M)
    assert np.max(np.abs(bumps.invariant_matrix().T @ q.ravel()[bumps.active])) < 1e-12
    eq = q_dvm(bumps.with_values(M), op, M)
    assert np.max(np.abs(eq.q)) <= 1e-12 * eq.loss_rate.max()


def test_rk4_conservation_and_stability(hs_dvm, bumps):
    M = discrete_maxwellian(bumps)
    f1, info = rk4_step(bumps, 1e-3, hs_dvm, M)
    assert np.allclose(f1.moments(), bumps.moments(), rtol=1e-13, atol=1e-13)
    with pytest.raises(StabilityError):
        rk4_step(bumps, 10.0 / info["nu_max"], hs_dvm, M)


def test_rk4_fourth_order(hs_dvm, bumps):
    M = discrete_maxwellian(bumps)

    def advance(dt, T=0.004):
        g = bumps
        for _ in range(int(round(T / dt))):
            g, _ = rk4_step(g, dt, hs_dvm, M)
        return g.values

    r = [advance(0.002 / k) for k in (1, 2, 4)]
    ratio = np.max(np.abs(r[0] - r[1])) / np.max(np.abs(r[1] - r[2]))
    assert 12.0 < ratio < 20.0


def test_short_run_trace(tmp_path, hs_dvm):
    out = run_relaxation(hard_spheres(), two_bump_datum(), 0.01, n=N, sphere_degree=DEG, op=hs_dvm)
    tr = out.trace
    assert max(tr.conservation_drift().values()) < 1e-12
    assert tr.max_h_increase() <= 1e-12
    assert tr.l1[-1] < tr.l1[0]
    tr.write_csv(tmp_path / "trace.csv")
    lines = (tmp_path / "trace.csv").read_text().splitlines()
    assert lines[0] == "t,rho,ux,uy,uz,T,H,l1_dist"
    assert len(lines) == len(tr.times) + 1
    assert float(lines[1].split(",")[1]) == tr.masses[0]


def test_fit_exact_exponential():
    t = np.linspace(0.0, 2.0, 41)
    fit = fit_decay_rate((t, 3.0 * np.exp(-5.0 * t)))
    assert fit.mu == pytest.approx(5.0, rel=1e-12)
    assert fit.r2 == pytest.approx(1.0)
    d = 3.0 * np.exp(-5.0 * t)
    lo, hi = fit.window
    assert d[t == lo][0] <= 0.05 * d[0] and d[t == hi][0] >= 1e-6 * d[0]


def test_fit_explicit_window_and_warning():
    t = np.linspace(0.0, 1.0, 21)
    d = np.exp(-2 * t) * (1 + 0.5 * np.sin(40 * t))
    with pytest.warns(RuntimeWarning):
        fit = fit_decay_rate((t, d), window=(0.0, 1.0))
    assert not fit.reliable
    with pytest.raises(DomainError):
        fit_decay_rate((t, d), window=(0.5, 2.0))


def test_trace_rejects_empty_window():
    with pytest.raises(DomainError):
        fit_decay_rate((np.array([0.0, 1.0]), np.array([1.0, 0.9])))
