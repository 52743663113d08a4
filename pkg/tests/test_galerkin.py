from __future__ import annotations

import json
import math

import numpy as np
import pytest

from kgl.errors import AssemblyError, ConfigurationError, DomainError
from kgl.galerkin import (
    BasisSpec,
    OperatorMatrix,
    assemble_operator,
    assemble_weight_gram,
    block_structure_check,
    eval_basis,
    load_kgl1,
    save_kgl1,
)
from kgl.kernels import hard_spheres, maxwell_molecules, noncutoff_kernel, power_law_kernel
from kgl.quadrature import build_gauss_hermite


def test_basis_spec_indexing():
    s = BasisSpec(3, 2)
    assert s.size == 9 * 4
    labels = s.labels()
    assert len(labels) == s.size
    assert all(s.index(*lab) == i for i, lab in enumerate(sorted(labels, key=lambda t: s.index(*t))))
    assert sorted(s.index(*lab) for lab in labels) == list(range(s.size))
    assert s.degree == 8
    with pytest.raises((ConfigurationError, DomainError)):
        BasisSpec(0, 2)
    with pytest.raises((ConfigurationError, DomainError)):
        BasisSpec(2, 2, N=2)


def test_nested_indices():
    s = BasisSpec(4, 3)
    idx = s.sub(2, 1)
    by_index = {s.index(*lab): lab for lab in s.labels()}
    small = BasisSpec(2, 1)
    assert sorted(by_index[i] for i in idx) == sorted(small.labels())


def test_basis_orthonormal_in_gaussian_weight():
    spec = BasisSpec(4, 4)
    rule = build_gauss_hermite(3, 16)
    # g = psi M and the L2(M^-1) product becomes the Gaussian-weighted product of ratios
    P = eval_basis(spec, rule.nodes)
    G = P.T @ (rule.weights[:, None] * P)
    assert np.max(np.abs(G - np.eye(spec.size))) < 1e-12


def test_invariant_coordinates_span_invariants():
    spec = BasisSpec(2, 2)
    rule = build_gauss_hermite(3, 8)
    P = eval_basis(spec, rule.nodes)
    inv = P[:, spec.invariant_indices()]
    v = rule.nodes
    targets = np.column_stack([np.ones(len(v)), v, np.sum(v * v, axis=1)])
    coef, *_ = np.linalg.lstsq(inv, targets, rcond=None)
    assert np.max(np.abs(inv @ coef - targets)) < 1e-12


def test_reduced_matches_full_assembly():
    spec = BasisSpec(2, 1)
    k = hard_spheres()
    red = assemble_operator(k, spec)
    full = assemble_operator(k, spec, method="full")
    assert np.max(np.abs(red.A - full.A)) <= 1e-12 * red.norm


def test_operator_properties(hs_op33):
    A = hs_op33.A
    assert np.allclose(A, A.T, atol=1e-12 * hs_op33.norm)
    assert np.linalg.eigvalsh(A)[0] > -1e-9 * hs_op33.norm
    inv = hs_op33.basis.invariant_indices()
    assert np.max(np.abs(A[inv])) <= 1e-10 * hs_op33.norm


def test_block_structure(hs_op33):
    rep = block_structure_check(hs_op33)
    assert rep["ok"]
    assert rep["max_offblock_relative"] < 1e-12
    for l, info in rep["per_l"].items():
        assert info["m_spread"] < 1e-9 * hs_op33.norm


def test_restrict_equals_smaller_assembly(hs_op33):
    small = assemble_operator(hard_spheres(), BasisSpec(2, 2))
    assert np.max(np.abs(hs_op33.restrict(2, 2).A - small.A)) <= 1e-12 * small.norm


def test_singular_kernel_assembly():
    op = assemble_operator(noncutoff_kernel(1.0, 0.5), BasisSpec(2, 2))
    w = np.linalg.eigvalsh(op.A)
    assert np.sum(w <= 1e-7 * w[-1]) == 5


def test_soft_potential_assembly():
    op = assemble_operator(power_law_kernel(-1.0), BasisSpec(2, 2))
    assert np.sum(np.linalg.eigvalsh(op.A) <= 1e-7 * op.norm) == 5


def test_check_rejects_broken_operator(hs_op33):
    bad = hs_op33.A.copy()
    bad[0, 5] += 1.0
    from kgl.galerkin import _check_operator

    with pytest.raises(AssemblyError):
        _check_operator(OperatorMatrix(bad, hs_op33.basis, hs_op33.kernel, hs_op33.quadrature))


def test_weight_gram():
    spec = BasisSpec(3, 2)
    G0 = assemble_weight_gram(spec, 0.0)
    assert np.max(np.abs(G0.G - np.eye(spec.size))) < 1e-12
    G1 = assemble_weight_gram(spec, 1.0)
    Gm = assemble_weight_gram(spec, -1.0)
    w1 = np.linalg.eigvalsh(G1.G)
    wm = np.linalg.eigvalsh(Gm.G)
    assert w1[0] >= 1.0 - 1e-12
    assert wm[-1] <= 1.0 + 1e-12 and wm[0] > 0
    assert np.allclose(G1.restrict(2, 1).G, assemble_weight_gram(BasisSpec(2, 1), 1.0).G, atol=1e-13)


def test_kgl1_roundtrip(tmp_path):
    M = np.arange(12.0).reshape(3, 4) / 7.0
    path = save_kgl1(tmp_path / "m.kgl1", M, {"kernel": "hs"})
    raw = path.read_bytes()
    assert raw[:4] == b"KGL1"
    A, meta = load_kgl1(path)
    assert np.array_equal(A, M)
    assert meta == {"kernel": "hs"}
    assert json.loads((tmp_path / "m.meta.json").read_text())["kernel"] == "hs"
    (tmp_path / "x.kgl1").write_bytes(b"NOPE" + raw[4:])
    with pytest.raises(ConfigurationError):
        load_kgl1(tmp_path / "x.kgl1")


def test_maxwell_diagonal_at_low_order():
    op = assemble_operator(maxwell_molecules(), BasisSpec(2, 2))
    off = op.A - np.diag(np.diag(op.A))
    assert np.max(np.abs(off)) < 1e-12 * op.norm
    spec = op.basis
    assert op.A[spec.index(0, 2, 0), spec.index(0, 2, 0)] == pytest.approx(2 * math.pi**2.5, rel=1e-12)
