import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rspace.errors import AlgebraMismatch, UnsupportedAlgebra
from rspace.liealg import (ad_operator, bracket, build_algebra, conjugation, exp_ad,
                           jacobi_defect, killing, killing_polar, killing_signature, span)
from rspace.numerics import full_space, subspace_distance, subspace_from_spanning, zero_subspace

SL2 = build_algebra("sl", 2)
ALGEBRAS = [build_algebra("sl", 2), build_algebra("sl", 3), build_algebra("so", 3, 1),
            build_algebra("so", 4, 1), build_algebra("so", 3, 0)]


def matrix_killing(g, x, y):
    """Oracle: trace(ad x ad y) with ad computed from matrix commutators and a pinv solve."""
    mats = g.defining_rep
    flat = mats.reshape(g.dim, -1).T
    xm, ym = g.matrix_of(x), g.matrix_of(y)

    def ad(m):
        comms = np.stack([(m @ b - b @ m).ravel() for b in mats], axis=1)
        return np.linalg.lstsq(flat, comms, rcond=None)[0]

    return float(np.trace(ad(xm) @ ad(ym)))


def test_sl2_killing_values():
    h, e, f = (SL2.basis_element(k) for k in "HEF")
    assert killing(h, h) == pytest.approx(8.0, abs=1e-12)
    assert killing(e, f) == pytest.approx(4.0, abs=1e-12)
    assert matrix_killing(SL2, h.coords, h.coords) == pytest.approx(8.0, abs=1e-12)
    assert matrix_killing(SL2, e.coords, f.coords) == pytest.approx(4.0, abs=1e-12)


def test_dimensions_and_signatures():
    assert SL2.dim == 3
    so31 = build_algebra("so", 3, 1)
    assert so31.dim == 6
    # oracle: eigenvalues of a Killing matrix built from commutators
    k = np.array([[matrix_killing(so31, a, b) for b in np.eye(6)] for a in np.eye(6)])
    ev = np.linalg.eigvalsh(k)
    assert (int((ev > 1e-9).sum()), int((ev < -1e-9).sum())) == (3, 3)
    assert killing_signature(so31) == (3, 3)
    assert killing_signature(build_algebra("so", 3, 0)) == (0, 3)
    assert build_algebra("sl", 3).dim == 8 and build_algebra("so", 4, 1).dim == 10


@pytest.mark.parametrize("g", ALGEBRAS, ids=lambda g: g.name)
def test_killing_matches_commutator_oracle(g, rng):
    x, y = rng.standard_normal((2, g.dim))
    assert float(g.kill(x, y)) == pytest.approx(matrix_killing(g, x, y), rel=1e-10, abs=1e-10)


def test_bracket_matches_matrix_commutator(rng):
    for g in ALGEBRAS:
        x, y = g.random_element(rng), g.random_element(rng)
        xm, ym = x.matrix(), y.matrix()
        assert np.allclose(bracket(x, y).matrix(), xm @ ym - ym @ xm, atol=1e-12)


def test_ad_h_spectrum():
    h = SL2.basis_element("H")
    ad = ad_operator(h)
    e, f = SL2.basis_element("E").coords, SL2.basis_element("F").coords
    assert np.allclose(ad @ e, 2 * e) and np.allclose(ad @ f, -2 * f)
    assert np.allclose(ad @ h.coords, 0)
    assert np.array_equal(ad_operator(SL2.zero()), np.zeros((3, 3)))


def test_killing_polar_examples():
    h, e = SL2.basis_element("H"), SL2.basis_element("E")
    assert killing_polar(SL2, full_space(3)).dim == 0
    assert killing_polar(SL2, zero_subspace(3)).dim == 3
    assert subspace_distance(killing_polar(SL2, span(SL2, h, e)), span(SL2, e)) < 1e-12


def test_errors():
    with pytest.raises(UnsupportedAlgebra):
        build_algebra("sp", 4)
    with pytest.raises(UnsupportedAlgebra):
        build_algebra("sl", 1)
    so = build_algebra("so", 3, 1)
    with pytest.raises(AlgebraMismatch):
        bracket(SL2.zero(), so.zero())
    with pytest.raises(AlgebraMismatch):
        SL2.element(np.zeros(4))


@pytest.mark.parametrize("g", ALGEBRAS, ids=lambda g: g.name)
def test_conjugation_and_exp_ad_are_automorphisms(g, rng):
    from rspace.numerics import mat_exp
    x = g.random_element(rng, 0.5)
    phi = conjugation(g, mat_exp(x.matrix()))
    assert phi.bracket_defect(rng, 5) < 1e-10
    assert phi.killing_defect() < 1e-9
    # Ad(exp x) = exp(ad x)
    assert np.allclose(phi.matrix, exp_ad(x).matrix, atol=1e-10)
    assert np.allclose((phi @ phi.inverse()).matrix, np.eye(g.dim), atol=1e-10)


@given(st.sampled_from(range(len(ALGEBRAS))), st.integers(0, 2**31 - 1))
def test_jacobi_invariance_polar(idx, seed):
    g = ALGEBRAS[idx]
    r = np.random.default_rng(seed)
    x, y, z = r.standard_normal((3, g.dim))
    assert jacobi_defect(g, x, y, z) < 1e-10
    assert abs(g.kill(g.br(x, y), z) + g.kill(y, g.br(x, z))) < 1e-10
    k = int(r.integers(1, g.dim))
    s = subspace_from_spanning(r.standard_normal((g.dim, k)))
    assert subspace_distance(killing_polar(g, killing_polar(g, s)), s) < 1e-10
