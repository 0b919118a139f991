import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.linalg import expm

from rspace.errors import NotComplementary, NotInChart, NotNilpotent, NotParabolicHeightOne
from rspace.liealg import build_algebra, exp_ad, span
from rspace.models import (conformal, grassmannian, point_to_parabolic, random_complementary_pair,
                           rp1, rp1_point)
from rspace.parabolic import (act_on_parabolic, exp_nilpotent_action, gamma_factor, grading_residual,
                              inverse_stereoproject, make_chart, make_pair, make_parabolic,
                              parabolic_from_elements, stereoproject)
from rspace.numerics import subspace_distance

SL2 = build_algebra("sl", 2)
H, E, F = (SL2.basis_element(k) for k in "HEF")
MODELS = [rp1(), grassmannian(2, 4), conformal(3, 0), conformal(2, 1), conformal(3, 1)]


def rp1_parabolic(x):
    return point_to_parabolic(rp1_point(x))


def test_borel_subalgebras():
    p = parabolic_from_elements(SL2, H, E)
    assert subspace_distance(p.nilradical, span(SL2, E)) < 1e-12
    q = parabolic_from_elements(SL2, H, F)
    assert subspace_distance(q.nilradical, span(SL2, F)) < 1e-12
    with pytest.raises(NotParabolicHeightOne):
        parabolic_from_elements(SL2, H)


def test_canonical_pair_grading_element():
    pair = make_pair(parabolic_from_elements(SL2, H, E), parabolic_from_elements(SL2, H, F))
    # oracle from the bracket table: [-H/2, E] = -E, [-H/2, F] = F
    assert np.abs(pair.xi.coords - (-0.5) * H.coords).max() < 1e-12
    same = make_pair(rp1_parabolic(0), rp1_parabolic(math.inf))
    assert np.abs(same.xi.coords + 0.5 * H.coords).max() < 1e-12


def test_pair_with_itself_is_rejected():
    p = parabolic_from_elements(SL2, H, E)
    with pytest.raises(NotComplementary):
        make_pair(p, p)


def test_conformal_pair_spectrum():
    m = conformal(2, 0)  # algebra so(3,1)
    from rspace.models import ModelPoint
    pair = make_pair(point_to_parabolic(ModelPoint(m, m.v0)), point_to_parabolic(ModelPoint(m, m.vinf)))
    ev = np.sort(np.linalg.eigvals(pair.ad_xi).real)
    assert np.allclose(ev, [-1, -1, 0, 0, 1, 1], atol=1e-10)
    assert (pair.eig_minus.dim, pair.eig_zero.dim, pair.eig_plus.dim) == (2, 2, 2)


@pytest.mark.parametrize("model", MODELS, ids=lambda m: m.tag)
def test_random_pairs_grade_the_algebra(model, rng):
    for _ in range(20):
        p, q = random_complementary_pair(model, rng)
        pair = make_pair(point_to_parabolic(p), point_to_parabolic(q))
        assert grading_residual(pair) < 1e-8
        assert pair.residual < 1e-8
        sw = pair.swapped()
        assert np.allclose(sw.xi.coords, -pair.xi.coords)


@pytest.mark.parametrize("model", MODELS, ids=lambda m: m.tag)
def test_gamma_properties(model, rng):
    for _ in range(10):
        p, q = random_complementary_pair(model, rng)
        pair = make_pair(point_to_parabolic(p), point_to_parabolic(q))
        s, t = rng.uniform(0.2, 3, 2) * rng.choice([-1, 1], 2)
        assert np.abs(pair.gamma_matrix(s) @ pair.gamma_matrix(t) - pair.gamma_matrix(s * t)).max() < 1e-10
        g = gamma_factor(pair, s)
        assert g.killing_defect() < 1e-10
        assert g.bracket_defect() < 1e-10
        a = abs(s)
        assert np.abs(pair.gamma_matrix(a) - expm(math.log(a) * pair.ad_xi)).max() < 1e-10


def test_gamma_at_one_is_identity_and_zero_rejected():
    pair = make_pair(rp1_parabolic(0), rp1_parabolic(math.inf))
    assert np.allclose(gamma_factor(pair, 1.0).matrix, np.eye(3), atol=1e-15)
    with pytest.raises(ValueError):
        gamma_factor(pair, 0.0)


def test_act_on_parabolic_examples():
    p = rp1_parabolic(0)  # stab<e1>
    assert act_on_parabolic(SL2.identity(), p).distance(p) < 1e-12
    moved = act_on_parabolic(exp_ad(F), p)
    assert moved.distance(rp1_parabolic(1.0)) < 1e-12


def test_exp_nilpotent_action():
    assert np.allclose(exp_nilpotent_action(SL2.zero()).matrix, np.eye(3))
    assert np.allclose(exp_nilpotent_action(2.0 * F).matrix, exp_ad(2.0 * F).matrix, atol=1e-12)
    with pytest.raises(NotNilpotent):
        exp_nilpotent_action(H)


def test_stereoprojection_sl2():
    chart = make_chart(rp1_parabolic(0), rp1_parabolic(math.inf))
    assert stereoproject(chart, chart.p0).norm() < 1e-12
    for c in (-2.0, 0.5, 3.0):
        f = stereoproject(chart, rp1_parabolic(c))
        assert np.abs(f.coords - c * F.coords).max() < 1e-10
    with pytest.raises(NotInChart):
        stereoproject(chart, chart.pinf)


@given(st.sampled_from(range(len(MODELS))), st.integers(0, 2**31 - 1))
def test_stereoprojection_round_trip(idx, seed):
    r = np.random.default_rng(seed)
    model = MODELS[idx]
    p0, pinf = random_complementary_pair(model, r)
    chart = make_chart(point_to_parabolic(p0), point_to_parabolic(pinf))
    f = chart.from_coords(r.uniform(-1, 1, chart.inf_basis.shape[1]))
    back = stereoproject(chart, inverse_stereoproject(chart, f))
    assert np.abs(back.coords - f.coords).max() < 1e-8


def test_make_parabolic_rejects_non_subalgebra():
    from rspace.errors import NotASubalgebra
    with pytest.raises(NotASubalgebra):
        make_parabolic(SL2, span(SL2, E, F))
