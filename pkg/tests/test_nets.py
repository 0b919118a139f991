import json

import numpy as np
import pytest

from rspace.errors import NotPairwiseComplementary, NotSelfDual, PoleParameter
from rspace.models import (conformal, conformal_coords, conformal_point, grassmannian,
                           parabolic_to_point, point_to_parabolic, rp1)
from rspace.nets import (darboux_edge_residual, lattice_net, make_net, net_3d_consistency,
                         net_darboux, net_distance, net_edge_factor, net_flatness_residual,
                         net_from_boundary, net_from_json, net_invariant_residual, net_t_transform,
                         net_to_json, net_to_obj, t_transform_gauge_residual, tetrahedron_residual)

PLANE = conformal(2, 0)
K = np.arange(4)


def plane(z):
    return point_to_parabolic(conformal_point(PLANE, [z.real, z.imag]))


@pytest.fixture(scope="module")
def small_net():
    # timelike lattice with m ~ 81, the well-conditioned regime for the recurrences
    return lattice_net(conformal(2, 1), 81 * (1 + 0.2 * np.sin(K)), 81 * (1 + 0.2 * np.cos(K)))


def seed(x):
    return point_to_parabolic(conformal_point(conformal(2, 1), x))


def test_integer_lattice_has_harmonic_quads():
    w = h = 4
    net = net_from_boundary(PLANE, [plane(complex(a, 0)) for a in range(w)],
                            [plane(complex(0, b)) for b in range(h)], [1.0] * (w - 1), [-1.0] * (h - 1))
    assert net_invariant_residual(net) < 1e-9
    # oracle: the filled vertices are the Gaussian integers a + i b
    for a, b in net.vertices():
        x = conformal_coords(parabolic_to_point(net.at((a, b)), PLANE))
        assert np.allclose(x, [a, b], atol=1e-8)


def test_one_by_one_domain_is_unchanged():
    p = plane(0.3 + 0.1j)
    net = net_from_boundary(PLANE, [p], [p], [], [])
    assert net.shape == (1, 1) and net.at((0, 0)) is p


def test_repeated_boundary_point_is_rejected():
    p = plane(0j)
    with pytest.raises(NotPairwiseComplementary):
        net_from_boundary(PLANE, [p, p, plane(2 + 0j)], [p, plane(1j)], [1.0, 1.0], [-1.0])


def test_non_self_dual_model_is_rejected():
    with pytest.raises(NotSelfDual):
        make_net(grassmannian(1, 3), [[None]], [], [])


def test_edge_factor_examples(small_net):
    i, j = (1, 1), (2, 1)
    assert np.allclose(net_edge_factor(small_net, j, i, 0.0).matrix, np.eye(10), atol=1e-14)
    m = small_net.edge_m(i, j)
    ev = np.sort(np.linalg.eigvals(net_edge_factor(small_net, j, i, m / 2).matrix).real)
    assert np.allclose(np.unique(np.round(ev, 9)), [0.5, 1.0, 2.0])
    with pytest.raises(PoleParameter):
        net_edge_factor(small_net, j, i, m)


def test_flatness(small_net):
    assert net_flatness_residual(small_net, 0.0) == 0.0
    for t in (0.3, -2.0, 5.0):
        assert net_flatness_residual(small_net, t) < 1e-8


def test_corrupted_net_is_not_flat(small_net):
    f = [list(col) for col in small_net.f]
    f[2][2] = seed([0.31, 0.2, 0.05])
    bad = make_net(small_net.model, f, small_net.m_h, small_net.m_v, validate=False)
    assert net_flatness_residual(bad, 2.0) > 1e-4


def test_darboux_transform(small_net):
    m_hat = 2.5
    dual = net_darboux(small_net, m_hat, seed([0.5, -0.3, 0.1]))
    assert darboux_edge_residual(small_net, dual, m_hat) < 1e-8
    assert tetrahedron_residual(small_net, dual, m_hat) < 1e-8
    back = net_darboux(dual, m_hat, small_net.at((0, 0)))
    assert net_distance(back, small_net) < 1e-7
    with pytest.raises(PoleParameter):
        net_darboux(small_net, float(small_net.m_h[0]), seed([0.5, -0.3, 0.1]))


def test_t_transform(small_net):
    ident = net_t_transform(small_net, 0.0)
    assert net_distance(ident.net, small_net) < 1e-12
    for s in (0.4, -1.5):
        res = net_t_transform(small_net, s)
        assert np.allclose(res.net.m_h, small_net.m_h - s)
        assert net_invariant_residual(res.net) < 1e-8
        assert t_transform_gauge_residual(small_net, res, s, 0.7) < 1e-8


def test_three_dimensional_consistency(small_net):
    out = net_3d_consistency(small_net, 2.0, 5.0, seed([0.5, -0.3, 0.1]), seed([-0.4, 0.6, -0.05]))
    assert out["two_way"] < 1e-7 and out["pointwise_formula"] < 1e-7
    with pytest.raises(ValueError):
        net_3d_consistency(small_net, 2.0, 2.0, seed([0.5, -0.3, 0.1]), seed([-0.4, 0.6, -0.05]))


def test_projective_line_nets():
    net = lattice_net(rp1(), [4.0, 5.0, 4.0], [9.0, 6.0])
    assert net_invariant_residual(net) < 1e-9
    assert net_flatness_residual(net, 1.3) < 1e-9


def test_json_round_trip(small_net):
    text = net_to_json(small_net, {"note": "x"})
    doc = json.loads(text)
    assert doc["domain"] == [5, 5] and doc["metadata"] == {"note": "x"}
    back = net_from_json(text)
    assert net_distance(back, small_net) < 1e-9
    assert np.array_equal(back.m_h, small_net.m_h)


def test_obj_export():
    net = lattice_net(conformal(3, 1), [1.0, 1.0], [-1.0, -1.0])
    lines = net_to_obj(net).splitlines()
    verts = [ln for ln in lines if ln.startswith("v ")]
    faces = [ln for ln in lines if ln.startswith("f ")]
    assert len(verts) == 9 and len(faces) == 4
    xyz = np.array([[float(c) for c in ln.split()[1:]] for ln in verts])
    assert np.allclose(xyz[0], 0.0, atol=1e-12)
    assert faces[0] == "f 1 2 5 4"
