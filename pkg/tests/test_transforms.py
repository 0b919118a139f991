import numpy as np
import pytest

from rspace.errors import GridDimensionMismatch, NotCartan, PathDependence, PoleParameter
from rspace.models import conformal, conformal_point, point_to_parabolic, rp1
from rspace.parabolic import stereoproject
from rspace.transforms import (Grid, IsothermicSample, bianchi_certificates, bianchi_cube,
                               bianchi_fourth, bracket_residual, build_cartan_isothermic,
                               cartan_dimension_witness, cartan_stereoprojections, christoffel,
                               christoffel_darboux_permutability, closedness_residual,
                               conformal_cartan_subspace, curved_flat_residual, darboux,
                               darboux_decomposition, discrete_connection, dressing_real,
                               eta_perp_residual, gauge_check, gauge_identity_residual,
                               grid_derivative, holonomy_residual, is_semisimple,
                               make_cartan_subspace, moving_complement, pair_quadratic_form,
                               plaquette_holonomy, quadratic_form, rp1_cartan_subspace,
                               sample_distance, sample_from_json, sample_to_json,
                               spectral_deformation_check, standard_chart, t_darboux_commutation,
                               t_transform, validate_sample)

M = conformal(3, 1)
SEED_POINTS = [(-1.26, -1.03, 0.93, 0), (0.1, -0.14, -1.11, 0), (1.03, -1.53, -1.01, 0)]
M1, M2, M3 = -0.4, -1.1, 1.3


def seed(i):
    return point_to_parabolic(conformal_point(M, SEED_POINTS[i]))


@pytest.fixture(scope="module")
def cs():
    return conformal_cartan_subspace(M)


@pytest.fixture(scope="module")
def sample(cs):
    return build_cartan_isothermic(M, cs, Grid((17, 17), (0.04, 0.04)))


@pytest.fixture(scope="module")
def legs(sample):
    return [(m, darboux(sample, m, seed(i))) for i, m in enumerate((M1, M2, M3))]


def test_grid_validation():
    with pytest.raises(GridDimensionMismatch):
        Grid((3, 3), (0.1,))
    with pytest.raises(ValueError):
        Grid((1, 3), (0.1, 0.1))
    g = Grid((3, 5), (0.1, 0.2)).refined()
    assert g.shape == (5, 9) and g.spacing == (0.05, 0.1)


def test_grid_derivative_is_fourth_order_exact_on_cubics():
    g = Grid((9, 7), (0.1, 0.3), (1.0, -0.5))
    x, y = g.points().T
    vals = x ** 3 - 2 * x * y * y + y
    d = grid_derivative(vals, g)
    assert np.allclose(d[:, 0], 3 * x ** 2 - 2 * y * y, atol=1e-10)
    assert np.allclose(d[:, 1], -4 * x * y + 1, atol=1e-10)


def test_sample_checks(sample):
    assert eta_perp_residual(sample) < 1e-9
    assert closedness_residual(sample) < 10 * 0.04 ** 2
    validate_sample(sample)
    with pytest.raises(GridDimensionMismatch):
        IsothermicSample(M, sample.grid, sample.f[:-1], sample.eta, sample.df)


def test_connection_at_zero_is_trivial(sample):
    for trans in discrete_connection(sample, 0.0):
        assert np.allclose(trans, np.eye(M.algebra.dim), atol=0)


def test_corrupted_eta_breaks_flatness(sample):
    eta = sample.eta.copy()
    v = int(np.ravel_multi_index((8, 8), sample.grid.shape))
    eta[v, 0] += 0.3 * np.abs(eta).max() * np.random.default_rng(1).standard_normal(eta.shape[-1])
    bad = IsothermicSample(M, sample.grid, sample.f, eta, sample.df)
    clean = plaquette_holonomy(sample, 1.3)
    dirty = plaquette_holonomy(bad, 1.3)
    assert dirty[7:9, 7:9].max() > 1e-4
    assert dirty[7:9, 7:9].max() > 100 * clean.max()


def test_semisimplicity_and_rp1_curve():
    g = rp1().algebra
    x = g.coords_of_matrix(np.array([[0.0, 1.0], [1.0, 0.0]]))
    # oracle: ad(E+F) has eigenvalues 2, -2, 0 and B(E+F, E+F) = 8
    assert np.allclose(np.sort(np.linalg.eigvals(g.ad_matrix(x)).real), [-2, 0, 2], atol=1e-12)
    assert float(g.kill(x, x)) == pytest.approx(8.0)
    assert is_semisimple(g, x)
    assert not is_semisimple(g, g.basis_element("E").coords)
    cs1 = rp1_cartan_subspace()
    curve = build_cartan_isothermic(rp1(), cs1, Grid((12,), (0.05,)))
    assert len(curve.f) == 12 and curve.eta.shape == (12, 1, 3)
    assert cartan_dimension_witness(rp1(), cs1) == {"dim": 1, "rank_z": 1, "within_bound": True}


def test_rank_witness(cs):
    assert cartan_dimension_witness(M, cs)["dim"] == 2 == cartan_dimension_witness(M, cs)["rank_z"]
    with pytest.raises(NotCartan):
        conformal_cartan_subspace(M, dim=3)
    with pytest.raises(NotCartan):
        make_cartan_subspace(standard_chart(M), [cs.basis[0].coords, 2 * cs.basis[0].coords])
    with pytest.raises(GridDimensionMismatch):
        build_cartan_isothermic(M, cs, Grid((5,), (0.1,)))


def test_exact_gauge_agrees_with_transport(sample):
    assert gauge_check(sample, 0.9) < 1e-3
    assert holonomy_residual(sample, 0.9) < 1e-3


def test_holonomy_converges_at_second_order(cs, sample):
    fine = build_cartan_isothermic(M, cs, sample.grid.refined())
    ratio = holonomy_residual(sample, 1.3) / holonomy_residual(fine, 1.3)
    assert 3.4 <= ratio <= 4.6


def test_darboux_basics(sample, legs):
    _, f1 = legs[0]
    assert sample_distance(darboux(f1, M1, sample.f[0]), sample) < 1e-6
    magnus = darboux(sample, M1, seed(0), route="magnus")
    assert sample_distance(magnus, f1) < 1e-6
    assert eta_perp_residual(f1) < 1e-8
    with pytest.raises(ValueError):
        darboux(sample, 0.0, seed(0))


def test_gauge_identity(sample, legs):
    _, f1 = legs[0]
    assert gauge_identity_residual(sample, f1, M1, 0.5) < 1e-3
    with pytest.raises(PoleParameter):
        gauge_identity_residual(sample, f1, M1, M1)


def test_bianchi_quadrilateral_and_cube(sample, legs):
    (m1, f1), (m2, f2), (m3, f3) = legs
    fh = bianchi_fourth(sample, f1, m1, f2, m2)
    cert = bianchi_certificates(sample, f1, m1, f2, m2, fh)
    assert cert["cross_ratio"] < 1e-7
    assert max(cert["darboux_from_f1"], cert["darboux_from_f2"]) < 1e-5
    cube = bianchi_cube(sample, legs)
    assert cube["three_way"] < 1e-6
    assert cube["cross_ratio"] < 1e-7 and cube["second_tetrahedron"] < 1e-7
    with pytest.raises(ValueError):
        bianchi_fourth(sample, f1, m1, f1, m1)


def test_t_transform(sample, legs):
    assert sample_distance(t_transform(sample, 0.0), sample) < 1e-12
    assert t_darboux_commutation(sample, 1.7, sample.chart.pinf, 0.8) < 1e-6


def test_christoffel(cs, sample):
    c = christoffel(sample)
    _, fcs = cartan_stereoprojections(cs, sample.grid)
    got = np.stack([stereoproject(c.chart, p).coords for p in c.f])
    assert np.abs(got - fcs).max() < 1e-8
    assert sample_distance(christoffel(c), sample) < 1e-8
    assert bracket_residual(sample, c) < 1e-8
    q, qc = quadratic_form(sample), quadratic_form(c)
    assert np.abs(qc - q.transpose(0, 2, 1)).max() < 1e-8


def test_christoffel_rejects_non_closed_form(sample):
    eta = sample.eta.copy()
    eta[:, 0] *= 1 + 0.5 * sample.grid.points()[:, 1:2]
    bad = IsothermicSample(M, sample.grid, sample.f, eta, sample.df, sample.chart)
    with pytest.raises(PathDependence):
        christoffel(bad)


def test_christoffel_darboux_permutability(sample):
    assert christoffel_darboux_permutability(sample, M1, seed(0))["distance"] < 1e-5


def test_curved_flats_and_quadratic_form(sample, legs):
    _, f1 = legs[0]
    g = M.algebra
    assert curved_flat_residual(sample.grid, sample.f, f1.f, g) < 1e-4
    rng = np.random.default_rng(5)
    ctrl = moving_complement(sample.grid, g, seed(0), [g.random_element(rng, 0.2) for _ in range(2)])
    assert curved_flat_residual(sample.grid, sample.f, ctrl, g) > 1e-2
    dec = darboux_decomposition(sample.grid, sample.f, f1.f)
    assert np.abs(pair_quadratic_form(dec, g, M1) - quadratic_form(sample)).max() < 1e-4


def test_spectral_deformation(sample):
    d = darboux(sample, 1.7)
    res = spectral_deformation_check(sample, d, 1.7, 0.6)
    assert max(res.values()) < 1e-5


def test_dressing_matches_bianchi(sample, legs):
    _, f1 = legs[0]
    out = dressing_real(sample, f1, M1, 0.5, seed(1))
    assert out["m2"] == pytest.approx(0.75 * M1)
    assert out["match_fhat"] < 1e-6 and out["match_f2"] < 1e-6
    with pytest.raises(ValueError):
        dressing_real(sample, f1, M1, 1.0, seed(1))


def test_json_round_trip(cs):
    small = build_cartan_isothermic(M, cs, Grid((4, 3), (0.1, 0.1)))
    back = sample_from_json(sample_to_json(small))
    assert sample_distance(back, small) < 1e-9
    assert np.allclose(back.eta, small.eta) and back.grid == small.grid
