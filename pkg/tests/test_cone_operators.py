import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, strategies as st

from conekit.cone_operators import (AugmentedField, ConeGeometry, Cutoff, DiscreteOperator, OuterBC,
                                    assemble_bilaplacian, assemble_interpolant, assemble_laplacian,
                                    gradient_form, model_cone_operator, operator_norm, perturbation_norm)
from conekit.conormal import bilaplacian_domain_asymptotics
from conekit.cross_section import CrossSectionSpec, WarpProfile
from conekit.errors import UnsupportedError, ValidationError
from conekit.mellin import RadialGrid

from conftest import mode_index

INTERIOR = slice(8, -8)


def _interior(v):
    return v[..., INTERIOR]


def test_cutoff_shape():
    c = Cutoff(0.25, 0.5)
    x = np.array([1e-3, 0.25, 0.3, 0.4, 0.5, 0.9])
    w = c(x)
    assert w[0] == 1 and w[1] == 1 and w[-2] == 0 and w[-1] == 0
    assert np.all(np.diff(w) <= 0) and 0 < w[2] < 1
    assert c.scaled(0.2).support_end == pytest.approx(0.1)
    with pytest.raises(ValidationError):
        Cutoff(0.5, 0.25)
    with pytest.raises(ValidationError):
        Cutoff(eps=0)


def test_constants_annihilated(geom, warped):
    for g in (geom, warped):
        L = assemble_laplacian(g, OuterBC.NEUMANN)
        u = g.field()
        u.values[0] = 1.0
        assert np.max(np.abs(L.apply(u).values[0])) <= 1e-12 * abs(L.block(0)).max()


@pytest.mark.parametrize("order,tol", [(2, 2e-3), (6, 1e-7)])
def test_x_squared_maps_to_four(geom, order, tol):
    g = geom.with_grid(RadialGrid(256, 1e-4))
    L = assemble_laplacian(g, order=order)
    u = g.field()
    u.values[0] = g.grid.x**2
    assert np.max(np.abs(_interior(L.apply(u).values[0]) - 4)) <= tol


def test_warped_x_squared(warped):
    # f = 1 + x/2: Delta x^2 = 4 + 2 H with H = x f'/(2 f)
    g = warped.with_grid(RadialGrid(256, 1e-4))
    L = assemble_laplacian(g, order=6)
    x = g.grid.x
    u = g.field()
    u.values[0] = x**2
    exact = 4 + 2 * (x * 0.5 / (2 * (1 + 0.5 * x)))
    assert np.max(np.abs(_interior(L.apply(u).values[0] - exact))) <= 1e-7


def test_second_order_convergence(geom):
    errs = []
    for N in (128, 256):
        g = geom.with_grid(RadialGrid(N, 1e-4))
        L = assemble_laplacian(g)
        u = g.field()
        u.values[0] = g.grid.x**2
        errs.append(np.max(np.abs(L.apply(u).values[0][1:-1] - 4)))
    assert 3.5 <= errs[0] / errs[1] <= 4.5


@pytest.mark.parametrize("label,j", [("1c", 1), ("2s", 2), ("3c", 3)])
def test_indicial_annihilation(geom, label, j):
    # x^j e_j is harmonic on the straight circle cone
    L = assemble_laplacian(geom, order=6)
    m = mode_index(geom.spec, label)
    u = geom.field()
    x = geom.grid.x
    u.values[m] = x**j
    out = L.apply(u).values[m]
    assert np.max(np.abs(_interior(out) / _interior(x) ** (j - 2))) <= 1e-5


def test_bandwidth(geom):
    assert assemble_laplacian(geom).bandwidth() == 3
    assert assemble_bilaplacian(geom).bandwidth() == 5


@pytest.mark.parametrize("bc", list(OuterBC))
def test_symmetric_in_volume_inner_product(geom, warped, bc):
    for g in (geom, warped):
        W = sp.diags(g.volume_weights())
        for m in (0, 1, 5):
            A = (W @ assemble_laplacian(g, bc).block(m)).toarray()
            assert np.max(np.abs(A - A.T)) <= 1e-12 * np.max(np.abs(A))
            assert np.max(np.linalg.eigvalsh(0.5 * (A + A.T))) <= 1e-9 * np.max(np.abs(A))


def test_dirichlet_row_decoupled(geom):
    b = assemble_laplacian(geom, OuterBC.DIRICHLET).block(0).toarray()
    assert b[0, 1] == 0 and b[1, 0] == 0


def test_window_and_grid_checks(circle8):
    with pytest.raises(ValidationError):
        assemble_laplacian(ConeGeometry(circle8, RadialGrid(64, 1e-3), gamma=-1.0))
    with pytest.raises(ValidationError):
        assemble_laplacian(ConeGeometry(circle8, RadialGrid(8, 1e-3)))
    with pytest.raises(ValidationError):
        ConeGeometry(circle8, RadialGrid(32, 1e-3), WarpProfile((-2.0,)))


def test_model_equals_straight(geom, warped):
    a = model_cone_operator(warped).to_dense()
    b = assemble_laplacian(geom).to_dense()
    assert np.array_equal(a, b)


def test_interpolant(geom, warped):
    for eps in (1.0, 0.3):
        l_eps, B = assemble_interpolant(geom, eps)
        assert B.to_sparse().nnz == 0 or abs(B.to_sparse()).max() == 0
    L = assemble_laplacian(warped)
    l_eps, B = assemble_interpolant(warped, 0.2)
    assert np.allclose((l_eps + B).to_dense(), L.to_dense(), rtol=0, atol=1e-9 * abs(L.to_sparse()).max())
    rows = np.unique(B.block(0).nonzero()[0])
    assert np.all(warped.grid.x[rows] < 0.2 * 0.5)
    with pytest.raises(ValidationError):
        assemble_interpolant(warped, 0.0)


def test_perturbation_norm_scaling(warped):
    g = warped.with_grid(RadialGrid(96, 1e-4))
    norms = [perturbation_norm(g, e).value for e in (0.4, 0.2, 0.1)]
    ratios = np.array(norms[:-1]) / np.array(norms[1:])
    assert np.all((ratios > 1.8) & (ratios < 2.2))
    assert perturbation_norm(g.straight(), 0.2).value == 0.0
    with pytest.raises(ValidationError):
        perturbation_norm(g, 0.2, c=0.0)


def test_operator_norm_identity_and_zero(geom):
    g = geom.with_grid(RadialGrid(32, 1e-2))
    eye = tuple(sp.identity(g.grid.size, format="csr") for _ in g.spec.modes())
    op = DiscreteOperator(g, eye)
    for method in ("power", "svd"):
        assert operator_norm(op, method=method).value == pytest.approx(1.0, rel=1e-6)
        assert operator_norm(op.scale(0.0), method=method).value == 0.0
    assert operator_norm(np.diag([1.0, -3.0]), method="svd").value == pytest.approx(3.0)
    est = operator_norm(np.array([[2.0, 1.0], [0.0, 2.0]]), rtol=1e-12)
    assert est.converged and est.value == pytest.approx((1 + np.sqrt(17)) / 2, rel=1e-9)


def test_triplets_roundtrip(geom):
    L = assemble_laplacian(geom.with_grid(RadialGrid(32, 1e-2)))
    trip = L.triplets()
    assert len(trip) == L.to_sparse().nnz
    m, r, c, v = map(np.array, zip(*trip))
    n = L.geometry.grid.size
    rebuilt = sp.coo_matrix((v, (m * n + r, m * n + c)), shape=L.shape).toarray()
    assert np.array_equal(rebuilt, L.to_dense())


def test_operator_algebra(geom):
    g = geom.with_grid(RadialGrid(32, 1e-2))
    L = assemble_laplacian(g)
    u = g.field(np.random.default_rng(1).standard_normal((g.spec.n_modes, g.grid.size)))
    assert np.allclose(L.shift(2.0).apply(u).values, L.apply(u).values + 2 * u.values)
    assert np.allclose(L.compose(L).apply(u).values, L.apply(L.apply(u)).values)
    assert np.allclose((L - L.scale(0.5)).apply(u).values, 0.5 * L.apply(u).values)


def test_gradient_form(geom):
    x = geom.grid.x
    radial = geom.field()
    radial.values[0] = x
    g = gradient_form(radial, radial, geom)
    assert np.max(np.abs(g.values[0] - 1)) <= 1e-6 and np.max(np.abs(g.values[1:])) <= 1e-6
    lin = geom.field()
    lin.values[mode_index(geom.spec, "1c")] = x  # x cos(theta)
    g = gradient_form(lin, lin, geom)
    assert np.max(np.abs(g.values[0] - 1)) <= 1e-6 and np.max(np.abs(g.values[1:])) <= 1e-6
    with pytest.raises(UnsupportedError):
        sph = ConeGeometry(CrossSectionSpec.sphere(2), RadialGrid(32, 1e-2))
        gradient_form(sph.field(), sph.field(), sph)


def test_gradient_form_warped(warped):
    # angular part is divided by f
    x = warped.grid.x
    u = warped.field()
    u.values[mode_index(warped.spec, "1c")] = x
    g = gradient_form(u, u, warped)
    f = 1 + 0.5 * x
    # |grad|^2 = cos^2 + sin^2 / f; the mean over theta is (1 + 1/f) / 2
    assert np.max(np.abs(g.values[0] - 0.5 * (1 + 1 / f))) <= 1e-6


@given(st.floats(-2, 2), st.floats(-1, 1), st.floats(-1, 1))
def test_decompose_roundtrip(c0, a, b):
    spec = CrossSectionSpec.circle(4)
    geo = ConeGeometry(spec, RadialGrid(64, 1e-3), gamma=-0.5)
    basis, _ = bilaplacian_domain_asymptotics(spec, -0.5)
    coeffs = np.zeros(len(basis))
    coeffs[0], coeffs[-1] = a, b
    exact = AugmentedField(geo.field(), basis, coeffs, c0).evaluate()
    dec = AugmentedField.decompose(exact, basis)
    assert dec.constant == pytest.approx(c0, abs=1e-9)
    assert np.allclose(dec.coeffs, coeffs, atol=1e-8)
    assert np.allclose(dec.evaluate().values, exact.values, atol=1e-12)
    assert np.all(np.abs(dec.grid_part.values[:, -1]) <= 1e-12)


def test_augmented_validation(geom):
    with pytest.raises(ValidationError):
        AugmentedField(geom.field(), (), np.ones(2))
