import math

import numpy as np
import pytest

from conekit.ch_solver import (InitialData, apply_linearization, InitialTerm, Scheme, SignConvention, SolverConfig, diagnostics,
                               linearization, make_stepper, multiplication_matrix, nonlinearity, solve, step)
from conekit.cone_operators import ConeGeometry, assemble_laplacian
from conekit.cross_section import CircleTransform, CrossSectionSpec, WarpProfile
from conekit.errors import StepError, UnsupportedError, ValidationError
from conekit.mellin import RadialGrid

from conftest import mode_index


@pytest.fixture
def small(circle8):
    return ConeGeometry(CrossSectionSpec.circle(5), RadialGrid(48, 1e-3), WarpProfile.straight(), -0.5)


def _const(g, c):
    u = g.field()
    u.values[0] = c
    return u


def test_linearization_trivial_examples(small):
    L = assemble_laplacian(small).to_sparse()
    A0 = linearization(_const(small, 0.0), small).coupled
    A1 = linearization(_const(small, 1.0), small).coupled
    assert abs(A0 - (L @ L + L)).max() <= 1e-12 * abs(L @ L).max()
    assert abs(A1 - (L @ L - 2 * L)).max() <= 1e-12 * abs(L @ L).max()


def test_cos_coupling(small):
    v = small.field()
    v.values[mode_index(small.spec, "1c")] = 1.0
    tr = CircleTransform(small.spec)
    M = multiplication_matrix(tr.synthesize(v.values) ** 2, small, pointwise=True)
    n = small.grid.size
    modes = small.spec.modes()
    for a, ma in enumerate(modes):
        for b, mb in enumerate(modes):
            blk = M[a * n:(a + 1) * n, b * n:(b + 1) * n]
            coupled = abs(blk).max() > 0 if blk.nnz else False
            allowed = ma.branch == mb.branch and abs(ma.j - mb.j) in (0, 2) or ma.j + mb.j == 2
            if coupled:
                assert allowed, (ma.label, mb.label)
    i0, i2 = mode_index(small.spec, "0"), mode_index(small.spec, "2c")
    assert abs(M[i0 * n, i2 * n]) > 0.1


def test_nonlinearity_examples(small):
    g = small.with_grid(RadialGrid(256, 1e-4))
    x = g.grid.x
    u = g.field()
    u.values[0] = x
    plus = nonlinearity(u, g).values
    minus = nonlinearity(u, g, SignConvention.MINUS).values
    assert np.max(np.abs(plus[0] - 6 * x)) <= 1e-6
    assert np.array_equal(minus, -plus)
    assert np.max(np.abs(plus[1:])) <= 1e-9
    assert np.max(np.abs(nonlinearity(_const(g, 0.7), g).values)) <= 1e-9


def test_non_circle_rejected():
    g = ConeGeometry(CrossSectionSpec.sphere(2), RadialGrid(32, 1e-2), gamma=0.0)
    with pytest.raises(UnsupportedError):
        linearization(g.field(), g)
    with pytest.raises(UnsupportedError):
        nonlinearity(g.field(), g)


def test_apply_linearization_matches_matrix(small, rng):
    u = small.field(0.3 * rng.standard_normal((small.spec.n_modes, small.grid.size)))
    v = small.field_from(lambda x, m: (m.j == 0) * 0.3 + (m.label == "1c") * 0.2 * x)
    lap = assemble_laplacian(small)
    A = linearization(v, small, lap).coupled
    L = abs(lap.to_sparse())
    scale = L @ (L @ np.abs(u.values.reshape(-1)))
    diff = apply_linearization(v, u, small, lap).values.reshape(-1) - A @ u.values.reshape(-1)
    assert np.all(np.abs(diff) <= 1e-13 * scale + 1e-13)


@pytest.mark.parametrize("warp", [(), (0.5,)])
def test_linearization_identity(circle8, rng, warp):
    # modes j <= 2 keep every product inside the retained j <= 7
    g = ConeGeometry(circle8, RadialGrid(1024, 1e-2), WarpProfile(warp), -0.5)
    lap = assemble_laplacian(g, order=6, check_window=False)
    tr = CircleTransform(g.spec)
    for _ in range(3):
        a = rng.uniform(-0.5, 0.5, 4)
        u = g.field_from(lambda xx, m: (m.j == 0) * (a[0] + a[1] * xx**2) + (m.label == "1c") * a[2] * xx
                         + (m.label == "2s") * a[3] * xx**2)
        lhs = apply_linearization(u, u, g, lap).values - nonlinearity(u, g).values
        cube = tr.analyze(tr.synthesize(u.values) ** 3)
        rhs = lap.apply(lap.apply(u).values).values + lap.apply(u.values - cube).values
        assert np.linalg.norm(lhs - rhs) <= 1e-8 * np.linalg.norm(rhs)


def test_solver_config_validation(small):
    with pytest.raises(ValidationError):
        SolverConfig(small, tau=0.0, T=1.0)
    with pytest.raises(ValidationError):
        SolverConfig(small, tau=0.1, T=0.01)
    with pytest.raises(ValidationError):
        SolverConfig(small, tau=0.1, T=1.0, S=-1)
    with pytest.raises(ValidationError):
        InitialData(0.0, [InitialTerm("9c", 1.0)]).build(small)


@pytest.mark.parametrize("scheme", list(Scheme))
@pytest.mark.parametrize("c", [0.0, 0.1, -2.5])
def test_constants_are_fixed_points(small, scheme, c):
    cfg = SolverConfig(small, 1e-3, 1e-3, scheme)
    out = step(_const(small, c), cfg).values
    assert np.max(np.abs(out - _const(small, c).values)) <= 1e-12 * max(1, abs(c) ** 3)


def test_nan_step_error(small):
    cfg = SolverConfig(small, 1e-3, 1e-3)
    u = _const(small, 0.1)
    u.values[2, 3] = np.nan
    with pytest.raises(StepError):
        step(u, cfg)


def test_single_mode_linear_regime(small):
    # u = delta * phi with L phi = nu phi: one stabilized step multiplies by
    # (1 - tau (1 + S) nu) / (1 + tau nu^2 - tau S nu)
    tau, S, delta = 1e-3, 2.0, 1e-7
    m = mode_index(small.spec, "2c")
    blk = assemble_laplacian(small).block(m).toarray()
    w, V = np.linalg.eig(blk)
    k = int(np.argsort(np.abs(w))[3])
    nu, phi = float(w[k].real), V[:, k].real
    u = small.field()
    u.values[m] = delta * phi
    out = make_stepper(SolverConfig(small, tau, tau, S=S))(u.values)[0]
    pred = (1 - tau * (1 + S) * nu) / (1 + tau * nu**2 - tau * S * nu)
    assert np.max(np.abs(out[m] - pred * u.values[m])) <= 1e-8 * np.max(np.abs(u.values[m]))


def test_mass_conserved_constant(small):
    res = solve(SolverConfig(small, 1e-3, 1e-2, initial=InitialData(0.1)))
    m0 = res.diagnostics[0].mass
    assert all(abs(d.mass - m0) <= 1e-10 * abs(m0) for d in res.diagnostics)


@pytest.mark.parametrize("warp", [(), (0.5,)])
def test_conservation_and_dissipation(circle8, warp):
    g = ConeGeometry(circle8, RadialGrid(96, 1e-4), WarpProfile(warp), -0.5)
    init = InitialData(0.1, [InitialTerm("1c", 0.5, 1.0)])
    res = solve(SolverConfig(g, 1e-4, 5e-3, initial=init, snapshot_every=10))
    assert res.status == "ok" and len(res.diagnostics) == 51
    m0 = res.diagnostics[0].mass
    assert max(abs(d.mass - m0) for d in res.diagnostics) <= 1e-10 * abs(m0) + 1e-12
    e = [d.energy for d in res.diagnostics]
    assert max(np.diff(e)) <= 1e-10
    assert [round(t, 10) for t in res.times] == [round(0.001 * k, 10) for k in range(6)]
    assert np.all(np.diff(res.times) > 0)
    with pytest.raises(ValidationError):
        res.snapshot_at(0.0042)


def test_energy_examples():
    spec = CrossSectionSpec.circle(4)
    g = ConeGeometry(spec, RadialGrid(4096, 1e-4), gamma=-0.5)
    W = g.volume_weights()
    vol = 2 * math.pi * W.sum()
    mass, e = diagnostics(_const(g, 1.0), g)
    assert mass == pytest.approx(vol, rel=1e-14) and abs(e) <= 1e-14
    assert diagnostics(_const(g, 0.0), g)[1] == pytest.approx(vol / 4, rel=1e-14)
    # u = x cos(theta): |grad u|^2 = 1; the tip closure carries the disc x < x_min
    u = g.field()
    u.values[mode_index(spec, "1c")] = g.grid.x
    xm = g.grid.x_min
    exact = math.pi / 2 + 0.25 * (3 * math.pi / 4 * (1 - xm**6) / 6 - 2 * math.pi * (1 - xm**4) / 4
                                  + 2 * math.pi * (1 - xm**2) / 2)
    assert diagnostics(u, g)[1] == pytest.approx(exact, rel=1e-6)


def test_scheme_consistency():
    # terminal distance between the two schemes halves with tau
    g = ConeGeometry(CrossSectionSpec.circle(4), RadialGrid(32, 1e-2), gamma=-0.5)
    init = InitialData(0.1, [InitialTerm("1c", 0.5, 1.0)])
    dist = []
    for tau in (1e-3, 5e-4, 2.5e-4):
        ends = [solve(SolverConfig(g, tau, 5e-3, s, initial=init, snapshot_every=10**6)).snapshots[-1].evaluate()
                for s in Scheme]
        dist.append(np.linalg.norm(ends[0].values - ends[1].values))
    ratios = np.array(dist[:-1]) / np.array(dist[1:])
    assert np.all((ratios >= 1.7) & (ratios <= 2.3)), ratios
