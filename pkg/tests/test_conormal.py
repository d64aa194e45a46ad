from collections import Counter
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conekit.conormal import (OperatorKind, PoleSource, bilaplacian_domain_asymptotics, brute_force_poles,
                              conormal_inverse_eval, domain_spec, indicial_roots, laplacian_asymptotics, report,
                              weight_window)
from conekit.cross_section import CrossSectionSpec
from conekit.errors import PoleProximityError, ValidationError


def _quartic_oracle(spec, lo, hi):
    """Pole table from multiplicities of the four linear factors, integer arithmetic."""
    out = {}
    for j, lam in enumerate(spec.eigenvalues):
        lam = int(lam)
        if spec.n == 1:
            roots = [-j, j]
        else:  # sphere: q^2 - q - l(l+1) = 0
            roots = [-j, j + 1]
        factors = Counter(roots + [r - 2 for r in roots])
        for rho, k in factors.items():
            if lo < rho < hi:
                out[(rho, j)] = k
    return out


def test_indicial_examples():
    r = indicial_roots(1, 0)
    assert r.roots == (0.0, 0.0) and r.is_double
    assert indicial_roots(1, -1).roots == (-1.0, 1.0)
    assert indicial_roots(2, -2).roots == (-1.0, 2.0)
    assert not indicial_roots(2, -2).is_double


def test_indicial_rejects_positive():
    with pytest.raises(ValidationError):
        indicial_roots(1, 0.5)


@given(st.integers(1, 6), st.floats(-50, 0))
def test_root_residual_and_ordering(n, lam):
    r = indicial_roots(n, lam)
    for q in r.roots:
        assert abs(q * q - (n - 1) * q + lam) <= 1e-12 * max(1.0, abs(lam), q * q)
    assert r.q_minus <= (n - 1) / 2 <= r.q_plus
    assert r.is_double == (n == 1 and lam == 0)


@pytest.mark.parametrize("n,lam1,window,eps", [
    (1, -1, (-1.0, 0.0), 1.0),
    (2, -2, (-0.5, 0.5), 1.0),
    (3, -3, (0.0, 1.0), 1.0),
])
def test_weight_window_examples(n, lam1, window, eps):
    w = weight_window(n, lam1)
    assert (w.gamma_min, w.gamma_max) == window and w.eps_bar == eps


def test_weight_window_caps_at_half_dim():
    # large spectral gap: eps_bar exceeds 2, window capped at (n+1)/2
    w = weight_window(1, -9)
    assert w.eps_bar == 3 and w.gamma_max == 1.0


def test_weight_window_rejects():
    with pytest.raises(ValidationError):
        weight_window(1, 0)


def test_inverse_eval_examples():
    c = CrossSectionSpec.circle(2)
    assert conormal_inverse_eval(2, c)[1] == pytest.approx(1 / 3, abs=1e-15)
    c1 = CrossSectionSpec.circle(1)
    assert conormal_inverse_eval(1, c1, OperatorKind.BILAPLACIAN)[0] == pytest.approx(1 / 9, abs=1e-15)


def test_inverse_eval_pole():
    c = CrossSectionSpec.circle(3)
    with pytest.raises(PoleProximityError) as err:
        conormal_inverse_eval(1 + 1e-12, c)
    assert err.value.pole.rho == 1.0 and err.value.pole.j == 1


@pytest.mark.parametrize("rho,order,kind", [(-1.0, 2, OperatorKind.BILAPLACIAN), (1.0, 1, OperatorKind.LAPLACIAN),
                                            (0.0, 2, OperatorKind.LAPLACIAN), (-2.0, 2, OperatorKind.BILAPLACIAN)])
def test_pole_order_duality(rho, order, kind):
    c = CrossSectionSpec.circle(3)
    j = 1 if rho in (-1.0, 1.0) else 0
    ratios = [abs(conormal_inverse_eval(rho + d, c, kind)[j]) * d**order for d in (1e-3, 1e-4, 1e-5)]
    assert max(ratios) / min(ratios) <= 2


def test_laplacian_asymptotics_circle():
    basis = laplacian_asymptotics(CrossSectionSpec.circle(4), -0.5)
    got = sorted({(f.rho, f.j, f.log_power) for f in basis})
    assert got == [(0.0, 0, 0), (0.0, 0, 1), (1.0, 1, 0)]
    assert sum(f.rho == 1.0 for f in basis) == 2  # cos and sin branches


def test_laplacian_asymptotics_sphere():
    basis = laplacian_asymptotics(CrossSectionSpec.sphere(3), 0.0)
    assert sorted({(f.rho, f.j) for f in basis}) == [(0.0, 0), (1.0, 0)]


def test_line_noninvertible():
    # custom n=1 spectrum with a root at 1.25 = (n+1)/2 - gamma for gamma=-0.25
    spec = CrossSectionSpec.custom(1, [0, -1.5625, -4])
    with pytest.raises(ValidationError, match="not invertible"):
        laplacian_asymptotics(spec, -0.25)


def test_bilaplacian_circle_table():
    basis, poles = bilaplacian_domain_asymptotics(CrossSectionSpec.circle(4), -0.5)
    table = {(p.rho, p.j): p.order for p in poles}
    assert table == {(-1.0, 1): 2, (-2.0, 0): 2, (-2.0, 2): 1}
    assert table == _quartic_oracle(CrossSectionSpec.circle(4), -2.5, -0.5)
    src = {(p.rho, p.j): p.source for p in poles}
    assert src[(-1.0, 1)] is PoleSource.BOTH and src[(-2.0, 0)] is PoleSource.SHIFTED
    assert src[(-2.0, 2)] is PoleSource.FIRST
    # log terms only at order-2 poles; both branches of modes 1 and 2
    assert sorted((f.rho, f.j, f.branch, f.log_power) for f in basis) == [
        (-2.0, 0, 0, 0), (-2.0, 0, 0, 1), (-2.0, 2, 0, 0), (-2.0, 2, 1, 0),
        (-1.0, 1, 0, 0), (-1.0, 1, 0, 1), (-1.0, 1, 1, 0), (-1.0, 1, 1, 1)]


def test_bilaplacian_sphere_table():
    sph = CrossSectionSpec.sphere(5)
    _, poles = bilaplacian_domain_asymptotics(sph, 0.0)
    table = {(p.rho, p.j): p.order for p in poles}
    assert table == _quartic_oracle(sph, -2.5, -0.5)
    assert table == {(-2.0, 0): 1, (-1.0, 0): 1, (-1.0, 1): 1, (-2.0, 2): 1}


@pytest.mark.parametrize("spec,gamma", [(CrossSectionSpec.circle(6), -0.5), (CrossSectionSpec.circle(6), -0.2),
                                        (CrossSectionSpec.sphere(6), 0.0), (CrossSectionSpec.sphere(6), 0.3)])
def test_bilaplacian_matches_brute_force(spec, gamma):
    _, poles = bilaplacian_domain_asymptotics(spec, gamma)
    lo, hi = spec.dim / 2 - gamma - 4, spec.dim / 2 - gamma - 2
    assert sorted((p.rho, p.j) for p in poles) == brute_force_poles(spec, lo, hi)
    assert all(float(p.rho).is_integer() for p in poles)


def test_window_monotonicity():
    spec = CrossSectionSpec.circle(6)
    prev_lo = None
    for gamma in np.linspace(-0.95, -0.05, 10):
        _, poles = bilaplacian_domain_asymptotics(spec, float(gamma))
        lo = spec.dim / 2 - gamma - 4
        assert all(p.rho > lo for p in poles)
        if prev_lo is not None:
            assert lo < prev_lo
        prev_lo = lo


def test_endpoint_pole_rejected():
    # mode 2 has roots +-1.5; the shifted root -0.5 sits on the upper endpoint for gamma=-0.5
    spec = CrossSectionSpec.custom(1, [0, -1, -2.25], [1, 2, 2])
    with pytest.raises(ValidationError, match="endpoint|invertible"):
        bilaplacian_domain_asymptotics(spec, -0.5)


def test_domain_spec():
    c = CrossSectionSpec.circle(4)
    d = domain_spec(OperatorKind.LAPLACIAN, 0, -0.5, c)
    assert d.singular_basis == () and d.include_constants and d.mu == 2
    b = domain_spec(OperatorKind.BILAPLACIAN, 0, -0.5, c)
    assert {f.rho for f in b.singular_basis} == {-1.0, -2.0} and b.include_constants and b.mu == 4
    assert any(f.rho == -2.0 and f.log_power == 0 and f.j == 2 for f in b.singular_basis)
    with pytest.raises(ValidationError):
        domain_spec(OperatorKind.LAPLACIAN, 0, -1.0, c)


def test_exact_arithmetic_for_builtin():
    r = indicial_roots(2, Fraction(-6))
    assert r.exact and r.roots == (-2.0, 3.0)


def test_report_keys():
    rep = report(CrossSectionSpec.circle(4), -0.5)
    assert set(rep) >= {"window", "roots", "poles", "basis"}
    assert rep["window"]["gamma_min"] == -1.0 and rep["window"]["gamma_max"] == 0.0
    assert all(isinstance(p["order"], int) for p in rep["poles"])
