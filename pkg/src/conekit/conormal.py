"""Conormal-symbol data of the cone Laplacian and bilaplacian.

Roots, weight windows, poles and asymptotics spaces are computed with exact
rational arithmetic whenever the cross-section eigenvalues are rational and
the discriminants are perfect squares (always the case for the circle and
the sphere); otherwise floats are used.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from fractions import Fraction

from .cross_section import CrossSectionSpec, eigen_data
from .errors import PoleProximityError, ValidationError

LINE_TOL = 1e-9
POLE_TOL = 1e-9


class OperatorKind(str, enum.Enum):
    LAPLACIAN = "laplacian"
    BILAPLACIAN = "bilaplacian"


class PoleSource(str, enum.Enum):
    FIRST = "first"  # z = q_j^{+/-}
    SHIFTED = "shifted"  # z = q_j^{+/-} - 2
    BOTH = "both"


@dataclass(frozen=True)
class IndicialRoots:
    j: int
    q_minus: float
    q_plus: float
    is_double: bool
    exact: bool = False

    @property
    def roots(self) -> tuple[float, float]:
        return (self.q_minus, self.q_plus)

    @property
    def decay_exponent(self) -> float:
        """Exponent ``a >= 0`` of the bounded homogeneous solution ``x^a e(y)``."""
        return -self.q_minus


@dataclass(frozen=True)
class WeightWindow:
    gamma_min: float
    gamma_max: float
    eps_bar: float

    def contains(self, gamma: float) -> bool:
        return self.gamma_min < gamma < self.gamma_max


@dataclass(frozen=True)
class PoleDatum:
    rho: float
    order: int
    j: int
    source: PoleSource


@dataclass(frozen=True)
class SingularFunction:
    """``x^{-rho} log^k(x) omega(x) e(y)`` for one eigenbranch ``e``."""

    rho: float
    log_power: int
    j: int
    branch: int

    @property
    def exponent(self) -> float:
        """Power of ``x``, i.e. ``-rho``."""
        return -self.rho


@dataclass(frozen=True)
class DomainSpec:
    operator: OperatorKind
    s: float
    gamma: float
    mu: int
    singular_basis: tuple
    include_constants: bool = True
    poles: tuple = ()


def _sqrt_exact(d: Fraction):
    num, den = d.numerator, d.denominator
    rn, rd = math.isqrt(num), math.isqrt(den)
    if rn * rn == num and rd * rd == den:
        return Fraction(rn, rd)
    return None


def _roots_exact(n: int, lam):
    """Exact roots as Fractions when possible, else floats; plus an exactness flag."""
    half = Fraction(n - 1, 2)
    if isinstance(lam, Fraction):
        r = _sqrt_exact(half * half - lam)
        if r is not None:
            return half - r, half + r, True
    disc = float(half) ** 2 - float(lam)
    r = math.sqrt(disc)
    return float(half) - r, float(half) + r, False


def indicial_roots(n: int, lam, j: int = 0) -> IndicialRoots:
    """Roots of ``q^2 - (n-1) q + lam = 0`` (the radial indicial equation).

    >>> indicial_roots(1, -1).roots
    (-1.0, 1.0)
    """
    if lam > 0:
        raise ValidationError(f"eigenvalue {lam} must be <= 0")
    lam = Fraction(lam) if isinstance(lam, int) else lam
    qm, qp, exact = _roots_exact(n, lam)
    return IndicialRoots(j, float(qm), float(qp), qm == qp, exact)


def root_table(spec: CrossSectionSpec) -> list[IndicialRoots]:
    return [indicial_roots(spec.n, lam, j) for j, lam in enumerate(spec.eigenvalues)]


def weight_window(n: int, lam_1) -> WeightWindow:
    """Admissible weights ``(n-3)/2 < gamma < min((n-3)/2 + eps_bar, (n+1)/2)``."""
    if lam_1 >= 0:
        raise ValidationError(f"second eigenvalue {lam_1} must be negative")
    lam_1 = Fraction(lam_1) if isinstance(lam_1, int) else lam_1
    qm, _, _ = _roots_exact(n, lam_1)
    eps_bar = -qm  # -(n-1)/2 + sqrt(((n-1)/2)^2 - lam_1)
    lo = Fraction(n - 3, 2)
    hi = min(lo + eps_bar, Fraction(n + 1, 2)) if isinstance(eps_bar, Fraction) else min(
        float(lo) + eps_bar, (n + 1) / 2
    )
    return WeightWindow(float(lo), float(hi), float(eps_bar))


def spec_window(spec: CrossSectionSpec) -> WeightWindow:
    if spec.j_max < 2:
        raise ValidationError("weight window needs at least two eigenvalues (j_max >= 2)")
    return weight_window(spec.n, spec.eigenvalues[1])


def _exact_roots_by_mode(spec: CrossSectionSpec):
    out = []
    for j, lam in enumerate(spec.eigenvalues):
        qm, qp, _ = _roots_exact(spec.n, lam)
        out.append((j, qm, qp))
    return out


def _factor_roots(kind: OperatorKind, qm, qp):
    """Linear factors of the conormal-inverse denominator for one mode."""
    if kind is OperatorKind.LAPLACIAN:
        return [(qm, PoleSource.FIRST), (qp, PoleSource.FIRST)]
    return [
        (qm, PoleSource.FIRST),
        (qp, PoleSource.FIRST),
        (qm - 2, PoleSource.SHIFTED),
        (qp - 2, PoleSource.SHIFTED),
    ]


def _close(a, b, tol=POLE_TOL) -> bool:
    if isinstance(a, Fraction) and isinstance(b, Fraction):
        return a == b
    return abs(float(a) - float(b)) <= tol


def mode_poles(kind: OperatorKind, j: int, qm, qp) -> list[PoleDatum]:
    """Distinct poles of one mode with orders from repeated linear factors."""
    groups: list[list] = []
    for z, src in _factor_roots(kind, qm, qp):
        for g in groups:
            if _close(g[0][0], z):
                g.append((z, src))
                break
        else:
            groups.append([(z, src)])
    poles = []
    for g in groups:
        sources = {src for _, src in g}
        source = sources.pop() if len(sources) == 1 else PoleSource.BOTH
        poles.append(PoleDatum(float(g[0][0]), len(g), j, source))
    return sorted(poles, key=lambda p: p.rho)


def conormal_inverse_eval(
    z: complex, spec: CrossSectionSpec, kind: OperatorKind = OperatorKind.LAPLACIAN
) -> list[complex]:
    """Per-mode scalar value of the inverted conormal symbol at ``z``.

    Laplacian: ``1/((z - q^+)(z - q^-))``; bilaplacian additionally divides by
    ``(z + 2 - q^+)(z + 2 - q^-)``.
    """
    kind = OperatorKind(kind)
    out = []
    for j, qm, qp in _exact_roots_by_mode(spec):
        denom = 1.0 + 0j
        for root, _ in _factor_roots(kind, qm, qp):
            if abs(z - float(root)) <= POLE_TOL:
                pole = next(p for p in mode_poles(kind, j, qm, qp) if _close(p.rho, root))
                raise PoleProximityError(f"z={z} is within {POLE_TOL} of a pole at {float(root)} (mode {j})", pole)
            denom *= z - float(root)
        out.append(1.0 / denom)
    return out


def _check_line(spec: CrossSectionSpec, gamma: float) -> None:
    line = spec.dim / 2 - gamma
    for j, qm, qp in _exact_roots_by_mode(spec):
        for q in (qm, qp):
            if abs(float(q) - line) <= LINE_TOL:
                raise ValidationError(
                    f"conormal symbol not invertible on Re z = {line:g}: root q={float(q):g} of mode {j}"
                )


def _check_gamma(spec: CrossSectionSpec, gamma: float) -> WeightWindow:
    win = spec_window(spec)
    if not win.contains(gamma):
        raise ValidationError(
            f"gamma={gamma:g} outside the weight window ({win.gamma_min:g}, {win.gamma_max:g})"
        )
    _check_line(spec, gamma)
    return win


def _branches(spec: CrossSectionSpec, j: int) -> range:
    return range(spec.multiplicities[j])


def laplacian_asymptotics(spec: CrossSectionSpec, gamma: float) -> list[SingularFunction]:
    """Singular functions spanning the maximal-minus-minimal domain of the Laplacian.

    Exponents ``q`` of ``x^{-q}`` lie in ``(dim/2 - gamma - 2, dim/2 - gamma)``.
    """
    _check_gamma(spec, gamma)
    hi = Fraction(spec.dim, 2) - _frac(gamma)
    lo = hi - 2
    out = []
    for j, qm, qp in _exact_roots_by_mode(spec):
        for pole in mode_poles(OperatorKind.LAPLACIAN, j, qm, qp):
            if _inside(pole.rho, lo, hi):
                for b in _branches(spec, j):
                    for k in range(pole.order):
                        out.append(SingularFunction(pole.rho, k, j, b))
    return sorted(out, key=lambda f: (f.rho, f.j, f.branch, f.log_power))


def _frac(v):
    try:
        return Fraction(v).limit_denominator(10**9) if Fraction(v).denominator > 10**9 else Fraction(v)
    except (TypeError, ValueError):
        return v


def _inside(rho, lo, hi) -> bool:
    return float(lo) + LINE_TOL < float(rho) < float(hi) - LINE_TOL


def bilaplacian_window(spec: CrossSectionSpec, gamma: float) -> tuple[float, float]:
    hi = spec.dim / 2 - gamma - 2
    return hi - 2, hi


def bilaplacian_domain_asymptotics(
    spec: CrossSectionSpec, gamma: float
) -> tuple[list[SingularFunction], list[PoleDatum]]:
    """Poles of the bilaplacian conormal inverse inside ``(dim/2-gamma-4, dim/2-gamma-2)``.

    Each pole ``rho`` of order ``k`` contributes ``x^{-rho} omega e`` and, for
    ``k = 2``, also ``x^{-rho} log(x) omega e`` for every branch ``e``.
    """
    _check_gamma(spec, gamma)
    lo, hi = bilaplacian_window(spec, gamma)
    basis, poles = [], []
    for j, qm, qp in _exact_roots_by_mode(spec):
        for pole in mode_poles(OperatorKind.BILAPLACIAN, j, qm, qp):
            if abs(pole.rho - lo) <= LINE_TOL or abs(pole.rho - hi) <= LINE_TOL:
                raise ValidationError(f"pole rho={pole.rho:g} of mode {j} lies on the window endpoint")
            if lo < pole.rho < hi:
                poles.append(pole)
                for b in _branches(spec, j):
                    for k in range(pole.order):
                        basis.append(SingularFunction(pole.rho, k, j, b))
    poles.sort(key=lambda p: (p.rho, p.j))
    basis.sort(key=lambda f: (f.rho, f.j, f.branch, f.log_power))
    return basis, poles


def domain_spec(
    kind: OperatorKind, s: float, gamma: float, spec: CrossSectionSpec
) -> DomainSpec:
    """Domain descriptor for the chosen closed extension.

    The Laplacian domain is ``H^{s+2,gamma+2} + C`` (no singular functions);
    the bilaplacian adds the singular functions of
    :func:`bilaplacian_domain_asymptotics`.
    """
    kind = OperatorKind(kind)
    if s < 0:
        raise ValidationError("smoothness s must be >= 0")
    if kind is OperatorKind.LAPLACIAN:
        _check_gamma(spec, gamma)
        return DomainSpec(kind, s, gamma, 2, (), True)
    basis, poles = bilaplacian_domain_asymptotics(spec, gamma)
    return DomainSpec(kind, s, gamma, 4, tuple(basis), True, tuple(poles))


def brute_force_poles(
    spec: CrossSectionSpec, lo: float, hi: float, kind: OperatorKind = OperatorKind.BILAPLACIAN
) -> list[tuple[float, int]]:
    """Set of ``(rho, j)`` pairs from a plain scan of all shifted roots; test oracle."""
    shifts = (0,) if kind is OperatorKind.LAPLACIAN else (0, 2)
    found = set()
    for j, lam, _ in eigen_data(spec):
        h = (spec.n - 1) / 2
        r = math.sqrt(h * h - lam)
        for q in (h - r, h + r):
            for sft in shifts:
                z = q - sft
                if lo < z < hi:
                    found.add((round(z, 9), j))
    return sorted(found)


def report(spec: CrossSectionSpec, gamma: float) -> dict:
    """JSON-ready summary: weight window, roots, bilaplacian poles and basis."""
    win = _check_gamma(spec, gamma)
    basis, poles = bilaplacian_domain_asymptotics(spec, gamma)
    lo, hi = bilaplacian_window(spec, gamma)
    return {
        "window": {"gamma_min": win.gamma_min, "gamma_max": win.gamma_max, "eps_bar": win.eps_bar},
        "gamma": gamma,
        "bilaplacian_window": [lo, hi],
        "roots": [
            {"j": r.j, "eigenvalue": float(spec.eigenvalues[r.j]), "q_minus": r.q_minus,
             "q_plus": r.q_plus, "double": r.is_double}
            for r in root_table(spec)
        ],
        "poles": [{"rho": p.rho, "order": p.order, "j": p.j, "source": p.source.value} for p in poles],
        "basis": [
            {"rho": f.rho, "log_power": f.log_power, "j": f.j, "branch": f.branch} for f in basis
        ],
    }
