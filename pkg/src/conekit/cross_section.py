"""Spectral data of the cone cross-section and the conformal warp profile.

All cone operators in this package act on functions ``u(x, y)`` expanded in
eigenfunctions of the cross-section Laplacian, which reduces them to
decoupled radial problems, one per eigenbranch.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .errors import DomainError, UnsupportedError, ValidationError


class Kind(str, enum.Enum):
    CIRCLE = "circle"
    SPHERE = "sphere"
    CUSTOM = "custom"


@dataclass(frozen=True)
class Mode:
    """One eigenbranch ``e(y)`` of the cross-section Laplacian.

    ``j`` is the index of the distinct eigenvalue, ``branch`` enumerates the
    eigenspace. For the circle, branch 0 is ``cos(j theta)`` and branch 1 is
    ``sin(j theta)``. ``weight`` is ``int |e(y)|^2 dy``.
    """

    j: int
    eigenvalue: float
    branch: int
    weight: float
    label: str


@dataclass(frozen=True)
class CrossSectionSpec:
    """Eigenvalues ``0 = lam_0 > lam_1 > ...`` of ``Delta_{h(0)}``.

    Use :meth:`circle`, :meth:`sphere` or :meth:`custom` to build one; the
    constructors validate the invariants.
    """

    kind: Kind
    n: int
    eigenvalues: tuple
    multiplicities: tuple
    j_max: int
    volume: float = 1.0

    def __post_init__(self):
        _validate_spectrum(self.n, self.eigenvalues, self.multiplicities, self.j_max)

    @classmethod
    def circle(cls, j_max: int) -> "CrossSectionSpec":
        if j_max < 1:
            raise ValidationError("j_max must be >= 1")
        eig = tuple(Fraction(-j * j) for j in range(j_max))
        mult = tuple(1 if j == 0 else 2 for j in range(j_max))
        return cls(Kind.CIRCLE, 1, eig, mult, j_max, 2 * np.pi)

    @classmethod
    def sphere(cls, j_max: int) -> "CrossSectionSpec":
        if j_max < 1:
            raise ValidationError("j_max must be >= 1")
        eig = tuple(Fraction(-l * (l + 1)) for l in range(j_max))
        mult = tuple(2 * l + 1 for l in range(j_max))
        return cls(Kind.SPHERE, 2, eig, mult, j_max, 4 * np.pi)

    @classmethod
    def custom(
        cls,
        n: int,
        eigenvalues: Sequence[float],
        multiplicities: Sequence[int] | None = None,
        j_max: int | None = None,
        volume: float = 1.0,
    ) -> "CrossSectionSpec":
        eig = tuple(_as_number(v) for v in eigenvalues)
        if multiplicities is None:
            multiplicities = [1] * len(eig)
        mult = tuple(int(m) for m in multiplicities)
        if len(mult) != len(eig):
            raise ValidationError("eigenvalues and multiplicities differ in length")
        if j_max is None:
            j_max = len(eig)
        if j_max > len(eig):
            raise ValidationError(f"j_max={j_max} exceeds the {len(eig)} supplied eigenvalues")
        return cls(Kind.CUSTOM, int(n), eig[:j_max], mult[:j_max], int(j_max), float(volume))

    @property
    def dim(self) -> int:
        """Dimension of the cone ``B`` itself, ``n + 1``."""
        return self.n + 1

    @property
    def exact(self) -> bool:
        return all(isinstance(v, Fraction) for v in self.eigenvalues)

    def modes(self) -> list[Mode]:
        """Eigenbranches in ascending ``(j, branch)`` order."""
        out = []
        for j, (lam, mult) in enumerate(zip(self.eigenvalues, self.multiplicities)):
            for b in range(mult):
                out.append(Mode(j, float(lam), b, self._branch_weight(j), self._label(j, b)))
        return out

    @property
    def n_modes(self) -> int:
        return int(sum(self.multiplicities))

    def _branch_weight(self, j: int) -> float:
        if self.kind is Kind.CIRCLE:
            return 2 * np.pi if j == 0 else np.pi
        # sphere/custom branches are normalised to mean square 1, like e_0 = 1
        return float(self.volume)

    def _label(self, j: int, b: int) -> str:
        if self.kind is Kind.CIRCLE:
            return "0" if j == 0 else f"{j}{'cs'[b]}"
        return f"{j}.{b}"


def _as_number(v):
    if isinstance(v, (int, Fraction)):
        return Fraction(v)
    v = float(v)
    if v.is_integer():
        return Fraction(int(v))
    return v


def _validate_spectrum(n, eigenvalues, multiplicities, j_max):
    if n < 1:
        raise ValidationError("cross-section dimension n must be >= 1")
    if j_max < 1 or len(eigenvalues) != j_max or len(multiplicities) != j_max:
        raise ValidationError("expected exactly j_max eigenvalues and multiplicities")
    if eigenvalues[0] != 0:
        raise ValidationError("eigenvalue at index 0 must be 0 (constants)")
    if multiplicities[0] != 1:
        raise ValidationError("eigenvalue 0 must have multiplicity 1")
    for i, (lam, m) in enumerate(zip(eigenvalues, multiplicities)):
        if lam > 0:
            raise ValidationError(f"eigenvalue at index {i} is positive")
        if m < 1:
            raise ValidationError(f"multiplicity at index {i} must be positive")
        if i and not lam < eigenvalues[i - 1]:
            raise ValidationError(f"eigenvalues not strictly decreasing at index {i}")


def eigen_data(spec: CrossSectionSpec) -> list[tuple[int, float, int]]:
    """Return ``(j, lambda_j, multiplicity)`` for the retained eigenvalues.

    >>> eigen_data(CrossSectionSpec.circle(3))
    [(0, 0.0, 1), (1, -1.0, 2), (2, -4.0, 2)]
    """
    return [
        (j, float(lam), int(m))
        for j, (lam, m) in enumerate(zip(spec.eigenvalues, spec.multiplicities))
    ]


@dataclass(frozen=True)
class WarpProfile:
    """Conformal warp ``h(x) = f(x) h(0)`` with ``f(x) = 1 + sum_k a_k x^k``.

    An empty coefficient list is the straight cone.
    """

    coeffs: tuple = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "coeffs", tuple(float(a) for a in self.coeffs))
        if not np.all(np.isfinite(self.coeffs)):
            raise ValidationError("warp coefficients must be finite")

    @classmethod
    def straight(cls) -> "WarpProfile":
        return cls(())

    @property
    def is_straight(self) -> bool:
        return not any(self.coeffs)

    def f(self, x):
        x = np.asarray(x, dtype=float)
        # Horner on [a_m, ..., a_1, 1]
        poly = np.array((1.0,) + self.coeffs)[::-1]
        return np.polyval(poly, x)

    def df(self, x):
        x = np.asarray(x, dtype=float)
        if self.is_straight:
            return np.zeros_like(x)
        dpoly = np.array([(k + 1) * a for k, a in enumerate(self.coeffs)])[::-1]
        return np.polyval(dpoly, x)

    def check_positive(self, x_nodes) -> None:
        fx = self.f(x_nodes)
        if np.any(fx <= 0):
            bad = np.asarray(x_nodes)[np.argmax(fx <= 0)]
            raise DomainError(f"warp f(x) <= 0 at x={bad:.6g}")

    def mean_curvature_term(self, x, n: int):
        """``H(x) = n x f'(x) / (2 f(x))``."""
        x = np.asarray(x, dtype=float)
        return n * x * self.df(x) / (2.0 * self.f(x))


def warp_eval(profile: WarpProfile, x: float, n: int) -> tuple[float, float, float]:
    """Evaluate ``(f(x), f'(x), H(x))`` for ``x`` in ``(0, 1]``."""
    if not 0 < x <= 1:
        raise DomainError(f"x={x} outside (0, 1]")
    fx = float(profile.f(x))
    if fx <= 0:
        raise DomainError(f"warp f(x)={fx:.6g} <= 0 at x={x}")
    dfx = float(profile.df(x))
    return fx, dfx, n * x * dfx / (2.0 * fx)


def _angular_grid(m: int) -> np.ndarray:
    return 2 * np.pi * np.arange(m) / m


def default_angular_size(j_max: int) -> int:
    """Grid size that integrates products of four retained modes exactly."""
    return max(2 * j_max + 1, 4 * (j_max - 1) + 1)


class CircleTransform:
    """Real trigonometric synthesis/analysis on an equispaced angular grid.

    Coefficient layout follows :meth:`CrossSectionSpec.modes`:
    ``[c_0, a_1, b_1, a_2, b_2, ...]`` for
    ``c_0 + sum_j a_j cos(j theta) + b_j sin(j theta)``.
    """

    def __init__(self, spec: CrossSectionSpec, size: int | None = None):
        if spec.kind is not Kind.CIRCLE:
            raise UnsupportedError(f"pointwise transforms are not available for {spec.kind.value}")
        self.spec = spec
        self.size = default_angular_size(spec.j_max) if size is None else int(size)
        if self.size < 2 * spec.j_max + 1:
            raise ValidationError(f"angular grid needs at least {2 * spec.j_max + 1} points")
        self.theta = _angular_grid(self.size)

    def synthesize(self, coeffs: np.ndarray) -> np.ndarray:
        """Modes along axis 0 -> angular samples along axis 0."""
        coeffs = np.asarray(coeffs, dtype=float)
        m = self.size
        spec = np.zeros((m // 2 + 1,) + coeffs.shape[1:], dtype=complex)
        spec[0] = coeffs[0] * m
        for j in range(1, self.spec.j_max):
            a, b = coeffs[2 * j - 1], coeffs[2 * j]
            spec[j] = (a - 1j * b) * (m / 2)
        return np.fft.irfft(spec, n=m, axis=0)

    def analyze(self, values: np.ndarray) -> np.ndarray:
        """Angular samples along axis 0 -> retained modes along axis 0."""
        values = np.asarray(values, dtype=float)
        m = self.size
        spec = np.fft.rfft(values, axis=0)
        out = np.empty((self.spec.n_modes,) + values.shape[1:])
        out[0] = spec[0].real / m
        for j in range(1, self.spec.j_max):
            out[2 * j - 1] = spec[j].real * (2.0 / m)
            out[2 * j] = -spec[j].imag * (2.0 / m)
        return out

    def derivative(self, coeffs: np.ndarray, order: int = 1) -> np.ndarray:
        """Coefficients of ``d^order/dtheta^order``."""
        out = np.asarray(coeffs, dtype=float).copy()
        for _ in range(order):
            prev = out.copy()
            out[0] = 0.0
            for j in range(1, self.spec.j_max):
                a, b = prev[2 * j - 1], prev[2 * j]
                out[2 * j - 1] = j * b
                out[2 * j] = -j * a
        return out

    def quadrature_weight(self) -> float:
        return 2 * np.pi / self.size


def synthesize(spec: CrossSectionSpec, coeffs, size: int | None = None) -> np.ndarray:
    return CircleTransform(spec, size).synthesize(coeffs)


def analyze(spec: CrossSectionSpec, values, size: int | None = None) -> np.ndarray:
    return CircleTransform(spec, size).analyze(values)
