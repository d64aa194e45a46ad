"""Log-radial grids, fields on the cone and Mellin-Sobolev norms.

Radial functions are sampled at ``x_i = exp(-t_i)`` with ``t`` uniform, so the
totally characteristic derivative ``x d/dx = -d/dt`` is a constant
coefficient difference operator.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
from scipy.special import bernoulli

from .cross_section import CircleTransform, CrossSectionSpec, Kind, WarpProfile
from .errors import UnsupportedError, ValidationError

DEFAULT_X_MIN = 1e-4
DEFAULT_ORDER = 6


@dataclass(frozen=True)
class RadialGrid:
    """Uniform grid ``t_i = i dt`` (``i = 0..N``) with ``x_i = exp(-t_i)``."""

    N: int
    x_min: float = DEFAULT_X_MIN

    def __post_init__(self):
        if self.N < 4:
            raise ValidationError("grid needs N >= 4 intervals")
        if not 0 < self.x_min <= 0.01:
            raise ValidationError(f"x_min={self.x_min} must lie in (0, 0.01]")

    @property
    def t_max(self) -> float:
        return -np.log(self.x_min)

    @property
    def dt(self) -> float:
        return self.t_max / self.N

    @property
    def t(self) -> np.ndarray:
        return np.arange(self.N + 1) * self.dt

    @property
    def x(self) -> np.ndarray:
        x = np.exp(-self.t)
        x[0] = 1.0
        x[-1] = self.x_min
        return x

    @property
    def size(self) -> int:
        return self.N + 1

    def refined(self, factor: int = 2) -> "RadialGrid":
        return RadialGrid(self.N * factor, self.x_min)


def fd_weights(offsets, deriv: int) -> np.ndarray:
    """Finite-difference weights on integer ``offsets`` for the ``deriv``-th derivative.

    Exact for polynomials of degree ``len(offsets) - 1`` (unit spacing).
    """
    offsets = np.asarray(offsets, dtype=float)
    k = len(offsets)
    if deriv >= k:
        raise ValidationError("stencil too short for the requested derivative")
    vander = np.vander(offsets, k, increasing=True).T
    rhs = np.zeros(k)
    rhs[deriv] = float(np.prod(np.arange(1, deriv + 1)))
    return np.linalg.solve(vander, rhs)


@lru_cache(maxsize=64)
def _derivative_matrix(n_nodes: int, order: int, deriv: int = 1) -> sp.csr_matrix:
    # a direct stencil per derivative order; composing first-derivative
    # matrices loses one order per factor at the one-sided boundary rows.
    # For deriv > 1 the one-sided rows get one extra point, which keeps their
    # large error constants out of the leading term at moderate N.
    if order % 2 or order < 2:
        raise ValidationError("difference order must be an even integer >= 2")
    width = order + deriv if deriv > 1 else order + 1
    edge = width + 1 if deriv > 1 else width
    if n_nodes < edge:
        raise ValidationError(f"need at least {edge} nodes for order {order}")
    half = (width - 1) // 2
    rows, cols, vals = [], [], []
    for i in range(n_nodes):
        k = width if half <= i < n_nodes - (width - half) + 1 else edge
        start = min(max(i - half, 0), n_nodes - k)
        offs = np.arange(start, start + k) - i
        w = fd_weights(offs, deriv)
        rows.extend([i] * k)
        cols.extend(i + offs)
        vals.extend(w)
    return sp.csr_matrix((vals, (rows, cols)), shape=(n_nodes, n_nodes))


def derivative_matrix(grid: RadialGrid, order: int = DEFAULT_ORDER) -> sp.csr_matrix:
    """Sparse matrix of ``d/dt`` with the given accuracy order."""
    return _derivative_matrix(grid.size, order) / grid.dt


def euler_matrix(grid: RadialGrid, order: int = DEFAULT_ORDER, power: int = 1) -> sp.csr_matrix:
    """Sparse matrix of ``(x d/dx)^power = (-d/dt)^power``, accurate to ``order`` at every row."""
    if power == 0:
        return sp.identity(grid.size, format="csr")
    return (-1) ** power * _derivative_matrix(grid.size, order, power) / grid.dt**power


@lru_cache(maxsize=16)
def _gregory_corrections(k: int) -> np.ndarray:
    b = bernoulli(k)
    p = np.arange(k)
    rhs = b[1 : k + 1] / (p + 1)
    vander = np.vander(np.arange(k, dtype=float), k, increasing=True).T
    return np.linalg.solve(vander, rhs)


def quadrature_weights(grid: RadialGrid, order: int = DEFAULT_ORDER) -> np.ndarray:
    """Endpoint-corrected trapezoid weights in ``t``; ``order=2`` is the plain trapezoid rule."""
    w = np.ones(grid.size)
    if order <= 2:
        w[0] = w[-1] = 0.5
    else:
        c = _gregory_corrections(order)
        if grid.size < 2 * order:
            raise ValidationError(f"need at least {2 * order} nodes for quadrature order {order}")
        w[:order] += c
        w[-order:] += c[::-1]
    return w * grid.dt


@dataclass
class Field:
    """Per-eigenbranch radial profiles ``u_m(x_i)``, shape ``(n_modes, N + 1)``."""

    grid: RadialGrid
    cross_section: CrossSectionSpec
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        expected = (self.cross_section.n_modes, self.grid.size)
        if self.values.shape != expected:
            raise ValidationError(f"field values have shape {self.values.shape}, expected {expected}")

    @classmethod
    def zeros(cls, grid, cross_section) -> "Field":
        return cls(grid, cross_section, np.zeros((cross_section.n_modes, grid.size)))

    @classmethod
    def from_function(cls, grid, cross_section, func) -> "Field":
        """Build from ``func(x, mode) -> radial profile``."""
        vals = np.array([np.broadcast_to(func(grid.x, m), grid.x.shape) for m in cross_section.modes()])
        return cls(grid, cross_section, vals)

    def copy(self) -> "Field":
        return Field(self.grid, self.cross_section, self.values.copy())

    def with_values(self, values) -> "Field":
        return Field(self.grid, self.cross_section, values)

    def __add__(self, other):
        return self.with_values(self.values + _vals(other))

    def __sub__(self, other):
        return self.with_values(self.values - _vals(other))

    def __mul__(self, c):
        return self.with_values(self.values * c)

    __rmul__ = __mul__

    def check_finite(self) -> None:
        if not np.all(np.isfinite(self.values)):
            m, i = np.argwhere(~np.isfinite(self.values))[0]
            raise ValidationError(f"field has a non-finite entry at mode {m}, node {i}")

    def pointwise(self, transform: CircleTransform | None = None) -> np.ndarray:
        """Values on the angular grid, shape ``(n_theta, N + 1)`` (circle only)."""
        transform = transform or CircleTransform(self.cross_section)
        return transform.synthesize(self.values)


def _vals(other):
    return other.values if isinstance(other, Field) else other


@dataclass(frozen=True)
class NormRequest:
    """Parameters of the ``H^{s,gamma}_p`` norm.

    ``order`` is the accuracy order of both the ``t``-differences and the
    ``t``-quadrature (2 = centered differences and plain trapezoid).
    """

    s: int = 0
    gamma: float = 0.0
    p: float = 2.0
    warp: WarpProfile = field(default_factory=WarpProfile.straight)
    order: int = DEFAULT_ORDER

    def __post_init__(self):
        if int(self.s) != self.s or self.s < 0:
            raise UnsupportedError("only integer s >= 0 is supported")
        if self.s > 4:
            raise UnsupportedError("s > 4 is not supported")
        if not 1 < self.p < np.inf:
            raise ValidationError("p must satisfy 1 < p < inf")


def radial_weight(grid: RadialGrid, n: int, gamma: float, warp: WarpProfile, p: float, order: int):
    """Node weights for ``int |x^{(n+1)/2-gamma} v|^p sqrt(det h) dx/x`` in ``t``."""
    x = grid.x
    return quadrature_weights(grid, order) * x ** (p * ((n + 1) / 2 - gamma)) * warp.f(x) ** (n / 2)


def _euler_powers(grid, values, s, order):
    """List of ``(x d/dx)^a values`` for ``a = 0..s`` along the last axis."""
    return [values] + [(euler_matrix(grid, order, a) @ values.T).T for a in range(1, s + 1)]


def hs_norm(u: Field, req: NormRequest) -> float:
    """Mellin-Sobolev norm ``||u||_{H^{s,gamma}_p}`` for integer ``s <= 4``.

    For ``p = 2`` the cross-section derivatives enter per mode through powers
    of ``(1 - lambda_j)``; for ``p != 2`` (circle only) the sum over
    ``j + |alpha| <= s`` is evaluated pointwise on the angular grid.
    """
    u.check_finite()
    spec, grid = u.cross_section, u.grid
    w = radial_weight(grid, spec.n, req.gamma, req.warp, req.p, req.order)
    derivs = _euler_powers(grid, u.values, req.s, req.order)
    if req.p == 2:
        total = 0.0
        for m, mode in enumerate(spec.modes()):  # ascending mode order for reproducibility
            acc = 0.0
            for a, d in enumerate(derivs):
                acc += (1 - mode.eigenvalue) ** (req.s - a) * np.dot(w, d[m] ** 2)
            total += mode.weight * acc
        return float(np.sqrt(total))
    if spec.kind is not Kind.CIRCLE:
        raise UnsupportedError("p != 2 is only supported on the circle")
    tr = CircleTransform(spec)
    total = 0.0
    for a, d in enumerate(derivs):
        for k in range(req.s - a + 1):
            vals = tr.synthesize(tr.derivative(d, k))
            total += tr.quadrature_weight() * np.sum(np.abs(vals) ** req.p @ w)
    return float(total ** (1 / req.p))


def gram_matrix(grid: RadialGrid, n: int, eigenvalue: float, req: NormRequest) -> np.ndarray:
    """Dense SPD matrix ``G`` with ``||u_m||^2 = u_m^T G u_m`` for one eigenbranch (p = 2).

    The branch weight ``int |e|^2 dy`` is omitted; it cancels in induced norms.
    """
    if req.p != 2:
        raise UnsupportedError("Gram matrices exist only for p = 2")
    w = radial_weight(grid, n, req.gamma, req.warp, 2.0, req.order)
    G = np.zeros((grid.size, grid.size))
    for a in range(req.s + 1):
        Ea = euler_matrix(grid, req.order, a).toarray()
        G += (1 - eigenvalue) ** (req.s - a) * (Ea.T * w) @ Ea
    return 0.5 * (G + G.T)


@dataclass(frozen=True)
class TipBoundReport:
    weighted_sup: float
    norm: float
    ratio: float
    argmax_x: float
    degenerate: bool = False


def _pointwise_abs(u: Field) -> np.ndarray:
    """``sup_y |u(x, y)|`` per radial node (circle) or branch-sum bound otherwise."""
    if u.cross_section.kind is Kind.CIRCLE:
        return np.max(np.abs(u.pointwise()), axis=0)
    return np.sum(np.abs(u.values), axis=0)


def tip_bound_check(u: Field, s: int, gamma: float, x_cut: float = 0.25, warp=None) -> TipBoundReport:
    """Compare ``sup |u| x^{(n+1)/2-gamma}`` near the tip with ``||u||_{s,gamma}``."""
    n = u.cross_section.n
    if not s > (n + 1) / 2:
        raise ValidationError(f"pointwise bound needs s > (n+1)/p = {(n + 1) / 2:g}")
    u.check_finite()
    warp = warp or WarpProfile.straight()
    x = u.grid.x
    near = x <= x_cut
    weighted = _pointwise_abs(u)[near] * x[near] ** ((n + 1) / 2 - gamma)
    k = int(np.argmax(weighted))
    sup = float(weighted[k])
    norm = hs_norm(u, NormRequest(s, gamma, 2.0, warp))
    if norm == 0.0:
        return TipBoundReport(0.0, 0.0, 0.0, float(x[near][k]), True)
    return TipBoundReport(sup, norm, sup / norm, float(x[near][k]))


def pointwise_product(u: Field, v: Field, transform: CircleTransform | None = None) -> Field:
    """``u v`` projected onto the retained circle modes."""
    tr = transform or CircleTransform(u.cross_section)
    return u.with_values(tr.analyze(tr.synthesize(u.values) * tr.synthesize(v.values)))


def algebra_defect(u: Field, v: Field, s: int, gamma: float, warp=None) -> float:
    """``||uv||_{s,gamma} / (||u||_{s,gamma} ||v||_{s,(n+1)/2})``."""
    if u.cross_section.kind is not Kind.CIRCLE:
        raise UnsupportedError("algebra_defect needs pointwise products (circle only)")
    n = u.cross_section.n
    if not s > (n + 1) / 2:
        raise ValidationError(f"algebra property needs s > (n+1)/p = {(n + 1) / 2:g}")
    warp = warp or WarpProfile.straight()
    nu = hs_norm(u, NormRequest(s, gamma, 2.0, warp))
    nv = hs_norm(v, NormRequest(s, (n + 1) / 2, 2.0, warp))
    if nu == 0 or nv == 0:
        raise ValidationError("algebra_defect needs nonzero u and v")
    return hs_norm(pointwise_product(u, v), NormRequest(s, gamma, 2.0, warp)) / (nu * nv)
