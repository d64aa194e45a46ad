"""Discrete cone Laplacians, bilaplacians and related operators.

Every operator acts on per-eigenbranch radial profiles on a
:class:`~conekit.mellin.RadialGrid`. The second-order Laplacian is assembled
in flux (divergence) form::

    (L u)_i = e^{(n+1) t_i} / F_i * [P_{i+1/2}(u_{i+1}-u_i) - P_{i-1/2}(u_i-u_{i-1})] / dt^2
              + lambda_j e^{2 t_i} / f_i * u_i

with ``F = f^{n/2}`` (the ``sqrt(det h)`` factor) and ``P = e^{-(n-1)t} F``,
which is ``x^{-2}((x d_x)^2 + (n-1+H)(x d_x) + lambda f^{-1})`` to second
order. The outer boundary ``x = 1`` carries a Neumann (or decoupled
Dirichlet) row; the tip row ``x = x_min`` imposes ``x u' = a_j u`` where
``x^{a_j}`` is the bounded homogeneous solution of mode ``j`` (for mode 0,
``a_0 = 0`` keeps the constants and excludes ``log x``).
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
import scipy.sparse as sp
from scipy.linalg import block_diag

from .conormal import DomainSpec, OperatorKind, SingularFunction, domain_spec, indicial_roots
from .cross_section import CircleTransform, CrossSectionSpec, Kind, WarpProfile
from .errors import UnsupportedError, ValidationError
from .mellin import Field, NormRequest, RadialGrid, derivative_matrix, fd_weights, gram_matrix

MIN_INTERVALS = 16


class OuterBC(str, enum.Enum):
    NEUMANN = "neumann"
    DIRICHLET = "dirichlet"


@dataclass(frozen=True)
class Cutoff:
    """Smooth cutoff: 1 on ``x <= eps r1``, 0 on ``x >= eps r2``.

    The transition is ``psi(1-s) / (psi(1-s) + psi(s))`` with
    ``psi(s) = exp(-1/s)`` and ``s`` linear in ``log x``, so it is C-infinity.
    """

    r1: float = 0.25
    r2: float = 0.5
    eps: float = 1.0

    def __post_init__(self):
        if not 0 < self.r1 < self.r2 <= 1:
            raise ValidationError("cutoff needs 0 < r1 < r2 <= 1")
        if not 0 < self.eps <= 1:
            raise ValidationError(f"cutoff scale eps={self.eps} must lie in (0, 1]")

    def scaled(self, eps: float) -> "Cutoff":
        return replace(self, eps=eps)

    def __call__(self, x):
        x = np.asarray(x, dtype=float) / self.eps
        s = (np.log(np.maximum(x, 1e-300)) - np.log(self.r1)) / (np.log(self.r2) - np.log(self.r1))
        s = np.clip(s, 0.0, 1.0)

        def psi(v):
            safe = np.where(v > 0, v, 1.0)
            return np.where(v > 0, np.exp(-1.0 / safe), 0.0)

        a, b = psi(1 - s), psi(s)
        return a / (a + b)

    @property
    def support_end(self) -> float:
        return self.eps * self.r2


@dataclass(frozen=True)
class ConeGeometry:
    """Cross-section, warp, radial grid and weight shared by all operators."""

    spec: CrossSectionSpec
    grid: RadialGrid
    warp: WarpProfile = field(default_factory=WarpProfile.straight)
    gamma: float | None = None
    cutoff: Cutoff = field(default_factory=Cutoff)

    def __post_init__(self):
        self.warp.check_positive(np.concatenate([[0.0], self.grid.x]))

    @property
    def n(self) -> int:
        return self.spec.n

    def straight(self) -> "ConeGeometry":
        return replace(self, warp=WarpProfile.straight())

    def with_grid(self, grid: RadialGrid) -> "ConeGeometry":
        return replace(self, grid=grid)

    def tip_exponents(self) -> list[float]:
        """Per distinct eigenvalue ``j``, the exponent ``a_j`` of the bounded solution ``x^{a_j}``."""
        return [indicial_roots(self.n, lam, j).decay_exponent for j, lam in enumerate(self.spec.eigenvalues)]

    def volume_weights(self) -> np.ndarray:
        """Trapezoid weights of ``x^{n+1} sqrt(det h) dt``: the discrete ``dV`` per radial node."""
        g = self.grid
        q = np.full(g.size, g.dt)
        q[0] = q[-1] = g.dt / 2
        return q * g.x ** (self.n + 1) * self.warp.f(g.x) ** (self.n / 2)

    def field(self, values=None) -> Field:
        if values is None:
            return Field.zeros(self.grid, self.spec)
        return Field(self.grid, self.spec, values)

    def field_from(self, func) -> Field:
        return Field.from_function(self.grid, self.spec, func)


@dataclass(frozen=True)
class DiscreteOperator:
    """Per-branch sparse radial matrices, or one coupled matrix over all branches.

    Unknowns are ordered branch-major: ``values.reshape(-1)`` of a
    ``(n_modes, N+1)`` field.
    """

    geometry: ConeGeometry
    blocks: tuple | None = None
    coupled: sp.spmatrix | None = None
    domain: DomainSpec | None = None
    kind: str = "laplacian"
    outer_bc: OuterBC = OuterBC.NEUMANN
    order: int = 2

    @property
    def is_block_diagonal(self) -> bool:
        return self.blocks is not None

    @property
    def shape(self) -> tuple[int, int]:
        n = self.geometry.spec.n_modes * self.geometry.grid.size
        return (n, n)

    def block(self, m: int) -> sp.csr_matrix:
        if not self.is_block_diagonal:
            raise ValidationError("coupled operator has no per-branch blocks")
        return self.blocks[m]

    def to_sparse(self) -> sp.csr_matrix:
        if self.is_block_diagonal:
            return sp.block_diag(self.blocks, format="csr")
        return sp.csr_matrix(self.coupled)

    def to_dense(self) -> np.ndarray:
        return self.to_sparse().toarray()

    def apply(self, u) -> Field:
        vals = _values(u)
        if self.is_block_diagonal:
            out = np.stack([b @ vals[m] for m, b in enumerate(self.blocks)])
        else:
            out = (self.coupled @ vals.reshape(-1)).reshape(vals.shape)
        return self.geometry.field(out)

    __matmul__ = apply

    def _combine(self, other, fn, kind):
        if not isinstance(other, DiscreteOperator):
            raise TypeError("can only combine with another DiscreteOperator")
        if self.is_block_diagonal and other.is_block_diagonal:
            blocks = tuple(fn(a, b) for a, b in zip(self.blocks, other.blocks))
            return replace(self, blocks=blocks, coupled=None, kind=kind)
        return replace(self, blocks=None, coupled=fn(self.to_sparse(), other.to_sparse()), kind=kind)

    def __add__(self, other):
        return self._combine(other, lambda a, b: (a + b).tocsr(), f"({self.kind})+({other.kind})")

    def __sub__(self, other):
        return self._combine(other, lambda a, b: (a - b).tocsr(), f"({self.kind})-({other.kind})")

    def compose(self, other: "DiscreteOperator") -> "DiscreteOperator":
        """``self @ other`` as operators."""
        return self._combine(other, lambda a, b: (a @ b).tocsr(), f"({self.kind})({other.kind})")

    def scale(self, c: float) -> "DiscreteOperator":
        if self.is_block_diagonal:
            return replace(self, blocks=tuple((c * b).tocsr() for b in self.blocks))
        return replace(self, coupled=(c * self.coupled).tocsr())

    def shift(self, c: float) -> "DiscreteOperator":
        """``c I + self``."""
        if self.is_block_diagonal:
            eye = sp.identity(self.geometry.grid.size, format="csr")
            return replace(self, blocks=tuple((c * eye + b).tocsr() for b in self.blocks))
        eye = sp.identity(self.shape[0], format="csr")
        return replace(self, coupled=(c * eye + self.coupled).tocsr())

    def bandwidth(self) -> int:
        """Number of diagonals (sub + main + super) spanned by the widest block."""
        mats = self.blocks if self.is_block_diagonal else (self.coupled,)
        widths = []
        for b in mats:
            coo = sp.coo_matrix(b)
            off = coo.col - coo.row
            widths.append(int(off.max() - off.min() + 1) if off.size else 0)
        return max(widths)

    def triplets(self):
        """``(branch, row, col, value)``; coupled operators use global indices and branch -1."""
        out = []
        if self.is_block_diagonal:
            for m, b in enumerate(self.blocks):
                coo = sp.coo_matrix(b)
                out.extend((m, int(r), int(c), float(v)) for r, c, v in zip(coo.row, coo.col, coo.data))
        else:
            coo = sp.coo_matrix(self.coupled)
            out.extend((-1, int(r), int(c), float(v)) for r, c, v in zip(coo.row, coo.col, coo.data))
        return out


def _values(u) -> np.ndarray:
    if isinstance(u, AugmentedField):
        return u.evaluate().values
    if isinstance(u, Field):
        return u.values
    return np.asarray(u, dtype=float)


def _check_grid(geometry: ConeGeometry) -> None:
    if geometry.grid.N < MIN_INTERVALS:
        raise ValidationError(f"grid too coarse: N={geometry.grid.N} < {MIN_INTERVALS}")


def radial_laplacian_block(
    geometry: ConeGeometry,
    eigenvalue: float,
    tip_exponent: float,
    outer_bc: OuterBC = OuterBC.NEUMANN,
) -> sp.csr_matrix:
    """Second-order flux-form radial Laplacian for one eigenvalue (see module docstring)."""
    g, n, warp = geometry.grid, geometry.n, geometry.warp
    t, x, dt = g.t, g.x, g.dt
    F = warp.f(x) ** (n / 2)
    th = t[:-1] + dt / 2
    P = np.exp(-(n - 1) * th) * warp.f(np.exp(-th)) ** (n / 2)
    scale = np.exp((n + 1) * t) / F
    # half cells at both ends
    h = np.full(g.size, dt * dt)
    h[0] = h[-1] = dt * dt / 2
    upper = scale[:-1] * P / h[:-1]
    lower = scale[1:] * P / h[1:]
    diag = eigenvalue * np.exp(2 * t) / warp.f(x)
    diag[:-1] -= upper
    diag[1:] -= lower
    # tip flux P u_t = -a P u at x_min
    p_tip = np.exp(-(n - 1) * t[-1]) * F[-1]
    diag[-1] -= scale[-1] * p_tip * tip_exponent * dt / h[-1]
    if OuterBC(outer_bc) is OuterBC.DIRICHLET:
        # boundary node decouples and relaxes to zero
        upper = upper.copy()
        lower = lower.copy()
        upper[0] = 0.0
        lower[0] = 0.0
    return sp.diags([lower, diag, upper], [-1, 0, 1], format="csr")


def _second_derivative_matrix(n_nodes: int, order: int) -> sp.csr_matrix:
    half = order // 2
    rows, cols, vals = [], [], []
    for i in range(n_nodes):
        if half <= i < n_nodes - half:
            offs = np.arange(-half, half + 1)
        else:
            width = order + 2  # one-sided second derivatives need one extra point
            start = 0 if i < half else n_nodes - width
            offs = np.arange(start, start + width) - i
        rows.extend([i] * len(offs))
        cols.extend(i + offs)
        vals.extend(fd_weights(offs, 2))
    return sp.csr_matrix((vals, (rows, cols)), shape=(n_nodes, n_nodes))


def _centered_block(geometry: ConeGeometry, eigenvalue: float, order: int) -> sp.csr_matrix:
    """High-order stencil of ``e^{2t}(D_t^2 - (n-1+H) D_t + lambda/f)`` without boundary closure."""
    g, n, warp = geometry.grid, geometry.n, geometry.warp
    x = g.x
    D1 = derivative_matrix(g, order)
    D2 = _second_derivative_matrix(g.size, order) / g.dt**2
    H = warp.mean_curvature_term(x, n)
    inner = D2 - sp.diags(n - 1 + H) @ D1 + sp.diags(eigenvalue / warp.f(x))
    return (sp.diags(np.exp(2 * g.t)) @ inner).tocsr()


def assemble_laplacian(
    geometry: ConeGeometry,
    outer_bc: OuterBC | str = OuterBC.NEUMANN,
    s: float = 0,
    order: int = 2,
    check_window: bool = True,
) -> DiscreteOperator:
    """Assemble the closed cone Laplacian with domain ``H^{s+2,gamma+2} + C``.

    ``order=2`` (default) is the flux-form operator with boundary rows.
    ``order=4`` or ``6`` gives an unclosed high-order stencil, meant only for
    consistency checks against the continuous operator at interior nodes.
    """
    _check_grid(geometry)
    outer_bc = OuterBC(outer_bc)
    dom = None
    if geometry.gamma is not None and check_window:
        dom = domain_spec(OperatorKind.LAPLACIAN, s, geometry.gamma, geometry.spec)
    exps = geometry.tip_exponents()
    blocks, cache = [], {}
    for mode in geometry.spec.modes():
        if mode.j not in cache:
            if order == 2:
                cache[mode.j] = radial_laplacian_block(geometry, mode.eigenvalue, exps[mode.j], outer_bc)
            else:
                cache[mode.j] = _centered_block(geometry, mode.eigenvalue, order)
        blocks.append(cache[mode.j])
    return DiscreteOperator(geometry, tuple(blocks), None, dom, "laplacian", outer_bc, order)


def assemble_bilaplacian(
    geometry: ConeGeometry, outer_bc: OuterBC | str = OuterBC.NEUMANN, s: float = 0
) -> DiscreteOperator:
    """Square of the closed Laplacian, so ``D(L^2) = {u in D(L): L u in D(L)}`` discretely."""
    lap = assemble_laplacian(geometry, outer_bc, s)
    dom = None
    if geometry.gamma is not None:
        dom = domain_spec(OperatorKind.BILAPLACIAN, s, geometry.gamma, geometry.spec)
    return replace(lap.compose(lap), domain=dom, kind="bilaplacian")


def model_cone_operator(geometry: ConeGeometry, outer_bc=OuterBC.NEUMANN) -> DiscreteOperator:
    """Laplacian with coefficients frozen at ``x = 0`` (``f = 1``, ``H = 0``)."""
    op = assemble_laplacian(geometry.straight(), outer_bc, check_window=geometry.gamma is not None)
    return replace(op, geometry=geometry, kind="model_cone")


def assemble_interpolant(
    geometry: ConeGeometry, eps: float, outer_bc=OuterBC.NEUMANN
) -> tuple[DiscreteOperator, DiscreteOperator]:
    """Return ``(L_eps, B_eps)``: ``L_eps = w_eps L_0 + (1 - w_eps) L`` and ``B_eps = L - L_eps``."""
    if not 0 < eps <= 1:
        raise ValidationError(f"eps={eps} must lie in (0, 1]")
    warped = assemble_laplacian(geometry, outer_bc)
    straight = model_cone_operator(geometry, outer_bc)
    w = sp.diags(geometry.cutoff.scaled(eps)(geometry.grid.x))
    diff = tuple((w @ (a - b)).tocsr() for a, b in zip(warped.blocks, straight.blocks))
    l_eps = tuple((a - d).tocsr() for a, d in zip(warped.blocks, diff))
    return (
        replace(warped, blocks=l_eps, kind=f"interpolant(eps={eps:g})"),
        replace(warped, blocks=diff, kind=f"perturbation(eps={eps:g})"),
    )


@dataclass
class AugmentedField:
    """Grid part plus coefficients of singular functions and of the constant.

    ``evaluate() = grid + constant + sum_k coeffs[k] x^{-rho} log^k(x) omega(x) e(y)``.
    """

    grid_part: Field
    basis: tuple = ()
    coeffs: np.ndarray = None
    constant: float = 0.0
    cutoff: Cutoff = field(default_factory=Cutoff)

    def __post_init__(self):
        self.basis = tuple(self.basis)
        self.coeffs = np.zeros(len(self.basis)) if self.coeffs is None else np.asarray(self.coeffs, float)
        if self.coeffs.shape != (len(self.basis),):
            raise ValidationError("one coefficient per singular function is required")

    def basis_values(self) -> np.ndarray:
        """Sampled singular functions, shape ``(len(basis), n_modes, N+1)``."""
        return singular_values(self.grid_part, self.basis, self.cutoff)

    def evaluate(self) -> Field:
        vals = self.grid_part.values.copy()
        vals[0] += self.constant
        if self.basis:
            vals += np.tensordot(self.coeffs, self.basis_values(), axes=1)
        return self.grid_part.with_values(vals)

    @classmethod
    def from_field(cls, u: Field) -> "AugmentedField":
        return cls(u.copy())

    @classmethod
    def decompose(
        cls, u: Field, basis: Sequence[SingularFunction], cutoff: Cutoff | None = None, x_hi: float = 0.1
    ) -> "AugmentedField":
        """Split ``u`` into constant + singular terms + a grid part that is zero at ``x_min``.

        Coefficients are least-squares fits on ``x <= x_hi``, constrained so the
        grid part vanishes exactly at the tip node.
        """
        cutoff = cutoff or Cutoff()
        basis = tuple(basis)
        grid, spec = u.grid, u.cross_section
        sv = singular_values(u, basis, cutoff)
        mask = grid.x <= x_hi
        coeffs = np.zeros(len(basis))
        constant = 0.0
        for m, mode in enumerate(spec.modes()):
            cols = [k for k, f in enumerate(basis) if f.j == mode.j and f.branch == mode.branch]
            design = [sv[k, m] for k in cols]
            if m == 0:
                design = [np.ones(grid.size)] + design
            if not design:
                continue
            A = np.stack(design, axis=1)
            c = _constrained_lstsq(A[mask], u.values[m][mask], A[-1], u.values[m][-1])
            if m == 0:
                constant, c = c[0], c[1:]
            coeffs[cols] = c
        expansion = cls(Field.zeros(grid, spec), basis, coeffs, constant, cutoff).evaluate()
        return cls(u - expansion, basis, coeffs, constant, cutoff)


def _constrained_lstsq(A, b, row, value):
    """``min |A c - b|`` subject to ``row . c = value`` via the KKT system."""
    k = A.shape[1]
    scale = np.linalg.norm(A, axis=0)
    scale[scale == 0] = 1.0
    As, rs = A / scale, row / scale
    kkt = np.zeros((k + 1, k + 1))
    kkt[:k, :k] = As.T @ As
    kkt[:k, k] = rs
    kkt[k, :k] = rs
    rhs = np.concatenate([As.T @ b, [value]])
    sol = np.linalg.lstsq(kkt, rhs, rcond=None)[0]
    return sol[:k] / scale


def singular_values(u: Field, basis, cutoff: Cutoff) -> np.ndarray:
    grid, spec = u.grid, u.cross_section
    modes = spec.modes()
    x = grid.x
    om = cutoff(x)
    out = np.zeros((len(basis), spec.n_modes, grid.size))
    for k, f in enumerate(basis):
        m = next(i for i, md in enumerate(modes) if md.j == f.j and md.branch == f.branch)
        out[k, m] = x ** (-f.rho) * np.log(x) ** f.log_power * om
    return out


def gradient_form(u, v, geometry: ConeGeometry, order: int = 6) -> Field:
    """``x^{-2}((x u_x)(x v_x) + f^{-1} u_theta v_theta)`` in mode representation (circle)."""
    pts = gradient_form_points(u, v, geometry, order)
    return geometry.field(CircleTransform(geometry.spec).analyze(pts))


def gradient_form_points(u, v, geometry: ConeGeometry, order: int = 6) -> np.ndarray:
    """:func:`gradient_form` on the angular grid, before projection onto retained modes."""
    spec = geometry.spec
    if spec.kind is not Kind.CIRCLE:
        raise UnsupportedError("gradient_form needs pointwise products (circle only)")
    tr = CircleTransform(spec)
    uv, vv = _values(u), _values(v)
    E = -derivative_matrix(geometry.grid, order)
    x = geometry.grid.x
    ux = tr.synthesize((E @ uv.T).T)
    vx = tr.synthesize((E @ vv.T).T)
    ut = tr.synthesize(tr.derivative(uv))
    vt = tr.synthesize(tr.derivative(vv))
    return (ux * vx + ut * vt / geometry.warp.f(x)) / x**2


@dataclass(frozen=True)
class NormEstimate:
    value: float
    converged: bool
    iterations: int


def coupled_gram(geometry: ConeGeometry, req: NormRequest) -> np.ndarray:
    mats = [mode.weight * gram_matrix(geometry.grid, geometry.n, mode.eigenvalue, req)
            for mode in geometry.spec.modes()]
    return block_diag(*mats)


def norm_factors(geometry: ConeGeometry, eigenvalue, req: NormRequest) -> np.ndarray:
    """Lower Cholesky factor ``R`` with ``|u|^2 = |R^T u|^2`` for one block (or all, if ``None``)."""
    if eigenvalue is None:
        G = coupled_gram(geometry, req)
    else:
        G = gram_matrix(geometry.grid, geometry.n, eigenvalue, req)
    return np.linalg.cholesky(G)


def operator_blocks(op):
    """``[(eigenvalue, dense block)]`` per distinct eigenvalue, or ``[(None, matrix)]``."""
    if op.is_block_diagonal:
        seen = {}
        for mode, b in zip(op.geometry.spec.modes(), op.blocks):
            seen.setdefault(mode.j, (mode.eigenvalue, b.toarray()))
        return list(seen.values())
    return [(None, op.to_dense())]


def weighted_matrix(A: np.ndarray, R_from: np.ndarray, R_to: np.ndarray) -> np.ndarray:
    """``R_to^T A R_from^{-T}``: the matrix whose 2-norm is the induced norm of ``A``."""
    return R_to.T @ np.linalg.solve(R_from, A.T).T


def operator_norm(
    op,
    req_from: NormRequest | None = None,
    req_to: NormRequest | None = None,
    iterations: int = 5000,
    rtol: float = 1e-6,
    method: str = "power",
) -> NormEstimate:
    """Induced norm ``sup |A u|_to / |u|_from``.

    ``op`` is a :class:`DiscreteOperator` (norms default to ``H^{0,gamma}_2``)
    or a plain matrix (Euclidean norms). ``method="power"`` runs power
    iteration from the all-ones vector; ``"svd"`` computes the norm exactly.
    Block-diagonal operators are handled block by block.
    """
    if isinstance(op, DiscreteOperator):
        geometry = op.geometry
        gamma = geometry.gamma if geometry.gamma is not None else 0.0
        rf = req_from or NormRequest(0, gamma, 2.0, geometry.warp)
        rt = req_to or rf
        mats = []
        for eigenvalue, A in operator_blocks(op):
            mats.append(weighted_matrix(A, norm_factors(geometry, eigenvalue, rf), norm_factors(geometry, eigenvalue, rt)))
    else:
        mats = [np.asarray(op)]
    best, converged, its = 0.0, True, 0
    for B in mats:
        if method == "svd":
            val, ok, k = float(np.linalg.norm(B, 2)), True, 0
        else:
            val, ok, k = power_norm(B, iterations, rtol)
        best = max(best, val)
        converged &= ok
        its = max(its, k)
    return NormEstimate(best, converged, its)


def power_norm(B: np.ndarray, iterations: int = 5000, rtol: float = 1e-6):
    """Power iteration on ``B^H B`` from the all-ones vector; returns ``(sigma, converged, iterations)``."""
    v = np.ones(B.shape[1], dtype=B.dtype)
    v = v / np.linalg.norm(v)
    prev = None
    sigma = 0.0
    for k in range(1, iterations + 1):
        w = B @ v
        sigma = float(np.linalg.norm(w))
        if sigma == 0.0:
            return 0.0, True, k
        v = B.conj().T @ w
        v /= np.linalg.norm(v)
        if prev is not None and abs(sigma - prev) <= rtol * sigma:
            return sigma, True, k
        prev = sigma
    return sigma, False, iterations


def perturbation_norm(
    geometry: ConeGeometry,
    eps: float,
    c: float = 1.0,
    req: NormRequest | None = None,
    outer_bc=OuterBC.NEUMANN,
    method: str = "power",
    rtol: float = 1e-8,
) -> NormEstimate:
    """``|B_eps|`` from the domain of ``L`` (graph norm ``|(c - L) u|``) into ``req``.

    Computed as the induced norm of ``B_eps (c - L)^{-1}``.
    """
    if not c > 0:
        raise ValidationError(f"shift c must be > 0, got {c}")
    lap = assemble_laplacian(geometry, outer_bc)
    _, B = assemble_interpolant(geometry, eps, outer_bc)
    gamma = geometry.gamma if geometry.gamma is not None else 0.0
    req = req or NormRequest(0, gamma, 2.0, geometry.warp)
    best, converged, its = 0.0, True, 0
    for (eigenvalue, Bb), (_, Lb) in zip(operator_blocks(B), operator_blocks(lap)):
        X = np.linalg.solve((c * np.eye(Lb.shape[0]) - Lb).T, Bb.T).T
        R = norm_factors(geometry, eigenvalue, req)
        W = weighted_matrix(X, R, R)
        if method == "svd":
            val, ok, k = float(np.linalg.norm(W, 2)), True, 0
        else:
            val, ok, k = power_norm(W, 5000, rtol)
        best, converged, its = max(best, val), converged and ok, max(its, k)
    return NormEstimate(best, converged, its)
