"""Cahn-Hilliard flow ``u_t + L^2 u + L(u - u^3) = 0`` on a cone.

The default integrator is a stabilized semi-implicit scheme in mixed form::

    u^{k+1} - tau L mu = u^k
    mu + L u^{k+1} - S u^{k+1} = W'(u^k) - S u^k,     W'(u) = u^3 - u

solved per eigenbranch as one banded system in the interleaved unknowns
``(u_i, mu_i)``. Each equation is scaled by the volume weights, so mass
conservation only needs the flux sums of the Laplacian to telescope.
"""
from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.linalg import solve_banded

from .cone_operators import (
    AugmentedField,
    ConeGeometry,
    DiscreteOperator,
    OuterBC,
    assemble_laplacian,
    gradient_form_points,
)
from .conormal import domain_spec, OperatorKind
from .cross_section import CircleTransform, Kind
from .errors import StepError, UnsupportedError, ValidationError
from .mellin import Field

log = logging.getLogger(__name__)


class Scheme(str, enum.Enum):
    STABILIZED = "stabilized"
    LINEARIZED = "linearized"


class SignConvention(str, enum.Enum):
    MINUS = "minus"
    IDENTITY_PLUS = "identity_plus"


def _require_circle(geometry: ConeGeometry, what: str) -> CircleTransform:
    if geometry.spec.kind is not Kind.CIRCLE:
        raise UnsupportedError(f"{what} needs pointwise products (circle only)")
    return CircleTransform(geometry.spec)


def _vals(u) -> np.ndarray:
    if isinstance(u, AugmentedField):
        return u.evaluate().values
    if isinstance(u, Field):
        return u.values
    return np.asarray(u, dtype=float)


def multiplication_matrix(v, geometry: ConeGeometry, pointwise: bool = False) -> sp.csr_matrix:
    """Sparse matrix of ``u -> P(v u)``: pointwise multiplication projected onto retained modes.

    ``v`` holds mode coefficients, or angular-grid values of shape
    ``(n_theta, N+1)`` when ``pointwise`` is set (this avoids truncating
    products such as ``v^2`` before they multiply ``u``).
    """
    tr = _require_circle(geometry, "multiplication")
    spec, size = geometry.spec, geometry.grid.size
    nm = spec.n_modes
    synth = tr.synthesize(np.eye(nm))  # (n_theta, nm)
    anal = tr.analyze(np.eye(tr.size))  # (nm, n_theta)
    vp = np.asarray(v, dtype=float) if pointwise else tr.synthesize(_vals(v))  # (n_theta, size)
    # blocks[i] = anal @ diag(vp[:, i]) @ synth
    blocks = np.einsum("mt,ti,tk->imk", anal, vp, synth)
    blocks[np.abs(blocks) < 1e-14 * max(1.0, np.abs(blocks).max())] = 0.0
    rows, cols, data = [], [], []
    nodes = np.arange(size)
    for m in range(nm):
        for k in range(nm):
            d = blocks[:, m, k]
            nz = d != 0
            rows.append(m * size + nodes[nz])
            cols.append(k * size + nodes[nz])
            data.append(d[nz])
    return sp.csr_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))), shape=(nm * size, nm * size)
    )


def linearization(v, geometry: ConeGeometry, lap: DiscreteOperator | None = None) -> DiscreteOperator:
    """``A(v) = L^2 + L - 3 M_{v^2} L`` as a coupled operator."""
    tr = _require_circle(geometry, "linearization")
    vv = _vals(v)
    if not np.all(np.isfinite(vv)):
        raise ValidationError("v must be finite")
    lap = lap or assemble_laplacian(geometry)
    Lm = lap.to_sparse()
    M = multiplication_matrix(tr.synthesize(vv) ** 2, geometry, pointwise=True)
    A = (Lm @ Lm + Lm - 3.0 * (M @ Lm)).tocsr()
    dom = None
    if geometry.gamma is not None:
        dom = domain_spec(OperatorKind.BILAPLACIAN, 0, geometry.gamma, geometry.spec)
    return DiscreteOperator(geometry, None, A, dom, "linearization", lap.outer_bc, lap.order)


def apply_linearization(v, u, geometry: ConeGeometry, lap: DiscreteOperator | None = None) -> Field:
    """``A(v) u`` as composed actions ``L(Lu) + Lu - 3 P(v^2 Lu)``.

    Equal to ``linearization(v, geometry, lap) @ u`` in exact arithmetic, but
    avoids the rounding of the assembled ``L^2``, whose entries near the tip
    are many orders larger than ``A(v) u`` itself.
    """
    tr = _require_circle(geometry, "linearization")
    vv, uv = _vals(v), _vals(u)
    if not np.all(np.isfinite(vv)):
        raise ValidationError("v must be finite")
    lap = lap or assemble_laplacian(geometry)
    Lu = lap.apply(uv).values
    coupling = tr.analyze(tr.synthesize(vv) ** 2 * tr.synthesize(Lu))
    return geometry.field(lap.apply(Lu).values + Lu - 3.0 * coupling)


def nonlinearity(
    u, geometry: ConeGeometry, sign: SignConvention | str = SignConvention.IDENTITY_PLUS, order: int = 6
) -> Field:
    """``+-6 u (grad u, grad u)_g``; ``identity_plus`` (default) matches ``L(u^3) = 3u^2 Lu + 6u|grad u|^2``."""
    tr = _require_circle(geometry, "nonlinearity")
    sign = SignConvention(sign)
    uv = _vals(u)
    pts = 6.0 * tr.synthesize(uv) * gradient_form_points(uv, uv, geometry, order)
    out = tr.analyze(pts)
    return geometry.field(out if sign is SignConvention.IDENTITY_PLUS else -out)


def double_well_derivative(u: np.ndarray, tr: CircleTransform) -> np.ndarray:
    """Mode coefficients of ``u^3 - u``."""
    return tr.analyze(tr.synthesize(u) ** 3) - u


@dataclass(frozen=True)
class Diagnostics:
    step: int
    time: float
    mass: float
    energy: float
    residual: float


def diagnostics(u, geometry: ConeGeometry, lap: DiscreteOperator | None = None) -> tuple[float, float]:
    """``(mass, energy)`` with ``E = int (|grad u|^2 / 2 + (u^2 - 1)^2 / 4) dV``.

    The gradient part is the quadratic form ``-<L u, u>/2`` of the closed
    Laplacian, so it is the energy the stabilized scheme dissipates exactly.
    """
    uv = _vals(u)
    lap = lap or assemble_laplacian(geometry, check_window=False)
    W = geometry.volume_weights()
    modes = geometry.spec.modes()
    mass = float(modes[0].weight * np.dot(W, uv[0]))
    grad = 0.0
    for m, mode in enumerate(modes):
        grad -= mode.weight * np.dot(W * uv[m], lap.blocks[m] @ uv[m])
    tr = _require_circle(geometry, "energy")
    pts = tr.synthesize(uv)
    pot = tr.quadrature_weight() * float(np.sum((0.25 * (pts**2 - 1) ** 2) @ W))
    return mass, 0.5 * grad + pot


@dataclass
class InitialTerm:
    """``amplitude * x^power * log(x)^log_power * [omega(x)] * e_mode(y)``."""

    mode: str
    amplitude: float
    power: float = 0.0
    log_power: int = 0
    cutoff: bool = False


@dataclass
class InitialData:
    constant: float = 0.0
    terms: list = field(default_factory=list)

    def build(self, geometry: ConeGeometry) -> Field:
        x = geometry.grid.x
        labels = [m.label for m in geometry.spec.modes()]
        vals = np.zeros((len(labels), x.size))
        vals[0] += self.constant
        for term in self.terms:
            if term.mode not in labels:
                raise ValidationError(f"unknown mode label {term.mode!r}; available: {labels}")
            prof = term.amplitude * x**term.power * np.log(x) ** term.log_power
            if term.cutoff:
                prof = prof * geometry.cutoff(x)
            vals[labels.index(term.mode)] += prof
        return geometry.field(vals)


@dataclass
class SolverConfig:
    geometry: ConeGeometry
    tau: float
    T: float
    scheme: Scheme = Scheme.STABILIZED
    S: float = 2.0
    c0: float = 1.0
    initial: InitialData | Field = field(default_factory=InitialData)
    snapshot_every: int = 100
    outer_bc: OuterBC = OuterBC.NEUMANN

    def __post_init__(self):
        self.scheme = Scheme(self.scheme)
        if not self.tau > 0:
            raise ValidationError("time step tau must be > 0")
        if not self.T >= self.tau:
            raise ValidationError("final time T must be >= tau")
        if self.S < 0:
            raise ValidationError("stabilization S must be >= 0")
        if self.snapshot_every < 1:
            raise ValidationError("snapshot_every must be >= 1")

    @property
    def n_steps(self) -> int:
        return int(round(self.T / self.tau))

    def initial_field(self) -> Field:
        if isinstance(self.initial, Field):
            return self.initial.copy()
        return self.initial.build(self.geometry)


@dataclass
class SolveResult:
    times: list
    snapshots: list  # AugmentedField per recorded time
    diagnostics: list  # Diagnostics per step, step 0 included
    status: str = "ok"
    message: str = ""

    def snapshot_at(self, time: float, atol: float = 1e-9) -> AugmentedField:
        for t, snap in zip(self.times, self.snapshots):
            if abs(t - time) <= atol:
                return snap
        raise ValidationError(f"no snapshot at t={time}; available times: {[round(t, 12) for t in self.times]}")


class StabilizedStepper:
    """Pre-factored banded mixed-form stepper for one geometry and time step."""

    def __init__(self, geometry: ConeGeometry, tau: float, S: float, lap: DiscreteOperator):
        self.geometry, self.tau, self.S, self.lap = geometry, tau, S, lap
        self.tr = _require_circle(geometry, "stabilized step")
        self.W = geometry.volume_weights()
        size = geometry.grid.size
        self.perm = np.empty(2 * size, dtype=int)
        self.perm[0::2] = np.arange(size)
        self.perm[1::2] = size + np.arange(size)
        self._bands = {}
        for m, b in enumerate(lap.blocks):
            key = id(b)
            if key not in self._bands:
                self._bands[key] = self._mixed_bands(b)

    def _mixed_bands(self, b):
        Wd = sp.diags(self.W)
        WL = Wd @ b
        A = sp.bmat([[Wd, -self.tau * WL], [WL - self.S * Wd, Wd]]).tocsr()
        A = A[self.perm][:, self.perm].tocoo()
        ab = np.zeros((7, A.shape[0]))
        off = A.col - A.row
        if np.abs(off).max() > 3:
            raise StepError("mixed system is not 7-banded")
        ab[3 - off, A.col] = A.data
        return ab

    def __call__(self, u: np.ndarray) -> tuple[np.ndarray, float]:
        size = self.geometry.grid.size
        wp = double_well_derivative(u, self.tr)
        new = np.empty_like(u)
        resid = 0.0
        for m, b in enumerate(self.lap.blocks):
            ab = self._bands[id(b)]
            rhs = np.concatenate([self.W * u[m], self.W * (wp[m] - self.S * u[m])])[self.perm]
            sol = np.empty(2 * size)
            sol[self.perm] = solve_banded((3, 3), ab, rhs, check_finite=False)
            new[m] = sol[:size]
            mu = sol[size:]
            r = self.W * (new[m] - u[m] - self.tau * (b @ mu))
            resid = max(resid, float(np.abs(r).sum()))
        return new, resid


class LinearizedStepper:
    """``(I + tau (A(u^k) + c0)) u^{k+1} = u^k + tau (F(u^k) + c0 u^k)`` with a sparse direct solve."""

    def __init__(self, geometry: ConeGeometry, tau: float, c0: float, lap: DiscreteOperator):
        self.geometry, self.tau, self.c0, self.lap = geometry, tau, c0, lap
        _require_circle(geometry, "linearized step")

    def __call__(self, u: np.ndarray) -> tuple[np.ndarray, float]:
        # solved for the increment d = u^{k+1} - u^k with right side tau (F(u) - A(u) u),
        # so constants give d = 0 exactly
        A = linearization(u, self.geometry, self.lap).coupled
        n = A.shape[0]
        M = (sp.identity(n) + self.tau * (A + self.c0 * sp.identity(n))).tocsc()
        F = nonlinearity(u, self.geometry).values
        Au = apply_linearization(u, u, self.geometry, self.lap).values
        rhs = self.tau * (F - Au).reshape(-1)
        d = spla.spsolve(M, rhs) if np.any(rhs) else np.zeros(n)
        new = u.reshape(-1) + d
        full = u.reshape(-1) + self.tau * (F.reshape(-1) + self.c0 * u.reshape(-1))
        resid = float(np.linalg.norm(M @ new - full) / max(np.linalg.norm(full), 1e-300))
        return new.reshape(u.shape), resid


def make_stepper(config: SolverConfig, lap: DiscreteOperator | None = None) -> Callable:
    lap = lap or assemble_laplacian(config.geometry, config.outer_bc)
    if config.scheme is Scheme.STABILIZED:
        return StabilizedStepper(config.geometry, config.tau, config.S, lap)
    return LinearizedStepper(config.geometry, config.tau, config.c0, lap)


def step(u, config: SolverConfig, stepper: Callable | None = None) -> Field:
    """Advance one time step; raises :class:`StepError` on non-finite input or output."""
    uv = _vals(u)
    if not np.all(np.isfinite(uv)):
        raise StepError("state is not finite", {"nonfinite": int(np.sum(~np.isfinite(uv)))})
    stepper = stepper or make_stepper(config)
    new, resid = stepper(uv)
    if not np.all(np.isfinite(new)):
        raise StepError("step produced a non-finite state", {"residual": resid})
    return config.geometry.field(new)


def _snapshot(geometry: ConeGeometry, u: np.ndarray) -> AugmentedField:
    basis = ()
    if geometry.gamma is not None:
        basis = domain_spec(OperatorKind.BILAPLACIAN, 0, geometry.gamma, geometry.spec).singular_basis
    return AugmentedField.decompose(geometry.field(u.copy()), basis, geometry.cutoff)


def solve(config: SolverConfig, snapshot_times=()) -> SolveResult:
    """Run to ``T``; diagnostics every step, snapshots at the cadence and at ``snapshot_times``."""
    geometry = config.geometry
    lap = assemble_laplacian(geometry, config.outer_bc)
    stepper = make_stepper(config, lap)
    u = config.initial_field().values
    if not np.all(np.isfinite(u)):
        raise ValidationError("initial data is not finite")
    extra = {int(round(t / config.tau)) for t in snapshot_times}
    mass, energy = diagnostics(u, geometry, lap)
    result = SolveResult([0.0], [_snapshot(geometry, u)], [Diagnostics(0, 0.0, mass, energy, 0.0)])
    for k in range(1, config.n_steps + 1):
        t = k * config.tau
        try:
            new, resid = stepper(u)
            if not np.all(np.isfinite(new)):
                raise StepError("step produced a non-finite state", {"step": k})
        except (StepError, np.linalg.LinAlgError, ValueError) as exc:
            log.warning("aborting at step %d: %s", k, exc)
            result.status, result.message = "failed", f"step {k}: {exc}"
            return result
        u = new
        mass, energy = diagnostics(u, geometry, lap)
        result.diagnostics.append(Diagnostics(k, t, mass, energy, resid))
        if k % config.snapshot_every == 0 or k == config.n_steps or k in extra:
            result.times.append(t)
            result.snapshots.append(_snapshot(geometry, u))
    return result
