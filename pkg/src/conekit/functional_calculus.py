"""Numerical probes of sectoriality and bounded imaginary powers.

Operators are either :class:`DiscreteOperator` instances, measured in a
Mellin norm ``H^{s,gamma}_2`` through Cholesky factors of its Gram matrix,
or plain square matrices measured in the Euclidean norm. Block-diagonal
operators are probed one distinct eigenvalue block at a time, since every
function of the operator inherits the block structure.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la
from numpy.polynomial.legendre import leggauss

from .cone_operators import DiscreteOperator, norm_factors, operator_blocks
from .errors import DomainError, ValidationError
from .mellin import NormRequest

log = logging.getLogger(__name__)

EIG_COND_MAX = 1e6
PIVOT_RTOL = 1e-14


@dataclass(frozen=True)
class _Piece:
    A: np.ndarray
    R: np.ndarray | None  # lower Cholesky factor of the Gram matrix, None for Euclidean

    def norm(self, X: np.ndarray) -> float:
        if self.R is None:
            return float(np.linalg.norm(X, 2))
        Y = self.R.T @ la.solve_triangular(self.R, X.T, lower=True).T
        return float(np.linalg.norm(Y, 2))


def _pieces(op, req: NormRequest | None = None) -> list[_Piece]:
    if isinstance(op, DiscreteOperator):
        geometry = op.geometry
        if req is None:
            gamma = geometry.gamma if geometry.gamma is not None else 0.0
            req = NormRequest(0, gamma, 2.0, geometry.warp)
        return [_Piece(A, norm_factors(geometry, ev, req)) for ev, A in operator_blocks(op)]
    A = np.asarray(op)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValidationError("operator must be a square matrix")
    return [_Piece(A.astype(complex if np.iscomplexobj(A) else float), None)]


class _Factor:
    """Row-equilibrated LU; ``ok`` is False when a pivot is negligible.

    Cone operators are strongly graded toward the tip, so pivots are compared
    after scaling every row to unit max-norm.
    """

    def __init__(self, M: np.ndarray):
        scale = np.abs(M).max(axis=1)
        self.ok = bool(np.all(scale > 0) and np.all(np.isfinite(scale)))
        if not self.ok:
            return
        self.d = 1.0 / scale
        self.lu, self.piv = la.lu_factor(self.d[:, None] * M, check_finite=False)
        pivots = np.abs(np.diag(self.lu))
        self.ok = bool(pivots.min() > PIVOT_RTOL * pivots.max())

    def solve(self, B: np.ndarray) -> np.ndarray:
        return la.lu_solve((self.lu, self.piv), self.d[:, None] * B, check_finite=False)


def _lu(M: np.ndarray):
    f = _Factor(M)
    return f if f.ok else None


def _resolvent(A: np.ndarray, lam: complex):
    """``(A + lam)^{-1}`` or ``None`` if singular."""
    f = _lu(A + lam * np.eye(A.shape[0]))
    return None if f is None else f.solve(np.eye(A.shape[0], dtype=complex))


class _ExtendedLU:
    """LU with partial pivoting carried out in ``clongdouble``.

    Used where a double-precision factorization would be limited by the
    conditioning of fourth-order cone operators (around ``1e13``).
    """

    def __init__(self, M: np.ndarray):
        A = np.array(M, dtype=np.clongdouble)
        n = A.shape[0]
        perm = np.arange(n)
        scale = np.abs(A).max(axis=1)
        self.ok = bool(np.all(scale > 0))
        if self.ok:
            A /= scale[:, None]
        self.scale = scale
        for k in range(n - 1 if self.ok else 0):
            p = k + int(np.argmax(np.abs(A[k:, k])))
            if p != k:
                A[[k, p]] = A[[p, k]]
                perm[[k, p]] = perm[[p, k]]
            if A[k, k] == 0:
                self.ok = False
                break
            A[k + 1 :, k] /= A[k, k]
            A[k + 1 :, k + 1 :] -= np.outer(A[k + 1 :, k], A[k, k + 1 :])
        if self.ok:
            d = np.abs(np.diag(A))
            self.ok = bool(d.min() > 1e-17 * d.max())
        self.LU, self.perm = A, perm

    def solve(self, B: np.ndarray) -> np.ndarray:
        X = (np.asarray(B, dtype=np.clongdouble) / self.scale[:, None])[self.perm]
        LU, n = self.LU, self.LU.shape[0]
        for k in range(n - 1):
            X[k + 1 :] -= np.outer(LU[k + 1 :, k], X[k])
        for k in range(n - 1, -1, -1):
            X[k] /= LU[k, k]
            X[:k] -= np.outer(LU[:k, k], X[k])
        return X


def _solver(M: np.ndarray, precision: str):
    f = _ExtendedLU(M) if precision == "extended" else _Factor(M)
    return f if f.ok else None


def _square_resolvent(A: np.ndarray, lam, precision: str = "double"):
    """``(A^2 + lam)^{-1}`` via the block system ``[[A, lam], [-I, A]]``, which avoids forming ``A^2``."""
    n = A.shape[0]
    I = np.eye(n, dtype=A.dtype)
    f = _solver(np.block([[A, lam * I], [-I, A]]), precision)
    if f is None:
        return None
    return f.solve(np.vstack([I, np.zeros_like(I)]))[n:]


# ---------------------------------------------------------------- resolvent


@dataclass
class SectorProbeConfig:
    """Sample layout for :func:`resolvent_survey`; ``|lambda|`` log-spaced in ``[lam_min, lam_max]``."""

    c: float = 1.0
    angles: tuple = (np.pi / 2, 3 * np.pi / 4, 0.95 * np.pi)
    n_samples: int = 20
    lam_min: float = 1e-2
    lam_max: float = 1e6
    s: int = 0
    gamma: float | None = None

    def __post_init__(self):
        if not self.c > 0:
            raise ValidationError(f"shift c must be > 0, got {self.c}")
        self.angles = tuple(float(a) for a in self.angles)
        if any(not 0 <= a < np.pi for a in self.angles):
            raise ValidationError("angles must lie in [0, pi)")
        if not 0 < self.lam_min < self.lam_max or self.n_samples < 2:
            raise ValidationError("need 0 < lam_min < lam_max and n_samples >= 2")

    @property
    def magnitudes(self) -> np.ndarray:
        return np.logspace(np.log10(self.lam_min), np.log10(self.lam_max), self.n_samples)

    def norm_request(self, op) -> NormRequest | None:
        if not isinstance(op, DiscreteOperator):
            return None
        gamma = self.gamma
        if gamma is None:
            gamma = op.geometry.gamma if op.geometry.gamma is not None else 0.0
        return NormRequest(self.s, gamma, 2.0, op.geometry.warp)


@dataclass
class ResolventSurvey:
    rows: list  # (theta, |lambda|, scaled norm or nan)
    flagged: list  # (theta, |lambda|) samples where op + lambda was singular

    def sup(self, theta: float) -> float:
        vals = [r[2] for r in self.rows if r[0] == theta and np.isfinite(r[2])]
        return max(vals) if vals else float("nan")

    @property
    def k_theta(self) -> dict:
        return {theta: self.sup(theta) for theta in dict.fromkeys(r[0] for r in self.rows)}


def shifted_negative(lap: DiscreteOperator, c: float) -> DiscreteOperator:
    """``c - L`` for a Laplacian-type operator ``L``."""
    if not c > 0:
        raise ValidationError(f"shift c must be > 0, got {c}")
    return lap.scale(-1.0).shift(c)


def resolvent_survey(op, config: SectorProbeConfig | None = None) -> ResolventSurvey:
    """Table of ``(1 + |lambda|) |(op + lambda)^{-1}|`` along rays ``lambda = r e^{i theta}``."""
    config = config or SectorProbeConfig()
    pieces = _pieces(op, config.norm_request(op))
    rows, flagged = [], []
    for theta in config.angles:
        for r in config.magnitudes:
            lam = r * np.exp(1j * theta)
            best = 0.0
            for p in pieces:
                Rinv = _resolvent(p.A, lam)
                if Rinv is None:
                    best = float("nan")
                    break
                best = max(best, p.norm(Rinv))
            if not np.isfinite(best):
                flagged.append((theta, float(r)))
            rows.append((theta, float(r), (1 + r) * best))
    return ResolventSurvey(rows, flagged)


def resolvent_identity_residual(op, pairs) -> float:
    """Max relative residual of ``R(l) - R(m) = (m - l) R(l) R(m)`` with ``R(z) = (op + z)^{-1}``."""
    worst = 0.0
    for p in _pieces(op):
        for lam, mu in pairs:
            Rl, Rm = _resolvent(p.A, lam), _resolvent(p.A, mu)
            if Rl is None or Rm is None:
                continue
            lhs = Rl - Rm
            rhs = (mu - lam) * (Rl @ Rm)
            worst = max(worst, p.norm(lhs - rhs) / max(p.norm(rhs), 1e-300))
    return worst


def square_factorization_check(op, lambdas, precision: str = "double") -> tuple[float, list]:
    """Residual of ``lam (A^2 + lam)^{-1} = (i sqrt(lam))(A + i sqrt(lam))^{-1} (-i sqrt(lam))(A - i sqrt(lam))^{-1}``.

    Returns the max relative residual over valid samples and the list of
    flagged (singular) samples. ``lam`` on ``(-inf, 0]`` is rejected.
    ``precision="extended"`` factorizes in ``clongdouble``; fourth-order
    operators need it for residuals near ``1e-10``.
    """
    if precision not in ("double", "extended"):
        raise ValidationError(f"unknown precision {precision!r}")
    pieces = _pieces(op)
    worst, flagged = 0.0, []
    for lam in lambdas:
        lam = complex(lam)
        if lam.imag == 0 and lam.real <= 0:
            raise ValidationError(f"lambda={lam} lies on the branch cut (-inf, 0]")
        # shifts are formed in the working precision: rounding A_ii + i sqrt(lam)
        # in double would perturb the operator by eps * max|A_ii|
        dtype = np.clongdouble if precision == "extended" else complex
        lam_w = dtype(lam)
        r = np.sqrt(lam_w)  # principal branch
        for p in pieces:
            A = p.A.astype(dtype)
            I = np.eye(A.shape[0], dtype=dtype)
            sq = _square_resolvent(A, lam_w, precision)
            f_p, f_m = _solver(A + 1j * r * I, precision), _solver(A - 1j * r * I, precision)
            if sq is None or f_p is None or f_m is None:
                flagged.append(lam)
                continue
            lhs = lam_w * sq
            rhs = (1j * r) * f_p.solve((-1j * r) * f_m.solve(I))
            diff = np.asarray(lhs - rhs, dtype=complex)
            worst = max(worst, p.norm(diff) / max(p.norm(np.asarray(lhs, dtype=complex)), 1e-300))
    return worst, flagged


# --------------------------------------------------------- imaginary powers


def _check_spectrum(A: np.ndarray) -> np.ndarray:
    w = np.linalg.eigvals(A)
    if not np.all(np.isfinite(w)):
        raise DomainError("spectrum is not finite")
    if w.real.min() <= 0:
        raise DomainError(
            f"spectrum must lie in the open right half-plane; min Re = {w.real.min():.3e} (increase the shift c)"
        )
    return w


class _EigPath:
    def __init__(self, A: np.ndarray):
        w, V = la.eig(A)
        self.cond = float(np.linalg.cond(V))
        self.ok = self.cond <= EIG_COND_MAX
        self.w, self.V = w, V
        self.Vinv = np.linalg.inv(V) if self.ok else None

    def power(self, t: float) -> np.ndarray:
        if t == 0:
            return np.eye(self.V.shape[0], dtype=complex)
        d = np.exp(1j * t * np.log(self.w))
        return (self.V * d) @ self.Vinv


def _gauss_panels(a: float, b: float, n_panels: int, order: int = 16):
    xg, wg = leggauss(order)
    edges = np.linspace(a, b, n_panels + 1)
    nodes, weights = [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        nodes.append(0.5 * (hi - lo) * xg + 0.5 * (hi + lo))
        weights.append(0.5 * (hi - lo) * wg)
    return np.concatenate(nodes), np.concatenate(weights)


class _ContourPath:
    """``A^{z} = A (2 pi i)^{-1} int_Gamma lam^{z-1} (lam - A)^{-1} d lam``.

    ``Gamma`` runs out along ``arg lam = -theta``, back along ``arg lam =
    theta`` and closes with the arc ``|lam| = r0`` through the positive axis,
    so it encloses the spectrum and avoids the branch cut. Radial parts use
    ``lam = r0 e^{s}`` and are cut where the integrand has decayed by e^-40.
    """

    def __init__(self, A: np.ndarray, spectrum: np.ndarray, panels_per_unit: float = 1.0):
        self.A = A
        mods = np.abs(spectrum)
        arg_max = float(np.abs(np.angle(spectrum)).max())
        self.theta = 0.5 * (max(arg_max, np.pi / 2) + np.pi)
        self.r0 = 0.5 * mods.min()
        s_max = np.log(max(np.linalg.norm(A, 2), mods.max()) / self.r0) + 40.0
        n_rad = max(8, int(np.ceil(panels_per_unit * s_max)))
        n_arc = max(4, int(np.ceil(panels_per_unit * 4 * self.theta)))
        s, ws = _gauss_panels(0.0, s_max, n_rad)
        phi, wp = _gauss_panels(-self.theta, self.theta, n_arc)
        lam_lo = self.r0 * np.exp(s - 1j * self.theta)
        lam_hi = self.r0 * np.exp(s + 1j * self.theta)
        lam_arc = self.r0 * np.exp(1j * phi)
        # outward on the lower ray, inward on the upper one, clockwise on the arc
        self.lams = np.concatenate([lam_lo, lam_hi, lam_arc])
        self.jac = np.concatenate([ws * lam_lo, -ws * lam_hi, -1j * wp * lam_arc])

    @property
    def nodes(self) -> int:
        return self.lams.size

    def powers(self, ts) -> list:
        """``A^{it}`` for every ``t`` in ``ts``, one resolvent solve per node."""
        n = self.A.shape[0]
        I = np.eye(n)
        ts = np.asarray(ts, float)
        acc = np.zeros((ts.size, n, n), dtype=complex)
        coefs = self.jac[None, :] * self.lams[None, :] ** (1j * ts[:, None] - 1) / (2j * np.pi)
        for k, lam in enumerate(self.lams):
            R = la.solve(lam * I - self.A, I, check_finite=False)
            acc += coefs[:, k, None, None] * R[None]
        return [I.astype(complex) if t == 0 else self.A @ acc[i] for i, t in enumerate(ts)]


@dataclass
class ImaginaryPower:
    t: float
    matrices: list
    norm: float
    method: str
    eig_cond: float
    converged: bool = True
    flags: list = field(default_factory=list)


class ImaginaryPowers:
    """Evaluator of ``A^{it}`` for one operator, sharing factorizations across ``t``."""

    def __init__(self, op, req: NormRequest | None = None, method: str = "auto", panels_per_unit: float = 1.0):
        if method not in ("auto", "eig", "contour"):
            raise ValidationError(f"unknown method {method!r}")
        self.pieces = _pieces(op, req)
        self.method = method
        self.panels_per_unit = panels_per_unit
        self._spec = [_check_spectrum(p.A) for p in self.pieces]
        self._eig = [_EigPath(p.A) for p in self.pieces] if method != "contour" else [None] * len(self.pieces)
        self.eig_cond = max((e.cond for e in self._eig if e is not None), default=float("nan"))

    def _use_eig(self, k: int, method: str) -> bool:
        if method == "eig":
            return True
        return method == "auto" and self._eig[k] is not None and self._eig[k].ok

    def compute_many(self, ts, method: str | None = None, check: bool = True) -> list:
        """:class:`ImaginaryPower` for each ``t``; contour results are checked by doubling the nodes."""
        method = method or self.method
        ts = [float(t) for t in ts]
        per_t = [[] for _ in ts]
        used, flags, converged = set(), [[] for _ in ts], [True] * len(ts)
        for k, p in enumerate(self.pieces):
            if self._use_eig(k, method):
                e = self._eig[k] or _EigPath(p.A)
                for i, t in enumerate(ts):
                    if not e.ok:
                        flags[i].append(f"block {k}: eigenvector condition {e.cond:.2e} > {EIG_COND_MAX:g}")
                    per_t[i].append(e.power(t))
                used.add("eig")
                continue
            used.add("contour")
            X = _ContourPath(p.A, self._spec[k], self.panels_per_unit).powers(ts)
            if check:
                X2 = _ContourPath(p.A, self._spec[k], 2 * self.panels_per_unit).powers(ts)
                for i in range(len(ts)):
                    n1, n2 = p.norm(X[i]), p.norm(X2[i])
                    if abs(n1 - n2) > 1e-6 * max(n2, 1.0):
                        converged[i] = False
                        flags[i].append(f"block {k}: contour norm moved {abs(n1 - n2):.2e} when nodes doubled")
                X = X2
            for i in range(len(ts)):
                per_t[i].append(X[i])
        out = []
        for i, t in enumerate(ts):
            mats = [np.eye(p.A.shape[0]) for p in self.pieces] if t == 0 else per_t[i]
            norm = max(p.norm(X) for p, X in zip(self.pieces, mats))
            out.append(ImaginaryPower(t, mats, norm, "+".join(sorted(used)), self.eig_cond,
                                      converged[i] and not flags[i], flags[i]))
        return out

    def compute(self, t: float, method: str | None = None, check: bool = True) -> ImaginaryPower:
        return self.compute_many([t], method, check)[0]

    def group_law_residual(self, ts, ss) -> float:
        """Max relative ``|A^{i(t+s)} - A^{it} A^{is}|`` over the ``ts x ss`` grid."""
        grid = sorted(set(ts) | set(ss) | {t + s for t in ts for s in ss})
        mats = {r.t: r.matrices for r in self.compute_many(grid, check=False)}
        worst = 0.0
        for t in ts:
            for s in ss:
                for p, a, b, c in zip(self.pieces, mats[t + s], mats[t], mats[s]):
                    worst = max(worst, p.norm(a - b @ c) / max(p.norm(a), 1e-300))
        return worst

    def path_agreement(self, ts) -> float:
        """Max relative difference between the eigen and contour paths over ``ts``."""
        a = self.compute_many(ts, "eig", check=False)
        b = self.compute_many(ts, "contour", check=False)
        worst = 0.0
        for ra, rb in zip(a, b):
            for p, x, y in zip(self.pieces, ra.matrices, rb.matrices):
                worst = max(worst, p.norm(x - y) / max(p.norm(x), 1e-300))
        return worst


def imaginary_power(op, t: float, req: NormRequest | None = None, method: str = "auto") -> ImaginaryPower:
    """``A^{it}`` and its induced norm; eigen path when well conditioned, Dunford contour otherwise."""
    return ImaginaryPowers(op, req, method).compute(t)


@dataclass
class BipReport:
    t: np.ndarray
    norms: np.ndarray
    M: float
    phi: float
    residual: float
    method: str
    flags: list = field(default_factory=list)

    def envelope(self) -> np.ndarray:
        return self.M * np.exp(self.phi * np.abs(self.t))


def fit_envelope(t, norms) -> tuple[float, float, float]:
    """Upper envelope ``M e^{phi |t|}``: ``phi`` from the outermost samples, ``M`` from the largest excess."""
    t = np.asarray(t, float)
    logs = np.log(np.asarray(norms, float))
    i_lo, i_hi = int(np.argmin(t)), int(np.argmax(t))
    span = abs(t[i_lo]) + abs(t[i_hi])
    phi = max(0.0, (logs[i_lo] + logs[i_hi]) / span) if span > 0 else 0.0
    excess = logs - phi * np.abs(t)
    logM = max(0.0, float(excess.max()))
    residual = float(np.sqrt(np.mean((logM + phi * np.abs(t) - logs) ** 2)))
    return float(np.exp(logM)), float(phi), residual


def bip_envelope(op, t=None, req: NormRequest | None = None, method: str = "auto") -> BipReport:
    """Sample ``|A^{it}|`` on ``t`` (default 33 points in ``[-4, 4]``) and fit ``M e^{phi |t|}``."""
    t = np.linspace(-4.0, 4.0, 33) if t is None else np.asarray(t, float)
    results = ImaginaryPowers(op, req, method).compute_many(t)
    norms = np.array([r.norm for r in results])
    flags = [f for r in results for f in r.flags]
    methods = {r.method for r in results if r.method}
    if not np.all(np.isfinite(norms)):
        raise DomainError("imaginary power norm is not finite")
    M, phi, resid = fit_envelope(t, norms)
    return BipReport(t, norms, M, phi, resid, "+".join(sorted(methods)), flags)
