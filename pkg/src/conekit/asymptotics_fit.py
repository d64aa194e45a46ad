"""Near-tip exponent fits and comparison with predicted singular functions."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cone_operators import AugmentedField, Cutoff
from .conormal import SingularFunction, bilaplacian_domain_asymptotics
from .errors import ValidationError
from .mellin import Field, RadialGrid

NO_SIGNAL = 1e-13
LOG_DROP = 10.0
REL_TOL = 0.05  # exponent tolerance per unit exponent: 0.05 at x^1, 0.1 at x^2


@dataclass(frozen=True)
class FitWindow:
    """Fit range ``[x_lo, x_hi]`` inside the region where the cutoff is 1."""

    x_lo: float | None = None
    x_hi: float = 0.1
    min_nodes: int = 8

    def bounds(self, grid: RadialGrid, cutoff: Cutoff | None = None) -> tuple[float, float]:
        cutoff = cutoff or Cutoff()
        lo = 4 * grid.x_min if self.x_lo is None else self.x_lo
        hi = self.x_hi
        if not grid.x_min < lo < hi:
            raise ValidationError(f"window [{lo:g}, {hi:g}] must satisfy x_min={grid.x_min:g} < x_lo < x_hi")
        if hi >= cutoff.r1:
            raise ValidationError(f"x_hi={hi:g} must lie below the cutoff plateau end r1={cutoff.r1:g}")
        if np.log(hi / lo) < 1:
            raise ValidationError(f"log-spread log(x_hi/x_lo)={np.log(hi / lo):.3f} < 1")
        return lo, hi

    def mask(self, grid: RadialGrid, cutoff: Cutoff | None = None) -> np.ndarray:
        lo, hi = self.bounds(grid, cutoff)
        m = (grid.x >= lo) & (grid.x <= hi)
        if m.sum() < self.min_nodes:
            raise ValidationError(f"window holds {int(m.sum())} nodes; at least {self.min_nodes} required")
        return m

    def shrunk(self, grid: RadialGrid, factor: float = 2.0) -> "FitWindow":
        """Same geometric centre, log-width divided by ``factor``."""
        lo, hi = self.bounds(grid)
        mid, half = 0.5 * (np.log(lo) + np.log(hi)), 0.5 * np.log(hi / lo) / factor
        return FitWindow(float(np.exp(mid - half)), float(np.exp(mid + half)), self.min_nodes)


@dataclass(frozen=True)
class ExponentFit:
    sigma: float
    stderr: float
    n_nodes: int
    no_signal: bool = False


def fit_exponent(profile, x, window: FitWindow | None = None, grid: RadialGrid | None = None,
                 constant: float = 0.0) -> ExponentFit:
    """OLS slope of ``log|u - constant|`` against ``log x`` on the window.

    ``x`` is the node array; pass ``grid`` to apply a :class:`FitWindow`,
    otherwise every supplied node is used.
    """
    u = np.asarray(profile, float) - constant
    x = np.asarray(x, float)
    if grid is not None:
        m = (window or FitWindow()).mask(grid)
        u, x = u[m], x[m]
    if u.size < 3:
        raise ValidationError("need at least 3 nodes for an exponent fit")
    if not np.all(np.isfinite(u)) or np.abs(u).min() <= NO_SIGNAL:
        return ExponentFit(float("nan"), float("nan"), int(u.size), True)
    X = np.column_stack([np.ones_like(x), np.log(x)])
    y = np.log(np.abs(u))
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ coef
    dof = max(u.size - 2, 1)
    s2 = float(resid @ resid) / dof
    cov = s2 * np.linalg.inv(X.T @ X)
    return ExponentFit(float(coef[1]), float(np.sqrt(max(cov[1, 1], 0.0))), int(u.size))


@dataclass
class ModeFit:
    mode: int
    label: str
    sigma: float
    stderr: float
    predicted: float | None
    tolerance: float | None
    match: bool | None
    coefficients: dict
    residual_ratio: float
    log_detected: bool | None
    no_signal: bool = False


@dataclass
class FitReport:
    time: float | None
    window: tuple
    modes: list = field(default_factory=list)
    constant: float = 0.0

    @property
    def all_match(self) -> bool:
        flags = [m.match for m in self.modes if m.match is not None]
        return bool(flags) and all(flags)

    def mode(self, label: str) -> ModeFit:
        for m in self.modes:
            if m.label == label:
                return m
        raise KeyError(label)

    def to_dict(self) -> dict:
        return {
            "time": self.time,
            "window": list(self.window),
            "constant": self.constant,
            "all_match": self.all_match,
            "modes": [
                {
                    "mode": m.label,
                    "sigma": _finite_or_none(m.sigma),
                    "stderr": _finite_or_none(m.stderr),
                    "predicted": m.predicted,
                    "tolerance": m.tolerance,
                    "match": m.match,
                    "no_signal": m.no_signal,
                    "coefficients": m.coefficients,
                    "residual_ratio": _finite_or_none(m.residual_ratio),
                    "log_detected": m.log_detected,
                }
                for m in self.modes
            ],
        }


def _finite_or_none(v):
    return float(v) if v is not None and np.isfinite(v) else None


def _term_name(f: SingularFunction | None) -> str:
    if f is None:
        return "1"
    p = f"x^{f.exponent:g}"
    return p + " log x" if f.log_power else p


def _check_rank(design: np.ndarray, names: list[str]) -> None:
    cols = design / np.linalg.norm(design, axis=0)
    s = np.linalg.svd(cols, compute_uv=False)
    if s[-1] > 1e-10 * s[0]:
        return
    gram = np.abs(cols.T @ cols)
    np.fill_diagonal(gram, 0.0)
    a, b = np.unravel_index(np.argmax(gram), gram.shape)
    raise ValidationError(f"collinear design on the window: {names[a]!r} vs {names[b]!r}")


def fit_expansion(
    u: AugmentedField | Field,
    predicted,
    window: FitWindow | None = None,
    include_constant: bool = True,
    time: float | None = None,
) -> FitReport:
    """Least-squares fit of every mode profile against its predicted terms.

    Each mode gets its predicted ``x^{-rho} log^k x`` columns (and the
    constant for mode 0). The leading exponent is fitted separately by
    log-log regression after removing the fitted constant, and compared with
    the smallest predicted exponent of that mode. For an
    :class:`AugmentedField` the mode-0 constant removed before that
    regression is the field's own constant coefficient (pinned at the tip);
    otherwise it is the least-squares constant.
    """
    predicted = list(predicted)
    if not predicted and not include_constant:
        raise ValidationError("predicted expansion is empty")
    fld = u.evaluate() if isinstance(u, AugmentedField) else u
    cutoff = u.cutoff if isinstance(u, AugmentedField) else Cutoff()
    window = window or FitWindow()
    grid = fld.grid
    mask = window.mask(grid, cutoff)
    x = grid.x[mask]
    report = FitReport(time, window.bounds(grid, cutoff))
    for m, mode in enumerate(fld.cross_section.modes()):
        y = fld.values[m][mask]
        terms = [f for f in predicted if f.j == mode.j and f.branch == mode.branch]
        cols, names = [], []
        if m == 0 and include_constant:
            cols.append(np.ones_like(x))
            names.append("1")
        for f in terms:
            cols.append(x ** f.exponent * np.log(x) ** f.log_power * cutoff(x))
            names.append(_term_name(f))
        coefficients, ratio, log_detected, constant = {}, float("nan"), None, 0.0
        signal = float(np.linalg.norm(y))
        if cols:
            A = np.column_stack(cols)
            _check_rank(A, names)
            c, *_ = np.linalg.lstsq(A, y, rcond=None)
            coefficients = {nm: float(v) for nm, v in zip(names, c)}
            ratio = float(np.linalg.norm(y - A @ c) / signal) if signal > 0 else float("nan")
            constant = float(c[0]) if m == 0 and include_constant else 0.0
            if m == 0 and include_constant and isinstance(u, AugmentedField):
                constant = float(u.constant)
            logs = [i for i, nm in enumerate(names) if nm.endswith("log x")]
            if logs:
                keep = [i for i in range(len(names)) if i not in logs]
                base = np.linalg.norm(y - A[:, keep] @ np.linalg.lstsq(A[:, keep], y, rcond=None)[0])
                full = np.linalg.norm(y - A @ c)
                log_detected = bool(base >= LOG_DROP * max(full, 1e-300))
        if m == 0:
            report.constant = constant
        fit = fit_exponent(y, x, constant=constant)
        exps = sorted({f.exponent for f in terms if f.exponent != 0})
        pred = float(exps[0]) if exps else None
        tol = REL_TOL * abs(pred) if pred is not None else None
        match = None
        if pred is not None and not fit.no_signal:
            match = bool(abs(fit.sigma - pred) <= tol)
        report.modes.append(
            ModeFit(m, mode.label, fit.sigma, fit.stderr, pred, tol, match, coefficients, ratio, log_detected,
                    fit.no_signal)
        )
    return report


def compare(result, geometry, times, window: FitWindow | None = None) -> list[FitReport]:
    """Fit snapshots of a solve at ``times`` against the bilaplacian domain asymptotics."""
    if geometry.gamma is None:
        raise ValidationError("geometry needs a weight gamma to predict asymptotics")
    basis, _ = bilaplacian_domain_asymptotics(geometry.spec, geometry.gamma)
    return [fit_expansion(result.snapshot_at(t), basis, window, time=float(t)) for t in times]
