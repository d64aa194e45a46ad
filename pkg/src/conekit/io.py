"""File formats: CSV tables, versioned JSON reports, field snapshots and manifests."""
from __future__ import annotations

import csv
import hashlib
import json
import math
from pathlib import Path

import numpy as np

from .cone_operators import AugmentedField, Cutoff
from .conormal import SingularFunction
from .cross_section import CrossSectionSpec
from .errors import ValidationError
from .mellin import Field, RadialGrid

SCHEMA_VERSION = "1.0"


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to ``None``."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    return obj


def write_json(path: Path, payload: dict) -> Path:
    path = Path(path)
    data = {"schema_version": SCHEMA_VERSION, **_clean(payload)}
    path.write_text(json.dumps(data, indent=2, sort_keys=False) + "\n")
    return path


def read_json(path: Path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationError(f"cannot read JSON {path}: {exc}") from None


def write_csv(path: Path, header, rows) -> Path:
    """CSV with a header row; the first line is ``# schema_version=...``."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        fh.write(f"# schema_version={SCHEMA_VERSION}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def read_csv(path: Path) -> tuple[list, list]:
    try:
        lines = [ln for ln in Path(path).read_text().splitlines() if ln and not ln.startswith("#")]
    except OSError as exc:
        raise ValidationError(f"cannot read CSV {path}: {exc}") from None
    rows = list(csv.reader(lines))
    if not rows:
        raise ValidationError(f"CSV {path} is empty")
    return rows[0], rows[1:]


def write_snapshot(path: Path, u: AugmentedField | Field, time: float | None = None) -> list[Path]:
    """Snapshot CSV ``(mode_id, x, value)`` of the evaluated field, plus coefficient JSON if augmented."""
    path = Path(path)
    fld = u.evaluate() if isinstance(u, AugmentedField) else u
    labels = [m.label for m in fld.cross_section.modes()]
    x = fld.grid.x
    rows = ((labels[m], x[i], fld.values[m, i]) for m in range(len(labels)) for i in range(x.size))
    out = [write_csv(path, ["mode_id", "x", "value"], rows)]
    if isinstance(u, AugmentedField):
        out.append(write_json(path.with_suffix(".json"), {"time": time, **coefficients_payload(u)}))
    return out


def coefficients_payload(u: AugmentedField) -> dict:
    return {
        "constant": u.constant,
        "cutoff": {"r1": u.cutoff.r1, "r2": u.cutoff.r2, "eps": u.cutoff.eps},
        "terms": [
            {"rho": f.rho, "log_power": f.log_power, "j": f.j, "branch": f.branch, "coefficient": c}
            for f, c in zip(u.basis, u.coeffs)
        ],
    }


def read_snapshot(path: Path, spec: CrossSectionSpec) -> AugmentedField | Field:
    """Inverse of :func:`write_snapshot`; the grid is rebuilt from the ``x`` column."""
    header, rows = read_csv(path)
    if header != ["mode_id", "x", "value"]:
        raise ValidationError(f"snapshot {path}: expected header mode_id,x,value, got {header}")
    labels = [m.label for m in spec.modes()]
    by_mode: dict = {}
    for k, row in enumerate(rows):
        if len(row) != 3:
            raise ValidationError(f"snapshot {path}: row {k + 1} has {len(row)} fields")
        try:
            by_mode.setdefault(row[0], []).append((float(row[1]), float(row[2])))
        except ValueError:
            raise ValidationError(f"snapshot {path}: row {k + 1} is not numeric") from None
    missing = [lb for lb in labels if lb not in by_mode]
    extra = [lb for lb in by_mode if lb not in labels]
    if missing or extra:
        raise ValidationError(f"snapshot {path}: mode mismatch (missing {missing}, unexpected {extra})")
    xs = np.array([p[0] for p in by_mode[labels[0]]])
    grid = RadialGrid(xs.size - 1, float(xs.min()))
    if not np.allclose(np.sort(xs)[::-1], grid.x, rtol=1e-9, atol=0):
        raise ValidationError(f"snapshot {path}: x column is not a log-uniform grid")
    vals = np.zeros((len(labels), grid.size))
    for m, lb in enumerate(labels):
        pts = sorted(by_mode[lb], key=lambda p: -p[0])
        if len(pts) != grid.size:
            raise ValidationError(f"snapshot {path}: mode {lb} has {len(pts)} nodes, expected {grid.size}")
        vals[m] = [p[1] for p in pts]
    fld = Field(grid, spec, vals)
    fld.check_finite()
    coef_path = Path(path).with_suffix(".json")
    if not coef_path.exists():
        return fld
    meta = read_json(coef_path)
    basis = tuple(SingularFunction(t["rho"], t["log_power"], t["j"], t["branch"]) for t in meta.get("terms", []))
    coeffs = np.array([t["coefficient"] for t in meta.get("terms", [])], float)
    cut = Cutoff(**meta["cutoff"]) if "cutoff" in meta else Cutoff()
    expansion = AugmentedField(Field.zeros(grid, spec), basis, coeffs, float(meta.get("constant", 0.0)), cut)
    return AugmentedField(fld - expansion.evaluate(), basis, coeffs, float(meta.get("constant", 0.0)), cut)


def write_triplets(path: Path, op) -> Path:
    """Sparse operator as ``(mode, row, col, value)`` rows; coupled operators use mode -1."""
    return write_csv(path, ["mode", "row", "col", "value"], op.triplets())


def basis_from_report(report: dict) -> list[SingularFunction]:
    try:
        return [SingularFunction(b["rho"], b["log_power"], b["j"], b["branch"]) for b in report["basis"]]
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"analyze report lacks a valid basis list: {exc}") from None


def file_digest(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
