"""Strict-schema TOML run configuration.

Every section and key is declared in :data:`SCHEMA`; unknown keys, wrong
types and failed cross-checks are all collected before a single
:class:`ConfigError` is raised.
"""
from __future__ import annotations

import hashlib
import json
import math
import sys
from dataclasses import dataclass
from pathlib import Path

from .cone_operators import ConeGeometry, Cutoff, OuterBC
from .conormal import spec_window
from .cross_section import CrossSectionSpec, WarpProfile
from .errors import ConekitError, ValidationError
from .mellin import RadialGrid

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib


class ConfigError(ConekitError, ValueError):
    """All validation problems of one config file."""

    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("invalid configuration:\n  - " + "\n  - ".join(self.errors))


REQUIRED = object()

# section -> key -> (type tag, default)
SCHEMA: dict = {
    "": {"seed": ("int", 0), "gamma": ("float?", None), "s": ("int", 0)},
    "cross_section": {
        "kind": ("str", "circle"),
        "j_max": ("int", 8),
        "n": ("int?", None),
        "eigenvalues": ("floats?", None),
        "multiplicities": ("ints?", None),
        "volume": ("float?", None),
    },
    "warp": {"coeffs": ("floats", [])},
    "grid": {"N": ("int", 128), "x_min": ("float", 1e-4)},
    "cutoff": {"r1": ("float", 0.25), "r2": ("float", 0.5)},
    "operator": {"outer_bc": ("str", "neumann"), "export": ("bool", False)},
    "solve": {
        "tau": ("float", 1e-4),
        "T": ("float", 0.1),
        "scheme": ("str", "stabilized"),
        "S": ("float", 2.0),
        "c0": ("float", 1.0),
        "snapshot_every": ("int", 100),
        "snapshot_times": ("floats", []),
        "initial": ("table", {}),
    },
    "solve.initial": {"constant": ("float", 0.0), "terms": ("tables", []), "snapshot": ("str?", None)},
    "solve.initial.terms": {
        "mode": ("str", REQUIRED),
        "amplitude": ("float", REQUIRED),
        "power": ("float", 0.0),
        "log_power": ("int", 0),
        "cutoff": ("bool", False),
    },
    "probe": {
        "c": ("float", 1.0),
        "angles": ("floats", [math.pi / 2, 3 * math.pi / 4, 0.95 * math.pi]),
        "n_samples": ("int", 20),
        "lam_min": ("float", 1e-2),
        "lam_max": ("float", 1e6),
        "s": ("int?", None),
        "t_min": ("float", -4.0),
        "t_max": ("float", 4.0),
        "t_samples": ("int", 33),
        "method": ("str", "auto"),
        "eps": ("floats", []),
    },
    "fit": {
        "snapshot": ("str?", None),
        "analyze": ("str?", None),
        "x_lo": ("float?", None),
        "x_hi": ("float", 0.1),
        "min_nodes": ("int", 8),
    },
    "norm": {"snapshot": ("str?", None), "s": ("int", 0), "gamma": ("float?", None), "p": ("float", 2.0)},
}

ENUMS = {
    ("cross_section", "kind"): ("circle", "sphere", "custom"),
    ("operator", "outer_bc"): ("neumann", "dirichlet"),
    ("solve", "scheme"): ("stabilized", "linearized"),
    ("probe", "method"): ("auto", "eig", "contour"),
}


def _type_ok(tag: str, v) -> bool:
    optional = tag.endswith("?")
    tag = tag.rstrip("?")
    if v is None:
        return optional
    if tag == "int":
        return isinstance(v, int) and not isinstance(v, bool)
    if tag == "float":
        return isinstance(v, (int, float)) and not isinstance(v, bool)
    if tag == "str":
        return isinstance(v, str)
    if tag == "bool":
        return isinstance(v, bool)
    if tag == "floats":
        return isinstance(v, list) and all(_type_ok("float", e) for e in v)
    if tag == "ints":
        return isinstance(v, list) and all(_type_ok("int", e) for e in v)
    if tag == "table":
        return isinstance(v, dict)
    if tag == "tables":
        return isinstance(v, list) and all(isinstance(e, dict) for e in v)
    raise AssertionError(tag)


def _fill(section: str, data: dict, errors: list) -> dict:
    schema = SCHEMA[section]
    where = f"[{section}]" if section else "top level"
    out = {}
    for key in data:
        if key not in schema and not (section == "" and key in SCHEMA):
            errors.append(f"unknown key {key!r} at {where} (allowed: {', '.join(sorted(schema))})")
    for key, (tag, default) in schema.items():
        if key not in data:
            if default is REQUIRED:
                errors.append(f"missing required key {key!r} at {where}")
            out[key] = None if default is REQUIRED else default
            continue
        v = data[key]
        if not _type_ok(tag, v):
            errors.append(f"{where}.{key}: expected {tag.rstrip('?')}, got {type(v).__name__}")
            out[key] = None if default is REQUIRED else default
            continue
        if tag.rstrip("?") == "float" and v is not None:
            v = float(v)
        if tag.rstrip("?") == "floats":
            v = [float(e) for e in v]
        allowed = ENUMS.get((section, key))
        if allowed and v not in allowed:
            errors.append(f"{where}.{key}: {v!r} is not one of {allowed}")
        out[key] = v
    return out


@dataclass
class RunConfig:
    """Validated configuration with defaults filled in."""

    path: Path | None
    data: dict  # canonical, defaults filled
    spec: CrossSectionSpec
    warp: WarpProfile
    grid: RadialGrid
    cutoff: Cutoff
    gamma: float
    s: int
    seed: int
    outer_bc: OuterBC

    @property
    def base_dir(self) -> Path:
        return self.path.parent if self.path else Path.cwd()

    def section(self, name: str) -> dict:
        return self.data[name]

    def resolve(self, p: str | None) -> Path | None:
        if p is None:
            return None
        q = Path(p)
        return q if q.is_absolute() else self.base_dir / q

    def geometry(self, grid: RadialGrid | None = None) -> ConeGeometry:
        return ConeGeometry(self.spec, grid or self.grid, self.warp, self.gamma, self.cutoff)

    def config_hash(self) -> str:
        blob = json.dumps(self.data, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def _build_spec(cs: dict, errors: list) -> CrossSectionSpec | None:
    try:
        if cs["kind"] == "circle":
            return CrossSectionSpec.circle(cs["j_max"])
        if cs["kind"] == "sphere":
            return CrossSectionSpec.sphere(cs["j_max"])
        if cs["kind"] == "custom":
            missing = [k for k in ("n", "eigenvalues", "multiplicities") if cs[k] is None]
            if missing:
                errors.append(f"[cross_section]: custom kind needs {', '.join(missing)}")
                return None
            kw = {} if cs["volume"] is None else {"volume": cs["volume"]}
            return CrossSectionSpec.custom(cs["n"], cs["eigenvalues"], cs["multiplicities"], cs["j_max"], **kw)
    except (ValidationError, ValueError) as exc:
        errors.append(f"[cross_section]: {exc}")
    return None


def config_from_dict(raw: dict, path: Path | None = None) -> RunConfig:
    """Validate a parsed TOML document; raises :class:`ConfigError` listing every problem."""
    errors: list[str] = []
    data = {"": _fill("", {k: v for k, v in raw.items() if not isinstance(v, dict)}, errors)}
    for key, v in raw.items():
        if isinstance(v, dict) and key not in SCHEMA:
            errors.append(f"unknown section [{key}] (allowed: {', '.join(sorted(k for k in SCHEMA if k and '.' not in k))})")
    for section in (k for k in SCHEMA if k and "." not in k):
        sub = raw.get(section, {})
        if not isinstance(sub, dict):
            errors.append(f"[{section}] must be a table")
            sub = {}
        data[section] = _fill(section, sub, errors)
    init = _fill("solve.initial", data["solve"]["initial"] or {}, errors)
    init["terms"] = [_fill("solve.initial.terms", t, errors) for t in init["terms"]]
    data["solve"]["initial"] = init

    spec = _build_spec(data["cross_section"], errors)
    warp = grid = cutoff = None
    try:
        warp = WarpProfile(tuple(data["warp"]["coeffs"]))
    except (ValidationError, ValueError) as exc:
        errors.append(f"[warp]: {exc}")
    try:
        grid = RadialGrid(data["grid"]["N"], data["grid"]["x_min"])
    except (ValidationError, ValueError) as exc:
        errors.append(f"[grid]: {exc}")
    try:
        cutoff = Cutoff(data["cutoff"]["r1"], data["cutoff"]["r2"])
    except (ValidationError, ValueError) as exc:
        errors.append(f"[cutoff]: {exc}")
    if warp is not None and grid is not None:
        try:
            warp.check_positive(grid.x)
        except ConekitError as exc:
            errors.append(f"[warp]: {exc}")

    gamma = data[""]["gamma"]
    if spec is not None:
        try:
            win = spec_window(spec)
        except (ValidationError, ValueError) as exc:
            errors.append(f"[cross_section]: {exc}")
            win = None
        if win is not None:
            if gamma is None:
                gamma = 0.5 * (win.gamma_min + win.gamma_max)
            elif not win.gamma_min < gamma < win.gamma_max:
                errors.append(
                    f"gamma={gamma:g} lies outside the weight window ({win.gamma_min:g}, {win.gamma_max:g}) "
                    f"= ((n-3)/2, min((n-3)/2 + eps_bar, (n+1)/2)) with eps_bar={win.eps_bar:g}"
                )
    data[""]["gamma"] = gamma
    if data[""]["s"] < 0:
        errors.append("s must be >= 0")

    sol = data["solve"]
    if not sol["tau"] > 0:
        errors.append("[solve].tau must be > 0")
    elif not sol["T"] >= sol["tau"]:
        errors.append("[solve].T must be >= tau")
    if sol["S"] < 0:
        errors.append("[solve].S must be >= 0")
    if sol["snapshot_every"] < 1:
        errors.append("[solve].snapshot_every must be >= 1")
    if spec is not None:
        labels = [m.label for m in spec.modes()]
        for k, t in enumerate(init["terms"]):
            if t["mode"] is not None and t["mode"] not in labels:
                errors.append(f"[solve.initial].terms[{k}].mode={t['mode']!r} is not a retained mode {labels}")

    pr = data["probe"]
    if any(not 0 <= a < math.pi for a in pr["angles"]):
        errors.append("[probe].angles must lie in [0, pi)")
    if not 0 < pr["lam_min"] < pr["lam_max"]:
        errors.append("[probe] needs 0 < lam_min < lam_max")
    if pr["n_samples"] < 2 or pr["t_samples"] < 2:
        errors.append("[probe] needs n_samples >= 2 and t_samples >= 2")
    if not pr["t_min"] < pr["t_max"]:
        errors.append("[probe] needs t_min < t_max")
    if grid is not None and cutoff is not None:
        for e in pr["eps"]:
            if not 0 < e <= 1:
                errors.append(f"[probe].eps={e:g} must lie in (0, 1]")
            elif not grid.x_min < cutoff.r1 * e:
                errors.append(f"[probe].eps={e:g}: x_min={grid.x_min:g} must be < r1*eps={cutoff.r1 * e:g}")
    nm = data["norm"]
    if not 1 < nm["p"] < math.inf:
        errors.append("[norm].p must satisfy 1 < p < inf")

    if errors:
        raise ConfigError(errors)
    return RunConfig(path, data, spec, warp, grid, cutoff, gamma, data[""]["s"], data[""]["seed"],
                     OuterBC(data["operator"]["outer_bc"]))


def parse_config(path) -> RunConfig:
    """Read and validate a TOML config file."""
    path = Path(path)
    try:
        raw = tomllib.loads(path.read_text())
    except OSError as exc:
        raise ConfigError([f"cannot read {path}: {exc}"]) from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError([f"{path}: TOML syntax error: {exc}"]) from None
    return config_from_dict(raw, path.resolve())
