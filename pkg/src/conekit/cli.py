"""Command line entry point: ``conekit <subcommand> --config run.toml --out dir``.

Each subcommand writes its CSV/JSON outputs plus ``manifest.json``. The exit
code is 0 iff every recorded check passed, 1 if a check failed or the run
raised, and 2 for an invalid configuration.
"""
from __future__ import annotations

import argparse
import logging
import sys
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .asymptotics_fit import FitWindow, fit_expansion
from .ch_solver import InitialData, InitialTerm, SolverConfig, solve
from .cone_operators import AugmentedField, assemble_laplacian, perturbation_norm
from .config import ConfigError, RunConfig, parse_config
from .conormal import report as conormal_report
from .errors import ConekitError, ValidationError
from .functional_calculus import SectorProbeConfig, bip_envelope, resolvent_survey, shifted_negative
from .io import (basis_from_report, file_digest, read_json, read_snapshot, write_csv, write_json,
                 write_snapshot, write_triplets)
from .mellin import Field, NormRequest, hs_norm
from .parallel import capped

log = logging.getLogger("conekit")

MASS_RTOL, MASS_ATOL = 1e-10, 1e-12
ENERGY_TOL = 1e-10
SLOPE_MIN = 0.9


@dataclass
class Run:
    """Outputs and checks collected while a subcommand executes."""

    out: Path
    outputs: list = field(default_factory=list)
    checks: list = field(default_factory=list)

    def add(self, *paths) -> None:
        for p in paths:
            self.outputs.extend(p if isinstance(p, list) else [p])

    def check(self, name: str, passed: bool, detail: str = "") -> None:
        self.checks.append({"name": name, "passed": bool(passed), "detail": detail})


# ---------------------------------------------------------------- subcommands


def cmd_analyze(cfg: RunConfig, run: Run) -> None:
    rep = conormal_report(cfg.spec, cfg.gamma)
    rep["cross_section"] = {"kind": cfg.data["cross_section"]["kind"], "n": cfg.spec.n, "j_max": cfg.spec.j_max}
    run.add(write_json(run.out / "analyze.json", rep))
    win = rep["window"]
    run.check("gamma_in_window", win["gamma_min"] < cfg.gamma < win["gamma_max"],
              f"gamma={cfg.gamma:g} in ({win['gamma_min']:g}, {win['gamma_max']:g})")
    if cfg.data["operator"]["export"]:
        run.add(write_triplets(run.out / "laplacian.csv", assemble_laplacian(cfg.geometry(), cfg.outer_bc)))


def _probe_operator(cfg: RunConfig):
    c = cfg.data["probe"]["c"]
    geometry = cfg.geometry()
    return geometry, shifted_negative(assemble_laplacian(geometry, cfg.outer_bc), c)


def _probe_s(cfg: RunConfig) -> int:
    s = cfg.data["probe"]["s"]
    return cfg.s if s is None else s


def cmd_probe_resolvent(cfg: RunConfig, run: Run) -> None:
    pr = cfg.data["probe"]
    geometry, op = _probe_operator(cfg)
    sc = SectorProbeConfig(pr["c"], tuple(pr["angles"]), pr["n_samples"], pr["lam_min"], pr["lam_max"],
                           _probe_s(cfg), cfg.gamma)
    survey = resolvent_survey(op, sc)
    run.add(write_csv(run.out / "resolvent.csv", ["theta", "abs_lambda", "scaled_norm"], survey.rows))
    k = survey.k_theta
    summary = {
        "c": pr["c"], "s": sc.s, "gamma": cfg.gamma,
        "K_theta": [{"theta": th, "K": v} for th, v in k.items()],
        "flagged": [{"theta": th, "abs_lambda": r} for th, r in survey.flagged],
    }
    run.check("k_theta_finite", all(np.isfinite(v) for v in k.values()),
              ", ".join(f"theta={th:.4f}: K={v:.4g}" for th, v in k.items()))
    if pr["eps"]:
        eps = np.array(sorted(pr["eps"], reverse=True))
        norms = np.array([perturbation_norm(geometry, e, pr["c"], outer_bc=cfg.outer_bc).value for e in eps])
        run.add(write_csv(run.out / "perturbation.csv", ["eps", "norm"], zip(eps, norms)))
        slope = None
        if np.all(norms > 0) and eps.size >= 2:
            slope = float(np.polyfit(np.log(eps), np.log(norms), 1)[0])
            run.check("perturbation_slope", slope >= SLOPE_MIN, f"slope={slope:.4f} (need >= {SLOPE_MIN})")
        else:
            run.check("perturbation_slope", bool(np.all(norms == 0)), "B_eps vanishes identically"
                      if np.all(norms == 0) else "some but not all norms vanish")
        summary["perturbation"] = {"eps": eps, "norm": norms, "slope": slope}
    run.add(write_json(run.out / "resolvent.json", summary))


def cmd_probe_bip(cfg: RunConfig, run: Run) -> None:
    pr = cfg.data["probe"]
    geometry, op = _probe_operator(cfg)
    req = NormRequest(_probe_s(cfg), cfg.gamma, 2.0, geometry.warp)
    t = np.linspace(pr["t_min"], pr["t_max"], pr["t_samples"])
    rep = bip_envelope(op, t, req, pr["method"])
    run.add(write_csv(run.out / "bip.csv", ["t", "norm", "envelope_value"], zip(rep.t, rep.norms, rep.envelope())))
    run.add(write_json(run.out / "bip.json", {
        "c": pr["c"], "s": req.s, "gamma": cfg.gamma, "M": rep.M, "phi": rep.phi,
        "residual": rep.residual, "method": rep.method, "flags": rep.flags,
    }))
    run.check("envelope_finite", np.isfinite(rep.M) and np.isfinite(rep.phi), f"M={rep.M:.6g}, phi={rep.phi:.6g}")
    run.check("paths_converged", not rep.flags, "; ".join(rep.flags))


def _initial(cfg: RunConfig, geometry):
    init = cfg.data["solve"]["initial"]
    if init["snapshot"] is not None:
        u = read_snapshot(cfg.resolve(init["snapshot"]), cfg.spec)
        fld = u.evaluate() if isinstance(u, AugmentedField) else u
        if fld.grid.size != geometry.grid.size or not np.allclose(fld.grid.x, geometry.grid.x, rtol=1e-9):
            raise ValidationError("initial snapshot grid differs from the configured [grid]")
        return Field(geometry.grid, geometry.spec, fld.values)
    terms = [InitialTerm(**t) for t in init["terms"]]
    return InitialData(init["constant"], terms)


def cmd_solve(cfg: RunConfig, run: Run) -> None:
    sol = cfg.data["solve"]
    geometry = cfg.geometry()
    conf = SolverConfig(geometry, sol["tau"], sol["T"], sol["scheme"], sol["S"], sol["c0"],
                        _initial(cfg, geometry), sol["snapshot_every"], cfg.outer_bc)
    t0 = time.perf_counter()
    result = solve(conf, sol["snapshot_times"])
    log.info("solve finished in %.1f s with status %s", time.perf_counter() - t0, result.status)
    diag = result.diagnostics
    run.add(write_csv(run.out / "diagnostics.csv", ["step", "time", "mass", "energy", "residual"],
                      ((d.step, d.time, d.mass, d.energy, d.residual) for d in diag)))
    snap_dir = run.out / "snapshots"
    snap_dir.mkdir(exist_ok=True)
    listing = []
    for t, snap in zip(result.times, result.snapshots):
        step = int(round(t / conf.tau))
        paths = write_snapshot(snap_dir / f"snapshot_{step:06d}.csv", snap, t)
        run.add(paths)
        listing.append({"time": t, "step": step, "files": [str(p.relative_to(run.out)) for p in paths]})
    mass = np.array([d.mass for d in diag])
    energy = np.array([d.energy for d in diag])
    drift = float(np.max(np.abs(mass - mass[0])))
    rise = float(np.max(np.diff(energy))) if energy.size > 1 else 0.0
    run.add(write_json(run.out / "solve.json", {
        "status": result.status, "message": result.message, "scheme": conf.scheme.value,
        "tau": conf.tau, "T": conf.T, "steps_completed": diag[-1].step, "steps_requested": conf.n_steps,
        "max_mass_drift": drift, "relative_mass_drift": drift / max(abs(mass[0]), 1e-300),
        "max_energy_increase": rise, "snapshots": listing,
    }))
    run.check("completed", result.status == "ok", result.message)
    if conf.scheme.value == "stabilized":
        bound = MASS_RTOL * abs(mass[0]) + MASS_ATOL
        run.check("mass_conserved", drift <= bound, f"max drift {drift:.3e} (bound {bound:.3e})")
        run.check("energy_non_increasing", rise <= ENERGY_TOL, f"max per-step increase {rise:.3e}")


def _fit_basis(cfg: RunConfig):
    src = cfg.data["fit"]["analyze"]
    if src is None:
        return conormal_report(cfg.spec, cfg.gamma)["basis"], None
    rep = read_json(cfg.resolve(src))
    return rep.get("basis"), str(cfg.resolve(src))


def cmd_fit(cfg: RunConfig, run: Run) -> None:
    ft = cfg.data["fit"]
    if ft["snapshot"] is None:
        raise ValidationError("[fit].snapshot is required for the fit subcommand")
    snap_path = cfg.resolve(ft["snapshot"])
    u = read_snapshot(snap_path, cfg.spec)
    basis_raw, analyze_src = _fit_basis(cfg)
    basis = basis_from_report({"basis": basis_raw})
    coef = snap_path.with_suffix(".json")
    t = read_json(coef).get("time") if coef.exists() else None
    rep = fit_expansion(u, basis, FitWindow(ft["x_lo"], ft["x_hi"], ft["min_nodes"]), time=t)
    payload = {"snapshot": str(snap_path), "analyze": analyze_src, **rep.to_dict()}
    run.add(write_json(run.out / "fit.json", payload))
    flags = [m for m in rep.modes if m.match is not None]
    run.check("exponents_match", all(m.match for m in flags),
              ", ".join(f"{m.label}: {m.sigma:.4f} vs {m.predicted:g}" for m in flags) or "no predicted exponents")


def cmd_norm(cfg: RunConfig, run: Run) -> None:
    nm = cfg.data["norm"]
    if nm["snapshot"] is None:
        raise ValidationError("[norm].snapshot is required for the norm subcommand")
    u = read_snapshot(cfg.resolve(nm["snapshot"]), cfg.spec)
    fld = u.evaluate() if isinstance(u, AugmentedField) else u
    gamma = cfg.gamma if nm["gamma"] is None else nm["gamma"]
    value = hs_norm(fld, NormRequest(nm["s"], gamma, nm["p"], cfg.warp))
    run.add(write_json(run.out / "norm.json", {"s": nm["s"], "gamma": gamma, "p": nm["p"], "norm": value}))
    run.check("norm_finite", np.isfinite(value), f"norm={value:.12g}")


COMMANDS = {
    "analyze": cmd_analyze,
    "probe-resolvent": cmd_probe_resolvent,
    "probe-bip": cmd_probe_bip,
    "solve": cmd_solve,
    "fit": cmd_fit,
    "norm": cmd_norm,
}


# ---------------------------------------------------------------- orchestration


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _write_manifest(out: Path, command: str, cfg_path: Path, cfg: RunConfig | None, run: Run | None,
                    started: str, error: str | None) -> int:
    checks = list(run.checks) if run else []
    outputs = []
    for p in (run.outputs if run else []):
        p = Path(p)
        size = p.stat().st_size if p.exists() else 0
        outputs.append({"path": str(p.relative_to(out)), "bytes": size,
                        "sha256": file_digest(p) if p.exists() else None})
    if run and error is None:
        empty = [o["path"] for o in outputs if o["bytes"] == 0]
        checks.append({"name": "outputs_nonempty", "passed": not empty, "detail": ", ".join(empty)})
    ok = error is None and all(c["passed"] for c in checks)
    code = 0 if ok else (2 if cfg is None else 1)
    write_json(out / "manifest.json", {
        "tool": "conekit", "version": __version__, "command": command,
        "config": str(cfg_path), "config_hash": cfg.config_hash() if cfg else None,
        "seed": cfg.seed if cfg else None,
        "timestamps": {"started": started, "finished": _now()},
        "outputs": outputs, "checks": checks, "error": error,
        "status": "ok" if ok else "failed", "exit_code": code,
    })
    return code


def run_command(command: str, config_path, out) -> int:
    """Parse, dispatch, write the manifest; return the exit code."""
    out, config_path = Path(out), Path(config_path)
    out.mkdir(parents=True, exist_ok=True)
    started = _now()
    try:
        cfg = parse_config(config_path)
    except ConfigError as exc:
        print(exc, file=sys.stderr)
        return _write_manifest(out, command, config_path, None, None, started, str(exc))
    run = Run(out)
    error = None
    try:
        with capped():
            COMMANDS[command](cfg, run)
    except ConekitError as exc:
        error = f"{type(exc).__name__}: {exc}"
        log.error("%s failed: %s", command, error)
    code = _write_manifest(out, command, config_path, cfg, run, started, error)
    for c in run.checks:
        log.info("check %-24s %s %s", c["name"], "PASS" if c["passed"] else "FAIL", c["detail"])
    return code


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="conekit", description="Cone Laplacian and Cahn-Hilliard toolkit.")
    parser.add_argument("--version", action="version", version=f"conekit {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, type=Path, help="TOML run configuration")
        p.add_argument("--out", required=True, type=Path, help="output directory")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return run_command(args.command, args.config, args.out)
    except ValidationError as exc:  # e.g. a bad CONEKIT_THREADS value
        print(f"conekit: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
