import json
import math

import numpy as np
import pytest

from conekit.cli import main, run_command
from conekit.config import ConfigError, config_from_dict, parse_config
from conekit.cone_operators import AugmentedField, ConeGeometry
from conekit.cross_section import CrossSectionSpec
from conekit.io import read_csv, read_snapshot, write_csv, write_snapshot
from conekit.mellin import RadialGrid

BASE = """\
gamma = -0.5
seed = 7
[cross_section]
kind = "circle"
j_max = 4
[grid]
N = 48
x_min = 1e-3
[warp]
coeffs = [0.5]
[operator]
export = true
[solve]
tau = 1e-4
T = 0.005
snapshot_every = 25
[solve.initial]
constant = 0.1
terms = [{mode = "1c", amplitude = 0.5, power = 1.0}]
[probe]
n_samples = 5
t_samples = 5
t_min = -1.0
t_max = 1.0
eps = [0.4, 0.2, 0.1]
[fit]
snapshot = "out/solve/snapshots/snapshot_000050.csv"
analyze = "out/analyze/analyze.json"
x_lo = 4e-3
[norm]
snapshot = "out/solve/snapshots/snapshot_000050.csv"
s = 1
"""


@pytest.fixture
def cfg_path(tmp_path):
    p = tmp_path / "run.toml"
    p.write_text(BASE)
    return p


def _errors(raw):
    with pytest.raises(ConfigError) as exc:
        config_from_dict(raw)
    return exc.value.errors


# ------------------------------------------------------------------ config


def test_defaults():
    cfg = config_from_dict({})
    assert cfg.spec.kind.value == "circle" and cfg.spec.j_max == 8
    assert cfg.grid.N == 128 and cfg.grid.x_min == 1e-4
    assert cfg.gamma == pytest.approx(-0.5)  # midpoint of (-1, 0)
    assert cfg.data["solve"]["scheme"] == "stabilized" and cfg.outer_bc.value == "neumann"
    sph = config_from_dict({"cross_section": {"kind": "sphere", "j_max": 3}})
    assert sph.gamma == pytest.approx(0.0)


def test_unknown_keys_and_types_collected():
    errs = _errors({"bogus": 1, "grid": {"N": "many", "xmin": 1e-3}, "solve": {"tau": 0.0}, "extra": {"a": 1}})
    text = "\n".join(errs)
    assert "unknown key 'bogus'" in text and "unknown key 'xmin'" in text
    assert "[grid].N: expected int" in text and "unknown section [extra]" in text
    assert "tau must be > 0" in text
    assert len(errs) >= 5


def test_gamma_window_message():
    errs = _errors({"gamma": -1.0})
    assert any("outside the weight window (-1, 0)" in e and "(n-3)/2" in e for e in errs)


def test_enum_and_mode_checks():
    errs = _errors({"solve": {"scheme": "rk4", "initial": {"terms": [{"mode": "9c", "amplitude": 1.0}, {}]}},
                    "probe": {"method": "magic", "eps": [1.5]}, "norm": {"p": 1.0}})
    text = "\n".join(errs)
    assert "'rk4' is not one of" in text and "'magic' is not one of" in text
    assert "'9c' is not a retained mode" in text
    assert "missing required key 'mode'" in text and "missing required key 'amplitude'" in text
    assert "eps=1.5 must lie in (0, 1]" in text and "1 < p < inf" in text


def test_eps_vs_grid():
    errs = _errors({"grid": {"x_min": 1e-2}, "probe": {"eps": [0.02]}})
    assert any("x_min=0.01 must be < r1*eps" in e for e in errs)


def test_custom_spectrum():
    cfg = config_from_dict({"cross_section": {"kind": "custom", "n": 1, "eigenvalues": [0, -1, -4],
                                              "multiplicities": [1, 2, 2], "j_max": 3}})
    assert cfg.spec.n_modes == 5
    errs = _errors({"cross_section": {"kind": "custom", "n": 1}})
    assert any("custom kind needs eigenvalues, multiplicities" in e for e in errs)


def test_parse_errors(tmp_path):
    bad = tmp_path / "bad.toml"
    bad.write_text("gamma = = 1")
    with pytest.raises(ConfigError, match="TOML syntax"):
        parse_config(bad)
    with pytest.raises(ConfigError, match="cannot read"):
        parse_config(tmp_path / "missing.toml")


def test_config_hash_and_paths(cfg_path):
    a, b = parse_config(cfg_path), parse_config(cfg_path)
    assert a.config_hash() == b.config_hash() and len(a.config_hash()) == 64
    assert a.resolve("x.csv") == cfg_path.parent / "x.csv"
    assert a.geometry().warp.coeffs == (0.5,)


# ------------------------------------------------------------------ io


def test_csv_roundtrip(tmp_path):
    p = write_csv(tmp_path / "t.csv", ["a", "b"], [(1, 0.1), (2, 1e-300)])
    header, rows = read_csv(p)
    assert header == ["a", "b"] and float(rows[1][1]) == 1e-300


def test_snapshot_roundtrip(tmp_path):
    spec = CrossSectionSpec.circle(3)
    g = ConeGeometry(spec, RadialGrid(32, 1e-2), gamma=-0.5)
    f = g.field(np.random.default_rng(0).standard_normal((spec.n_modes, 33)))
    paths = write_snapshot(tmp_path / "s.csv", f, 0.25)
    back = read_snapshot(paths[0], spec)
    back = back.evaluate() if isinstance(back, AugmentedField) else back
    assert np.array_equal(back.values, f.values) and np.allclose(back.grid.x, g.grid.x, rtol=1e-15)


# ------------------------------------------------------------------ cli


def _manifest(out):
    return json.loads((out / "manifest.json").read_text())


def _run(cmd, cfg_path):
    out = cfg_path.parent / "out" / cmd
    return main([cmd, "--config", str(cfg_path), "--out", str(out)]), out


def test_full_pipeline(cfg_path):
    code, out = _run("analyze", cfg_path)
    assert code == 0
    rep = json.loads((out / "analyze.json").read_text())
    assert rep["schema_version"] and rep["window"]["gamma_min"] == -1.0
    assert (out / "laplacian.csv").exists()

    code, out = _run("probe-resolvent", cfg_path)
    assert code == 0
    res = json.loads((out / "resolvent.json").read_text())
    assert all(math.isfinite(k["K"]) for k in res["K_theta"])
    assert res["perturbation"]["slope"] >= 0.9
    assert read_csv(out / "resolvent.csv")[0] == ["theta", "abs_lambda", "scaled_norm"]

    code, out = _run("probe-bip", cfg_path)
    assert code == 0
    assert read_csv(out / "bip.csv")[0] == ["t", "norm", "envelope_value"]

    code, out = _run("solve", cfg_path)
    assert code == 0
    man = _manifest(out)
    assert {c["name"] for c in man["checks"]} >= {"completed", "mass_conserved", "energy_non_increasing",
                                                  "outputs_nonempty"}
    assert man["status"] == "ok" and man["seed"] == 7 and man["exit_code"] == 0
    assert all(len(o["sha256"]) == 64 and o["bytes"] > 0 for o in man["outputs"])
    header, rows = read_csv(out / "diagnostics.csv")
    assert header == ["step", "time", "mass", "energy", "residual"] and len(rows) == 51
    assert (out / "snapshots" / "snapshot_000050.csv").exists()

    code, out = _run("fit", cfg_path)
    fit = json.loads((out / "fit.json").read_text())
    assert fit["time"] == pytest.approx(0.005) and fit["analyze"].endswith("analyze.json")
    assert {m["mode"] for m in fit["modes"]} >= {"0", "1c", "2c"}
    assert code in (0, 1) and _manifest(out)["checks"][0]["name"] == "exponents_match"

    code, out = _run("norm", cfg_path)
    assert code == 0
    nrm = json.loads((out / "norm.json").read_text())
    assert nrm["s"] == 1 and nrm["norm"] > 0


def test_solve_reproducible(cfg_path, tmp_path):
    outs = []
    for k in range(2):
        out = tmp_path / f"rep{k}"
        assert run_command("solve", cfg_path, out) == 0
        outs.append(out)
    a, b = _manifest(outs[0]), _manifest(outs[1])
    assert [o["sha256"] for o in a["outputs"]] == [o["sha256"] for o in b["outputs"]]
    assert a["config_hash"] == b["config_hash"]


def test_config_error_exit_code(tmp_path):
    p = tmp_path / "bad.toml"
    p.write_text("gamma = -3.0\n[grid]\nN = 2\n")
    out = tmp_path / "o"
    assert main(["analyze", "--config", str(p), "--out", str(out)]) == 2
    man = _manifest(out)
    assert man["status"] == "failed" and "weight window" in man["error"] and "N >= 4" in man["error"]


def test_runtime_error_exit_code(cfg_path):
    cfg_path.write_text(BASE.replace("[probe]\n", "[probe]\nc = -1.0\n"))
    code, out = _run("probe-resolvent", cfg_path)
    assert code == 1 and "shift c must be > 0" in _manifest(out)["error"]


def test_missing_fit_snapshot(cfg_path):
    code, out = _run("fit", cfg_path)  # no solve run yet
    assert code == 1 and _manifest(out)["error"]


def test_threads_env(cfg_path, monkeypatch):
    monkeypatch.setenv("CONEKIT_THREADS", "1")
    assert _run("analyze", cfg_path)[0] == 0
    monkeypatch.setenv("CONEKIT_THREADS", "zero")
    code, out = _run("analyze", cfg_path)
    assert code == 1 and "CONEKIT_THREADS" in _manifest(out)["error"]


def test_parser_requires_args():
    with pytest.raises(SystemExit):
        main(["solve"])


def test_spec_config_examples():
    errs = _errors({"gamma": 0.5, "gamma_weight": 1.0})
    assert any("gamma=0.5 lies outside the weight window (-1, 0)" in e for e in errs)
    assert any("unknown key 'gamma_weight'" in e for e in errs)
