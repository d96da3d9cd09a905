import csv
import json
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from krylovsim.cli import main
from krylovsim.experiments import (
    DEFAULTS,
    ExperimentError,
    fit_exponential,
    merge_config,
    spearman_censored,
)
from krylovsim.svg import Figure

FAST = ["--iterations", "40", "--schedule", "1,2,4,8", "--restarts", "1"]


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_basis_command(tmp_path, capsys):
    assert main(["basis", "--model", "ising", "--L", "3", "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "dim=63/63" in out and "universal" in out
    meta = tmp_path / "basis" / "ising_L3" / "meta.json"
    first = meta.read_bytes()
    man = json.loads((tmp_path / "basis" / "manifest.json").read_text())
    assert man["command"] == "basis" and man["seed"] == 0 and man["version"]
    assert "ising_L3/meta.json" in man["outputs"]
    assert main(["basis", "--model", "ising", "--L", "3", "--out", str(tmp_path)]) == 0
    assert meta.read_bytes() == first


def test_basis_sweep(tmp_path):
    assert main(["basis", "--sweep-L", "3..4", "--out", str(tmp_path)]) == 0
    r = rows(tmp_path / "basis-sweep" / "depth_vs_L.csv")
    assert [int(x["L"]) for x in r] == [3, 4]
    assert all(int(x["M_heisenberg"]) > int(x["M_ising"]) for x in r)
    ET.parse(tmp_path / "basis-sweep" / "depth_vs_L.svg")


def test_exit_codes(tmp_path, capsys):
    assert main(["basis", "--L", "1", "--out", str(tmp_path)]) == 2
    assert main(["basis", "--model", "nope", "--out", str(tmp_path)]) == 2
    assert main(["basis", "--L", "3", "--max-depth", "2", "--out", str(tmp_path)]) == 1
    assert main(["frobnicate"]) == 2
    assert main(["layer-sweep", "--L", "3", "--layers", "0..40", "--out", str(tmp_path)]) == 2
    assert main(["layer-sweep", "--L", "3", "--schedule", "4,2", "--out", str(tmp_path)]) == 2
    capsys.readouterr()


def test_access_and_smin(tmp_path):
    assert main(["access", "--L", "3", "--out", str(tmp_path)]) == 0
    r = rows(tmp_path / "access" / "access.csv")
    assert list(r[0]) == ["site", "axis", "J_containment", "J_first_overlap", "flag"]
    assert len(r) == 9
    x0 = next(x for x in r if x["site"] == "0" and x["axis"] == "X")
    assert x0["J_containment"] == "0"
    meta = json.loads((tmp_path / "basis" / "ising_L3" / "meta.json").read_text())
    assert all(int(x["J_containment"]) <= meta["M"] - 1 for x in r)
    assert all(int(x["J_first_overlap"]) <= int(x["J_containment"]) for x in r)

    assert main(["smin", "--L", "3", "--out", str(tmp_path)]) == 0
    s = rows(tmp_path / "smin" / "smin.csv")
    assert len(s) == 63 and all(int(x["S_min"]) >= 1 for x in s)
    assert rows(tmp_path / "smin" / "smin_frontier.csv")[0] == {"S_min": "1", "first_J": "0"}
    ET.parse(tmp_path / "smin" / "smin.svg")


def test_layer_sweep_reproducible(tmp_path):
    args = ["layer-sweep", "--L", "3", "--layers", "0..1", "--samples", "2", *FAST]
    assert main([*args, "--out", str(tmp_path / "a")]) == 0
    assert main([*args, "--out", str(tmp_path / "b"), "--jobs", "2"]) == 0
    for name in ("layer_curves.csv", "layer_nc.csv", "layer_fit.csv"):
        assert (tmp_path / "a" / "layer-sweep" / name).read_bytes() == (tmp_path / "b" / "layer-sweep" / name).read_bytes()
    agg = rows(tmp_path / "a" / "layer-sweep" / "layer_nc.csv")
    assert [x["J"] for x in agg] == ["0", "1"]
    assert all(int(x["uncensored"]) + int(x["censored"]) == 2 for x in agg)
    assert float(agg[0]["mean_n_c"]) <= 2  # native-span targets
    man = json.loads((tmp_path / "a" / "layer-sweep" / "manifest.json").read_text())
    assert man["config"]["grape"]["iterations"] == 40
    assert set(man["outputs"]) >= {"layer_curves.csv", "layer_nc.csv", "layer_fit.csv", "layer_nc.svg"}


def test_pauli_sweep(tmp_path, capsys):
    assert main(["pauli-sweep", "--L", "2", *FAST, "--out", str(tmp_path)]) == 0
    r = rows(tmp_path / "pauli-sweep" / "pauli.csv")
    assert [x["target"] for x in r] == ["X0", "Y0", "Z0", "X1", "Y1", "Z1", "Z0Z1"]
    assert all(float(x["K"]) >= 1 - 1e-9 for x in r)
    assert all((x["n_c"] == "") == (x["censored"] == "True") for x in r)
    assert "spearman rho" in capsys.readouterr().out


def test_xxz_heisenberg_delta_one(tmp_path, capsys):
    args = ["xxz", "--model", "heisenberg", "--L", "2", "--delta", "1", "--iterations", "200", "--schedule", "1,2,4"]
    assert main([*args, "--out", str(tmp_path)]) == 0
    res = rows(tmp_path / "xxz" / "xxz_residual.csv")
    assert float(res[0]["P_J"]) == pytest.approx(1, abs=1e-9)
    R = [float(x["R_J"]) for x in res]
    assert all(b <= a + 1e-12 for a, b in zip(R, R[1:]))
    curve = rows(tmp_path / "xxz" / "xxz_curve.csv")
    assert min(float(x["loss"]) for x in curve) < 1e-6
    man = json.loads((tmp_path / "xxz" / "manifest.json").read_text())
    assert man["summary"]["J_star"] == 2
    capsys.readouterr()


def test_config_file_and_override(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"L": 3, "model": "heisenberg", "grape": {"iterations": 5}}))
    assert main(["basis", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    assert (tmp_path / "basis" / "heisenberg_L3" / "meta.json").exists()
    assert main(["basis", "--config", str(cfg), "--model", "ising", "--out", str(tmp_path)]) == 0
    assert json.loads((tmp_path / "basis" / "manifest.json").read_text())["config"]["model"] == "ising"
    cfg.write_text(json.dumps({"bogus": 1}))
    assert main(["basis", "--config", str(cfg), "--out", str(tmp_path)]) == 2


def test_merge_config():
    cfg = merge_config(DEFAULTS, {"grape": {"tau": 0.25}, "L": None})
    assert cfg["grape"]["tau"] == 0.25 and cfg["L"] == 4
    assert DEFAULTS["grape"]["tau"] == 0.5
    with pytest.raises(ExperimentError):
        merge_config(DEFAULTS, {"grape": 3})


def test_fit_and_spearman():
    J = [0, 1, 2, 3]
    fit = fit_exponential(J, [np.exp(0.7 * j + 0.2) for j in J])
    assert fit.gamma == pytest.approx(0.7) and fit.intercept == pytest.approx(0.2)
    assert fit_exponential([0, 1], [1, 2]) is None
    rho, rho_u = spearman_censored([1, 2, 3, 4], [1, 5, 9, None], 300)
    assert rho == pytest.approx(1.0) and rho_u == pytest.approx(1.0)


def test_svg_well_formed(tmp_path):
    f = Figure("t <&>", "x", "y", logx=True, logy=True)
    f.add([1, 10, 100], [1e-1, 1e-3, 0.0], "a")
    f.add([1, 10], [1, 2], "b", kind="step", dashed=True)
    f.add([2, 20], [0.5, 0.05], "c", kind="scatter", yerr=[0.1, 0.01])
    f.vlines.append((8, "J*"))
    ET.fromstring(f.render())
    ET.fromstring(Figure().render())


# -- verify subcommand and negative controls ---------------------------------------

def test_verify_quick_and_only(tmp_path, capsys):
    assert main(["verify", "--quick", "--only", "closed-form-CJ,u1-symmetry", "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "PASS  [ 4] closed-form-CJ" in out and "2/2 checks passed" in out
    assert main(["verify", "--only", "no-such-check", "--out", str(tmp_path)]) == 2
    capsys.readouterr()


def test_verify_catches_wrong_closed_form(monkeypatch, capsys):
    from krylovsim import acceptance, krylov

    monkeypatch.setattr(krylov, "layer_circuit_complexity", lambda J: 2 ** (J + 2) - 3)  # off by one from J=1
    assert not acceptance.run_check(4).passed
    assert main(["verify", "--only", "closed-form-CJ"]) == 1
    assert "FAIL  [ 4]" in capsys.readouterr().out


def test_verify_catches_broken_gradient(monkeypatch):
    from krylovsim import acceptance, grape

    real = grape.loss_and_gradient

    def skewed(*args, **kw):
        loss, g = real(*args, **kw)
        return loss, 1.01 * g

    monkeypatch.setattr(grape, "loss_and_gradient", skewed)
    assert not acceptance.run_check(7, acceptance.Context(quick=True)).passed


def test_quick_skips_trend():
    from krylovsim import acceptance

    r = acceptance.run_check(10, acceptance.Context(quick=True))
    assert r.skipped and r.passed and r.line().startswith("SKIP")
