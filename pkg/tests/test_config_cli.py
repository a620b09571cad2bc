import json
import math

import numpy as np
import pytest

from conftest import PI, disk_doc, interval_doc
from hopfdelay import cli
from hopfdelay.config import build_problem, eta_callable, load_config, probe_points, validate
from hopfdelay.errors import ConfigError


def test_interval_problem():
    pb = build_problem(interval_doc("food_limited", 49, params={"c": 0.5}, analysis={"lambda_list": [1.1, 1.2]}))
    assert pb.grid.n == 49 and pb.lambdas == [1.1, 1.2]
    np.testing.assert_allclose(pb.m, 1.0)


def test_implicit_and_rect_domains():
    doc = {"domain": {"kind": "implicit", "bbox": [0, 2, 0, 2], "inside": "1 - (x-1)^2 - (y-1)^2"},
           "grid": {"nx": 20}, "model": {"kind": "hutchinson"}}
    g = build_problem(doc).grid
    assert np.all((g.x - 1) ** 2 + (g.y - 1) ** 2 <= 1 + 1e-12)
    doc["domain"] = {"kind": "rect", "bbox": [0, 1, 0, 2]}
    doc["grid"] = {"nx": 10, "ny": 12}
    assert build_problem(doc).grid.n == 120


def test_heterogeneous_m_flows_into_the_model():
    doc = interval_doc("logistic_heterogeneous", 49)
    doc["coefficients"]["m"] = "1 + 0.5*cos(x)"
    pb = build_problem(doc)
    np.testing.assert_allclose(pb.m, 1 + 0.5 * np.cos(pb.grid.x))


@pytest.mark.parametrize("mutate, msg", [
    (lambda d: d.update(extra=1), "Additional properties"),
    (lambda d: d["model"].update(kind="nope"), "model/kind"),
    (lambda d: d["grid"].pop("n"), "grid.n"),
    (lambda d: d["coefficients"].update(m=2.0), "disagrees"),
    (lambda d: d["coefficients"].update(b=[0.0, 1.0]), "component"),
    (lambda d: d["coefficients"].update(d="1 + sin("), "expected"),
])
def test_config_errors(mutate, msg):
    doc = interval_doc("hutchinson", 49)
    mutate(doc)
    with pytest.raises(ConfigError, match=msg):
        build_problem(doc)


def test_load_config_errors(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.json")
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(p)


def test_eta_and_probes():
    assert eta_callable(0.5)(np.zeros(3)).tolist() == [0.5] * 3
    assert eta_callable("x + y")(1.0, 2.0) == 3.0
    assert probe_points([1.0], 1) == [(1.0,)]
    with pytest.raises(ConfigError):
        probe_points([[1.0, 2.0]], 1)


def _write(tmp_path, doc):
    p = tmp_path / "run.json"
    p.write_text(json.dumps(doc))
    return str(p)


def test_cli_eig_steady_hopf(tmp_path, capsys):
    doc = interval_doc("hutchinson", 99, analysis={"lambda_list": [1.1, 1.05]})
    cfg = _write(tmp_path, doc)
    out = tmp_path / "out"
    assert cli.main(["eig", "--config", cfg, "--out", str(out)]) == 0
    eig = json.loads((out / "eig.json").read_text())
    assert eig["lambda_star"] == pytest.approx(1.0, abs=1e-3)
    assert (out / "phi.csv").exists()
    assert cli.main(["steady", "--config", cfg, "--out", str(out)]) == 0
    assert len((out / "branch.csv").read_text().splitlines()) == 3
    assert cli.main(["hopf", "--config", cfg, "--out", str(out), "--threads", "2"]) == 0
    nf = json.loads((out / "normal_form_1.1.json").read_text())
    assert nf["direction"] == "forward" and nf["orbit_stability"] == "stable"
    assert {"lambda", "nu", "theta", "tau", "residual"} <= set(json.loads((out / "crossing_1.1.json").read_text()))


def test_cli_output_directory_from_environment(tmp_path, monkeypatch):
    cfg = _write(tmp_path, interval_doc("hutchinson", 29))
    monkeypatch.setenv(cli.OUT_ENV, str(tmp_path / "envout"))
    assert cli.main(["eig", "--config", cfg]) == 0
    assert (tmp_path / "envout" / "eig.json").exists()


def test_cli_simulate_and_scan(tmp_path):
    doc = interval_doc("hutchinson", 49, analysis={"lambda": 1.1},
                       simulation={"tau": 3.0, "t_end": 600, "tau_values": [1.0, 2.0], "probes": [1.0],
                                   "snapshot_times": [50], "baseline": "steady"})
    cfg = _write(tmp_path, doc)
    out = tmp_path / "o"
    assert cli.main(["simulate", "--config", cfg, "--out", str(out)]) == 0
    rep = json.loads((out / "simulate.json").read_text())
    assert rep["verdict"] == "decayed" and (out / "snapshot_t50.csv").exists()
    assert cli.main(["scan", "--config", cfg, "--out", str(out)]) == 0
    assert json.loads((out / "scan.json").read_text())["threshold_found"] is False


def test_cli_exit_codes(tmp_path, capsys):
    bad = interval_doc("hutchinson", 29)
    bad["coefficients"]["d"] = "1 +"
    assert cli.main(["eig", "--config", _write(tmp_path, bad), "--out", str(tmp_path)]) == 2
    err = json.loads(capsys.readouterr().err)
    assert err["exit_code"] == 2 and err["offset"] == 3
    # hopf exactly at lambda* has no branch to linearize about
    doc = interval_doc("hutchinson", 29)
    from hopfdelay.config import build_problem as bp
    from hopfdelay.spectral import principal_eigenpair
    pb = bp(doc)
    doc["analysis"] = {"lambda": principal_eigenpair(pb.op, pb.m).lambda_star}
    assert cli.main(["hopf", "--config", _write(tmp_path, doc), "--out", str(tmp_path)]) == 3
    assert json.loads(capsys.readouterr().err)["exit_code"] == 3
    assert cli.main(["steady", "--config", _write(tmp_path, interval_doc("hutchinson", 29)),
                     "--out", str(tmp_path)]) == 2
    assert cli.main(["eig", "--config", _write(tmp_path, interval_doc("hutchinson", 29)),
                     "--threads", "0"]) == 2


def test_example_configs_validate():
    from pathlib import Path
    root = Path(__file__).resolve().parents[1] / "configs"
    for p in sorted(root.glob("*.json")):
        validate(json.loads(p.read_text()))
