import csv
import json

import pytest

from phononsim import cli


def run(args, tmp_path, name="out"):
    out = tmp_path / name
    return cli.main(args + ["--out", str(out)]), out


def test_scatter_sweep_rows(tmp_path):
    code, out = run(["--scenario", "scatter_theory", "--sweep", "delta_MHz=-40:40:81"], tmp_path)
    assert code == 0
    with open(out / "sweep.csv") as fh:
        rows = list(csv.reader(fh))
    assert len(rows) == 82 and rows[0][0] == "delta_MHz"
    assert float(rows[1][0]) == -40.0 and float(rows[-1][0]) == 40.0


def test_config_file_and_overrides(tmp_path):
    cfg = tmp_path / "default.json"
    cfg.write_text(json.dumps({"scenario": "scatter_theory", "sweep": {"delta_MHz": [-5, 5, 3]}}))
    code, out = run(["--config", str(cfg), "--set", "scatter.kappa_max=0.1", "--dt", "0.25"], tmp_path)
    assert code == 0
    echo = json.loads((out / "summary.json").read_text())["config_echo"]
    assert echo["scatter"]["kappa_max"] == 0.1
    assert echo["grid"]["dt"] == 0.25
    assert echo["pulse"]["sigma"] == 20.0


def test_unknown_scenario_lists_ids(tmp_path, capsys):
    code, _ = run(["--scenario", "nope"], tmp_path)
    assert code == 1
    assert "mz_single" in capsys.readouterr().err


@pytest.mark.parametrize("args", [
    ["--scenario", "hom", "--set", "nope=1"],
    ["--scenario", "hom", "--set", "loss.eta"],
    ["--scenario", "hom", "--sweep", "tau_ns=1:2"],
    ["--scenario", "hom", "--set", "topology.bs_t=0.9"],
    ["--config", "/nonexistent/c.json"],
])
def test_config_errors_exit_1(tmp_path, args):
    assert run(args, tmp_path)[0] == 1


def test_numerical_failure_exit_2(tmp_path, monkeypatch):
    from phononsim import scenarios
    from phononsim.lattice import NumericalInstabilityError

    def boom(cfg):
        raise NumericalInstabilityError("norm drifted")

    monkeypatch.setitem(scenarios.SCENARIOS, "scatter_theory", boom)
    assert run(["--scenario", "scatter_theory"], tmp_path)[0] == 2


def test_validate_subcommand(tmp_path, capsys):
    assert cli.main(["validate", "configs/default.json"]) == 0
    assert capsys.readouterr().out.strip() == "ok"
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"pulse": {"sigma": -2}, "topology": {"bs_t": 0.9}}))
    assert cli.main(["validate", str(bad)]) == 1
    out = capsys.readouterr().out
    assert "pulse.sigma" in out and "beamsplitter" in out
    assert cli.main(["validate", str(tmp_path / "missing.json")]) == 1


def test_summary_has_metric(tmp_path):
    code, out = run(["--scenario", "single_split"], tmp_path)
    assert code == 0
    s = json.loads((out / "summary.json").read_text())
    assert s["metrics"]["n_mean"][0] == pytest.approx(0.5, abs=1e-4)
    assert (out / "trace.csv").exists() and not (out / "sweep.csv").exists()
