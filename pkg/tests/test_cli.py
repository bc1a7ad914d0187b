"""End-to-end tests of the command-line interface.

Every command runs in-process through ``main`` so the exit-status
contract (0 success, 1 usage/data error, 2 internal error) is asserted
directly.
"""

import json

import numpy as np
import pytest

from nlspd import cli
from nlspd.reference import SCALED_PARAMS
from nlspd.simulator import geometric_probe_grid


def run_cli(args):
    with pytest.raises(SystemExit) as excinfo:
        cli.main([str(a) for a in args])
    return excinfo.value.code


@pytest.fixture()
def config_path(tmp_path):
    truth = SCALED_PARAMS[25]
    probes = geometric_probe_grid(truth)
    document = {
        "truth": truth.to_dict(),
        "probes": {
            "intensities": [float(v) for v in probes.intensities],
            "trials": probes.trials,
        },
        "seed": 101,
        "trials": probes.trials,
    }
    path = tmp_path / "config.json"
    path.write_text(json.dumps(document))
    return path


@pytest.fixture()
def data_csv(tmp_path, config_path):
    out = tmp_path / "clicks.csv"
    assert run_cli(["simulate", config_path, out]) == 0
    return out


def test_simulate_writes_data_and_manifest(tmp_path, config_path):
    out = tmp_path / "clicks.csv"
    assert run_cli(["simulate", config_path, out]) == 0
    assert out.exists()

    manifest = json.loads((tmp_path / "clicks.csv.manifest.json").read_text())
    assert manifest["command"] == "simulate"
    assert manifest["seed"] == 101
    assert manifest["inputs"] == [str(config_path)]
    assert manifest["outputs"] == [str(out)]

    header = out.read_text().splitlines()[0]
    assert header == "mean_photons,trials,clicks"


def test_simulate_rerun_is_byte_identical(tmp_path, config_path):
    out = tmp_path / "clicks.csv"
    assert run_cli(["simulate", config_path, out]) == 0
    first = out.read_bytes()
    first_manifest = (tmp_path / "clicks.csv.manifest.json").read_bytes()
    assert run_cli(["simulate", config_path, out]) == 0
    assert out.read_bytes() == first
    assert (tmp_path / "clicks.csv.manifest.json").read_bytes() == first_manifest


def test_reconstruct_default_truncation(tmp_path, data_csv):
    out = tmp_path / "povm.json"
    assert run_cli(["reconstruct", data_csv, out]) == 0
    document = json.loads(out.read_text())
    assert set(document) == {"truncation", "click"}
    assert len(document["click"]) == document["truncation"]
    assert (tmp_path / "povm.json.manifest.json").exists()


def test_reconstruct_scaled_records_k(tmp_path, data_csv):
    out = tmp_path / "scaled.json"
    assert run_cli(["reconstruct", data_csv, out, "--scale-to-95"]) == 0
    document = json.loads(out.read_text())
    assert {"truncation", "click", "k"} <= set(document)
    assert document["k"] > 0


def test_reconstruct_option_conflict(tmp_path, data_csv, capsys):
    out = tmp_path / "povm.json"
    code = run_cli(["reconstruct", data_csv, out, "--scale-to-95", "--truncation", "40"])
    assert code == 1
    assert "error:" in capsys.readouterr().err
    assert not out.exists()


def test_reconstruct_missing_input(tmp_path):
    code = run_cli(["reconstruct", tmp_path / "absent.csv", tmp_path / "out.json"])
    assert code == 1


def test_fit_writes_report(tmp_path, data_csv):
    out = tmp_path / "report.json"
    assert run_cli(["fit", data_csv, out, "--max-order", "4"]) == 0
    document = json.loads(out.read_text())
    assert set(document) == {"p", "kept_orders", "objective", "per_probe_residuals"}
    assert document["kept_orders"] == [0, 1]


def test_malformed_csv_fails_cleanly(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("intensity,clicks\n0.0,3\n")
    code = run_cli(["fit", bad, tmp_path / "report.json"])
    assert code == 1
    assert "error:" in capsys.readouterr().err


def test_compare_closed_loop_fidelity(tmp_path, data_csv, capsys):
    povm_json = tmp_path / "povm.json"
    assert run_cli(["reconstruct", data_csv, povm_json]) == 0
    truth_json = tmp_path / "truth.json"
    truth_json.write_text(json.dumps(SCALED_PARAMS[25].to_dict()))

    assert run_cli(["compare", povm_json, truth_json]) == 0
    lines = dict(
        line.split("=", 1) for line in capsys.readouterr().out.strip().splitlines()
    )
    assert float(lines["fidelity"]) > 0.998
    assert float(lines["max_abs_gap"]) < 0.05


def test_compare_rejects_two_parameter_documents(tmp_path):
    a = tmp_path / "a.json"
    b = tmp_path / "b.json"
    a.write_text(json.dumps(SCALED_PARAMS[25].to_dict()))
    b.write_text(json.dumps(SCALED_PARAMS[20].to_dict()))
    assert run_cli(["compare", a, b]) == 1


@pytest.mark.parametrize("figure_id", ["fig1b", "fig2a", "fig2b"])
def test_figure_curves(tmp_path, figure_id):
    out = tmp_path / f"{figure_id}.csv"
    assert run_cli(["figure", figure_id, out]) == 0
    lines = [l for l in out.read_text().splitlines() if not l.startswith("#")]
    assert len(lines) > 100
    assert (tmp_path / f"{figure_id}.csv.manifest.json").exists()


def test_figure_loss_scaling(tmp_path):
    out = tmp_path / "fig3b.csv"
    assert run_cli(["figure", "fig3b", out, "--seed", "7"]) == 0
    text = out.read_text()
    assert "slope_order_1=" in text
    assert "slope_order_2=" in text
    rows = [l for l in text.splitlines() if not l.startswith("#")]
    assert rows[0] == "eta,P_0,P_1,P_2"
    assert len(rows) == 5


def test_figure_unknown_id(tmp_path, capsys):
    assert run_cli(["figure", "fig9z", tmp_path / "out.csv"]) == 1
    assert "unknown figure id" in capsys.readouterr().err


def test_figure_unknown_bias_current(tmp_path):
    assert run_cli(["figure", "fig2b", tmp_path / "out.csv", "--bias-current", "19"]) == 1


def test_unexpected_failure_maps_to_exit_two(tmp_path, config_path, monkeypatch):
    def explode(config):
        raise RuntimeError("boom")

    monkeypatch.setattr(cli, "run_simulation", explode)
    code = run_cli(["simulate", config_path, tmp_path / "out.csv"])
    assert code == 2


def test_usage_error_exits_nonzero():
    assert run_cli(["reconstruct"]) != 0
