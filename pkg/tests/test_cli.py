"""Tests for the command-line front end: reports, files, exit codes."""

import json

import numpy as np
import pytest

from pipeak.certify import serialize_operator
from pipeak.cli import main
from pipeak.piop import PIOperator
from pipeak.sdp import read_sdpa


def run_cli(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr().out
    report = json.loads(out) if out.strip() else None
    return code, report


def test_convert_report(capsys, tmp_path):
    ops_file = tmp_path / "ops.json"
    code, report = run_cli(capsys, "convert", "transport",
                           "--operators", str(ops_file))
    assert code == 0
    assert report["valid"] is True
    assert report["state_channels"] == 1
    assert report["disturbances"] == 1
    assert report["outputs"] == 1
    assert set(report["operator_degrees"]) == {"T", "A", "B1", "B2", "C1"}
    ops = json.loads(ops_file.read_text())
    assert set(ops) == {"T", "A", "B1", "B2", "C1"}


def test_convert_unknown_model(capsys):
    code, _ = run_cli(capsys, "convert", "no-such-model")
    assert code == 4


def test_bad_flag_exits_4(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["analyze", "transport", "--form", "bogus"])
    assert exc.value.code == 4


def test_synthesize_without_control_channel(capsys):
    code, _ = run_cli(capsys, "synthesize", "transport")
    assert code == 4


def test_simulate_both_paths(capsys, tmp_path):
    csv = tmp_path / "resp.csv"
    code, report = run_cli(capsys, "simulate", "transport", "--nsteps", "400",
                           "--grid-n", "32", "--t-final", "1.5",
                           "--csv", str(csv))
    assert code == 0
    assert report["closed_loop"] is False
    assert abs(report["pie"]["peak"] - 1.0 / 6.0) < 1e-6
    assert report["peak_mismatch"] < 1e-6
    assert (tmp_path / "resp_pie.csv").exists()
    assert (tmp_path / "resp_pde.csv").exists()


def test_simulate_with_zero_controller(capsys, tmp_path):
    K0 = PIOperator((0, 1), (1, 0), (0.0, 1.0))
    ctrl = tmp_path / "ctrl.json"
    ctrl.write_text(json.dumps({"operator": serialize_operator(K0)}))
    code, report = run_cli(capsys, "simulate", "transport_control",
                           "--controller", str(ctrl), "--path", "pie",
                           "--nsteps", "400", "--grid-n", "32",
                           "--t-final", "1.5")
    assert code == 0
    assert report["closed_loop"] is True
    # zero gain: identical to the open loop
    code2, open_report = run_cli(capsys, "simulate", "transport_control",
                                 "--path", "pie", "--nsteps", "400",
                                 "--grid-n", "32", "--t-final", "1.5")
    assert code2 == 0
    assert abs(report["pie"]["peak"] - open_report["pie"]["peak"]) < 1e-12


def test_certify_missing_model(capsys, tmp_path):
    w = tmp_path / "w.json"
    w.write_text(json.dumps({"kind": "analysis", "gamma_squared": 1.0,
                             "witness": {}}))
    code, _ = run_cli(capsys, "certify", str(w))
    assert code == 4


@pytest.mark.slow
def test_analyze_witness_certify_roundtrip(capsys, tmp_path):
    witness = tmp_path / "w.json"
    metrics = tmp_path / "m.json"
    code, report = run_cli(capsys, "analyze", "heat", "--form", "dual",
                           "--method", "direct",
                           "--witness-out", str(witness),
                           "--metrics", str(metrics))
    assert code == 0
    assert report["certified"] is True
    assert abs(report["gamma"] - 0.5) < 0.01
    assert metrics.exists()

    code, check = run_cli(capsys, "certify", str(witness))
    assert code == 0
    assert check["passed"] is True

    # tampered witness: claiming a quarter of the level must fail the check
    data = json.loads(witness.read_text())
    data["gamma_squared"] = 0.25 * data["gamma_squared"]
    witness.write_text(json.dumps(data))
    code, check = run_cli(capsys, "certify", str(witness))
    assert code == 2
    assert check["passed"] is False


@pytest.mark.slow
def test_analyze_sdpa_export(capsys, tmp_path):
    sdpa = tmp_path / "prog.dat-s"
    code, report = run_cli(capsys, "analyze", "transport", "--form", "dual",
                           "--method", "direct", "--sdpa", str(sdpa))
    assert code in (0, 2)
    assert sdpa.exists()
    data = read_sdpa(sdpa)
    assert data.nvars > 0
    assert len(data.block_struct) >= 1
