import json

import pytest

from app.core.database import init_db
from app.main import EXIT_CRITERION_FAILED, EXIT_ERROR, EXIT_OK, main
from app.schemas.experiment import CriterionResult
from app.services.check_service import CheckService

from conftest import EMPTY, H_OUTPUT, ONE_T


def test_oracle(write_file, capsys):
    assert main(["oracle", "--circuit", write_file("h.qc", H_OUTPUT)]) == EXIT_OK
    out = capsys.readouterr().out
    assert "p(U) = 0.500000000000" in out
    assert "label: NEITHER" in out


def test_parse_error_exits_1(write_file, capsys):
    path = write_file("bad.qc", "qubits 1\nQ 0\n")
    assert main(["oracle", "--circuit", path]) == EXIT_ERROR
    err = capsys.readouterr().err
    assert f"{path}:2" in err
    assert "unknown gate" in err


def test_missing_circuit_exits_1(tmp_path):
    assert main(["oracle", "--circuit", str(tmp_path / "nope.qc")]) == EXIT_ERROR


def test_usage_error_exits_1():
    with pytest.raises(SystemExit) as exc:
        main(["run"])
    assert exc.value.code == EXIT_ERROR


def test_attack_with_p1_exits_1(write_file):
    circuit = write_file("t.qc", ONE_T)
    attack = write_file("a.atk", "1,0 X.I.I\n")
    assert main(["run", "--circuit", circuit, "--attack", attack, "--protocol", "p1", "--trials", "5"]) == EXIT_ERROR


def test_run_writes_report(write_file, tmp_path):
    report_path = tmp_path / "report.json"
    code = main([
        "run", "--circuit", write_file("e.qc", EMPTY), "--protocol", "p1", "--trials", "30",
        "--seed", "5", "--report", str(report_path),
    ])
    assert code == EXIT_OK
    data = json.loads(report_path.read_text())
    assert data["trials"] == 30
    assert data["accepts"] == 30
    assert data["seed"] == 5


def test_run_to_stdout_as_csv(write_file, capsys):
    code = main(["run", "--circuit", write_file("e.qc", EMPTY), "--protocol", "epr", "--trials", "9", "--format", "csv"])
    assert code == EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    assert lines[0].startswith("run_type,trials,accepts")
    assert lines[-1].startswith("total,9,9")


def test_run_records_to_ledger(write_file, tmp_path, capsys):
    init_db(f"sqlite:///{tmp_path / 'ledger.db'}")
    circuit = write_file("e.qc", EMPTY)
    assert main(["run", "--circuit", circuit, "--protocol", "p1", "--trials", "4", "--record",
                 "--report", str(tmp_path / "r.json")]) == EXIT_OK
    assert main(["history", "--circuit", circuit]) == EXIT_OK
    out = capsys.readouterr().out
    assert "4/4 = 1.0000 pass" in out


def test_check_identities(capsys):
    assert main(["check", "--suite", "identities"]) == EXIT_OK
    assert "[PASS] identities" in capsys.readouterr().out


def test_check_failure_exits_2(monkeypatch):
    monkeypatch.setattr(CheckService, "run", lambda self, suites=None: [CriterionResult(name="x", passed=False)])
    assert main(["check"]) == EXIT_CRITERION_FAILED
