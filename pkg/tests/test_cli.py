import json
from pathlib import Path

import pytest

from medledger.canonical import canonical_json
from medledger.cli import main
from medledger.config import Config

from conftest import fast_config


def write_config(tmp_path: Path, **overrides) -> Path:
    cfg = fast_config(data_dir=str(tmp_path / "data"), **overrides)
    path = tmp_path / "config.json"
    cfg.save(path)
    return path


SCENARIO = [
    {
        "step": 1,
        "actorKey": "admin",
        "method": "POST",
        "path": "/admin/patients",
        "body": {
            "patientId": "p-100",
            "demographics": {"name": "Scenario Pat", "birthDate": "1985-05-05"},
            "planDescriptor": {"payerName": "Acme", "planCode": "S-1", "coverageTier": "gold"},
        },
    },
    {"step": 2, "actorKey": "admin", "method": "POST", "path": "/admin/providers", "body": {"name": "Dr. Script"}},
    {
        "step": 3,
        "actorKey": "${1.apiKey}",
        "method": "POST",
        "path": "/patients/p-100/permissions",
        "body": {"provider": "${2.address}", "action": "grant"},
    },
    {
        "step": 4,
        "actorKey": "${2.apiKey}",
        "method": "POST",
        "path": "/patients/p-100/records",
        "body": {
            "resourceType": "Observation",
            "id": "obs-s1",
            "subjectPatientId": "p-100",
            "attributes": {"code": "hr", "value": 72},
            "authoredAt": 10,
        },
    },
    {"step": 5, "actorKey": "${1.apiKey}", "method": "GET", "path": "/patients/p-100/records"},
    {"step": 6, "actorKey": "admin", "method": "GET", "path": "/chain/validate"},
]


def write_scenario(tmp_path: Path) -> Path:
    path = tmp_path / "scenario.jsonl"
    with open(path, "w") as fh:
        for line in SCENARIO:
            fh.write(json.dumps(line) + "\n")
    return path


def test_init_and_validate_roundtrip(tmp_path, capsys):
    config_path = write_config(tmp_path)
    assert main(["init", str(config_path)]) == 0
    out = capsys.readouterr().out
    assert "initialized chain" in out
    assert main(["validate", str(config_path)]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["valid"] is True


def test_init_refuses_reinit(tmp_path):
    config_path = write_config(tmp_path)
    assert main(["init", str(config_path)]) == 0
    assert main(["init", str(config_path)]) == 3


def test_init_writes_default_config_when_missing(tmp_path, monkeypatch):
    monkeypatch.setenv("MEDLEDGER_DATA_DIR", str(tmp_path / "envdata"))
    config_path = tmp_path / "fresh-config.json"
    assert main(["init", str(config_path)]) == 0
    cfg = Config.load(config_path)
    assert cfg.admin_api_key
    assert (tmp_path / "envdata" / "blocks.jsonl").exists()
    monkeypatch.delenv("MEDLEDGER_DATA_DIR")


def test_validate_detects_tampering(tmp_path, capsys):
    config_path = write_config(tmp_path)
    main(["init", str(config_path)])
    capsys.readouterr()
    blocks_path = tmp_path / "data" / "blocks.jsonl"
    lines = blocks_path.read_text().splitlines()
    block = json.loads(lines[0])
    block["transactions"][0]["payload"]["ctorArgs"]["tamper"] = 1
    blocks_path.write_bytes(canonical_json(block) + b"\n")
    assert main(["validate", str(config_path)]) == 2
    report = json.loads(capsys.readouterr().out)
    assert report["valid"] is False
    assert report["firstFailure"]["rule"] == "txRoot"


def test_usage_error_exit_code_1(capsys):
    assert main(["no-such-command"]) == 1
    assert main(["validate", "/nonexistent/config.json"]) == 1


def test_inspect_block_and_account(tmp_path, capsys):
    config_path = write_config(tmp_path)
    main(["init", str(config_path)])
    capsys.readouterr()
    assert main(["inspect", "block", str(config_path), "0"]) == 0
    block = json.loads(capsys.readouterr().out)
    assert block["height"] == 0
    cfg = Config.load(Config.load(config_path).genesis_path)
    registry = cfg.system_addresses["patientRegistry"]
    assert main(["inspect", "account", str(config_path), registry]) == 0
    account = json.loads(capsys.readouterr().out)
    assert account["contractType"] == ["patient_registry", 1]
    assert main(["inspect", "block", str(config_path), "42"]) == 3


def test_scenario_run_deterministic(tmp_path, capsys):
    config_path = write_config(tmp_path)
    main(["init", str(config_path)])
    script = write_scenario(tmp_path)

    out1 = tmp_path / "run1.jsonl"
    assert main(["scenario", "run", str(script), "--config", str(config_path), "--out", str(out1)]) == 0

    # fresh chain, same script, fixed clock -> byte-identical summary
    other = tmp_path / "other"
    other.mkdir()
    config2 = write_config(other)
    main(["init", str(config2)])
    out2 = other / "run2.jsonl"
    assert main(["scenario", "run", str(script), "--config", str(config2), "--out", str(out2)]) == 0
    assert out1.read_bytes() == out2.read_bytes()

    rows = [json.loads(line) for line in out1.read_text().splitlines()]
    assert [r["status"] for r in rows] == [201, 201, 200, 201, 200, 200]
    assert rows[5]["body"]["valid"] is True


def test_bench_flyweight_smoke(tmp_path, capsys, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert main(["bench", "flyweight", "--patients", "12", "--plans", "3"]) == 0
    out = capsys.readouterr().out
    assert "flyweight" in out
    rows = (tmp_path / "bench_flyweight.csv").read_text().splitlines()
    assert len(rows) == 3  # header + two modes


def test_bench_pubsub_smoke(tmp_path, capsys, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert main(["bench", "pubsub", "--providers", "5", "--blocks", "4", "--events", "8"]) == 0
    out = capsys.readouterr().out
    assert "polling does" in out
    assert (tmp_path / "bench_pubsub.csv").exists()


def test_bench_pubsub_polling_only(tmp_path, capsys, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert main(["bench", "pubsub", "--providers", "3", "--blocks", "2", "--events", "2", "--polling"]) == 0


def test_bench_counters_reproducible():
    from medledger.bench import run_flyweight_bench, run_pubsub_bench

    a = run_pubsub_bench(4, 3, 6, mode="both")
    b = run_pubsub_bench(4, 3, 6, mode="both")
    for key in ("pubsubWork", "pollingScans", "deliveries", "ratio"):
        assert a[key] == b[key]
    fa = run_flyweight_bench(10, 2, use_flyweight=True)
    fb = run_flyweight_bench(10, 2, use_flyweight=True)
    for key in ("storedDescriptors", "planBytes", "gasTotal", "blocks"):
        assert fa[key] == fb[key]
