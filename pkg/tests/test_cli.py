import json
import subprocess
import sys

import pytest

from esspi.cli import EXIT_OK, EXIT_UNEXPECTED, EXIT_USAGE, main, storage_table


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr().out
    return code, out


def test_scenario_run_json(capsys):
    code, out = run(capsys, "scenario", "run", "C_INV_OUT", "--seed", "3")
    assert code == EXIT_OK
    d = json.loads(out)
    assert d["schema"] == 1
    assert d["verdict"]["winner"] == "verifier" and d["winning_path"] == "K^B_2(1)"


def test_scenario_run_pretty(capsys):
    code, out = run(capsys, "scenario", "run", "honest", "--pretty")
    assert code == EXIT_OK
    assert "winner" in out and "K^B_1" in out


def test_scenario_unknown_is_usage_error(capsys):
    assert main(["scenario", "run", "NOPE"]) == EXIT_USAGE


def test_bad_flag_is_usage_error(capsys):
    assert main(["storage", "table", "--sizes", "abc"]) == EXIT_USAGE
    assert main(["dag", "build", "--variant", "bogus"]) == EXIT_USAGE
    assert main([]) == EXIT_USAGE


def test_scenario_list(capsys):
    code, out = run(capsys, "scenario", "list")
    names = [s["name"] for s in json.loads(out)["scenarios"]]
    assert code == EXIT_OK and "R_GRIND" in names and len(names) == 18


def test_scenario_input_and_ledger_out(capsys, tmp_path):
    ui = tmp_path / "ui.bin"
    ui.write_bytes(b"from a file")
    led = tmp_path / "ledger.json"
    code, out = run(capsys, "scenario", "run", "honest", "--input", str(ui), "--ledger-out", str(led))
    assert code == EXIT_OK
    assert bytes.fromhex(json.loads(out)["detail"]["user_input"]) == b"from a file"
    assert json.loads(led.read_text())["height"] > 0


def test_storage_table(capsys):
    code, out = run(capsys, "storage", "table", "--sizes", "100000")
    rows = {r["method"]: r for r in json.loads(out)["rows"]}
    assert code == EXIT_OK
    assert rows["op_return"]["n_txs"] == 1250
    assert rows["p2wsh_addr"]["n_outputs"] == 3125 and rows["p2wsh_addr"]["n_txs"] == 2
    assert rows["envelope"]["factor"] < 1.2


def test_storage_table_function():
    rows = storage_table([80], "nonstandard")
    assert {r["method"] for r in rows} >= {"op_return", "envelope"}


@pytest.mark.parametrize("variant", ["simple", "ecdsa", "envelope"])
def test_dag_build(capsys, tmp_path, variant):
    path = tmp_path / "dag.json"
    code, out = run(capsys, "dag", "build", "--variant", variant, "--out", str(path))
    assert code == EXIT_OK
    d = json.loads(path.read_text())
    assert d["variant"] == variant
    assert set(json.loads(out)["transactions"]) == set(d["transactions"])


def test_dispute_trace_and_replay(capsys, tmp_path):
    log = tmp_path / "log.jsonl"
    code, out = run(capsys, "dispute", "trace", "CPU_TAMPER(lssw_lie,5)", "--out", str(log))
    assert code == EXIT_OK
    traced = json.loads(out)
    assert traced["winner"] == "verifier" and traced["rounds"] <= traced["round_bound"]
    code, out = run(capsys, "dispute", "replay", str(log))
    assert code == EXIT_OK
    assert json.loads(out)["transcript_hash"] == traced["transcript_hash"]


def test_dispute_honest_adversarial(capsys):
    code, out = run(capsys, "dispute", "trace", "honest", "--verifier", "adversarial", "--seed", "4")
    assert code == EXIT_OK and json.loads(out)["winner"] == "prover"


def test_replay_of_edited_log_fails(capsys, tmp_path):
    log = tmp_path / "log.jsonl"
    run(capsys, "dispute", "trace", "CPU_TAMPER(pc_next,9)", "--out", str(log))
    lines = log.read_text().splitlines()
    lines = lines[:-1]
    log.write_text("\n".join(lines))
    code, out = run(capsys, "dispute", "replay", str(log))
    assert code == EXIT_UNEXPECTED and json.loads(out)["replayed"] is False


def test_replay_missing_file(capsys, tmp_path):
    assert main(["dispute", "replay", str(tmp_path / "absent")]) == EXIT_USAGE


def test_scenario_transcript_out(capsys, tmp_path):
    path = tmp_path / "t.jsonl"
    code, _ = run(capsys, "scenario", "run", "CPU_TAMPER(write_value,3)", "--transcript-out", str(path))
    assert code == EXIT_OK
    code, _ = run(capsys, "dispute", "replay", str(path))
    assert code == EXIT_OK


def test_console_entry_point():
    res = subprocess.run([sys.executable, "-m", "esspi.cli", "scenario", "list"], capture_output=True, text=True)
    assert res.returncode == 0 and json.loads(res.stdout)["schema"] == 1
