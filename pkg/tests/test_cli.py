import io
import json
from pathlib import Path

import pytest

from lrorder.cli import main

DATA = str(Path(__file__).resolve().parents[1] / "data" / "example_table.csv")


def run(argv):
    out = io.StringIO()
    code = main(argv, out=out)
    return code, out.getvalue()


def test_analyze_table_format():
    code, text = run(["analyze", DATA])
    assert code == 0
    assert "# config:" in text
    assert "6.0323" in text and "0.0225" in text
    assert "W = 875" in text


def test_analyze_json():
    code, text = run(["analyze", DATA, "--format", "json", "--lambda", "0,1",
                      "--wilcoxon", "both"])
    assert code == 0
    doc = json.loads(text)
    assert doc["config"]["command"] == "analyze"
    assert doc["config"]["lambdas"] == [0.0, 1.0]
    assert "backend" in doc["config"] and "version" in doc["config"]
    T0 = [r for r in doc["reports"] if r["family"] == "T"][0]
    assert T0["statistic"] == pytest.approx(6.0323, abs=1e-3)
    assert doc["weights"]["w"] == pytest.approx(
        [0.0381, 0.2420, 0.4618, 0.2580], abs=1e-3)
    assert [w["diagnostics"]["sided"] for w in doc["wilcoxon"]] == \
        ["one", "two"]
    assert doc["two_by_two"] == []


def test_analyze_inline_two_by_two():
    code, text = run(["analyze", "--table", "12,8;5,15", "--format", "json"])
    assert code == 0
    fams = [r["family"] for r in json.loads(text)["two_by_two"]]
    assert fams == ["G2_2x2", "Gbar2_2x2", "Gtilde2_2x2"]


def test_analyze_stdin(monkeypatch):
    monkeypatch.setattr("sys.stdin",
                        io.StringIO('{"counts": [[11,8,8,5],[6,4,10,12]]}'))
    code, text = run(["analyze", "-", "--family", "s", "--lambda", "1"])
    assert code == 0 and "5.8977" in text


def test_malformed_table_exit_1(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("1,2,x\n3,4,5\n")
    code, _ = run(["analyze", str(bad)])
    assert code == 1
    assert "line 1" in capsys.readouterr().err


def test_ragged_and_missing_exit_1(tmp_path):
    assert run(["analyze", "--table", "1,2;3"])[0] == 1
    assert run(["analyze", str(tmp_path / "missing.csv")])[0] == 1
    assert run(["analyze"])[0] == 1


def test_bad_flag_exit_1(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["analyze", DATA, "--family", "q"])
    assert exc.value.code == 1


def test_degenerate_exit_2():
    assert run(["analyze", "--table", "0,5;0,3"])[0] == 2


def test_solver_failure_exit_3(capsys):
    code, text = run(["analyze", DATA, "--max-iter", "1"])
    assert code == 3
    assert "NA" in text
    assert "did not converge" in capsys.readouterr().err


def test_weights_from_table():
    code, text = run(["weights", DATA])
    assert code == 0
    doc = json.loads(text)
    assert doc["weights"]["method"] == "closed_form"
    assert doc["weights"]["w"] == pytest.approx(
        [0.0381, 0.2420, 0.4618, 0.2580], abs=1e-3)


def test_weights_from_pi():
    code, text = run(["weights", "--pi", "1,1,1", "--nu1", "0.5"])
    doc = json.loads(text)
    assert code == 0
    assert sum(doc["h"], []) == pytest.approx([24, -12, -12, 24])
    assert doc["weights"]["w"][1] == 0.5


def test_weights_monte_carlo_large_j():
    code, text = run(["weights", "--pi", "1,1,1,1,1", "--nu1", "0.5",
                      "--mc-reps", "20000", "--seed", "4"])
    doc = json.loads(text)
    assert code == 0
    assert doc["weights"]["method"] == "monte_carlo"
    assert sum(doc["weights"]["w"]) == pytest.approx(1.0)


def test_weights_pi_needs_nu1():
    assert run(["weights", "--pi", "1,1"])[0] == 1


def test_simulate_jsonl(tmp_path):
    out = tmp_path / "sim.jsonl"
    code, _ = run(["simulate", "--scenario", "D", "--delta", "0.5",
                   "--reps", "1500", "--lambda-grid", "0,1",
                   "--out", str(out)])
    assert code == 0
    lines = [json.loads(x) for x in out.read_text().splitlines()]
    kinds = [x["record"] for x in lines]
    assert kinds[0] == "config"
    assert lines[0]["config"]["reps"] == 1500
    assert kinds.count("progress") == 4
    results = [x for x in lines if x["record"] == "result"]
    assert {r["statistic"] for r in results} == {
        "T_0", "T_1", "S_0", "S_1", "W", "W2"}
    assert all("beta_hat" in r and "dale_pass" in r for r in results)


def test_simulate_custom_two_by_two():
    code, text = run(["simulate", "--scenario", "custom", "--n1", "10",
                      "--n2", "10", "--probs", "0.6,0.4;0.4,0.6",
                      "--reps", "1000", "--lambda-grid", "0"])
    assert code == 0
    stats = [json.loads(x).get("statistic") for x in text.splitlines()]
    assert "G2" in stats


def test_simulate_custom_needs_sizes():
    assert run(["simulate", "--scenario", "custom", "--reps", "10"])[0] == 1
