import json

import pytest

from src.api.cli import main


def _run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr().out
    return code, (json.loads(out) if out.strip() else None)


def test_mean_bound_isometry(capsys):
    code, report = _run(capsys, "mean-bound", "--norm-f", "1", "--eps", "1", "--K", "identity", "--mode", "isometry")
    assert code == 0
    assert report["status"] == "success"
    assert report["result"]["bound"]["rho"] == 1
    assert report["result"]["bound"]["e"] == 512
    assert report["config"]["mode"] == "isometry"


def test_budget_exhaustion_exits_with_a_partial_report(capsys):
    code, report = _run(capsys, "mean-bound", "--norm-f", "1", "--eps", "1", "--digit-budget", "100")
    assert code == 3
    assert report["status"] == "partial"
    assert report["result"]["bound"]["budget_exceeded"]


def test_stability_search_on_a_named_system(capsys):
    code, report = _run(capsys, "stability-search", "--system", "two_cycle", "--f", "[1,-1]", "--eps", "0.6",
                        "--K", "2n", "--mode", "isometry", "--digit-budget", "10000")
    assert code == 0
    assert report["result"]["witness"]["n"] == 2


def test_specker(capsys):
    code, report = _run(capsys, "specker", "--table", '{"1": 2}', "--N", "3")
    assert code == 0
    assert report["result"]["norm_sq"] == {"num": 7, "den": 16}
    assert report["result"]["bits"] == [0, 1, 0]
    assert report["result"]["bits_from_dyadic_oracle"] == [0, 1, 0]


@pytest.mark.parametrize("argv", [
    ["mean-bound", "--norm-f", "1", "--eps", "0"],
    ["trace", "--system", "no_such_system", "--f", "[1]"],
    ["specker"],
])
def test_invalid_input_exits_2(capsys, argv):
    code, report = _run(capsys, *argv)
    assert code == 2
    assert report["status"] == "error"


def test_batch_config(tmp_path, capsys):
    config = tmp_path / "batch.yaml"
    config.write_text(
        "experiments:\n"
        "  - command: specker\n"
        "    N: 2\n"
        "    table: {\"0\": 1}\n"
        "  - command: mean-bound\n"
        "    norm_f: 1\n"
        "    eps: 1\n"
        "    mode: isometry\n"
    )
    code, out = _run(capsys, "--config", str(config), "--jobs", "2")
    assert code == 0
    assert [r["command"] for r in out["reports"]] == ["specker", "mean-bound"]
    assert out["reports"][0]["result"]["bits"] == [1, 0]


def test_report_output_and_verification(tmp_path, capsys):
    path = tmp_path / "report.json"
    code, out = _run(capsys, "specker", "--table", '{"0": 2}', "--N", "2", "--output", str(path))
    assert code == 0 and out is None
    document = json.loads(path.read_text())
    assert document["status"] == "success"

    code, out = _run(capsys, "--verify", str(path))
    assert code == 0
    assert out["verified"]

    document["result"]["bits"] = [0, 0]
    path.write_text(json.dumps(document))
    code, out = _run(capsys, "--verify", str(path))
    assert code == 1
    assert not out["verified"]


def test_trace_csv_output(tmp_path, capsys):
    path = tmp_path / "trace.csv"
    code, report = _run(capsys, "trace", "--system", "two_cycle", "--f", "[1,-1]", "--format", "csv",
                        "--output", str(path))
    assert code == 0
    assert report["result"]["rows"][0]["i"] == 0
    assert path.read_text().splitlines()[0] == "i,a_i,u_norm,skipped"
