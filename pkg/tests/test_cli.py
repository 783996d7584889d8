import csv
import json
from pathlib import Path

import pytest

from onebit import cli

GOLDEN = Path(__file__).parent / "golden"

GOLDEN_RUNS = {
    "opt_threshold_exp.csv": ["opt-threshold", "--dist", "exponential", "--lambdas", "0.3,0.8,0.95"],
    "sweep_weibull_small.csv": [
        "sweep", "--dist", "weibull", "--lambdas", "0.7", "--thresholds", "0.5,1.5", "--advice", "both",
        "--preempt", "yes", "--source", "both", "--horizon", "2000", "--reps", "3", "--seed", "11",
    ],
    "sim_cluster_small.csv": [
        "sim-cluster", "--n", "10", "--horizon", "300", "--reps", "2", "--q1", "0.1", "--q2", "0.2", "--seed", "4",
    ],
}


def run(argv, capsys):
    code = cli.main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.mark.parametrize("name", sorted(GOLDEN_RUNS))
def test_golden_csv_byte_stable(name, tmp_path, capsys):
    target = tmp_path / name
    code, _, _ = run(GOLDEN_RUNS[name] + ["-o", str(target)], capsys)
    assert code == 0
    assert target.read_bytes() == (GOLDEN / name).read_bytes()


def test_stdout_matches_file_output(tmp_path, capsys):
    argv = GOLDEN_RUNS["opt_threshold_exp.csv"]
    _, out, _ = run(argv, capsys)
    assert out == (GOLDEN / "opt_threshold_exp.csv").read_text()


def test_usage_errors_exit_2(capsys):
    assert run(["sweep", "--thresholds", ""], capsys)[0] == 2
    assert run(["sweep", "--thresholds", "1,-1"], capsys)[0] == 2
    assert run(["sweep", "--lambdas", "1.2"], capsys)[0] == 2
    assert run(["nonsense"], capsys)[0] == 2
    code, _, err = run(["opt-threshold", "--reps", "1"], capsys)
    assert code == 2 and "reps" in err


def test_help_exits_zero(capsys):
    code, out, _ = run(["--help"], capsys)
    assert code == 0
    assert "table3" in out


def test_numeric_error_exit_3(capsys):
    # an unreachable stopping tolerance leaves the derivative norm above it when the horizon runs out
    code, _, err = run(["meanfield", "--s-max", "2", "--l-max", "2", "--stop-tol", "1e-30", "--dt", "0.01"], capsys)
    assert code == 3
    assert "numeric error" in err


def test_config_file_and_flag_override(tmp_path, capsys):
    ini = tmp_path / "run.ini"
    ini.write_text("[onebit]\nformat = json\n\n[opt-threshold]\nlambdas = 0.5,0.9\npreempt = yes\n")
    _, out, _ = run(["opt-threshold", "--config", str(ini)], capsys)
    rows = json.loads(out)
    assert [r["lambda"] for r in rows] == ["0.5", "0.9"]
    assert all(r["policy"].endswith("-preempt") for r in rows)
    _, out, _ = run(["opt-threshold", "--config", str(ini), "--lambdas", "0.7", "--format", "csv"], capsys)
    rows = list(csv.DictReader(out.splitlines()))
    assert [r["lambda"] for r in rows] == ["0.7"]


def test_config_file_unknown_key(tmp_path, capsys):
    ini = tmp_path / "bad.ini"
    ini.write_text("[sweep]\nbogus = 1\n")
    assert run(["sweep", "--config", str(ini)], capsys)[0] == 2


def test_seed_from_environment(monkeypatch, capsys):
    argv = ["sim-cluster", "--n", "5", "--horizon", "100", "--reps", "2"]
    monkeypatch.setenv(cli.SEED_ENV, "4")
    _, a, _ = run(argv, capsys)
    _, b, _ = run(argv + ["--seed", "4"], capsys)
    _, c, _ = run(argv + ["--seed", "5"], capsys)
    assert a == b != c
    monkeypatch.setenv(cli.SEED_ENV, "x")
    assert run(argv, capsys)[0] == 2


def test_table_rows_carry_published_values(capsys, tmp_path):
    target = tmp_path / "t.csv"
    code, out, _ = run(["table2", "--lambdas", "0.98", "--simulate", "no", "-o", str(target)], capsys)
    assert code == 0
    assert "published" in out
    rows = list(csv.DictReader(target.read_text().splitlines()))
    fifo = next(r for r in rows if r["policy"] == "fifo")
    assert float(fifo["mean_sojourn"]) == 148.0
    assert float(fifo["published"]) == 148.0


def test_meanfield_export(tmp_path, capsys):
    state = tmp_path / "x.csv"
    code, out, _ = run(["meanfield", "--q1", "0.3", "--q2", "0.3", "--export-state", str(state)], capsys)
    assert code == 0
    row = next(csv.DictReader(out.splitlines()))
    assert float(row["mean_sojourn"]) == pytest.approx(4.347, rel=5e-3)
    lines = state.read_text().splitlines()
    assert lines[0] == "s,l,c,x"
    assert lines[1].startswith("0,0,0,")
    assert len(lines) == 1 + 1 + 41 * 41 * 2
