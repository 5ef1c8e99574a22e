import subprocess
import sys

import pytest

from closeness.cli import main, parse_args
from closeness.testers import plan_sample_sizes


def run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_parse_defaults():
    args = parse_args(["test", "--p", "uniform:2000", "--q", "uniform:2000", "--eps", "0.5",
                       "--m1", "2000", "--seed", "7"])
    assert args.regime == "auto" and args.m2 is None and args.seed == 7


def test_usage_errors(capsys):
    assert main(["test", "--p", "uniform:4", "--q", "uniform:4", "--eps", "0", "--m1", "10"]) == 2
    assert main(["test", "--p", "uniform:4", "--eps", "0.5", "--m1", "10"]) == 2
    assert main(["grid", "--n", "10", "--eps", "0.5", "--bogus"]) == 2
    assert main([]) == 2


def test_grid_config_parses():
    args = parse_args(["grid", "--n", "5000", "--eps", "0.25", "--trials", "120", "--out", "grid.csv"])
    assert (args.n, args.eps, args.trials, str(args.out)) == (5000, 0.25, 120, "grid.csv")


def test_test_command_uses_planner(capsys):
    code, out, _ = run(["test", "--p", "uniform:2000", "--q", "uniform:2000", "--eps", "0.5",
                        "--m1", "2000", "--seed", "7"], capsys)
    assert code in (0, 1)
    assert f"# m2_used={plan_sample_sizes(2000, 0.5, 2000)}" in out
    assert "# seed=7" in out


def test_exit_code_reflects_verdict(capsys):
    code, out, _ = run(["test", "--p", "uniform:50", "--q", "uniform:50", "--eps", "0.5",
                        "--m1", "200", "--m2", "100", "--c-gamma", "100", "--c-one", "100"], capsys)
    assert code == 0 and '"verdict": "ACCEPT"' in out
    code, out, _ = run(["test", "--p", "lowerbound-p:400:100:1", "--q", "uniform:400", "--eps", "0.5",
                        "--m1", "4000", "--m2", "4000", "--kappa", "0.001"], capsys)
    assert code == 1 and '"verdict": "REJECT"' in out


def test_moments_row(capsys):
    code, out, _ = run(["moments", "--check", "w", "--p", "uniform:10", "--q", "perturbed:10:0.5",
                        "--m1", "100", "--m2", "50", "--trials", "100000"], capsys)
    assert code == 0
    stat, closed, mc, se, trials = out.strip().splitlines()[-1].split(",")
    assert abs(float(mc) - float(closed)) <= 4 * float(se) and trials == "100000"


def test_io_error_exit_code(capsys, tmp_path):
    code, _, err = run(["moments", "--check", "w", "--p", str(tmp_path / "missing.txt"),
                        "--q", "uniform:3", "--m1", "5", "--m2", "5", "--trials", "10"], capsys)
    assert code == 2 and "error" in err


def test_out_file_has_header_and_is_deterministic(tmp_path, capsys):
    paths = [tmp_path / "a.csv", tmp_path / "b.csv"]
    for p in paths:
        assert main(["grid", "--n", "200", "--eps", "0.5", "--trials", "8", "--m1-grid", "50",
                     "--m2-grid", "20,60", "--seed", "3", "--out", str(p)]) == 0
    a, b = (p.read_bytes() for p in paths)
    assert a == b and a.startswith(b"# command=grid")
    assert b"# seed=3" in a


def test_threads_do_not_change_output(tmp_path):
    outs = []
    for threads in ("1", "3"):
        p = tmp_path / f"w{threads}.csv"
        main(["words", "--word-a", "grey", "--word-b", "gray", "--m2-grid", "50,100",
              "--trials", "6", "--threads", threads, "--out", str(p)])
        outs.append(p.read_bytes())
    assert outs[0] == outs[1]


def test_markov_commands(capsys):
    code, out, _ = run(["markov", "test-at", "--chain", "complete:4", "--t0", "1", "--eps", "0.5"], capsys)
    assert code == 0 and "verdict=ACCEPT" in out
    code, out, _ = run(["markov", "estimate", "--chain", "complete:4", "--eps", "0.5", "--seed", "3"], capsys)
    assert code == 0 and "t_estimate=1" in out and "queries=" in out


def test_markov_cap_is_an_error(capsys):
    code, _, err = run(["markov", "estimate", "--chain", "cycle:40:0.5", "--eps", "0.5",
                        "--t-cap", "4", "--reps", "1"], capsys)
    assert code == 2 and "no t0" in err


def test_calibrate_output(capsys):
    code, out, _ = run(["calibrate", "--n", "200", "--eps", "0.5", "--m1", "400",
                        "--trials", "100"], capsys)
    assert code == 0 and "c_gamma=" in out and "c_one=" in out


@pytest.mark.slow
def test_console_script_module_entry():
    res = subprocess.run([sys.executable, "-m", "closeness.cli", "sweep", "--n", "400", "--eps", "1",
                          "--m1", "300", "--fractions", "1.0", "--trials", "10",
                          "--calibration-trials", "100"], capture_output=True, text=True)
    assert res.returncode == 0
    assert "m2,planned_m2,fraction,reject_rate,trials" in res.stdout
