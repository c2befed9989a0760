import csv

import pytest

from eorl.cli import main

RUN = ["run", "--env", "bitflip", "--size", "3", "--episodes", "12", "--decay", "0.9",
       "--seeds", "2", "--set", "batch_size=16", "--n", "3"]


def test_run_aggregate_and_plot_data(tmp_path, capsys):
    runs = tmp_path / "runs"
    assert main([*RUN, "--algo", "VAN,EORL-FIX", "--out", str(runs)]) == 0
    assert len(list(runs.glob("*__seed*.csv"))) == 4
    assert main(["aggregate", str(runs)]) == 0
    out = capsys.readouterr().out
    assert out.splitlines()[-1].startswith("Best results")
    with open(runs / "aggregate.csv") as fh:
        assert len(list(csv.DictReader(fh))) == 2
    assert main(["plot-data", str(runs), "--out", str(tmp_path / "curves"), "--window", "5"]) == 0
    assert len(list((tmp_path / "curves").glob("*__curve.csv"))) == 2


def test_config_file_with_flag_override(tmp_path):
    cfg = tmp_path / "exp.cfg"
    cfg.write_text("env=grid\nsize=3\nepisodes=10\ndecay=0.9\nseeds=1\nbatch_size=8\nalgo=PER\n")
    out = tmp_path / "o"
    assert main(["run", "--config", str(cfg), "--size", "4", "--out", str(out)]) == 0
    (log,) = out.glob("*.csv")
    assert log.name.startswith("grid-m4-sub0") and "__PER__" in log.name


def test_suite_dry_run_lists_all_rows(capsys):
    assert main(["run", "--suite", "2d", "--algo", "all", "--dry-run"]) == 0
    assert "56 experiments x 10 algorithms" in capsys.readouterr().out
    assert main(["run", "--suite", "1d", "--dry-run", "--seeds", "3"]) == 0
    out = capsys.readouterr().out
    assert "10 experiments x 1 algorithms" in out and "seeds=3" in out


def test_ablate(tmp_path, capsys):
    args = ["ablate", "--env", "bitflip", "--size", "3", "--episodes", "8", "--decay", "0.9",
            "--seeds", "1", "--set", "batch_size=8", "--n", "2,3", "--algo", "EORL-FIX,EORL-05-05",
            "--out", str(tmp_path)]
    assert main(args) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "n,EORL-FIX,EORL-05-05,EORL-mean" and len(lines) == 3


@pytest.mark.parametrize("argv", [
    [*RUN, "--algo", "DDPG", "--dry-run"],
    ["run", "--episodes", "123", "--dry-run"],
    ["run", "--set", "colour=blue", "--dry-run"],
    ["run", "--env", "bitflip", "--subgoals", "2+", "--dry-run"],
    ["aggregate", "/nonexistent/dir"],
])
def test_bad_input_exits_with_code_2(argv, capsys):
    assert main(argv) == 2
    assert "eorl:" in capsys.readouterr().err


def test_missing_config_file(tmp_path):
    assert main(["run", "--config", str(tmp_path / "nope.cfg"), "--dry-run"]) == 2
