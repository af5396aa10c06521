"""End-to-end tests for the command-line experiment runner."""

import csv

import numpy as np
import pytest

from scsynth.cli import entry
from scsynth.qlearn import hoeffding_halfwidth, load_qtable
from scsynth.quantize import epsilon_bound
from scsynth.systems import make_room, lipschitz_linear_gaussian

_ROOM = ["--system", "room", "--formula", "G[0,10] safe", "--horizon", "10"]


def _read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def _manifest_lines(path):
    return [line for line in path.read_text().splitlines()
            if not line.startswith("timestamp=")]


# ------------------------------------------------------------------- compile

def test_compile_reports_chain_dimensions(tmp_path, capsys):
    out = tmp_path / "c"
    rc = entry(["compile", "--formula", "G[0,10] safe", "--system", "room",
                "--out", str(out)])
    assert rc == 0
    printed = capsys.readouterr().out
    assert "states=13" in printed
    assert "d_q0=11" in printed
    assert "d_max=12" in printed
    dot = (out / "automaton.dot").read_text()
    assert "doublecircle" in dot and dot.startswith("digraph")
    rows = _read_csv(out / "distances.csv")
    assert rows[0] == ["state", "distance"]
    assert len(rows) == 1 + 13


def test_compile_true_formula_single_state(tmp_path, capsys):
    rc = entry(["compile", "--formula", "true", "--ap", "safe",
                "--out", str(tmp_path / "t")])
    assert rc == 0
    assert "states=1" in capsys.readouterr().out


def test_compile_requires_alphabet(tmp_path, capsys):
    rc = entry(["compile", "--formula", "true", "--out", str(tmp_path / "t")])
    assert rc == 2
    assert "error:" in capsys.readouterr().err


def test_bad_formula_is_a_usage_error(tmp_path, capsys):
    rc = entry(["compile", "--formula", "G[0,] safe", "--ap", "safe",
                "--out", str(tmp_path / "t")])
    assert rc == 2
    assert "error:" in capsys.readouterr().err


# ------------------------------------------------------------------------ dp

def test_dp_writes_value_table_and_p_star(tmp_path, capsys):
    out = tmp_path / "dp"
    rc = entry(["dp", *_ROOM, "--delta", "0.2", "--out", str(out)])
    assert rc == 0
    line = next(l for l in capsys.readouterr().out.splitlines()
                if l.startswith("p_star="))
    p_star = float(line.split("=", 1)[1])
    assert 0.9 < p_star < 1.0
    rows = _read_csv(out / "value.csv")
    assert rows[0] == ["k", "cell", "q", "value", "greedy_input"]
    assert len(rows) == 1 + 11 * 11 * 13  # (T+1) x (cells + out) x |Q|
    assert "p_star=" in (out / "manifest.txt").read_text()


def test_exactly_one_of_delta_epsilon(tmp_path, capsys):
    rc = entry(["dp", *_ROOM, "--delta", "0.2", "--epsilon", "0.5",
                "--out", str(tmp_path / "a")])
    assert rc == 2
    rc = entry(["dp", *_ROOM, "--out", str(tmp_path / "b")])
    assert rc == 2


def test_epsilon_flag_selects_matching_grid(tmp_path):
    out = tmp_path / "eps"
    rc = entry(["dp", *_ROOM, "--epsilon", "0.4936", "--out", str(out)])
    assert rc == 0
    manifest = (out / "manifest.txt").read_text()
    realized = float(next(l for l in manifest.splitlines()
                          if l.startswith("delta_realized=")).split("=")[1])
    assert realized <= 0.4936 / (10 * lipschitz_linear_gaussian(
        make_room().lin_gauss.a_upper, make_room().noise_sigma)) + 1e-12


# --------------------------------------------------------------------- train

def test_train_writes_qtable_strategy_manifest(tmp_path):
    out = tmp_path / "tr"
    rc = entry(["train", *_ROOM, "--delta", "0.2", "--episodes", "500",
                "--seed", "1", "--out", str(out)])
    assert rc == 0
    table = load_qtable(out / "qtable.csv")
    assert table.meta["episodes"] == 500
    assert table.q.shape == (10, 11, 13, 10)
    rows = _read_csv(out / "strategy.csv")
    assert rows[0] == ["k", "cell_center", "q", "action_value"]
    assert len(rows) == 1 + 10 * 10 * 13  # horizon x cells x |Q|
    actions = {row[3] for row in rows[1:]}
    assert actions <= {str(a) for a in range(10)}
    assert "p_r=" in (out / "manifest.txt").read_text()


def test_rerun_reproduces_artifacts_byte_for_byte(tmp_path):
    args = ["train", *_ROOM, "--delta", "0.2", "--episodes", "300",
            "--seed", "7"]
    first, second = tmp_path / "a", tmp_path / "b"
    assert entry([*args, "--out", str(first)]) == 0
    assert entry([*args, "--out", str(second)]) == 0
    for name in ("qtable.csv", "strategy.csv"):
        assert (first / name).read_bytes() == (second / name).read_bytes()
    assert (_manifest_lines(first / "manifest.txt")
            == _manifest_lines(second / "manifest.txt"))


def test_train_restarts_flag(tmp_path):
    out = tmp_path / "re"
    rc = entry(["train", *_ROOM, "--delta", "0.2", "--episodes", "200",
                "--restarts", "--out", str(out)])
    assert rc == 0
    assert "restarts=1" in (out / "manifest.txt").read_text()


def test_bmw_training_needs_explicit_episodes(tmp_path, capsys):
    rc = entry(["train", "--system", "bmw", "--formula", "F[0,3] goal",
                "--horizon", "3", "--delta", "40", "--out", str(tmp_path / "x")])
    assert rc == 2
    assert "episodes" in capsys.readouterr().err


# ---------------------------------------------------------------------- eval

def test_eval_reports_probability_and_halfwidth(tmp_path, capsys):
    train_out, eval_out = tmp_path / "t", tmp_path / "e"
    entry(["train", *_ROOM, "--delta", "0.2", "--episodes", "2000",
           "--out", str(train_out)])
    rc = entry(["eval", *_ROOM, "--delta", "0.2",
                "--policy", str(train_out / "qtable.csv"),
                "--rollouts", "500", "--seed", "2", "--out", str(eval_out)])
    assert rc == 0
    text = (eval_out / "eval.txt").read_text()
    values = dict(line.split("=", 1) for line in text.splitlines())
    p_hat = float(values["p_hat"])
    assert 0.0 <= p_hat <= 1.0
    assert float(values["halfwidth"]) == hoeffding_halfwidth(500)
    assert "p_hat=" in capsys.readouterr().out


def test_eval_rejects_mismatched_policy(tmp_path, capsys):
    train_out = tmp_path / "t"
    entry(["train", *_ROOM, "--delta", "0.2", "--episodes", "100",
           "--out", str(train_out)])
    rc = entry(["eval", *_ROOM, "--delta", "0.1",
                "--policy", str(train_out / "qtable.csv"),
                "--out", str(tmp_path / "e")])
    assert rc == 2
    assert "does not match" in capsys.readouterr().err


def test_eval_missing_policy_file(tmp_path, capsys):
    rc = entry(["eval", *_ROOM, "--delta", "0.2",
                "--policy", str(tmp_path / "nope.csv"),
                "--out", str(tmp_path / "e")])
    assert rc == 2


# --------------------------------------------------------------------- sweep

def test_sweep_row_matches_bound_arithmetic(tmp_path):
    out = tmp_path / "sw"
    rc = entry(["sweep", "--system", "room", "--formula", "G[0,10] safe",
                "--horizon", "10", "--deltas", "0.2", "--episodes", "300",
                "--out", str(out)])
    assert rc == 0
    rows = _read_csv(out / "sweep.csv")
    assert rows[0] == ["delta", "p_r", "p_star", "epsilon", "p_l", "p_h"]
    [row] = rows[1:]
    delta, p_r, p_star, eps, p_low, p_high = map(float, row)
    model = make_room()
    lipschitz = lipschitz_linear_gaussian(model.lin_gauss.a_upper,
                                          model.noise_sigma)
    assert eps == epsilon_bound(10, delta, lipschitz)
    assert p_low == max(0.0, p_star - eps)
    assert p_high == min(1.0, p_star + eps)
    assert 0.9 < p_star < 1.0
    assert 0.0 <= p_r <= 1.0


def test_sweep_empty_delta_list(tmp_path):
    out = tmp_path / "sw0"
    rc = entry(["sweep", "--system", "traffic", "--formula", "G[0,10] safe",
                "--horizon", "10", "--deltas", "", "--out", str(out)])
    assert rc == 0
    assert (out / "sweep.csv").read_text() == "delta,p_r,p_star,epsilon,p_l,p_h\n"


def test_sweep_rejects_systems_without_oracle(tmp_path, capsys):
    rc = entry(["sweep", "--system", "bmw", "--formula", "F[0,3] goal",
                "--horizon", "3", "--deltas", "1.0",
                "--out", str(tmp_path / "x")])
    assert rc == 2


# ------------------------------------------------------------------ simulate

def test_simulate_emits_one_group_per_rollout(tmp_path):
    train_out, sim_out = tmp_path / "t", tmp_path / "s"
    entry(["train", *_ROOM, "--delta", "0.2", "--episodes", "200",
           "--out", str(train_out)])
    rc = entry(["simulate", *_ROOM, "--delta", "0.2",
                "--policy", str(train_out / "qtable.csv"),
                "--sims", "5", "--seed", "9", "--out", str(sim_out)])
    assert rc == 0
    rows = _read_csv(sim_out / "trajectories.csv")
    assert rows[0] == ["sim_id", "k", "x1"]
    sims = {row[0] for row in rows[1:]}
    assert sims == {str(i) for i in range(5)}
    starts = [row for row in rows[1:] if row[1] == "0"]
    assert len(starts) == 5
    assert all(float(row[2]) == 20.0 for row in starts)
    assert all(len(row) == 3 for row in rows[1:])

    again = tmp_path / "s2"
    entry(["simulate", *_ROOM, "--delta", "0.2",
           "--policy", str(train_out / "qtable.csv"),
           "--sims", "5", "--seed", "9", "--out", str(again)])
    assert ((sim_out / "trajectories.csv").read_bytes()
            == (again / "trajectories.csv").read_bytes())


# --------------------------------------------------------------- config file

def test_config_file_supplies_and_flags_override(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("system=room\nformula=G[0,10] safe\nhorizon=10\n"
                   "delta=0.2\nepisodes=400\nseed=3\n")
    out1 = tmp_path / "a"
    assert entry(["train", "--config", str(cfg), "--out", str(out1)]) == 0
    manifest = (out1 / "manifest.txt").read_text()
    assert "episodes=400" in manifest and "seed=3" in manifest

    out2 = tmp_path / "b"
    assert entry(["train", "--config", str(cfg), "--episodes", "200",
                  "--out", str(out2)]) == 0
    assert "episodes=200" in (out2 / "manifest.txt").read_text()


def test_unknown_config_key(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("systemm=room\n")
    rc = entry(["train", "--config", str(cfg), "--out", str(tmp_path / "x")])
    assert rc == 2
    assert "unknown config key" in capsys.readouterr().err


def test_missing_identity_flags_are_config_errors(tmp_path, capsys):
    rc = entry(["dp", "--delta", "0.2", "--out", str(tmp_path / "x")])
    assert rc == 2
    assert "--system" in capsys.readouterr().err
