"""Strict readers: documented headers, typed cells, loud failures."""

import numpy as np
import pytest

from reportgen import (
    SchemaError,
    read_strategy,
    read_sweep,
    read_trajectories,
)


def test_read_sweep_fixture(fixtures):
    rows = read_sweep(fixtures / "room_sweep.csv")
    assert len(rows) == 5
    assert [sorted(r) for r in rows] == [
        sorted(("delta", "p_r", "p_star", "epsilon", "p_l", "p_h"))] * 5
    assert [r["delta"] for r in rows] == [0.01, 0.02, 0.05, 0.1, 0.2]
    for row in rows:
        assert row["p_l"] <= row["p_star"] <= row["p_h"]
        assert row["epsilon"] > 0.0


def test_read_sweep_rejects_wrong_header(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("delta,p_r,p_star,eps,p_l,p_h\n0.1,1,1,1,1,1\n")
    with pytest.raises(SchemaError, match="header"):
        read_sweep(bad)


def test_read_sweep_rejects_non_numeric_cell(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text(
        "delta,p_r,p_star,epsilon,p_l,p_h\n0.1,oops,1,1,1,1\n")
    with pytest.raises(SchemaError, match="non-numeric p_r"):
        read_sweep(bad)


def test_read_sweep_rejects_short_row(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("delta,p_r,p_star,epsilon,p_l,p_h\n0.1,1,1\n")
    with pytest.raises(SchemaError, match="cells"):
        read_sweep(bad)


def test_readers_reject_empty_file(tmp_path):
    empty = tmp_path / "empty.csv"
    empty.write_text("")
    for reader in (read_sweep, read_strategy, read_trajectories):
        with pytest.raises(SchemaError, match="empty file"):
            reader(empty)


def test_read_strategy_fixture(fixtures):
    rows = read_strategy(fixtures / "room_strategy.csv")
    steps = {r[0] for r in rows}
    centers = {r[1] for r in rows}
    states = {r[2] for r in rows}
    actions = {r[3] for r in rows}
    assert steps == set(range(10))
    assert len(centers) == 200
    assert states == set(range(13))
    assert len(rows) == 10 * 200 * 13
    assert actions <= set(range(10))
    for row in rows[:50]:
        assert isinstance(row[0], int) and isinstance(row[2], int)
        assert isinstance(row[1], float) and isinstance(row[3], int)


def test_read_strategy_rejects_fractional_action(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("k,cell_center,q,action_value\n0,1.5,0,2.5\n")
    with pytest.raises(SchemaError, match="non-integer action_value"):
        read_strategy(bad)


def test_read_trajectories_fixture(fixtures):
    runs = read_trajectories(fixtures / "bmw_trajectories.csv")
    assert sorted(runs) == list(range(100))
    for points in runs.values():
        assert points.shape == (11, 7)
        assert np.isfinite(points).all()
    # every run starts from the same pose used by the simulator
    starts = np.array([runs[sim][0] for sim in sorted(runs)])
    assert np.all(starts == starts[0])


def test_read_trajectories_orders_steps(tmp_path):
    scrambled = tmp_path / "t.csv"
    scrambled.write_text(
        "sim_id,k,x1,x2\n"
        "1,2,30.0,31.0\n"
        "0,1,10.0,11.0\n"
        "1,0,20.0,21.0\n"
        "0,0,0.0,1.0\n")
    runs = read_trajectories(scrambled)
    assert list(runs) == [0, 1]
    assert np.array_equal(runs[0], [[0.0, 1.0], [10.0, 11.0]])
    assert np.array_equal(runs[1], [[20.0, 21.0], [30.0, 31.0]])


def test_read_trajectories_rejects_bad_coordinate_names(tmp_path):
    bad = tmp_path / "t.csv"
    bad.write_text("sim_id,k,x1,x3\n0,0,1.0,2.0\n")
    with pytest.raises(SchemaError, match="header"):
        read_trajectories(bad)


def test_read_trajectories_rejects_missing_coordinates(tmp_path):
    bad = tmp_path / "t.csv"
    bad.write_text("sim_id,k\n0,0\n")
    with pytest.raises(SchemaError, match="header"):
        read_trajectories(bad)


def test_read_trajectories_header_only_gives_no_runs(tmp_path):
    lone = tmp_path / "t.csv"
    lone.write_text("sim_id,k,x1,x2\n")
    assert read_trajectories(lone) == {}
