"""Readers for the documented synthesis-run CSV schemas.

Each reader validates the header and cell types strictly and raises
SchemaError on any mismatch; inputs are treated as read-only and nothing is
ever fabricated for missing data.
"""

import csv

import numpy as np

SWEEP_COLUMNS = ("delta", "p_r", "p_star", "epsilon", "p_l", "p_h")
STRATEGY_COLUMNS = ("k", "cell_center", "q", "action_value")
TRAJECTORY_LEAD_COLUMNS = ("sim_id", "k")


class SchemaError(ValueError):
    """Input file does not match the documented CSV schema."""


def _rows(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file, expected a header row")
        return header, list(reader)


def _float(cell: str, path, column: str) -> float:
    try:
        return float(cell)
    except ValueError:
        raise SchemaError(f"{path}: non-numeric {column} cell {cell!r}") from None


def _int(cell: str, path, column: str) -> int:
    try:
        return int(cell)
    except ValueError:
        raise SchemaError(f"{path}: non-integer {column} cell {cell!r}") from None


def _bad_width(path, row, columns):
    raise SchemaError(f"{path}: row {row} does not have {len(columns)} cells")


def read_sweep(path) -> list[dict]:
    """Rows of a quantization-sweep CSV as {column: float} dicts."""
    header, rows = _rows(path)
    if tuple(header) != SWEEP_COLUMNS:
        raise SchemaError(
            f"{path}: header {header} does not match {list(SWEEP_COLUMNS)}")
    out = []
    for row in rows:
        if len(row) != len(SWEEP_COLUMNS):
            _bad_width(path, row, SWEEP_COLUMNS)
        out.append({col: _float(cell, path, col)
                    for col, cell in zip(SWEEP_COLUMNS, row)})
    return out


def read_strategy(path) -> list[tuple]:
    """Rows of a strategy CSV as (step, cell_center, q, action) tuples."""
    header, rows = _rows(path)
    if tuple(header) != STRATEGY_COLUMNS:
        raise SchemaError(
            f"{path}: header {header} does not match {list(STRATEGY_COLUMNS)}")
    out = []
    for row in rows:
        if len(row) != len(STRATEGY_COLUMNS):
            _bad_width(path, row, STRATEGY_COLUMNS)
        out.append((_int(row[0], path, "k"), _float(row[1], path, "cell_center"),
                    _int(row[2], path, "q"), _int(row[3], path, "action_value")))
    return out


def read_trajectories(path) -> dict[int, np.ndarray]:
    """Trajectory CSV as {sim_id: array of states ordered by step}.

    The state dimension is taken from the x1..xn header columns; every
    simulation's rows are sorted by their step index.
    """
    header, rows = _rows(path)
    lead = tuple(header[:2])
    coords = header[2:]
    if lead != TRAJECTORY_LEAD_COLUMNS or not coords or \
            coords != [f"x{d + 1}" for d in range(len(coords))]:
        raise SchemaError(
            f"{path}: header {header} does not match "
            f"['sim_id', 'k', 'x1', ..., 'xn']")
    staged: dict[int, list] = {}
    for row in rows:
        if len(row) != len(header):
            _bad_width(path, row, header)
        sim = _int(row[0], path, "sim_id")
        k = _int(row[1], path, "k")
        point = [_float(cell, path, col) for col, cell in zip(coords, row[2:])]
        staged.setdefault(sim, []).append((k, point))
    return {
        sim: np.array([p for _, p in sorted(steps)])
        for sim, steps in sorted(staged.items())
    }
