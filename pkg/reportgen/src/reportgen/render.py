"""Rendering: markdown comparison tables, strategy heatmaps, trajectory
overlays.

Everything here is deterministic — fixed color maps, no jitter, no
timestamps in the written files — so identical inputs yield identical
outputs byte for byte.
"""

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "reportgen"  # stable ids in SVG output

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)
import numpy as np  # noqa: E402
from matplotlib.patches import Rectangle  # noqa: E402

from .schemas import SchemaError  # noqa: E402

VALUE_COLUMNS = ("p_r", "p_star", "epsilon", "p_l", "p_h")

# Reach-avoid geometry of the vehicle benchmark: a 50 m x 6 m road with the
# goal and obstacle boxes used by the synthesis runs, each (x0, x1, y0, y1).
DEFAULT_SCENARIO = {
    "road": (0.0, 50.0, 0.0, 6.0),
    "goal": (44.0, 50.0, 3.0, 6.0),
    "obstacle": (30.0, 34.0, 0.0, 3.0),
}


def render_table(rows) -> str:
    """Markdown table over sweep rows: delta, p_r, p_star, epsilon, p_l, p_h.

    Value cells are the CSV numbers rounded to 4 decimals; nothing is
    recomputed.
    """
    lines = [
        "| delta | p_r | p_star | epsilon | p_l | p_h |",
        "| --- | --- | --- | --- | --- | --- |",
    ]
    for row in rows:
        cells = [f"{row['delta']:g}"]
        cells += [f"{row[col]:.4f}" for col in VALUE_COLUMNS]
        lines.append("| " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


def _edges(vals) -> np.ndarray:
    """Cell boundaries around sorted sample positions (for pcolormesh)."""
    vals = np.asarray(vals, dtype=float)
    if len(vals) == 1:
        return np.array([vals[0] - 0.5, vals[0] + 0.5])
    mid = (vals[1:] + vals[:-1]) / 2.0
    return np.concatenate([[2 * vals[0] - mid[0]], mid, [2 * vals[-1] - mid[-1]]])


def plot_strategy_heatmap(rows, q: int | None = None):
    """Heatmap of the greedy input index over cell centers and time steps.

    The strategy file carries one slice per automaton state; `q` picks the
    slice and may be omitted only when the file holds a single state.  The
    slice must form a complete (step x cell) grid — holes are an error, not
    something to paint over.
    """
    if not rows:
        raise SchemaError("strategy file has no data rows")
    states = sorted({r[2] for r in rows})
    if q is None:
        if len(states) > 1:
            raise SchemaError(
                f"strategy file covers automaton states {states}; pass --q")
        q = states[0]
    elif q not in states:
        raise SchemaError(f"automaton state {q} not in file (has {states})")
    picked = [r for r in rows if r[2] == q]
    actions = {(k, center): action for k, center, _, action in picked}
    if len(actions) != len(picked):
        raise SchemaError("strategy file repeats a (step, cell center) pair")
    steps = sorted({k for k, _ in actions})
    centers = sorted({center for _, center in actions})
    grid = np.empty((len(steps), len(centers)))
    for i, k in enumerate(steps):
        for j, center in enumerate(centers):
            try:
                grid[i, j] = actions[(k, center)]
            except KeyError:
                raise SchemaError(
                    f"strategy grid is missing step {k}, cell {center}") from None

    n_actions = max(int(grid.max()) + 1, 2)
    fig, ax = plt.subplots(figsize=(8.0, 4.5))
    mesh = ax.pcolormesh(
        _edges(centers), _edges(steps), grid,
        cmap=plt.get_cmap("viridis", n_actions),
        vmin=-0.5, vmax=n_actions - 0.5)
    fig.colorbar(mesh, ax=ax, ticks=range(n_actions), label="input index")
    ax.set_xlabel("state (cell center)")
    ax.set_ylabel("time step k")
    ax.set_title(f"greedy input, automaton state {q}")
    return fig


def _rect(scenario: dict, key: str) -> tuple:
    rect = scenario[key]
    if len(rect) != 4:
        raise SchemaError(f"scenario {key} must be (x0, x1, y0, y1), got {rect}")
    x0, x1, y0, y1 = (float(v) for v in rect)
    if x0 >= x1 or y0 >= y1:
        raise SchemaError(f"scenario {key} rectangle is empty: {rect}")
    return x0, x1, y0, y1


def _patch(ax, rect, **style):
    x0, x1, y0, y1 = rect
    ax.add_patch(Rectangle((x0, y0), x1 - x0, y1 - y0, **style))


def plot_trajectories(trajectories: dict, scenario: dict | None = None):
    """Overlay of all simulated runs in the x1-x2 plane, drawn to scale over
    the road, goal, and obstacle rectangles."""
    merged = dict(DEFAULT_SCENARIO)
    for key, value in (scenario or {}).items():
        if key not in DEFAULT_SCENARIO:
            raise SchemaError(f"unknown scenario key {key!r}")
        merged[key] = value
    road = _rect(merged, "road")
    goal = _rect(merged, "goal")
    obstacle = _rect(merged, "obstacle")

    fig, ax = plt.subplots(figsize=(9.0, 3.4))
    _patch(ax, road, facecolor="0.92", edgecolor="0.4", linewidth=1.0, zorder=0)
    _patch(ax, obstacle, facecolor="#d1462f", edgecolor="none", zorder=1)
    _patch(ax, goal, facecolor="#3c9d4e", edgecolor="none", zorder=1)
    xs = [road[0], road[1], goal[0], goal[1], obstacle[0], obstacle[1]]
    ys = [road[2], road[3], goal[2], goal[3], obstacle[2], obstacle[3]]
    for sim in sorted(trajectories):
        points = trajectories[sim]
        if points.ndim != 2 or points.shape[1] < 2:
            raise SchemaError("trajectories need at least two state dimensions")
        ax.plot(points[:, 0], points[:, 1], color="#1f4e79", linewidth=0.7,
                alpha=0.65, zorder=2)
        xs += [float(points[:, 0].min()), float(points[:, 0].max())]
        ys += [float(points[:, 1].min()), float(points[:, 1].max())]
    ax.set_xlim(min(xs) - 1.0, max(xs) + 1.0)
    ax.set_ylim(min(ys) - 1.0, max(ys) + 1.0)
    ax.set_aspect("equal")
    ax.set_xlabel("x1 [m]")
    ax.set_ylabel("x2 [m]")
    ax.set_title(f"{len(trajectories)} simulated runs")
    return fig


def save_figure(fig, path) -> list[Path]:
    """Write the figure at `path` plus its PNG/SVG sibling.

    Both raster and vector variants are emitted so the same run can be
    embedded in docs either way; returns the written paths.
    """
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix not in (".png", ".svg"):
        raise SchemaError(f"unsupported figure format {path.suffix!r}; "
                          "use a .png or .svg output path")
    sibling = path.with_suffix(".svg" if suffix == ".png" else ".png")
    written = []
    for target in (path, sibling):
        if target.suffix.lower() == ".png":
            fig.savefig(target, dpi=150, metadata={"Software": "reportgen"})
        else:
            fig.savefig(target, metadata={"Date": None})
        written.append(target)
    return written
