"""Offline rendering of synthesis-run CSV artifacts.

Consumes only the documented CSV files written by the `scsynth` command line
(sweep, strategy, and trajectory outputs) and turns them into a markdown
comparison table, strategy heatmaps, and trajectory overlay figures.  The
package never imports the synthesis toolkit itself.
"""

from .render import (
    plot_strategy_heatmap,
    plot_trajectories,
    render_table,
    save_figure,
)
from .schemas import (
    SchemaError,
    read_strategy,
    read_sweep,
    read_trajectories,
)

__all__ = [
    "SchemaError",
    "plot_strategy_heatmap",
    "plot_trajectories",
    "read_strategy",
    "read_sweep",
    "read_trajectories",
    "render_table",
    "save_figure",
]
