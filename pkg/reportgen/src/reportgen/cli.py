"""Command line: render synthesis-run CSVs into tables and figures.

    report table --in sweep.csv --out table.md
    report heatmap --in strategy.csv --out heatmap.png [--q N]
    report trajectories --in trajectories.csv --out overlay.png
                        [--scenario geometry.json]

Figure commands write both a PNG and an SVG next to each other.  A missing
input file is skipped with a warning (nothing is fabricated); a present but
malformed file is an error.  Exit codes: 0 success or skip, 2 bad input.
"""

import argparse
import json
import sys
from pathlib import Path

import matplotlib.pyplot as plt

from .render import (
    plot_strategy_heatmap,
    plot_trajectories,
    render_table,
    save_figure,
)
from .schemas import SchemaError, read_strategy, read_sweep, read_trajectories


def _skip_missing(path) -> bool:
    if Path(path).exists():
        return False
    print(f"warning: input {path} not found; skipping", file=sys.stderr)
    return True


def cmd_table(args) -> int:
    if _skip_missing(args.input):
        return 0
    text = render_table(read_sweep(args.input))
    Path(args.out).write_text(text)
    return 0


def cmd_heatmap(args) -> int:
    if _skip_missing(args.input):
        return 0
    fig = plot_strategy_heatmap(read_strategy(args.input), q=args.q)
    try:
        save_figure(fig, args.out)
    finally:
        plt.close(fig)
    return 0


def cmd_trajectories(args) -> int:
    if _skip_missing(args.input):
        return 0
    scenario = None
    if args.scenario is not None:
        with open(args.scenario) as fh:
            scenario = json.load(fh)
        if not isinstance(scenario, dict):
            raise SchemaError(f"{args.scenario}: scenario must be a JSON object")
    fig = plot_trajectories(read_trajectories(args.input), scenario)
    try:
        save_figure(fig, args.out)
    finally:
        plt.close(fig)
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="report",
        description="Render synthesis-run CSV artifacts into a markdown "
                    "table, strategy heatmaps, and trajectory overlays.")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    def common(p):
        p.add_argument("--in", dest="input", required=True, metavar="CSV",
                       help="input CSV path")
        p.add_argument("--out", required=True, metavar="FILE",
                       help="output file path")

    p_table = sub.add_parser("table", help="sweep CSV -> markdown table")
    common(p_table)
    p_table.set_defaults(func=cmd_table)

    p_heat = sub.add_parser("heatmap", help="strategy CSV -> input heatmap")
    common(p_heat)
    p_heat.add_argument("--q", type=int, default=None,
                        help="automaton state slice to render "
                             "(required when the file has several)")
    p_heat.set_defaults(func=cmd_heatmap)

    p_traj = sub.add_parser(
        "trajectories", help="trajectory CSV -> x1-x2 overlay figure")
    common(p_traj)
    p_traj.add_argument("--scenario", default=None, metavar="JSON",
                        help="road/goal/obstacle rectangles as a JSON object "
                             "of (x0, x1, y0, y1) lists")
    p_traj.set_defaults(func=cmd_trajectories)
    return parser


def entry(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (SchemaError, ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(entry())


if __name__ == "__main__":
    main()
