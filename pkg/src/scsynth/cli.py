"""Experiment runner: compile objectives, run the explicit-abstraction DP
oracle, train and evaluate Q-learning policies, sweep quantization levels,
and simulate stored policies on the continuous system.

Every command writes a `manifest.txt` (resolved settings, realized grid
resolution, closeness bound, library versions) next to its CSV artifacts;
re-running a command with the same settings reproduces every CSV byte for
byte.  Exit codes: 0 success, 2 usage/configuration errors, 3 numeric
failures.
"""

from __future__ import annotations

import argparse
import csv
import datetime
import platform
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .dp import save_value_table, value_iteration
from .product import Interpreter, RewardConfig
from .qlearn import (
    TrainConfig,
    evaluate,
    extract_policy,
    load_qtable,
    reported_value,
    save_qtable,
    train,
)
from .quantize import (
    build_finite_mdp,
    build_grid,
    delta_for_epsilon,
    epsilon_bound,
    policy_interval,
)
from .scltl import compile_formula, parse, to_dot
from .systems import (
    BENCHMARKS,
    ConfigurationError,
    lipschitz_linear_gaussian,
)

_DEFAULT_X0 = {
    "room": "20.0",
    "traffic": "10.0",
    "bmw": "5.0,1.5,0.0,15.0,0.0,0.0,0.0",
}
_DEFAULT_EPISODES = 1_000_000

# config-file values are strings; coerce per destination before merging
_CONVERTERS = {
    "system": str, "formula": str, "ap": str, "horizon": int, "delta": float,
    "epsilon": float, "lipschitz": float, "lebesgue": float, "episodes": int,
    "seed": int, "kappa": float, "reward": str, "x0": str, "rollouts": int,
    "sims": int, "deltas": str, "policy": str,
}


# ------------------------------------------------------------ small helpers

def _parse_floats(text: str) -> list[float]:
    return [float(tok) for tok in text.split(",") if tok.strip()]


def _load_config_file(path: str) -> dict:
    values = {}
    for raw in Path(path).read_text().splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigurationError(f"config line without '=': {raw!r}")
        values[key.strip().replace("-", "_")] = value.strip()
    return values


def _apply_config(args: argparse.Namespace) -> None:
    """Fill unset flags from the key=value config file (flags win)."""
    if getattr(args, "config", None) is None:
        return
    for key, value in _load_config_file(args.config).items():
        if key not in _CONVERTERS:
            raise ConfigurationError(f"unknown config key {key!r}")
        if getattr(args, key, None) is None and hasattr(args, key):
            setattr(args, key, _CONVERTERS[key](value))


def _resolve_model(args):
    if args.system is None:
        raise ConfigurationError("--system is required (flag or config file)")
    model = BENCHMARKS[args.system]()
    text = args.x0 if args.x0 is not None else _DEFAULT_X0[args.system]
    x0 = np.array(_parse_floats(text))
    if x0.shape != (model.dim,):
        raise ConfigurationError(
            f"x0 needs {model.dim} coordinates, got {x0.size}")
    if not model.contains(x0):
        raise ConfigurationError(f"x0 {x0.tolist()} outside the domain box")
    return model, x0


def _resolve_lipschitz(args, model) -> float | None:
    if args.lipschitz is not None:
        return args.lipschitz
    if model.lin_gauss is not None:
        return lipschitz_linear_gaussian(model.lin_gauss.a_upper,
                                         model.noise_sigma)
    return None


def _resolve_grid(args, model, lipschitz):
    if (args.delta is None) == (args.epsilon is None):
        raise ConfigurationError("give exactly one of --delta and --epsilon")
    lebesgue = 1.0 if args.lebesgue is None else args.lebesgue
    if args.delta is not None:
        target = args.delta
    else:
        if lipschitz is None:
            raise ConfigurationError(
                "--epsilon needs a Lipschitz constant: pass --lipschitz")
        target = delta_for_epsilon(args.epsilon, args.horizon, lipschitz,
                                   lebesgue)
    return build_grid(model.box, target), target, lebesgue


def _resolve_dfa(args, ap):
    if args.formula is None:
        raise ConfigurationError("--formula is required (flag or config file)")
    if getattr(args, "horizon", 0) is None:
        raise ConfigurationError("--horizon is required (flag or config file)")
    return compile_formula(parse(args.formula, ap), ap)


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_manifest(out: Path, command: str, entries: dict) -> None:
    lines = [f"command={command}"]
    for key, value in entries.items():
        lines.append(f"{key}={repr(value) if isinstance(value, float) else value}")
    lines.append(f"scsynth_version={__version__}")
    lines.append(f"numpy_version={np.__version__}")
    lines.append(f"python_version={platform.python_version()}")
    stamp = datetime.datetime.now(datetime.timezone.utc).isoformat()
    lines.append(f"timestamp={stamp}")
    (out / "manifest.txt").write_text("\n".join(lines) + "\n")


def _bound_entries(args, grid, lipschitz, lebesgue) -> dict:
    entries = {
        "delta_request": args.delta if args.delta is not None else grid.delta,
        "delta_realized": grid.delta,
    }
    if args.epsilon is not None:
        entries["epsilon_request"] = args.epsilon
    if lipschitz is not None:
        entries["lipschitz"] = lipschitz
        entries["lebesgue"] = lebesgue
        entries["epsilon"] = epsilon_bound(args.horizon, grid.delta,
                                           lipschitz, lebesgue)
    return entries


def _check_table_matches(table, model, grid, dfa, horizon) -> None:
    expect = {
        "horizon": horizon,
        "cells": grid.n_cells + 1,
        "dfa_states": dfa.n_states,
        "inputs": model.n_inputs,
    }
    for key, value in expect.items():
        if table.meta.get(key) != value:
            raise ConfigurationError(
                f"policy file does not match this run: {key} is "
                f"{table.meta.get(key)}, expected {value} "
                "(check --system/--formula/--horizon/--delta)")


# ------------------------------------------------------------------ commands

def cmd_compile(args) -> int:
    if args.ap:
        ap = tuple(tok.strip() for tok in args.ap.split(",") if tok.strip())
    elif args.system:
        ap = BENCHMARKS[args.system]().ap
    else:
        raise ConfigurationError("give --ap or --system to fix the alphabet")
    dfa = _resolve_dfa(args, ap)
    out = _out_dir(args)
    (out / "automaton.dot").write_text(to_dot(dfa))
    with open(out / "distances.csv", "w", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["state", "distance"])
        for q in range(dfa.n_states):
            writer.writerow([q, int(dfa.dist[q])])
    report = {
        "formula": args.formula,
        "ap": ",".join(ap),
        "states": dfa.n_states,
        "d_q0": int(dfa.dist[dfa.q0]),
        "d_max": dfa.d_max,
    }
    for key in ("states", "d_q0", "d_max"):
        print(f"{key}={report[key]}")
    _write_manifest(out, "compile", report)
    return 0


def cmd_dp(args) -> int:
    model, x0 = _resolve_model(args)
    dfa = _resolve_dfa(args, model.ap)
    lipschitz = _resolve_lipschitz(args, model)
    grid, _, lebesgue = _resolve_grid(args, model, lipschitz)
    mdp = build_finite_mdp(model, grid)
    p_star, table, _ = value_iteration(mdp, dfa, args.horizon, x0=x0)
    out = _out_dir(args)
    save_value_table(out / "value.csv", table)
    entries = {"system": args.system, "formula": args.formula,
               "horizon": args.horizon,
               **_bound_entries(args, grid, lipschitz, lebesgue),
               "x0": ",".join(repr(v) for v in x0), "p_star": p_star}
    _write_manifest(out, "dp", entries)
    print(f"p_star={p_star!r}")
    return 0


def _train_config(args, x0) -> TrainConfig:
    reward = RewardConfig(args.reward if args.reward is not None else "sparse",
                          kappa=args.kappa if args.kappa is not None else 0.1)
    return TrainConfig(
        episodes=args.episodes,
        seed=args.seed if args.seed is not None else 0,
        reward=reward,
        x0=None if args.restarts else tuple(x0),
        uniform_restarts=bool(args.restarts),
    )


def _resolve_episodes(args) -> None:
    if args.episodes is None:
        if args.system == "bmw":
            raise ConfigurationError(
                "bmw training needs an explicit --episodes "
                "(tabular learning over the 7-D grid is experimental)")
        args.episodes = _DEFAULT_EPISODES
    elif args.system == "bmw":
        print("warning: bmw tabular training is experimental; no convergence "
              "guarantee applies", file=sys.stderr)


def cmd_train(args) -> int:
    model, x0 = _resolve_model(args)
    dfa = _resolve_dfa(args, model.ap)
    lipschitz = _resolve_lipschitz(args, model)
    grid, _, lebesgue = _resolve_grid(args, model, lipschitz)
    _resolve_episodes(args)
    config = _train_config(args, x0)
    table = train(model, grid, dfa, args.horizon, config)
    out = _out_dir(args)
    save_qtable(out / "qtable.csv", table)

    policy = extract_policy(table)
    with open(out / "strategy.csv", "w", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["k", "cell_center", "q", "action_value"])
        centers = grid.centers()
        for k in range(args.horizon):
            for cell in range(grid.n_cells):
                center = ";".join(repr(float(v)) for v in centers[cell])
                for q in range(dfa.n_states):
                    writer.writerow([k, center, q, policy.action(k, cell, q)])

    p_r = reported_value(table, model, grid, dfa, x0)
    entries = {"system": args.system, "formula": args.formula,
               "horizon": args.horizon,
               **_bound_entries(args, grid, lipschitz, lebesgue),
               "episodes": config.episodes, "seed": config.seed,
               "reward": config.reward.mode, "kappa": config.reward.kappa,
               "restarts": int(config.uniform_restarts),
               "x0": ",".join(repr(v) for v in x0), "p_r": p_r}
    _write_manifest(out, "train", entries)
    print(f"p_r={p_r!r}")
    return 0


def cmd_eval(args) -> int:
    model, x0 = _resolve_model(args)
    dfa = _resolve_dfa(args, model.ap)
    lipschitz = _resolve_lipschitz(args, model)
    grid, _, lebesgue = _resolve_grid(args, model, lipschitz)
    if args.policy is None:
        raise ConfigurationError("--policy is required (flag or config file)")
    table = load_qtable(args.policy)
    _check_table_matches(table, model, grid, dfa, args.horizon)
    policy = extract_policy(table)
    rollouts = args.rollouts if args.rollouts is not None else 10_000
    seed = args.seed if args.seed is not None else 0
    p_hat, halfwidth = evaluate(model, grid, dfa, policy, x0, rollouts, seed)
    out = _out_dir(args)
    (out / "eval.txt").write_text(
        f"p_hat={p_hat!r}\nhalfwidth={halfwidth!r}\n"
        f"rollouts={rollouts}\nseed={seed}\n")
    entries = {"system": args.system, "formula": args.formula,
               "horizon": args.horizon,
               **_bound_entries(args, grid, lipschitz, lebesgue),
               "policy": args.policy, "rollouts": rollouts, "seed": seed,
               "x0": ",".join(repr(v) for v in x0),
               "p_hat": p_hat, "halfwidth": halfwidth}
    _write_manifest(out, "eval", entries)
    print(f"p_hat={p_hat!r}")
    print(f"halfwidth={halfwidth!r}")
    return 0


def cmd_sweep(args) -> int:
    if args.system not in ("room", "traffic"):
        raise ConfigurationError(
            "sweep needs the exact abstraction oracle: use room or traffic")
    model, x0 = _resolve_model(args)
    dfa = _resolve_dfa(args, model.ap)
    lipschitz = _resolve_lipschitz(args, model)
    lebesgue = 1.0 if args.lebesgue is None else args.lebesgue
    if args.deltas is None:
        raise ConfigurationError("--deltas is required (flag or config file)")
    deltas = _parse_floats(args.deltas)
    episodes = args.episodes if args.episodes is not None else _DEFAULT_EPISODES
    seed = args.seed if args.seed is not None else 0

    out = _out_dir(args)
    rows = []
    for target in deltas:
        grid = build_grid(model.box, target)
        mdp = build_finite_mdp(model, grid)
        p_star, _, _ = value_iteration(mdp, dfa, args.horizon, x0=x0)
        config = TrainConfig(episodes=episodes, seed=seed,
                             reward=RewardConfig(
                                 args.reward if args.reward is not None
                                 else "sparse",
                                 kappa=args.kappa if args.kappa is not None
                                 else 0.1),
                             x0=tuple(x0))
        table = train(model, grid, dfa, args.horizon, config)
        p_r = reported_value(table, model, grid, dfa, x0)
        eps = epsilon_bound(args.horizon, grid.delta, lipschitz, lebesgue)
        p_low, p_high = policy_interval(p_star, eps)
        rows.append((grid.delta, p_r, p_star, eps, p_low, p_high))
        print(f"delta={grid.delta!r} p_r={p_r!r} p_star={p_star!r} "
              f"epsilon={eps!r} p_l={p_low!r} p_h={p_high!r}")

    with open(out / "sweep.csv", "w", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["delta", "p_r", "p_star", "epsilon", "p_l", "p_h"])
        for row in rows:
            writer.writerow([repr(v) for v in row])
    entries = {"system": args.system, "formula": args.formula,
               "horizon": args.horizon, "deltas": args.deltas,
               "lipschitz": lipschitz, "lebesgue": lebesgue,
               "episodes": episodes, "seed": seed,
               "x0": ",".join(repr(v) for v in x0), "rows": len(rows)}
    _write_manifest(out, "sweep", entries)
    return 0


def cmd_simulate(args) -> int:
    model, x0 = _resolve_model(args)
    dfa = _resolve_dfa(args, model.ap)
    lipschitz = _resolve_lipschitz(args, model)
    grid, _, lebesgue = _resolve_grid(args, model, lipschitz)
    if args.policy is None:
        raise ConfigurationError("--policy is required (flag or config file)")
    table = load_qtable(args.policy)
    _check_table_matches(table, model, grid, dfa, args.horizon)
    policy = extract_policy(table)
    sims = args.sims if args.sims is not None else 100
    seed = args.seed if args.seed is not None else 0

    out = _out_dir(args)
    interp = Interpreter(model, grid, dfa, args.horizon)
    with open(out / "trajectories.csv", "w", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["sim_id", "k"] + [f"x{d + 1}" for d in range(model.dim)])
        for sim in range(sims):
            interp.rng = np.random.default_rng([seed, sim])
            interp.reset(x0)
            writer.writerow([sim, 0] + [repr(float(v)) for v in interp.x])
            while not interp.terminal:
                s = interp.state
                step = interp.step(policy.action(s.k, s.cell, s.q))
                writer.writerow([sim, step.after.k]
                                + [repr(float(v)) for v in interp.x])
    entries = {"system": args.system, "formula": args.formula,
               "horizon": args.horizon,
               **_bound_entries(args, grid, lipschitz, lebesgue),
               "policy": args.policy, "sims": sims, "seed": seed,
               "x0": ",".join(repr(v) for v in x0)}
    _write_manifest(out, "simulate", entries)
    print(f"wrote {sims} trajectories")
    return 0


# ------------------------------------------------------------ parser wiring

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="scsynth",
        description="Near-optimal policy synthesis for continuous-state "
                    "stochastic systems against bounded co-safe LTL "
                    "objectives.")
    sub = parser.add_subparsers(dest="cmd", metavar="command")

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", required=True, help="output directory")
    common.add_argument("--config",
                        help="key=value file supplying unset flags")

    # identity flags are checked after the config-file merge, not by argparse,
    # so a config file can supply any of them
    system = argparse.ArgumentParser(add_help=False)
    system.add_argument("--system", choices=sorted(BENCHMARKS),
                        help="benchmark system")
    system.add_argument("--x0", help="initial state, comma-separated")

    objective = argparse.ArgumentParser(add_help=False)
    objective.add_argument("--formula", help="co-safe LTL objective text")
    objective.add_argument("--horizon", type=int,
                           help="episode length (steps)")

    gridf = argparse.ArgumentParser(add_help=False)
    gridf.add_argument("--delta", type=float,
                       help="quantization cell diagonal target")
    gridf.add_argument("--epsilon", type=float,
                       help="closeness bound to realize (alternative to "
                            "--delta)")
    gridf.add_argument("--lipschitz", type=float,
                       help="density Lipschitz constant H (default: exact "
                            "value for linear-Gaussian benchmarks)")
    gridf.add_argument("--lebesgue", type=float,
                       help="Lebesgue constant of the bound (default 1)")

    learn = argparse.ArgumentParser(add_help=False)
    learn.add_argument("--episodes", type=int, help="training episodes")
    learn.add_argument("--seed", type=int, help="master seed (default 0)")
    learn.add_argument("--kappa", type=float,
                       help="shaping scale (default 0.1)")
    learn.add_argument("--reward", choices=("sparse", "shaped"),
                       help="reward mode (default sparse)")

    p = sub.add_parser("compile", parents=[common],
                       help="formula -> automaton DOT and distance report")
    p.add_argument("--formula", help="co-safe LTL objective text")
    p.add_argument("--ap", help="comma-separated atomic propositions")
    p.add_argument("--system", choices=sorted(BENCHMARKS),
                   help="take the alphabet from a benchmark")
    p.set_defaults(func=cmd_compile)

    p = sub.add_parser("dp", parents=[common, system, objective, gridf],
                       help="explicit-abstraction optimal values")
    p.set_defaults(func=cmd_dp)

    p = sub.add_parser("train",
                       parents=[common, system, objective, gridf, learn],
                       help="tabular Q-learning on quantized observations")
    p.add_argument("--restarts", action="store_true",
                   help="draw episode starts uniformly from the domain")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", parents=[common, system, objective, gridf],
                       help="Monte-Carlo evaluation of a stored policy")
    p.add_argument("--policy", help="qtable CSV path")
    p.add_argument("--rollouts", type=int,
                   help="evaluation episodes (default 10000)")
    p.add_argument("--seed", type=int, help="evaluation seed (default 0)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep",
                       parents=[common, system, objective, learn],
                       help="DP vs learned values across quantization levels")
    p.add_argument("--deltas",
                   help="comma-separated cell diagonals (may be empty)")
    p.add_argument("--lipschitz", type=float)
    p.add_argument("--lebesgue", type=float)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("simulate", parents=[common, system, objective, gridf],
                       help="continuous trajectories under a stored policy")
    p.add_argument("--policy", help="qtable CSV path")
    p.add_argument("--sims", type=int, help="trajectory count (default 100)")
    p.add_argument("--seed", type=int, help="simulation seed (default 0)")
    p.set_defaults(func=cmd_simulate)

    return parser


def entry(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse prints usage itself
        return int(exc.code or 0)
    if not hasattr(args, "func"):
        parser.print_help()
        return 2
    try:
        _apply_config(args)
        return args.func(args)
    except (ValueError, OSError) as exc:  # config, parse and file problems
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ArithmeticError as exc:  # numeric failures (overflow, divergence)
        print(f"numeric error: {exc}", file=sys.stderr)
        return 3


def main() -> None:
    sys.exit(entry())


if __name__ == "__main__":
    main()
