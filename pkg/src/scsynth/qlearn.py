"""Finite-horizon tabular Q-learning over quantized observations.

The learner never touches the abstraction: it interacts with the continuous
system, observes grid cells (plus the automaton state maintained from the
labels of cell representatives), and maintains one Q table per time index.
Backups are episodic and online:

    Q[k](s, nu) += alpha * (r + max_nu' Q[k+1](s', nu') - Q[k](s, nu))

with Q[T] identically zero and terminal transitions bootstrapping zero.
Training is deterministic given the seed.  Policy evaluation replays the
greedy policy through the product interpreter on independent per-rollout
random streams and reports a Hoeffding confidence half-width.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .product import Interpreter, RewardConfig, reward
from .quantize import Grid
from .scltl.automaton import Dfa
from .systems import OUT, ConfigurationError, SystemModel

__all__ = [
    "TrainConfig",
    "QTable",
    "LearnedPolicy",
    "train",
    "extract_policy",
    "reported_value",
    "evaluate",
    "hoeffding_halfwidth",
    "save_qtable",
    "load_qtable",
]

_BUF = 1 << 16  # RNG block size; draws are consumed sequentially from blocks


@dataclass(frozen=True)
class TrainConfig:
    """Hyper-parameters for one training run.

    The learning rate for the n-th visit of a (time, cell, q, input) tuple
    is 1 / (1 + n)^alpha_power; exploration is epsilon-greedy with epsilon
    decaying linearly from eps_start to eps_end over the first eps_fraction
    of the episodes.  Episodes start from the fixed state x0 unless
    uniform_restarts draws the initial state uniformly from the domain box.
    """

    episodes: int
    seed: int = 0
    reward: RewardConfig = field(default_factory=RewardConfig)
    alpha_power: float = 0.7
    eps_start: float = 1.0
    eps_end: float = 0.05
    eps_fraction: float = 0.8
    x0: tuple | float | None = None
    uniform_restarts: bool = False

    def __post_init__(self):
        if self.episodes < 1:
            raise ConfigurationError("episodes must be at least 1")
        if not 0.5 < self.alpha_power <= 1.0:
            raise ConfigurationError(
                "alpha_power must lie in (0.5, 1] for a convergent schedule")
        if not (0.0 <= self.eps_end <= self.eps_start <= 1.0):
            raise ConfigurationError(
                "need 0 <= eps_end <= eps_start <= 1 (epsilon must not grow)")
        if not 0.0 < self.eps_fraction <= 1.0:
            raise ConfigurationError("eps_fraction must lie in (0, 1]")
        if self.x0 is None and not self.uniform_restarts:
            raise ConfigurationError("provide x0 or enable uniform_restarts")
        if self.x0 is not None and self.uniform_restarts:
            raise ConfigurationError("x0 and uniform_restarts are exclusive")


@dataclass
class QTable:
    """Time-indexed action values: q[k, cell, dfa_state, input].

    The cell axis has one extra row for the out-of-domain observation.
    ``visits`` counts completed updates per entry; ``meta`` carries the
    training provenance written into the CSV header.
    """

    q: np.ndarray
    visits: np.ndarray
    meta: dict

    @property
    def horizon(self) -> int:
        return self.q.shape[0]


@dataclass(frozen=True)
class LearnedPolicy:
    """Deterministic time-dependent map (k, cell, q) -> input index."""

    actions: np.ndarray  # (horizon, n_cells + 1, n_q) int
    fallback: int = 0

    @property
    def horizon(self) -> int:
        return self.actions.shape[0]

    def action(self, k: int, cell: int, q: int) -> int:
        return int(self.actions[k, cell, q])


# ------------------------------------------------------------------ training

def _letter_table(model: SystemModel, grid: Grid, dfa: Dfa):
    """Lazy per-cell letter cache (index grid.out_index holds the out label)."""
    table = [-1] * (grid.n_cells + 1)

    def lookup(cell: int) -> int:
        letter = table[cell]
        if letter < 0:
            point = OUT if cell == grid.out_index else grid.center(cell)
            props = model.labeler(point)
            letter = dfa.letter(p for p in props if p in dfa.ap)
            table[cell] = letter
        return letter

    return lookup


def train(model: SystemModel, grid: Grid, dfa: Dfa, horizon: int,
          config: TrainConfig) -> QTable:
    """Run episodic Q-learning and return the learned table.

    Episodes replay the product interpreter's conventions: the initial label
    is consumed at reset (its reward is folded into the first update), cells
    outside the domain absorb without advancing the dynamics, and episodes
    end on accept/reject automaton states or at the horizon.
    """
    if horizon < 1:
        raise ConfigurationError("horizon must be at least 1")
    if not np.allclose(grid.box, model.box):
        raise ConfigurationError("grid was built for a different domain box")
    x0 = None
    if config.x0 is not None:
        x0 = np.atleast_1d(np.asarray(config.x0, dtype=float))
        if not model.contains(x0):
            raise ConfigurationError(f"initial state {x0} outside the domain")

    n_obs = grid.n_cells + 1
    n_q = dfa.n_states
    n_a = model.n_inputs
    stride_q = n_a
    stride_c = n_q * n_a
    stride_k = n_obs * stride_c
    q_flat = [0.0] * (horizon * stride_k)
    v_flat = [0] * (horizon * stride_k)

    letter_of = _letter_table(model, grid, dfa)
    qnext = dfa.trans.tolist()
    acc, rej = dfa.q_acc, dfa.q_rej
    is_term = [q == acc or (rej is not None and q == rej) for q in range(n_q)]
    r_hop = [[reward(q, q2, config.reward, dfa) for q2 in range(n_q)]
             for q in range(n_q)]
    q0_dfa = dfa.q0
    out_cell = grid.out_index
    neg_pow = -config.alpha_power

    # epsilon-greedy schedule: linear decay over the first fraction, flat after
    decay_n = max(1, int(round(config.eps_fraction * config.episodes)))
    slope = (config.eps_end - config.eps_start) / decay_n
    eps_start, eps_end = config.eps_start, config.eps_end

    # fast path: scalar affine dynamics avoid numpy dispatch in the hot loop
    fast = model.lin_gauss is not None and model.dim == 1
    if fast:
        a_coef = model.lin_gauss.a.tolist()
        c_coef = model.lin_gauss.c.tolist()
        sigma = float(model.noise_sigma[0])
        lo, hi = float(grid.box[0, 0]), float(grid.box[0, 1])
        width = float(grid.widths[0])
        n_cells = grid.n_cells
    sig_list = model.noise_sigma.tolist()
    dim = model.dim
    box_lo = model.box[:, 0].tolist()
    box_span = (model.box[:, 1] - model.box[:, 0]).tolist()

    rng = np.random.default_rng(config.seed)
    uniforms: list = []
    normals: list = []
    randints: list = []
    ui = ni = ri = _BUF

    for ep in range(config.episodes):
        eps = eps_start + slope * ep if ep < decay_n else eps_end

        # ---------------------------------------------------- episode reset
        if config.uniform_restarts:
            if ui + dim > _BUF:
                uniforms = rng.random(_BUF).tolist()
                ui = 0
            if fast:
                x = box_lo[0] + uniforms[ui] * box_span[0]
                ui += 1
            else:
                x = np.array([box_lo[d] + uniforms[ui + d] * box_span[d]
                              for d in range(dim)])
                ui += dim
        else:
            x = float(x0[0]) if fast else x0.copy()
        if fast:
            cell = out_cell if (x < lo or x > hi) else min(
                int((x - lo) / width), n_cells - 1)
        else:
            _, cell = grid.quantize(x)
        q = qnext[q0_dfa][letter_of(cell)]
        pending = r_hop[q0_dfa][q]
        if is_term[q]:
            continue  # the reset already decided the episode: nothing to learn

        k = 0
        while True:
            base = k * stride_k + cell * stride_c + q * stride_q
            if ui == _BUF:
                uniforms = rng.random(_BUF).tolist()
                ui = 0
            u = uniforms[ui]
            ui += 1
            if u < eps:
                if ri == _BUF:
                    randints = rng.integers(0, n_a, _BUF).tolist()
                    ri = 0
                a = randints[ri]
                ri += 1
            else:
                row = q_flat[base:base + n_a]
                a = row.index(max(row))

            if cell == out_cell:
                cell2 = out_cell  # absorbed: dynamics no longer advanced
            elif fast:
                if ni == _BUF:
                    normals = rng.standard_normal(_BUF).tolist()
                    ni = 0
                x = a_coef[a] * x + c_coef[a] + sigma * normals[ni]
                ni += 1
                cell2 = out_cell if (x < lo or x > hi) else min(
                    int((x - lo) / width), n_cells - 1)
            else:
                if ni + dim > _BUF:
                    normals = rng.standard_normal(_BUF).tolist()
                    ni = 0
                noise = np.array(normals[ni:ni + dim]) * sig_list
                ni += dim
                x = model.step(x, a, noise)
                _, cell2 = grid.quantize(x)

            q2 = qnext[q][letter_of(cell2)]
            r = pending + r_hop[q][q2]
            pending = 0.0
            k2 = k + 1
            terminal = is_term[q2] or k2 >= horizon
            if terminal:
                target = r
            else:
                b2 = k2 * stride_k + cell2 * stride_c + q2 * stride_q
                row2 = q_flat[b2:b2 + n_a]
                target = r + max(row2)
            idx = base + a
            visits_before = v_flat[idx]
            v_flat[idx] = visits_before + 1
            q_flat[idx] += (target - q_flat[idx]) * (
                (1.0 + visits_before) ** neg_pow)
            if terminal:
                break
            cell, q, k = cell2, q2, k2

    shape = (horizon, n_obs, n_q, n_a)
    meta = {
        "seed": config.seed,
        "episodes": config.episodes,
        "mode": config.reward.mode,
        "kappa": config.reward.kappa,
        "delta": grid.delta,
        "horizon": horizon,
        "cells": n_obs,
        "dfa_states": n_q,
        "inputs": n_a,
    }
    return QTable(q=np.array(q_flat).reshape(shape),
                  visits=np.array(v_flat, dtype=np.int64).reshape(shape),
                  meta=meta)


# ------------------------------------------------------- policy and reports

def extract_policy(table: QTable, fallback: int = 0) -> LearnedPolicy:
    """Greedy policy: argmax with lowest-index tie-break; unvisited tuples
    fall back to the given input index."""
    actions = np.argmax(table.q, axis=-1)
    unvisited = table.visits.sum(axis=-1) == 0
    actions[unvisited] = fallback
    return LearnedPolicy(actions=actions, fallback=fallback)


def _reset_state(model: SystemModel, grid: Grid, dfa: Dfa, x0):
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    if not model.contains(x0):
        raise ConfigurationError(f"initial state {x0} outside the domain")
    _, cell = grid.quantize(x0)
    props = model.labeler(grid.center(cell))
    letter = dfa.letter(p for p in props if p in dfa.ap)
    return cell, int(dfa.trans[dfa.q0, letter])


def reported_value(table: QTable, model: SystemModel, grid: Grid, dfa: Dfa,
                   x0) -> float:
    """Value the learner reports for x0: max_nu Q[0](reset state, nu)."""
    if table.q.shape[1:] != (grid.n_cells + 1, dfa.n_states, model.n_inputs):
        raise ConfigurationError("table shape does not match grid/dfa/model")
    cell, q = _reset_state(model, grid, dfa, x0)
    return float(table.q[0, cell, q].max())


def hoeffding_halfwidth(rollouts: int, miss: float = 0.01) -> float:
    """99% (by default) Hoeffding confidence half-width for a mean of
    `rollouts` indicator samples."""
    return math.sqrt(math.log(2.0 / miss) / (2.0 * rollouts))


def evaluate(model: SystemModel, grid: Grid, dfa: Dfa, policy: LearnedPolicy,
             x0, rollouts: int, seed: int = 0) -> tuple[float, float]:
    """Monte-Carlo acceptance estimate for a policy on the continuous system.

    Runs `rollouts` independent episodes through the product interpreter,
    each on its own random stream derived from (seed, rollout index), and
    returns (p_hat, half-width) with a 99% Hoeffding half-width.  The
    aggregate does not depend on evaluation order.
    """
    if rollouts < 1:
        raise ConfigurationError("rollouts must be at least 1")
    interp = Interpreter(model, grid, dfa, policy.horizon)
    hits = 0
    for i in range(rollouts):
        interp.rng = np.random.default_rng([seed, i])
        interp.reset(x0)
        while not interp.terminal:
            s = interp.state
            interp.step(policy.action(s.k, s.cell, s.q))
        hits += int(interp.state.q == dfa.q_acc)
    return hits / rollouts, hoeffding_halfwidth(rollouts)


# ---------------------------------------------------------------- CSV format

def save_qtable(path, table: QTable) -> None:
    """Write `k,cell,q,input,value,visits` rows for every touched entry,
    preceded by `# key=value` metadata lines."""
    q, visits = table.q, table.visits
    keep = (visits != 0) | (q != 0.0)
    with open(path, "w", newline="\n") as fh:
        for key, value in table.meta.items():
            fh.write(f"# {key}={value}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["k", "cell", "q", "input", "value", "visits"])
        for k, cell, dq, a in zip(*np.nonzero(keep)):
            writer.writerow([int(k), int(cell), int(dq), int(a),
                             repr(float(q[k, cell, dq, a])),
                             int(visits[k, cell, dq, a])])


_META_TYPES = {
    "seed": int, "episodes": int, "horizon": int, "cells": int,
    "dfa_states": int, "inputs": int, "kappa": float, "delta": float,
    "mode": str,
}


def load_qtable(path) -> QTable:
    """Inverse of save_qtable; reconstructs the dense arrays from metadata."""
    meta: dict = {}
    rows = []
    with open(path, newline="") as fh:
        data_lines = []
        for line in fh:
            if line.startswith("#"):
                key, _, value = line[1:].strip().partition("=")
                key = key.strip()
                meta[key] = _META_TYPES.get(key, str)(value.strip())
            else:
                data_lines.append(line)
        reader = csv.DictReader(data_lines)
        for row in reader:
            rows.append((int(row["k"]), int(row["cell"]), int(row["q"]),
                         int(row["input"]), float(row["value"]),
                         int(row["visits"])))
    for key in ("horizon", "cells", "dfa_states", "inputs"):
        if key not in meta:
            raise ConfigurationError(f"qtable file lacks '{key}' metadata")
    shape = (meta["horizon"], meta["cells"], meta["dfa_states"], meta["inputs"])
    q = np.zeros(shape)
    visits = np.zeros(shape, dtype=np.int64)
    for k, cell, dq, a, value, count in rows:
        q[k, cell, dq, a] = value
        visits[k, cell, dq, a] = count
    return QTable(q=q, visits=visits, meta=meta)
