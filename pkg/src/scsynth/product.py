"""Interpreter fusing quantized observations with automaton progress.

The learner never sees the continuous state: each episode holds the true
state internally, exposes only (cell, q, k), advances the DFA on the label
of the quantized representative, and pays either the sparse acceptance
reward or a potential-shaped variant based on DFA distance-to-accept.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .quantize import Grid
from .scltl.automaton import Dfa
from .systems import OUT, ConfigurationError, SystemModel

__all__ = [
    "EpisodeError",
    "EpisodeStep",
    "Interpreter",
    "ProductState",
    "RewardConfig",
    "potential",
    "reward",
    "save_trace",
]


class EpisodeError(RuntimeError):
    """Raised when an episode is driven out of protocol (step before reset,
    step after termination, missing input)."""


@dataclass(frozen=True)
class ProductState:
    """Observable state of one episode: quantized cell, DFA state, step count."""

    cell: int
    q: int
    k: int


@dataclass(frozen=True)
class RewardConfig:
    """Reward channel selection: plain acceptance indicator or shaped."""

    mode: str = "sparse"
    kappa: float = 0.1

    def __post_init__(self):
        if self.mode not in ("sparse", "shaped"):
            raise ConfigurationError(f"unknown reward mode {self.mode!r}")
        if self.mode == "shaped" and not self.kappa > 0:
            raise ConfigurationError("shaped rewards need kappa > 0")


@dataclass(frozen=True)
class EpisodeStep:
    prior: ProductState
    input: int | None
    after: ProductState
    reward: float
    terminal: bool


def potential(dfa: Dfa, d: int, kappa: float) -> float:
    """Shaping potential over distance-to-accept.

    P(0) = 1 and P(d) = kappa (d - d(q0)) / (1 - d_max) otherwise, so the
    initial state has potential 0 (when not accepting) and consecutive
    distance levels differ by kappa / (d_max - 1).
    """
    if d < 0 or d > dfa.d_max:
        raise ConfigurationError(f"distance {d} outside [0, {dfa.d_max}]")
    if d == 0:
        return 1.0
    if dfa.d_max == 1:
        # the only positive distance level collapses onto potential 0
        return 0.0
    return kappa * (d - int(dfa.dist[dfa.q0])) / (1.0 - dfa.d_max)


def reward(q: int, q_next: int, config: RewardConfig, dfa: Dfa) -> float:
    """Reward of the DFA hop q -> q_next under the configured channel."""
    if config.mode == "sparse":
        return 1.0 if (q != dfa.q_acc and q_next == dfa.q_acc) else 0.0
    return potential(dfa, int(dfa.dist[q_next]), config.kappa) - potential(
        dfa, int(dfa.dist[q]), config.kappa)


class Interpreter:
    """Runs episodes of the quantized-observation product process.

    Protocol: ``reset(x0)`` consumes the label of the representative of x0's
    cell and stashes the reward of that initial DFA hop.  The stash is paid
    out on the first ``step`` call - folded into the first transition's
    reward, or, if the reset itself ended the episode, returned by a single
    bookkeeping ``step(None)`` that moves nothing.  Total episode reward is
    therefore always the sum over ``step`` returns.
    """

    def __init__(self, model: SystemModel, grid: Grid, dfa: Dfa, horizon: int,
                 config: RewardConfig | None = None, rng=None):
        if horizon < 1:
            raise ConfigurationError("horizon must be at least 1")
        if not np.allclose(grid.box, model.box):
            raise ConfigurationError("grid box does not match the model box")
        self.model = model
        self.grid = grid
        self.dfa = dfa
        self.horizon = int(horizon)
        self.config = config if config is not None else RewardConfig()
        self.rng = rng if isinstance(rng, np.random.Generator) \
            else np.random.default_rng(rng)
        self._letters: dict[int, int] = {}
        self._state: ProductState | None = None
        self._x: np.ndarray | None = None
        self._stash = 0.0
        self._pending_bookkeeping = False
        self._word: list[int] = []

    # ------------------------------------------------------------- helpers

    def _letter_of(self, cell: int) -> int:
        letter = self._letters.get(cell)
        if letter is None:
            point = OUT if cell == self.grid.out_index else self.grid.center(cell)
            props = self.model.labeler(point)
            letter = self.dfa.letter(p for p in props if p in self.dfa.ap)
            self._letters[cell] = letter
        return letter

    def _q_terminal(self, q: int) -> bool:
        return q == self.dfa.q_acc or (self.dfa.q_rej is not None and q == self.dfa.q_rej)

    # ------------------------------------------------------------ protocol

    @property
    def state(self) -> ProductState | None:
        return self._state

    @property
    def word(self) -> tuple:
        """Letters consumed so far (one at reset, one per real step)."""
        return tuple(self._word)

    @property
    def x(self) -> np.ndarray | None:
        """Continuous system state (frozen once the trajectory leaves the
        domain box; None before the first reset)."""
        return None if self._x is None else self._x.copy()

    @property
    def terminal(self) -> bool:
        s = self._state
        if s is None:
            return False
        return self._q_terminal(s.q) or s.k >= self.horizon

    @property
    def pending_bookkeeping(self) -> bool:
        """True when the reset ended the episode and the stashed reward has
        not been collected yet."""
        return self._pending_bookkeeping

    def reset(self, x0) -> ProductState:
        x0 = np.atleast_1d(np.asarray(x0, dtype=float))
        if not self.model.contains(x0):
            raise ConfigurationError(f"initial state {x0} outside the domain")
        _, cell = self.grid.quantize(x0)
        letter = self._letter_of(cell)
        q = int(self.dfa.trans[self.dfa.q0, letter])
        self._x = x0.copy()
        self._state = ProductState(cell=cell, q=q, k=0)
        self._stash = reward(self.dfa.q0, q, self.config, self.dfa)
        self._pending_bookkeeping = self._q_terminal(q)
        self._word = [letter]
        return self._state

    def step(self, nu: int | None = None) -> EpisodeStep:
        if self._state is None:
            raise EpisodeError("reset the interpreter before stepping")
        s = self._state
        if self._pending_bookkeeping:
            # episode ended at reset; one bookkeeping call pays the stash
            self._pending_bookkeeping = False
            paid, self._stash = self._stash, 0.0
            return EpisodeStep(prior=s, input=None if nu is None else int(nu),
                               after=s, reward=paid, terminal=True)
        if self.terminal:
            raise EpisodeError("episode is terminal; reset to continue")
        if nu is None:
            raise EpisodeError("an input is required to step a live episode")
        a = int(nu)
        if not 0 <= a < self.model.n_inputs:
            raise ConfigurationError(f"input index {a} out of range")
        if s.cell == self.grid.out_index:
            cell2 = s.cell  # absorbed: the dynamics are no longer advanced
        else:
            x2 = self.model.step(self._x, a, self.model.sample_noise(self.rng))
            _, cell2 = self.grid.quantize(x2)
            self._x = x2
        letter = self._letter_of(cell2)
        q2 = int(self.dfa.trans[s.q, letter])
        r = reward(s.q, q2, self.config, self.dfa) + self._stash
        self._stash = 0.0
        after = ProductState(cell=cell2, q=q2, k=s.k + 1)
        self._state = after
        self._word.append(letter)
        return EpisodeStep(prior=s, input=a, after=after, reward=r,
                           terminal=self._q_terminal(q2) or after.k >= self.horizon)


def save_trace(path, episodes) -> None:
    """Write episode traces as CSV rows episode,k,cell,q,input,reward,terminal.

    ``episodes`` is an iterable of EpisodeStep lists; each row describes the
    state after one step (bookkeeping steps appear with an empty input).
    """
    with open(path, "w", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["episode", "k", "cell", "q", "input", "reward", "terminal"])
        for ep, steps in enumerate(episodes):
            for st in steps:
                writer.writerow([
                    ep, st.after.k, st.after.cell, st.after.q,
                    "" if st.input is None else st.input,
                    repr(float(st.reward)), int(st.terminal),
                ])
