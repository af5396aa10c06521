"""State-space quantization and the quantization closeness bound.

A uniform grid partitions the closed box into half-open cells (the final cell
along each dimension is closed) represented by their centers.  The realized
quantization parameter delta is the largest distance between a point and its
representative, i.e. the cell diagonal.  The closeness bound ties delta to
the maximal difference between satisfaction probabilities of the continuous
system and its quantized observation process:

    epsilon = horizon * delta * lipschitz * lebesgue

so a policy learned on quantized observations is at most 2 epsilon from
optimal, and delta_for_epsilon inverts the bound for planning a grid.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .systems import OUT, ConfigurationError, SystemModel

MAX_CELLS = 100_000_000


@dataclass(frozen=True)
class Grid:
    """Uniform quantization of a box; cell index -1 is reserved for "out"."""

    box: np.ndarray       # (n, 2)
    counts: np.ndarray    # (n,) cells per dimension
    widths: np.ndarray    # (n,) cell widths
    delta: float          # realized cell diagonal, norm of the widths vector

    @property
    def dim(self) -> int:
        return self.box.shape[0]

    @property
    def n_cells(self) -> int:
        return int(np.prod(self.counts))

    @property
    def out_index(self) -> int:
        return self.n_cells

    def multi_index(self, flat: int) -> tuple:
        return tuple(int(v) for v in np.unravel_index(flat, self.counts))

    def center(self, flat: int) -> np.ndarray:
        idx = np.array(np.unravel_index(flat, self.counts))
        return self.box[:, 0] + (idx + 0.5) * self.widths

    def centers(self) -> np.ndarray:
        """All representatives, ordered by flat cell index; (n_cells, n)."""
        axes = [self.box[d, 0] + (np.arange(self.counts[d]) + 0.5) * self.widths[d]
                for d in range(self.dim)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def quantize(self, x) -> tuple[np.ndarray | None, int]:
        """Representative point and flat cell index; (None, out_index) outside."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if np.any(x < self.box[:, 0]) or np.any(x > self.box[:, 1]):
            return None, self.out_index
        idx = np.floor((x - self.box[:, 0]) / self.widths).astype(np.int64)
        idx = np.minimum(idx, self.counts - 1)  # fold the closed upper boundary
        flat = int(np.ravel_multi_index(idx, self.counts))
        return self.box[:, 0] + (idx + 0.5) * self.widths, flat

    def quantize_many(self, x: np.ndarray) -> np.ndarray:
        """Vectorized flat cell indices for an (N, n) array; out_index outside."""
        x = np.asarray(x, dtype=float)
        inside = np.all((x >= self.box[:, 0]) & (x <= self.box[:, 1]), axis=1)
        idx = np.floor((x - self.box[:, 0]) / self.widths).astype(np.int64)
        idx = np.clip(idx, 0, self.counts - 1)
        flat = np.ravel_multi_index(tuple(idx.T), tuple(self.counts))
        return np.where(inside, flat, self.out_index)


def build_grid(box, delta_target: float) -> Grid:
    """Uniform grid whose realized delta does not exceed delta_target.

    Per-dimension widths are at most delta_target / sqrt(n), making the cell
    diagonal at most delta_target.
    """
    box = np.asarray(box, dtype=float)
    if delta_target <= 0:
        raise ConfigurationError("delta must be positive")
    n = box.shape[0]
    target_width = delta_target / math.sqrt(n)
    spans = box[:, 1] - box[:, 0]
    counts = np.maximum(np.ceil(spans / target_width - 1e-12), 1).astype(np.int64)
    if np.prod(counts.astype(np.float64)) > MAX_CELLS:
        raise ConfigurationError(
            f"grid would need {np.prod(counts.astype(np.float64)):.3g} cells "
            f"(cap {MAX_CELLS}); increase delta")
    widths = spans / counts
    delta = float(np.linalg.norm(widths))
    return Grid(box=box, counts=counts, widths=widths, delta=delta)


# --------------------------------------------------------- closeness bound

def epsilon_bound(horizon: int, delta: float, lipschitz: float,
                  lebesgue: float = 1.0) -> float:
    """Satisfaction-probability deviation bound epsilon = T delta H L."""
    if horizon < 0 or delta < 0 or lipschitz < 0 or lebesgue < 0:
        raise ConfigurationError("bound inputs must be nonnegative")
    return horizon * delta * lipschitz * lebesgue


def delta_for_epsilon(epsilon: float, horizon: int, lipschitz: float,
                      lebesgue: float = 1.0) -> float:
    """Largest delta achieving a requested epsilon."""
    denom = horizon * lipschitz * lebesgue
    if epsilon <= 0 or denom <= 0:
        raise ConfigurationError("epsilon, horizon and Lipschitz constant must be positive")
    return epsilon / denom


def policy_interval(p: float, epsilon: float) -> tuple[float, float]:
    """Clipped interval that contains the learned policy's true satisfaction
    probability: [max(0, p - eps), min(1, p + eps)]."""
    return max(0.0, p - epsilon), min(1.0, p + epsilon)


def optimal_gap(epsilon: float) -> float:
    """A policy optimal for the quantized process is 2*epsilon-optimal."""
    return 2.0 * epsilon


# ------------------------------------------------- explicit finite abstraction

@dataclass
class FiniteMdp:
    """Explicit MDP over grid cells plus one absorbing out state (index n_cells).

    trans[s, a, s'] is a dense stochastic row for each state-input pair;
    labels[s] is the proposition set of state s.
    """

    trans: np.ndarray
    labels: tuple
    inputs: np.ndarray
    grid: Grid | None = None

    @property
    def n_states(self) -> int:
        return self.trans.shape[0]

    @property
    def n_inputs(self) -> int:
        return self.trans.shape[1]

    @property
    def out_state(self) -> int:
        return self.n_states - 1


def build_finite_mdp(model: SystemModel, grid: Grid) -> FiniteMdp:
    """Exact quantized abstraction for 1-D linear-Gaussian benchmarks.

    Cell-to-cell probabilities are normal CDF differences at shared cell
    edges (so each row telescopes to total mass 1 with the out state taking
    the two tails); the out state is absorbing.
    """
    if model.lin_gauss is None:
        raise ConfigurationError(f"{model.name}: no linear-Gaussian oracle data")
    if model.dim != 1:
        raise ConfigurationError("explicit abstraction supports 1-D systems only")
    lg = model.lin_gauss
    lo, hi = grid.box[0]
    edges = lo + grid.widths[0] * np.arange(grid.n_cells + 1)
    edges[-1] = hi
    centers = grid.centers()[:, 0]
    n = grid.n_cells + 1
    trans = np.zeros((n, model.n_inputs, n))
    for a in range(model.n_inputs):
        mean = lg.a[a] * centers + lg.c[a]
        z = (edges[None, :] - mean[:, None]) / lg.sigma
        cdf = ndtr(z)
        trans[:-1, a, :-1] = np.diff(cdf, axis=1)
        trans[:-1, a, -1] = 1.0 - (cdf[:, -1] - cdf[:, 0])
        trans[-1, a, -1] = 1.0
    labels = tuple(model.labeler(grid.center(s)) for s in range(grid.n_cells))
    labels = labels + (model.labeler(OUT),)
    return FiniteMdp(trans=trans, labels=labels, inputs=model.inputs, grid=grid)


def save_finite_mdp(path, mdp: FiniteMdp) -> None:
    """Sparse CSV export: rows state,input,next_state,prob for nonzero entries."""
    with open(path, "w", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["state", "input", "next_state", "prob"])
        for s in range(mdp.n_states):
            for a in range(mdp.n_inputs):
                for sp in np.nonzero(mdp.trans[s, a])[0]:
                    writer.writerow([s, a, int(sp), repr(float(mdp.trans[s, a, sp]))])
