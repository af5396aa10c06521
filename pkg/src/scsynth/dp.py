"""Dynamic programming over the explicit product of a finite abstraction
and a co-safety DFA.

This is the ground-truth side of the toolkit: backward value iteration
computes the optimal acceptance probability p_star that the learner is
measured against, and exhaustive positional-policy enumeration provides
exact expected rewards for the reward-shaping equivalence checks.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .product import RewardConfig, reward
from .quantize import FiniteMdp
from .scltl.automaton import Dfa
from .systems import ConfigurationError

__all__ = [
    "ValueTable",
    "enumerate_policies",
    "exact_policy_value",
    "random_instance",
    "random_resolving_instance",
    "save_value_table",
    "shaping_equivalence_check",
    "simulate_policy",
    "state_letters",
    "value_iteration",
]

_ROW_TOL = 1e-8
_MAX_POLICIES = 1_000_000


@dataclass(frozen=True)
class ValueTable:
    """Backward-recursion values and greedy inputs, indexed [k, state, q]."""

    v: np.ndarray       # (T+1, S, Q) values in [0, 1]
    greedy: np.ndarray  # (T+1, S, Q) argmax inputs; the k = T slice is unused

    @property
    def horizon(self) -> int:
        return self.v.shape[0] - 1


def _check_rows(mdp: FiniteMdp) -> None:
    if np.any(mdp.trans < -1e-15):
        raise ConfigurationError("negative transition probability")
    err = np.abs(mdp.trans.sum(axis=2) - 1.0).max()
    if err > _ROW_TOL:
        raise ConfigurationError(f"transition rows are not normalized (off by {err:.3g})")


def state_letters(mdp: FiniteMdp, dfa: Dfa) -> np.ndarray:
    """Bit-set letter of each abstraction state's label."""
    return np.array([
        dfa.letter(p for p in props if p in dfa.ap) for props in mdp.labels
    ], dtype=np.int64)


def _qnext(mdp: FiniteMdp, dfa: Dfa) -> np.ndarray:
    """(Q, S) table: DFA successor when the destination state is s'."""
    return dfa.trans[:, state_letters(mdp, dfa)]


def _initial(mdp: FiniteMdp, dfa: Dfa, x0, s0) -> tuple[int, int]:
    """Resolve the initial abstraction state and consume its label."""
    if (x0 is None) == (s0 is None):
        raise ConfigurationError("give exactly one of x0 and s0")
    if x0 is not None:
        if mdp.grid is None:
            raise ConfigurationError("this abstraction carries no grid; pass s0")
        _, s0 = mdp.grid.quantize(np.atleast_1d(np.asarray(x0, dtype=float)))
        if s0 == mdp.grid.out_index:
            raise ConfigurationError("initial state outside the domain")
    s0 = int(s0)
    if not 0 <= s0 < mdp.n_states:
        raise ConfigurationError(f"initial state index {s0} out of range")
    letters = state_letters(mdp, dfa)
    return s0, int(dfa.trans[dfa.q0, letters[s0]])


def value_iteration(mdp: FiniteMdp, dfa: Dfa, horizon: int,
                    x0=None, s0=None) -> tuple[float, ValueTable, np.ndarray]:
    """Optimal acceptance probability over a bounded horizon.

    Returns (p_star, table, policy) where policy[k][s, q] is the greedy
    input at time k (ties broken toward the lowest input index) and p_star
    is the value at the initial state after its label has been consumed.
    """
    if horizon < 0:
        raise ConfigurationError("horizon must be nonnegative")
    _check_rows(mdp)
    s_init, q_init = _initial(mdp, dfa, x0, s0)
    n_s, n_a, n_q = mdp.n_states, mdp.n_inputs, dfa.n_states
    qn = _qnext(mdp, dfa)
    v = np.zeros((horizon + 1, n_s, n_q))
    greedy = np.zeros((horizon + 1, n_s, n_q), dtype=np.int64)
    v[horizon][:, dfa.q_acc] = 1.0
    trans_flat = mdp.trans.reshape(n_s * n_a, n_s)
    rows = np.arange(n_s)
    for k in range(horizon - 1, -1, -1):
        succ = v[k + 1][rows[None, :], qn]           # (Q, S'): value after hop to s'
        action_vals = (trans_flat @ succ.T).reshape(n_s, n_a, n_q)
        v[k] = action_vals.max(axis=1)
        greedy[k] = action_vals.argmax(axis=1)
        v[k][:, dfa.q_acc] = 1.0
    p_star = 1.0 if q_init == dfa.q_acc else float(v[0][s_init, q_init])
    return p_star, ValueTable(v=v, greedy=greedy), greedy[:horizon]


def exact_policy_value(mdp: FiniteMdp, dfa: Dfa, horizon: int, policy,
                       config: RewardConfig | None = None, s0: int = 0) -> float:
    """Exact expected total reward of one policy by forward propagation.

    ``policy`` is either positional with shape (S, Q) or time-dependent with
    shape (T, S, Q); rewards follow the same reset/step label convention as
    the interpreter (the initial hop's reward is included).
    """
    config = config if config is not None else RewardConfig()
    _check_rows(mdp)
    policy = np.asarray(policy, dtype=np.int64)
    if policy.ndim == 2:
        policy = np.broadcast_to(policy, (horizon,) + policy.shape)
    if policy.shape != (horizon, mdp.n_states, dfa.n_states):
        raise ConfigurationError(f"policy shape {policy.shape} does not match")
    s_init, q_init = _initial(mdp, dfa, None, s0)
    qn = _qnext(mdp, dfa)
    r_hop = np.array([[reward(q, q2, config, dfa) for q2 in range(dfa.n_states)]
                      for q in range(dfa.n_states)])
    total = float(r_hop[dfa.q0, q_init])
    dist = np.zeros((mdp.n_states, dfa.n_states))
    dist[s_init, q_init] = 1.0
    rows = np.arange(mdp.n_states)
    for k in range(horizon):
        nxt = np.zeros_like(dist)
        for q in range(dfa.n_states):
            mass = dist[:, q]
            if not mass.any():
                continue
            flow = mass @ mdp.trans[rows, policy[k][:, q], :]   # (S',)
            dest = qn[q]
            np.add.at(nxt, (rows, dest), flow)
            total += float(flow @ r_hop[q, dest])
        dist = nxt
    return total


def enumerate_policies(mdp: FiniteMdp, dfa: Dfa, horizon: int,
                       config: RewardConfig | None = None,
                       s0: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Exact expected total reward of every positional policy.

    Returns (policies, values): policies has shape (P, S, Q) with P =
    |U|^(S*Q) in a fixed lexicographic order, values the matching expected
    totals. Guarded to at most 10^6 policies.
    """
    config = config if config is not None else RewardConfig()
    _check_rows(mdp)
    n_s, n_a, n_q = mdp.n_states, mdp.n_inputs, dfa.n_states
    n_z = n_s * n_q
    count = n_a ** n_z
    if count > _MAX_POLICIES:
        raise ConfigurationError(
            f"{n_a}^{n_z} positional policies exceed the {_MAX_POLICIES} cap")
    s_init, q_init = _initial(mdp, dfa, None, s0)
    qn = _qnext(mdp, dfa)
    r_hop = np.array([[reward(q, q2, config, dfa) for q2 in range(dfa.n_states)]
                      for q in range(dfa.n_states)])

    # product-state transfer matrix and reward vector per action, z = s*Q + q
    transfer = np.zeros((n_a, n_z, n_z))
    step_reward = np.zeros((n_a, n_z))
    s_idx = np.arange(n_s)
    for a in range(n_a):
        for q in range(n_q):
            src = s_idx * n_q + q
            dst = s_idx * n_q + qn[q]
            transfer[a][src[:, None], dst[None, :]] = mdp.trans[:, a, :]
            step_reward[a][src] = mdp.trans[:, a, :] @ r_hop[q, qn[q]]

    policies = np.stack(
        np.unravel_index(np.arange(count), (n_a,) * n_z)).astype(np.int8).T
    values = np.full(count, float(r_hop[dfa.q0, q_init]))
    chunk = 65536
    for lo in range(0, count, chunk):
        pol = policies[lo:lo + chunk]
        dist = np.zeros((pol.shape[0], n_z))
        dist[:, s_init * n_q + q_init] = 1.0
        acc = values[lo:lo + chunk]
        for _ in range(horizon):
            nxt = np.zeros_like(dist)
            for a in range(n_a):
                masked = np.where(pol == a, dist, 0.0)
                nxt += masked @ transfer[a]
                acc += masked @ step_reward[a]
            dist = nxt
        values[lo:lo + chunk] = acc
    return policies.reshape(count, n_s, n_q), values


def shaping_equivalence_check(mdp: FiniteMdp, dfa: Dfa, horizon: int,
                              kappa: float, s0: int = 0,
                              tol: float = 1e-9):
    """True iff the optimal positional-policy sets under the sparse and the
    shaped reward coincide; on failure returns a witness policy pair (one
    policy optimal for exactly one of the two channels, plus the other
    channel's optimum)."""
    pols, v_sparse = enumerate_policies(mdp, dfa, horizon, RewardConfig("sparse"), s0)
    _, v_shaped = enumerate_policies(
        mdp, dfa, horizon, RewardConfig("shaped", kappa), s0)
    opt_sparse = set(np.flatnonzero(v_sparse >= v_sparse.max() - tol).tolist())
    opt_shaped = set(np.flatnonzero(v_shaped >= v_shaped.max() - tol).tolist())
    if opt_sparse == opt_shaped:
        return True, None
    if opt_sparse - opt_shaped:
        i = min(opt_sparse - opt_shaped)
        j = min(opt_shaped)
    else:
        i = min(opt_shaped - opt_sparse)
        j = min(opt_sparse)
    return False, (pols[i], pols[j])


def simulate_policy(mdp: FiniteMdp, dfa: Dfa, policy, horizon: int,
                    n_episodes: int, seed, s0: int = 0) -> float:
    """Monte-Carlo acceptance frequency of a policy on the abstraction."""
    _check_rows(mdp)
    policy = np.asarray(policy, dtype=np.int64)
    if policy.ndim == 2:
        policy = np.broadcast_to(policy, (horizon,) + policy.shape)
    s_init, q_init = _initial(mdp, dfa, None, s0)
    qn = _qnext(mdp, dfa)
    cum = mdp.trans.cumsum(axis=2)
    rng = np.random.default_rng(seed)
    s = np.full(n_episodes, s_init)
    q = np.full(n_episodes, q_init)
    for k in range(horizon):
        a = policy[k][s, q]
        u = rng.random(n_episodes)
        s = np.minimum((u[:, None] > cum[s, a]).sum(axis=1), mdp.n_states - 1)
        q = qn[q, s]
    return float(np.mean(q == dfa.q_acc))


def random_instance(rng, n_states: int | None = None, n_inputs: int | None = None,
                    n_q: int | None = None, n_ap: int | None = None):
    """Seeded random (FiniteMdp, Dfa) pair for property tests.

    Transition rows are Dirichlet-uniform; the DFA transition table is
    uniform with an absorbing accepting state."""
    from .scltl.automaton import make_dfa

    n_states = int(rng.integers(2, 6)) if n_states is None else n_states
    n_inputs = int(rng.integers(1, 3)) if n_inputs is None else n_inputs
    n_q = int(rng.integers(3, 6)) if n_q is None else n_q
    n_ap = int(rng.integers(1, 3)) if n_ap is None else n_ap
    ap = tuple(f"p{i}" for i in range(n_ap))
    trans = rng.dirichlet(np.ones(n_states), size=(n_states, n_inputs))
    labels = tuple(
        frozenset(p for p in ap if rng.random() < 0.5) for _ in range(n_states))
    mdp = FiniteMdp(trans=trans, labels=labels,
                    inputs=np.arange(n_inputs, dtype=float).reshape(-1, 1))
    q_acc = n_q - 1
    table = rng.integers(0, n_q, size=(n_q, 2 ** n_ap))
    table[q_acc, :] = q_acc
    dfa = make_dfa(ap, table, q0=0, q_acc=q_acc)
    return mdp, dfa


def random_resolving_instance(rng, n_states: int | None = None,
                              n_inputs: int | None = None,
                              n_live: int | None = None,
                              n_ap: int | None = None):
    """Seeded random instance whose episodes always resolve.

    Live automaton states are leveled and every letter strictly descends a
    level or jumps to the accepting/doomed sink, so any episode of horizon
    >= n_live - 1 ends accepted or rejected - never in a live state.  In
    that regime the shaped value is an affine increasing function of the
    acceptance probability and the optimal-policy sets provably coincide.

    Returns (mdp, dfa, horizon) with a horizon long enough to resolve.
    """
    from .scltl.automaton import make_dfa

    n_states = int(rng.integers(2, 5)) if n_states is None else n_states
    n_inputs = int(rng.integers(1, 3)) if n_inputs is None else n_inputs
    n_live = int(rng.integers(2, 4)) if n_live is None else n_live
    n_ap = int(rng.integers(1, 3)) if n_ap is None else n_ap
    ap = tuple(f"p{i}" for i in range(n_ap))
    n_letters = 2 ** n_ap
    doom, acc = n_live, n_live + 1
    table = np.zeros((n_live + 2, n_letters), dtype=np.int64)
    for i in range(n_live):
        lower = list(range(i + 1, n_live)) + [doom, acc]
        table[i] = rng.choice(lower, size=n_letters)
        # keep the accepting sink reachable: one letter always descends
        table[i, rng.integers(0, n_letters)] = i + 1 if i < n_live - 1 else acc
    table[doom, :] = doom
    table[acc, :] = acc
    dfa = make_dfa(ap, table, q0=0, q_acc=acc, q_rej=doom)
    trans = rng.dirichlet(np.ones(n_states), size=(n_states, n_inputs))
    labels = tuple(
        frozenset(p for p in ap if rng.random() < 0.5) for _ in range(n_states))
    mdp = FiniteMdp(trans=trans, labels=labels,
                    inputs=np.arange(n_inputs, dtype=float).reshape(-1, 1))
    return mdp, dfa, n_live


def save_value_table(path, table: ValueTable) -> None:
    """CSV export with rows k,cell,q,value,greedy_input."""
    with open(path, "w", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["k", "cell", "q", "value", "greedy_input"])
        horizon, n_s, n_q = table.v.shape
        for k in range(horizon):
            for s in range(n_s):
                for q in range(n_q):
                    writer.writerow([k, s, q, repr(float(table.v[k, s, q])),
                                     int(table.greedy[k, s, q])])
