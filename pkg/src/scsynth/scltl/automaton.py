"""Compilation of co-safe LTL formulas into DFAs over letters 2^AP.

States are canonical sum-of-products normal forms of the formula rewritten by
letter derivatives: consuming a letter maps each node to what must hold of the
rest of the word (atoms resolve to true/false, X peels one step, U unfolds one
step).  The canonical form flattens nested and/or, drops contradictory and
absorbed products, and treats X/U subformulas as opaque obligations, so the
reachable state set is finite.  The normal form `true` is the unique accepting
state (absorbing: a good prefix stays good); `false` is the rejecting sink.

Letters are bit-sets over the ordered proposition tuple: bit i set means
proposition ap[i] holds.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .formula import (
    And,
    Atom,
    FalseF,
    Formula,
    NegAtom,
    Next,
    Or,
    ScltlError,
    TrueF,
    Until,
    atoms_of,
)

MAX_AP = 16

# A canonical form is a frozenset of products; a product is a frozenset of
# obligation terms (Atom / NegAtom / Next / Until nodes).  The empty product is
# `true`; the empty sum is `false`.
_TRUE = frozenset({frozenset()})
_FALSE = frozenset()


def _absorb(products) -> frozenset:
    """Drop products that are supersets of another product (absorption)."""
    kept = []
    for p in sorted(products, key=len):
        if not any(q <= p for q in kept):
            kept.append(p)
    return frozenset(kept)


def _or_canon(a: frozenset, b: frozenset) -> frozenset:
    return _absorb(a | b)


def _contradictory(product: frozenset) -> bool:
    names = {t.name for t in product if isinstance(t, Atom)}
    return any(isinstance(t, NegAtom) and t.name in names for t in product)


def _and_canon(a: frozenset, b: frozenset) -> frozenset:
    out = set()
    for pa in a:
        for pb in b:
            p = pa | pb
            if not _contradictory(p):
                out.add(p)
    return _absorb(out)


def canonical(f: Formula) -> frozenset:
    """Canonical sum-of-products form with X/U/literal nodes as terms."""
    if isinstance(f, TrueF):
        return _TRUE
    if isinstance(f, FalseF):
        return _FALSE
    if isinstance(f, (Atom, NegAtom, Next, Until)):
        return frozenset({frozenset({f})})
    if isinstance(f, And):
        return _and_canon(canonical(f.left), canonical(f.right))
    if isinstance(f, Or):
        return _or_canon(canonical(f.left), canonical(f.right))
    raise TypeError(f"not a formula node: {f!r}")


def _derive_term(term: Formula, letter: int, bit: dict) -> frozenset:
    """Canonical form of a single obligation after consuming `letter`."""
    if isinstance(term, Atom):
        return _TRUE if letter & bit[term.name] else _FALSE
    if isinstance(term, NegAtom):
        return _FALSE if letter & bit[term.name] else _TRUE
    if isinstance(term, Next):
        return canonical(term.sub)
    if isinstance(term, Until):
        keep = _and_canon(_derive_canon(canonical(term.left), letter, bit),
                          frozenset({frozenset({term})}))
        return _or_canon(_derive_canon(canonical(term.right), letter, bit), keep)
    raise TypeError(f"not an obligation term: {term!r}")


def _derive_canon(state: frozenset, letter: int, bit: dict) -> frozenset:
    out = _FALSE
    for product in state:
        acc = _TRUE
        for term in product:
            acc = _and_canon(acc, _derive_term(term, letter, bit))
            if acc == _FALSE:
                break
        out = _or_canon(out, acc)
    return out


@dataclass
class Dfa:
    """Deterministic co-safety automaton.

    trans[q, letter] is the successor state; q_acc is the unique accepting
    state (absorbing); q_rej is the rejecting sink or None if unreachable.
    dist[q] counts the fewest letters from q to q_acc; states that cannot
    reach q_acc carry dist d_max = 1 + max finite distance.
    """

    ap: tuple[str, ...]
    trans: np.ndarray
    q0: int
    q_acc: int
    q_rej: int | None
    dist: np.ndarray
    d_max: int
    state_labels: list[str] = field(default_factory=list)

    @property
    def n_states(self) -> int:
        return self.trans.shape[0]

    @property
    def n_letters(self) -> int:
        return self.trans.shape[1]

    def letter(self, props) -> int:
        """Bit-set letter for a collection of proposition names."""
        out = 0
        for p in props:
            out |= 1 << self.ap.index(p)
        return out


def _distances(trans: np.ndarray, q_acc: int) -> tuple[np.ndarray, int]:
    n = trans.shape[0]
    dist = np.full(n, -1, dtype=np.int64)
    dist[q_acc] = 0
    preds = [[] for _ in range(n)]
    for q in range(n):
        for target in set(trans[q].tolist()):
            preds[target].append(q)
    queue = deque([q_acc])
    while queue:
        q = queue.popleft()
        for p in preds[q]:
            if dist[p] < 0:
                dist[p] = dist[q] + 1
                queue.append(p)
    d_max = 1 + int(dist.max())
    dist[dist < 0] = d_max
    return dist, d_max


def _product_label(product: frozenset) -> str:
    if not product:
        return "true"
    return " & ".join(sorted(str(t) for t in product))


def _state_label(state: frozenset) -> str:
    if state == _TRUE:
        return "true"
    if state == _FALSE:
        return "false"
    return " | ".join(sorted(_product_label(p) for p in state))


def compile_formula(f: Formula, ap: tuple[str, ...] | list[str],
                    minimize: bool = False) -> Dfa:
    """Compile a parsed co-safe formula into a DFA over 2^ap.

    The construction is deterministic: states are indexed in breadth-first
    discovery order with letters scanned in increasing bit-set order, so
    compiling the same formula twice yields identical automata.
    """
    ap = tuple(ap)
    if len(ap) > MAX_AP:
        raise ScltlError(f"alphabet 2^{len(ap)} exceeds the {MAX_AP}-proposition cap")
    missing = atoms_of(f) - set(ap)
    if missing:
        raise ScltlError(f"formula uses propositions not in ap: {sorted(missing)}")
    bit = {p: 1 << i for i, p in enumerate(ap)}
    n_letters = 1 << len(ap)

    start = canonical(f)
    index: dict[frozenset, int] = {start: 0}
    states = [start]
    rows = []
    queue = deque([start])
    while queue:
        state = queue.popleft()
        row = []
        for letter in range(n_letters):
            succ = _derive_canon(state, letter, bit)
            if succ not in index:
                index[succ] = len(states)
                states.append(succ)
                queue.append(succ)
            row.append(index[succ])
        rows.append(row)
    if _TRUE not in index:
        # unreachable accepting state still materialized: it anchors distances
        index[_TRUE] = len(states)
        states.append(_TRUE)
        rows.append([index[_TRUE]] * n_letters)

    trans = np.array(rows, dtype=np.int64)
    q_acc = index[_TRUE]
    q_rej = index.get(_FALSE)
    dist, d_max = _distances(trans, q_acc)
    dfa = Dfa(ap=ap, trans=trans, q0=0, q_acc=q_acc, q_rej=q_rej,
              dist=dist, d_max=d_max,
              state_labels=[_state_label(s) for s in states])
    if minimize:
        dfa = _minimize(dfa)
    return dfa


def make_dfa(ap, trans, q0: int, q_acc: int, q_rej: int | None = None) -> Dfa:
    """Build a Dfa from an explicit transition table (tests, random instances).

    Validates totality and that q_acc is absorbing.
    """
    trans = np.asarray(trans, dtype=np.int64)
    n, m = trans.shape
    if m != 1 << len(tuple(ap)):
        raise ScltlError(f"transition table has {m} letters for {len(ap)} propositions")
    if trans.min() < 0 or trans.max() >= n:
        raise ScltlError("transition table targets out of range")
    if not np.all(trans[q_acc] == q_acc):
        raise ScltlError("accepting state must be absorbing")
    if q_rej is not None and not np.all(trans[q_rej] == q_rej):
        raise ScltlError("rejecting sink must be absorbing")
    dist, d_max = _distances(trans, q_acc)
    return Dfa(ap=tuple(ap), trans=trans, q0=q0, q_acc=q_acc, q_rej=q_rej,
               dist=dist, d_max=d_max,
               state_labels=[f"q{i}" for i in range(n)])


def dfa_step(dfa: Dfa, q: int, letter: int) -> int:
    return int(dfa.trans[q, letter])


def word_accepted(dfa: Dfa, word) -> bool:
    """True iff the finite letter word drives the DFA into the accepting state.

    Acceptance is prefix-closed upward: the accepting state is absorbing, so
    any extension of an accepted word stays accepted.
    """
    q = dfa.q0
    for letter in word:
        q = int(dfa.trans[q, letter])
    return q == dfa.q_acc


def _minimize(dfa: Dfa) -> Dfa:
    """Moore partition refinement; recomputes indices, distances and labels."""
    n, m = dfa.trans.shape
    block = np.where(np.arange(n) == dfa.q_acc, 1, 0)
    while True:
        keys = {}
        new_block = np.empty(n, dtype=np.int64)
        for q in range(n):
            sig = (int(block[q]), tuple(int(block[dfa.trans[q, a]]) for a in range(m)))
            if sig not in keys:
                keys[sig] = len(keys)
            new_block[q] = keys[sig]
        # refinement only splits blocks; equal counts means a fixed point
        if len(keys) == len(set(block.tolist())):
            break
        block = new_block

    # reindex blocks in BFS order from the initial block for determinism
    order = []
    seen = set()
    queue = deque([int(block[dfa.q0])])
    while queue:
        b = queue.popleft()
        if b in seen:
            continue
        seen.add(b)
        order.append(b)
        rep = int(np.nonzero(block == b)[0][0])
        for a in range(m):
            queue.append(int(block[dfa.trans[rep, a]]))
    for b in set(block.tolist()) - seen:  # unreachable blocks, e.g. a detached q_acc
        order.append(b)
    remap = {b: i for i, b in enumerate(order)}
    k = len(order)
    trans = np.empty((k, m), dtype=np.int64)
    for b in order:
        rep = int(np.nonzero(block == b)[0][0])
        trans[remap[b]] = [remap[int(block[dfa.trans[rep, a]])] for a in range(m)]
    q_acc = remap[int(block[dfa.q_acc])]
    q_rej = remap[int(block[dfa.q_rej])] if dfa.q_rej is not None else None
    dist, d_max = _distances(trans, q_acc)
    return Dfa(ap=dfa.ap, trans=trans, q0=remap[int(block[dfa.q0])],
               q_acc=q_acc, q_rej=q_rej, dist=dist, d_max=d_max,
               state_labels=[f"q{i}" for i in range(k)])


def _letter_str(letter: int, ap: tuple[str, ...]) -> str:
    props = [p for i, p in enumerate(ap) if letter & (1 << i)]
    return "{" + ",".join(props) + "}"


def to_dot(dfa: Dfa) -> str:
    """GraphViz rendering: nodes `q{i} [d=<dist>]`, accepting double-circled."""
    lines = ["digraph scltl {", "  rankdir=LR;"]
    for q in range(dfa.n_states):
        shape = "doublecircle" if q == dfa.q_acc else "circle"
        lines.append(
            f'  q{q} [shape={shape}, label="q{q} [d={int(dfa.dist[q])}]"];'
        )
    lines.append(f"  init [shape=point]; init -> q{dfa.q0};")
    for q in range(dfa.n_states):
        by_target: dict[int, list[str]] = {}
        for letter in range(dfa.n_letters):
            by_target.setdefault(int(dfa.trans[q, letter]), []).append(
                _letter_str(letter, dfa.ap))
        for target in sorted(by_target):
            label = ", ".join(by_target[target])
            lines.append(f'  q{q} -> q{target} [label="{label}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"
