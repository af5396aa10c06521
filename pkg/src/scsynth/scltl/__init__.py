"""Co-safe LTL formulas and their deterministic automata."""

from .automaton import (
    Dfa,
    compile_formula,
    dfa_step,
    make_dfa,
    to_dot,
    word_accepted,
)
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
    parse,
)

__all__ = [
    "And", "Atom", "Dfa", "FalseF", "Formula", "NegAtom", "Next", "Or",
    "ScltlError", "TrueF", "Until", "atoms_of", "compile_formula", "dfa_step",
    "make_dfa", "parse", "to_dot", "word_accepted",
]
