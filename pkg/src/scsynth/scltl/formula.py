"""Syntactically co-safe LTL formulas: AST and parser.

Grammar (negation is only allowed on atomic propositions):

    phi ::= true | false | p | !p | phi & phi | phi | phi  (or)
          | X phi | phi U phi

Surface sugar expanded at parse time:

    G[0,k] phi  ->  phi & X phi & ... & X^k phi
    F[0,k] phi  ->  phi | X phi | ... | X^k phi
    X^k phi     ->  X applied k times

Precedence: {!, X, G[0,k], F[0,k], X^k} bind tightest, then &, then |,
then U (right-associative).
"""

from __future__ import annotations

import re
from dataclasses import dataclass


class ScltlError(ValueError):
    """Raised for malformed formulas (syntax, unknown atoms, bad negation)."""


@dataclass(frozen=True)
class Formula:
    def __str__(self):
        return _to_str(self)


@dataclass(frozen=True)
class TrueF(Formula):
    pass


@dataclass(frozen=True)
class FalseF(Formula):
    pass


@dataclass(frozen=True)
class Atom(Formula):
    name: str


@dataclass(frozen=True)
class NegAtom(Formula):
    name: str


@dataclass(frozen=True)
class And(Formula):
    left: Formula
    right: Formula


@dataclass(frozen=True)
class Or(Formula):
    left: Formula
    right: Formula


@dataclass(frozen=True)
class Next(Formula):
    sub: Formula


@dataclass(frozen=True)
class Until(Formula):
    left: Formula
    right: Formula


def _to_str(f: Formula) -> str:
    if isinstance(f, TrueF):
        return "true"
    if isinstance(f, FalseF):
        return "false"
    if isinstance(f, Atom):
        return f.name
    if isinstance(f, NegAtom):
        return "!" + f.name
    if isinstance(f, And):
        return f"({_to_str(f.left)} & {_to_str(f.right)})"
    if isinstance(f, Or):
        return f"({_to_str(f.left)} | {_to_str(f.right)})"
    if isinstance(f, Next):
        return f"X {_to_str(f.sub)}"
    if isinstance(f, Until):
        return f"({_to_str(f.left)} U {_to_str(f.right)})"
    raise TypeError(f"not a formula node: {f!r}")


def atoms_of(f: Formula) -> set[str]:
    """Set of proposition names appearing in a formula."""
    if isinstance(f, (Atom, NegAtom)):
        return {f.name}
    if isinstance(f, (And, Or, Until)):
        return atoms_of(f.left) | atoms_of(f.right)
    if isinstance(f, Next):
        return atoms_of(f.sub)
    return set()


_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<lbrack>\[) | (?P<rbrack>\]) | (?P<comma>,)
  | (?P<lparen>\() | (?P<rparen>\))
  | (?P<amp>&) | (?P<bar>\|) | (?P<bang>!) | (?P<caret>\^)
  | (?P<int>\d+)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
    """,
    re.VERBOSE,
)

_KEYWORDS = {"true", "false", "X", "U", "G", "F"}


def _tokenize(text: str):
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ScltlError(f"unexpected character {text[pos]!r} at position {pos}")
        pos = m.end()
        kind = m.lastgroup
        if kind == "ws":
            continue
        tokens.append((kind, m.group(), m.start()))
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str, ap: tuple[str, ...]):
        self.text = text
        self.ap = ap
        self.toks = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.toks[self.i]

    def next(self):
        t = self.toks[self.i]
        self.i += 1
        return t

    def expect(self, kind, what):
        t = self.next()
        if t[0] != kind:
            raise ScltlError(f"expected {what} at position {t[2]}, got {t[1]!r}")
        return t

    def fail(self, msg):
        t = self.peek()
        raise ScltlError(f"{msg} at position {t[2]}")

    # until := or ('U' until)?   right-associative
    def parse_until(self) -> Formula:
        left = self.parse_or()
        kind, val, _ = self.peek()
        if kind == "ident" and val == "U":
            self.next()
            return Until(left, self.parse_until())
        return left

    def parse_or(self) -> Formula:
        f = self.parse_and()
        while self.peek()[0] == "bar":
            self.next()
            f = Or(f, self.parse_and())
        return f

    def parse_and(self) -> Formula:
        f = self.parse_unary()
        while self.peek()[0] == "amp":
            self.next()
            f = And(f, self.parse_unary())
        return f

    def parse_unary(self) -> Formula:
        kind, val, pos = self.peek()
        if kind == "bang":
            self.next()
            sub = self.parse_unary()
            if not isinstance(sub, Atom):
                raise ScltlError(
                    f"negation at position {pos} must apply to an atomic proposition"
                )
            return NegAtom(sub.name)
        if kind == "ident" and val == "X":
            self.next()
            if self.peek()[0] == "caret":
                self.next()
                k = int(self.expect("int", "an exponent")[1])
                sub = self.parse_unary()
                for _ in range(k):
                    sub = Next(sub)
                return sub
            return Next(self.parse_unary())
        if kind == "ident" and val in ("G", "F"):
            self.next()
            lo, hi = self._parse_bounds(val, pos)
            sub = self.parse_unary()
            return _expand_bounded(val, hi, sub)
        return self.parse_primary()

    def _parse_bounds(self, op, pos):
        self.expect("lbrack", f"'[' after {op}")
        lo = int(self.expect("int", "a lower bound")[1])
        self.expect("comma", "','")
        hi = int(self.expect("int", "an upper bound")[1])
        self.expect("rbrack", "']'")
        if lo != 0:
            raise ScltlError(f"{op} bound at position {pos} must start at 0")
        if hi < lo:
            raise ScltlError(f"{op} bound at position {pos} is empty")
        return lo, hi

    def parse_primary(self) -> Formula:
        kind, val, pos = self.next()
        if kind == "lparen":
            f = self.parse_until()
            t = self.next()
            if t[0] != "rparen":
                raise ScltlError(f"expected ')' at position {t[2]}")
            return f
        if kind == "ident":
            if val == "true":
                return TrueF()
            if val == "false":
                return FalseF()
            if val in _KEYWORDS:
                raise ScltlError(f"misplaced {val!r} at position {pos}")
            if val not in self.ap:
                raise ScltlError(f"unknown proposition {val!r} at position {pos}")
            return Atom(val)
        raise ScltlError(f"unexpected token {val!r} at position {pos}")


def _expand_bounded(op: str, hi: int, sub: Formula) -> Formula:
    """G[0,k]/F[0,k] as a right-folded chain sub op (X sub op (... X^k sub))."""
    node = And if op == "G" else Or
    terms = []
    for i in range(hi + 1):
        g = sub
        for _ in range(i):
            g = Next(g)
        terms.append(g)
    out = terms[-1]
    for t in reversed(terms[:-1]):
        out = node(t, out)
    return out


def parse(text: str, ap: tuple[str, ...] | list[str]) -> Formula:
    """Parse a co-safe LTL formula over the ordered proposition tuple `ap`."""
    ap = tuple(ap)
    if len(set(ap)) != len(ap):
        raise ScltlError(f"duplicate propositions in {ap!r}")
    p = _Parser(text, ap)
    f = p.parse_until()
    t = p.peek()
    if t[0] != "end":
        raise ScltlError(f"trailing input at position {t[2]}: {t[1]!r}")
    return f
