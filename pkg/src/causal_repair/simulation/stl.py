"""Bounded signal temporal logic with boolean semantics over discrete traces.

Traces are finite; a formula that looks past the end of a trace sees the last
state repeated forever.  Evaluation is exact under that padding rule: with the
final state constant, every subformula is constant on the padded tail, so
clamping window indices to the last sample gives the same answer as an
infinitely padded trace.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Mapping, Sequence, Union

import numpy as np


@dataclass(frozen=True)
class Predicate:
    """``sum(coeffs[name] * state[name]) <op> bound`` with ``op`` one of >=, >, <=, <."""

    coeffs: tuple[tuple[str, float], ...]
    op: str
    bound: float

    def __post_init__(self):
        if self.op not in (">=", ">", "<=", "<"):
            raise ValueError(f"unsupported comparison {self.op!r}")

    def signal(self, trace: np.ndarray, names: Sequence[str]) -> np.ndarray:
        lhs = np.zeros(len(trace))
        for name, c in self.coeffs:
            lhs = lhs + c * trace[:, names.index(name)]
        if self.op == ">=":
            return lhs >= self.bound
        if self.op == ">":
            return lhs > self.bound
        if self.op == "<=":
            return lhs <= self.bound
        return lhs < self.bound

    def holds(self, state: Sequence[float], names: Sequence[str]) -> bool:
        return bool(self.signal(np.asarray([state], dtype=float), names)[0])

    def horizon(self) -> int:
        return 0


@dataclass(frozen=True)
class Not:
    child: "Formula"

    def horizon(self):
        return self.child.horizon()


@dataclass(frozen=True)
class And:
    children: tuple["Formula", ...]

    def horizon(self):
        return max(c.horizon() for c in self.children)


@dataclass(frozen=True)
class Or:
    children: tuple["Formula", ...]

    def horizon(self):
        return max(c.horizon() for c in self.children)


@dataclass(frozen=True)
class Eventually:
    t1: int
    t2: int
    child: "Formula"

    def __post_init__(self):
        if not 0 <= self.t1 <= self.t2:
            raise ValueError(f"bad interval [{self.t1}, {self.t2}]")

    def horizon(self):
        return self.t2 + self.child.horizon()


@dataclass(frozen=True)
class Always:
    t1: int
    t2: int
    child: "Formula"

    def __post_init__(self):
        if not 0 <= self.t1 <= self.t2:
            raise ValueError(f"bad interval [{self.t1}, {self.t2}]")

    def horizon(self):
        return self.t2 + self.child.horizon()


Formula = Union[Predicate, Not, And, Or, Eventually, Always]


def _window(sig: np.ndarray, t1: int, t2: int, reduce) -> np.ndarray:
    n = len(sig)
    idx = np.minimum(np.arange(n)[:, None] + np.arange(t1, t2 + 1)[None, :], n - 1)
    return reduce(sig[idx], axis=1)


def signal(phi: Formula, trace: np.ndarray, names: Sequence[str]) -> np.ndarray:
    """Truth value of ``phi`` at every time step of ``trace``."""
    if isinstance(phi, Predicate):
        return phi.signal(trace, names)
    if isinstance(phi, Not):
        return ~signal(phi.child, trace, names)
    if isinstance(phi, And):
        return np.logical_and.reduce([signal(c, trace, names) for c in phi.children])
    if isinstance(phi, Or):
        return np.logical_or.reduce([signal(c, trace, names) for c in phi.children])
    if isinstance(phi, Eventually):
        return _window(signal(phi.child, trace, names), phi.t1, phi.t2, np.any)
    if isinstance(phi, Always):
        return _window(signal(phi.child, trace, names), phi.t1, phi.t2, np.all)
    raise TypeError(f"not an STL formula: {phi!r}")


def stl_eval(phi: Formula, trace, names: Sequence[str] = ("x",)) -> bool:
    """Boolean satisfaction of ``phi`` at time 0.

    ``trace`` is a sequence of states (or an ``(T, dims)`` array); ``names``
    labels the state dimensions referenced by predicates.
    """
    arr = np.asarray(trace, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if len(arr) == 0:
        raise ValueError("empty trace")
    return bool(signal(phi, arr, list(names))[0])


# -- prefix syntax -------------------------------------------------------------

_TOKEN = re.compile(r"\(|\)|[^\s()]+")


def _tokens(text: str) -> list[str]:
    return _TOKEN.findall(text)


def _read(tokens: list[str], pos: int):
    if pos >= len(tokens):
        raise ValueError("unexpected end of formula")
    tok = tokens[pos]
    if tok == "(":
        items = []
        pos += 1
        while pos < len(tokens) and tokens[pos] != ")":
            item, pos = _read(tokens, pos)
            items.append(item)
        if pos >= len(tokens):
            raise ValueError("unbalanced parentheses")
        return items, pos + 1
    if tok == ")":
        raise ValueError("unexpected ')'")
    return tok, pos + 1


def _linear(expr) -> dict[str, float]:
    if isinstance(expr, str):
        return {expr: 1.0}
    head, *rest = expr
    if head == "*" and len(rest) == 2:
        return {rest[1]: float(rest[0])}
    if head == "+":
        out: dict[str, float] = {}
        for term in rest:
            for k, v in _linear(term).items():
                out[k] = out.get(k, 0.0) + v
        return out
    raise ValueError(f"not a linear term: {expr!r}")


def _build(expr) -> Formula:
    if isinstance(expr, str) or not expr:
        raise ValueError(f"expected a parenthesised formula, got {expr!r}")
    head, *rest = expr
    if head in (">=", ">", "<=", "<"):
        lhs, rhs = rest
        return Predicate(tuple(sorted(_linear(lhs).items())), head, float(rhs))
    if head == "not":
        return Not(_build(rest[0]))
    if head == "and":
        return And(tuple(_build(r) for r in rest))
    if head == "or":
        return Or(tuple(_build(r) for r in rest))
    if head in ("F", "G"):
        t1, t2, child = rest
        cls = Eventually if head == "F" else Always
        return cls(int(t1), int(t2), _build(child))
    raise ValueError(f"unknown operator {head!r}")


def parse_formula(text: str) -> Formula:
    """Parse e.g. ``(F 0 110 (>= pos 0.45))``.

    Grammar: ``(>= lin c)``, ``(> lin c)``, ``(<= lin c)``, ``(< lin c)``,
    ``(not f)``, ``(and f ...)``, ``(or f ...)``, ``(F a b f)``, ``(G a b f)``
    where ``lin`` is a state name, ``(* c name)`` or ``(+ lin ...)``.
    """
    tokens = _tokens(text)
    expr, pos = _read(tokens, 0)
    if pos != len(tokens):
        raise ValueError("trailing tokens after formula")
    return _build(expr)


def format_formula(phi: Formula) -> str:
    if isinstance(phi, Predicate):
        terms = [name if c == 1.0 else f"(* {c!r} {name})" for name, c in phi.coeffs]
        lhs = terms[0] if len(terms) == 1 else "(+ " + " ".join(terms) + ")"
        return f"({phi.op} {lhs} {phi.bound!r})"
    if isinstance(phi, Not):
        return f"(not {format_formula(phi.child)})"
    if isinstance(phi, (And, Or)):
        op = "and" if isinstance(phi, And) else "or"
        return f"({op} " + " ".join(format_formula(c) for c in phi.children) + ")"
    op = "F" if isinstance(phi, Eventually) else "G"
    return f"({op} {phi.t1} {phi.t2} {format_formula(phi.child)})"


def variables(phi: Formula) -> set[str]:
    if isinstance(phi, Predicate):
        return {name for name, _ in phi.coeffs}
    if isinstance(phi, (And, Or)):
        return set().union(*(variables(c) for c in phi.children))
    return variables(phi.child)


def state_dict(names: Sequence[str], state: Sequence[float]) -> Mapping[str, float]:
    return dict(zip(names, state))
