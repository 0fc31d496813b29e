"""Brute-force actual-cause checking on small propositional HP models.

The event being explained is the violation, so "the outcome flips" means the
property becomes satisfied.  IO nodes depend only on the exogenous component
node, never on each other, which keeps the AC2 search tractable:

* with ``contingency="free"`` (the definition as stated: contingency nodes
  ``u1`` may take any counterfactual values), AC2 holds for a node set ``U``
  iff some valid assignment ``w`` satisfies the property while ``w`` with
  ``U`` restored to factual values is valid and still violates it.  Nodes of
  ``u2`` are not intervened on, so restoring any subset of them to factual
  values is a no-op.
* with ``contingency="factual"`` (contingencies frozen at their actual
  values), AC2 holds iff some valid assignment differing from the factual one
  only inside ``U`` satisfies the property.

Invalid (non-thermometer) assignments are not admissible interventions.
"""
from __future__ import annotations

import itertools
import json
import logging
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .core import Behavior
from .hp_model import DiffSet, HPModel, NodeAssignment, NodeId, all_assignments, decode

DEFAULT_BUDGET = 10 ** 6

log = logging.getLogger(__name__)


class EnumerationBudgetError(RuntimeError):
    """The model has more valid assignments than the enumeration budget allows."""


@dataclass(frozen=True)
class CandidateCause:
    nodes: DiffSet
    factual_values: tuple[bool, ...]
    counterfactual_values: tuple[bool, ...]

    def __post_init__(self):
        if not self.nodes:
            raise ValueError("a candidate cause needs at least one node")
        if len(self.factual_values) != len(self.nodes) or \
                len(self.counterfactual_values) != len(self.nodes):
            raise ValueError("one factual and one counterfactual value per node")
        if any(a == b for a, b in zip(self.factual_values, self.counterfactual_values)):
            raise ValueError("counterfactual values must differ on every node")

    @classmethod
    def between(cls, v: NodeAssignment, w: NodeAssignment, nodes: Iterable[NodeId]) -> CandidateCause:
        ordered = tuple(sorted(nodes))
        return cls(frozenset(ordered), tuple(v.value(n) for n in ordered),
                   tuple(w.value(n) for n in ordered))

    def to_dict(self) -> dict:
        ordered = sorted(self.nodes)
        return {"nodes": [list(n) for n in ordered],
                "factual": list(self.factual_values),
                "counterfactual": list(self.counterfactual_values)}


class CausalOracle:
    """Enumerates every valid assignment once and memoises its verdict."""

    def __init__(self, model: HPModel, sim: Callable[[Behavior], bool], v: NodeAssignment,
                 budget: int = DEFAULT_BUDGET):
        if model.valid_assignment_count > budget:
            raise EnumerationBudgetError(
                f"{model.valid_assignment_count} assignments exceed the budget of {budget}")
        self.model = model
        self.v = v
        self.bits_v = v.bits()
        self.assignments = list(all_assignments(model))
        self.bits = np.array([a.bits() for a in self.assignments], dtype=bool)
        self.verdicts = np.array([bool(sim(decode(a, model))) for a in self.assignments])
        self._index = {a.levels.tobytes(): n for n, a in enumerate(self.assignments)}
        self.offsets = {node: model.node_offset(node) for node in model.io_nodes()}

    def verdict_of_bits(self, bits: np.ndarray) -> bool | None:
        """Verdict of an arbitrary bit vector, or ``None`` if it is not a valid code."""
        try:
            a = NodeAssignment.from_bits(self.model, bits)
        except ValueError:
            return None
        return bool(self.verdicts[self._index[a.levels.tobytes()]])

    def ac1(self) -> bool:
        return not self.verdicts[self._index[self.v.levels.tobytes()]]

    def ac2(self, nodes: Iterable[NodeId], contingency: str = "free") -> bool:
        cols = [self.offsets[n] for n in nodes]
        if not cols:
            return False
        outside = np.ones(self.bits.shape[1], dtype=bool)
        outside[cols] = False
        for n in np.nonzero(self.verdicts)[0]:
            w = self.bits[n]
            if contingency == "factual":
                if np.array_equal(w[outside], self.bits_v[outside]):
                    return True
                continue
            restored = w.copy()
            restored[cols] = self.bits_v[cols]
            if self.verdict_of_bits(restored) is False:
                return True
        return False

    def check(self, nodes: Iterable[NodeId], contingency: str = "free") -> tuple[bool, bool, bool]:
        nodes = tuple(sorted(nodes))
        ac1 = self.ac1()
        ac2 = self.ac2(nodes, contingency)
        # AC1 holds for every subset whenever it holds for the whole set.
        ac3 = not (ac1 and any(
            self.ac2(sub, contingency)
            for r in range(1, len(nodes))
            for sub in itertools.combinations(nodes, r)))
        return ac1, ac2, ac3


def check_ac(candidate: CandidateCause, model: HPModel, sim: Callable[[Behavior], bool],
             v: NodeAssignment, contingency: str = "free",
             budget: int = DEFAULT_BUDGET) -> tuple[bool, bool, bool]:
    """``(ac1, ac2, ac3)`` for ``candidate`` as a cause of the violation under ``v``."""
    if contingency not in ("free", "factual"):
        raise ValueError(f"unknown contingency reading {contingency!r}")
    oracle = CausalOracle(model, sim, v, budget)
    ac1, ac2, ac3 = oracle.check(candidate.nodes, contingency)
    matches = all(v.value(n) == val for n, val in zip(sorted(candidate.nodes),
                                                       candidate.factual_values))
    return ac1 and matches, ac2, ac3


def audit_cause(result, sim: Callable[[Behavior], bool], contingency: str = "free",
                budget: int = DEFAULT_BUDGET) -> tuple[bool, bool, bool]:
    """``check_ac`` on a search result's cause, logging a warning when AC3 fails."""
    v = result.factual
    cand = CandidateCause.between(v, result.counterfactual_minimal, result.cause)
    out = check_ac(cand, v.model, sim, v, contingency, budget)
    if out[0] and out[1] and not out[2]:
        log.warning("search cause of %d nodes on model %s is not minimal under %s "
                    "contingencies", len(result.cause), v.model.hash, contingency)
    return out


def enumerate_minimal_causes(model: HPModel, sim: Callable[[Behavior], bool], v: NodeAssignment,
                             contingency: str = "free",
                             budget: int = DEFAULT_BUDGET) -> list[CandidateCause]:
    """All subset-minimal node sets satisfying AC1 and AC2, smallest first.

    Each cause carries the counterfactual values of the first witness found in
    enumeration order.  Nodes that are constant over all valid assignments
    (bin 0 of every block) can never differ and are skipped.
    """
    oracle = CausalOracle(model, sim, v, budget)
    if not oracle.ac1():
        return []
    varying = [n for n in model.io_nodes() if n[2] > 0]
    found: list[frozenset] = []
    out = []
    for r in range(1, len(varying) + 1):
        for sub in itertools.combinations(varying, r):
            s = frozenset(sub)
            if any(f <= s for f in found):
                continue
            if oracle.ac2(sub, contingency):
                found.append(s)
                out.append(CandidateCause.between(v, _witness(oracle, sub, contingency), sub))
    return out


def _witness(oracle: CausalOracle, nodes: Sequence[NodeId], contingency: str) -> NodeAssignment:
    cols = [oracle.offsets[n] for n in nodes]
    for n in np.nonzero(oracle.verdicts)[0]:
        w = oracle.bits[n]
        if np.any(w[cols] == oracle.bits_v[cols]):
            continue
        restored = w.copy()
        restored[cols] = oracle.bits_v[cols]
        if contingency == "factual":
            if np.array_equal(restored, oracle.bits_v):
                return oracle.assignments[n]
        elif oracle.verdict_of_bits(restored) is False:
            return oracle.assignments[n]
    raise AssertionError("minimal cause without a fully differing witness")


def causes_to_json(causes: Sequence[CandidateCause], model: HPModel) -> str:
    return json.dumps({model.hash: [c.to_dict() for c in causes]}, indent=1, sort_keys=True)


@dataclass
class ToyModel:
    """A small model whose verdict is an arbitrary table over cell maps."""

    model: HPModel
    sim: Callable[[Behavior], bool]
    factual: NodeAssignment
    table: dict[tuple[int, ...], bool]


def random_toy_model(seed: int, m: int = 2, n: int = 2) -> ToyModel:
    """``m`` input cells, one output dimension with ``n`` bins, random verdict table.

    The table is redrawn (from the same generator) until at least one map
    satisfies and at least one violates; the factual map is a uniformly drawn
    violating one.
    """
    from .core import BoxSpace, GridPartition
    from .simulation import CellMapSimulator

    rng = np.random.default_rng(seed)
    maps = list(itertools.product(range(n), repeat=m))
    while True:
        verdicts = rng.random(len(maps)) < 0.5
        if verdicts.any() and not verdicts.all():
            break
    table = {cm: bool(ok) for cm, ok in zip(maps, verdicts)}
    bad = [cm for cm in maps if not table[cm]]
    factual = bad[int(rng.integers(len(bad)))]
    model = HPModel(GridPartition(BoxSpace((0.0,), (float(m),)), (1.0,)),
                    GridPartition(BoxSpace((0.0,), (float(n),)), (1.0,)))
    sim = CellMapSimulator(lambda cm: table[tuple(cm)])
    return ToyModel(model, sim, NodeAssignment(model, np.array(factual)[:, None]), table)
