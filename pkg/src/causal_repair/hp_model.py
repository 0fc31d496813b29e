"""Propositional HP model over a representative behavior space.

Node ``(i, j, k)`` holds iff the output chosen for input cell ``i`` lies in
output bin ``k`` or above along output dimension ``j``.  Within each ``(i, j)``
block a valid assignment is a thermometer code ``1...10...0``; ``k = 0`` is
always true because bin 0 starts at the box's lower bound.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Callable, FrozenSet, Iterator

import numpy as np

from .core import Behavior, GridPartition, RepresentativeBehavior

NodeId = tuple[int, int, int]
DiffSet = FrozenSet[NodeId]


class EncodingError(ValueError):
    """Bits that are not a valid thermometer code, or grids that do not match."""


@dataclass(frozen=True, eq=False)
class HPModel:
    input_grid: GridPartition
    output_grid: GridPartition
    sim: Callable[[Behavior], bool] | None = field(default=None, repr=False)

    @property
    def m(self) -> int:
        return self.input_grid.size

    @property
    def d(self) -> int:
        return self.output_grid.dims

    @property
    def bins(self) -> tuple[int, ...]:
        """``n_j`` for every output dimension."""
        return self.output_grid.counts

    @property
    def n(self) -> int:
        return self.output_grid.size

    @property
    def io_node_count(self) -> int:
        return self.m * sum(self.bins)

    @property
    def node_count(self) -> int:
        """IO nodes plus the exogenous component node and the property node."""
        return self.io_node_count + 2

    @property
    def valid_assignment_count(self) -> int:
        return self.n ** self.m

    @property
    def log10_valid_assignments(self) -> float:
        return self.m * math.log10(self.n)

    def bin_lower_bounds(self) -> list[list[float]]:
        """``lo(bin(j, k))`` for every output dimension ``j`` and bin ``k``."""
        sp = self.output_grid.space
        return [[sp.lower[j] + k * self.output_grid.widths[j] for k in range(nj)]
                for j, nj in enumerate(self.bins)]

    def io_nodes(self) -> Iterator[NodeId]:
        """All IO nodes in the ``i``, then ``j``, then ``k`` loop order."""
        for i in range(self.m):
            for j, nj in enumerate(self.bins):
                for k in range(nj):
                    yield (i, j, k)

    def node_offset(self, node: NodeId) -> int:
        i, j, k = node
        return i * sum(self.bins) + sum(self.bins[:j]) + k

    @property
    def hash(self) -> str:
        payload = json.dumps({"in": self.input_grid.to_dict(), "out": self.output_grid.to_dict()},
                             sort_keys=True)
        return hashlib.sha256(payload.encode()).hexdigest()[:16]

    def same_grids(self, other: HPModel) -> bool:
        return self.input_grid == other.input_grid and self.output_grid == other.output_grid

    def summary(self) -> dict:
        return {
            "schema": "causal-repair/model-summary/1",
            "model_hash": self.hash,
            "inputGrid": self.input_grid.to_dict(),
            "outputGrid": self.output_grid.to_dict(),
            "m": self.m,
            "d": self.d,
            "bins": list(self.bins),
            "io_nodes": self.io_node_count,
            "nodes": self.node_count,
            "log10_valid_assignments": self.log10_valid_assignments,
            "bin_lower_bounds": self.bin_lower_bounds(),
        }


def build_model(input_grid: GridPartition, output_grid: GridPartition,
                sim: Callable[[Behavior], bool] | None = None) -> HPModel:
    return HPModel(input_grid, output_grid, sim)


class NodeAssignment:
    """A valid assignment to the IO nodes, stored as one bin index per block.

    ``levels[i, j]`` is the highest ``k`` with node ``(i, j, k)`` true.
    """

    __slots__ = ("model", "levels")

    def __init__(self, model: HPModel, levels):
        lv = np.asarray(levels, dtype=np.int64).reshape(model.m, model.d)
        if np.any(lv < 0) or np.any(lv >= np.asarray(model.bins)):
            raise EncodingError("bin level out of range")
        lv.setflags(write=False)
        self.model = model
        self.levels = lv

    @classmethod
    def from_bits(cls, model: HPModel, bits) -> NodeAssignment:
        bits = np.asarray(bits, dtype=bool).ravel()
        if len(bits) != model.io_node_count:
            raise EncodingError(f"expected {model.io_node_count} bits, got {len(bits)}")
        levels = np.empty((model.m, model.d), dtype=np.int64)
        pos = 0
        for i in range(model.m):
            for j, nj in enumerate(model.bins):
                block = bits[pos:pos + nj]
                pos += nj
                ones = int(block.sum())
                if ones == 0 or not block[:ones].all():
                    raise EncodingError(f"block ({i}, {j}) = {block.astype(int).tolist()} "
                                        f"is not a thermometer code")
                levels[i, j] = ones - 1
        return cls(model, levels)

    def bits(self) -> np.ndarray:
        out = []
        for i in range(self.model.m):
            for j, nj in enumerate(self.model.bins):
                out.append(np.arange(nj) <= self.levels[i, j])
        return np.concatenate(out)

    def blocks(self) -> list[list[int]]:
        return [[int(b) for b in (np.arange(nj) <= self.levels[i, j])]
                for i in range(self.model.m) for j, nj in enumerate(self.model.bins)]

    def value(self, node: NodeId) -> bool:
        i, j, k = node
        return bool(k <= self.levels[i, j])

    def with_levels(self, levels) -> NodeAssignment:
        return NodeAssignment(self.model, levels)

    def __eq__(self, other):
        if not isinstance(other, NodeAssignment):
            return NotImplemented
        return self.model.same_grids(other.model) and np.array_equal(self.levels, other.levels)

    def __hash__(self):
        return hash((self.model.hash, self.levels.tobytes()))

    def __repr__(self):
        return f"NodeAssignment(levels={self.levels.tolist()})"

    def to_dict(self) -> dict:
        return {"schema": "causal-repair/assignment/1", "model_hash": self.model.hash,
                "blocks": self.blocks()}

    @classmethod
    def from_dict(cls, model: HPModel, d: dict) -> NodeAssignment:
        if d.get("model_hash") != model.hash:
            raise EncodingError("assignment was produced for a different model")
        return cls.from_bits(model, [b for block in d["blocks"] for b in block])


def _check_grids(g: RepresentativeBehavior, model: HPModel) -> None:
    if g.input_grid != model.input_grid or g.output_grid != model.output_grid:
        raise EncodingError("behavior grids do not match the model")


def encode(g: RepresentativeBehavior, model: HPModel) -> NodeAssignment:
    _check_grids(g, model)
    og = model.output_grid
    levels = np.array([og.multi_of(j) for j in g.cell_map], dtype=np.int64)
    return NodeAssignment(model, levels.reshape(model.m, model.d))


def decode(v: NodeAssignment, model: HPModel | None = None) -> RepresentativeBehavior:
    model = model or v.model
    if not model.same_grids(v.model):
        raise EncodingError("assignment belongs to a different model")
    strides = np.asarray(model.output_grid.strides, dtype=np.int64)
    return RepresentativeBehavior(model.input_grid, model.output_grid, v.levels @ strides)


def _block_diff(a: int, b: int) -> range:
    lo, hi = (a, b) if a < b else (b, a)
    return range(lo + 1, hi + 1)


def node_diff(v1: NodeAssignment, v2: NodeAssignment) -> DiffSet:
    """Nodes whose truth values differ between two assignments."""
    if v1.levels.shape != v2.levels.shape:
        raise EncodingError("assignments have different shapes")
    out = set()
    for i, j in zip(*np.nonzero(v1.levels != v2.levels)):
        for k in _block_diff(int(v1.levels[i, j]), int(v2.levels[i, j])):
            out.add((int(i), int(j), k))
    return frozenset(out)


def leq_nodes(v1: NodeAssignment, v2: NodeAssignment, base: NodeAssignment) -> bool:
    return node_diff(base, v1) <= node_diff(base, v2)


def diff_size(v1: NodeAssignment, v2: NodeAssignment) -> int:
    return int(np.abs(v1.levels - v2.levels).sum())


def all_assignments(model: HPModel) -> Iterator[NodeAssignment]:
    """Every valid assignment, in lexicographic order of the levels array."""
    ranges = [range(nj) for _ in range(model.m) for nj in model.bins]
    for combo in np.ndindex(*[len(r) for r in ranges]):
        yield NodeAssignment(model, combo)


def model_from_dict(d: dict, sim=None) -> HPModel:
    return build_model(GridPartition.from_dict(d["inputGrid"]),
                       GridPartition.from_dict(d["outputGrid"]), sim)


def format_node(node: NodeId) -> str:
    return "u[{},{},{}]".format(*node)
