"""Bounded box spaces, uniform grid partitions, behaviors and their orderings.

Distances are measured with the max-norm on each box.  Cells are half-open
``[lo, hi)`` along every dimension except the topmost cell, which is closed,
so every point of a box belongs to exactly one cell.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

# Relative slack used when snapping grid arithmetic that is exact on paper
# (e.g. 0.14 / 0.01 == 14) but noisy in floating point.
SNAP = 1e-9


class DimensionError(ValueError):
    """Spaces, points or behaviors with incompatible shapes."""


class OutOfDomainError(ValueError):
    """A point lies outside the box it is looked up in."""


@dataclass(frozen=True)
class BoxSpace:
    lower: tuple[float, ...]
    upper: tuple[float, ...]

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lower)
        hi = tuple(float(v) for v in self.upper)
        if len(lo) != len(hi) or not lo:
            raise DimensionError("lower and upper must be non-empty and equally long")
        for k, (a, b) in enumerate(zip(lo, hi)):
            if not a < b:
                raise ValueError(f"dimension {k}: lower {a} must be < upper {b}")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dims(self) -> int:
        return len(self.lower)

    @property
    def extents(self) -> tuple[float, ...]:
        return tuple(b - a for a, b in zip(self.lower, self.upper))

    @property
    def midpoint(self) -> tuple[float, ...]:
        return tuple((a + b) / 2 for a, b in zip(self.lower, self.upper))

    def contains(self, x: Sequence[float], tol: float = 0.0) -> bool:
        if len(x) != self.dims:
            raise DimensionError(f"point has {len(x)} coordinates, space has {self.dims}")
        return all(a - tol <= v <= b + tol for v, a, b in zip(x, self.lower, self.upper))

    def clamp(self, x: Sequence[float]) -> tuple[float, ...]:
        return tuple(min(max(float(v), a), b) for v, a, b in zip(x, self.lower, self.upper))

    def to_dict(self) -> dict:
        return {"lower": list(self.lower), "upper": list(self.upper)}


def _cell_count(extent: float, width: float) -> int:
    return max(1, math.ceil(extent / width - SNAP))


@dataclass(frozen=True)
class CellIndex:
    """A cell addressed both by its row-major flat index and per-dimension indices."""

    flat: int
    multi: tuple[int, ...]


@dataclass(frozen=True, eq=False)
class GridPartition:
    """Uniform hypercube cells over a box; ``counts[k] = ceil(extent[k] / widths[k])``."""

    space: BoxSpace
    widths: tuple[float, ...]
    counts: tuple[int, ...] = field(init=False)
    strides: tuple[int, ...] = field(init=False, repr=False)

    def __post_init__(self):
        w = tuple(float(v) for v in self.widths)
        if len(w) != self.space.dims:
            raise DimensionError(f"{len(w)} widths for a {self.space.dims}-dimensional space")
        if any(not v > 0 for v in w):
            raise ValueError(f"widths must be positive, got {w}")
        counts = tuple(_cell_count(e, v) for e, v in zip(self.space.extents, w))
        strides = []
        acc = 1
        for c in reversed(counts):
            strides.append(acc)
            acc *= c
        object.__setattr__(self, "widths", w)
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "strides", tuple(reversed(strides)))

    def __eq__(self, other):
        if not isinstance(other, GridPartition):
            return NotImplemented
        return self.space == other.space and self.widths == other.widths

    def __hash__(self):
        return hash((self.space, self.widths))

    @property
    def dims(self) -> int:
        return self.space.dims

    @property
    def size(self) -> int:
        return math.prod(self.counts)

    def flat_of(self, multi: Sequence[int]) -> int:
        if len(multi) != self.dims:
            raise DimensionError("multi-index has the wrong number of dimensions")
        flat = 0
        for k, (v, c, s) in enumerate(zip(multi, self.counts, self.strides)):
            if not 0 <= v < c:
                raise IndexError(f"index {v} out of range [0, {c}) in dimension {k}")
            flat += v * s
        return flat

    def multi_of(self, flat: int) -> tuple[int, ...]:
        if not 0 <= flat < self.size:
            raise IndexError(f"flat index {flat} out of range [0, {self.size})")
        return tuple((flat // s) % c for s, c in zip(self.strides, self.counts))

    def index(self, cell: int | Sequence[int] | CellIndex) -> CellIndex:
        if isinstance(cell, CellIndex):
            return cell
        if isinstance(cell, (int, np.integer)):
            return CellIndex(int(cell), self.multi_of(int(cell)))
        multi = tuple(int(v) for v in cell)
        return CellIndex(self.flat_of(multi), multi)

    def flat_cell_of(self, x: Sequence[float]) -> int:
        """Flat index of the cell containing ``x``; the hot path of every rollout."""
        lo = self.space.lower
        hi = self.space.upper
        flat = 0
        for k in range(len(lo)):
            v = x[k]
            if not lo[k] <= v <= hi[k]:
                raise OutOfDomainError(f"coordinate {k} = {v} outside [{lo[k]}, {hi[k]}]")
            c = self.counts[k]
            q = int(math.floor((v - lo[k]) / self.widths[k] + SNAP))
            if q >= c:
                q = c - 1
            flat += q * self.strides[k]
        return flat

    def cells_of(self, points: np.ndarray) -> np.ndarray:
        """Vectorised :meth:`flat_cell_of` for an ``(N, dims)`` array."""
        pts = np.asarray(points, dtype=float).reshape(-1, self.dims)
        lo = np.asarray(self.space.lower)
        hi = np.asarray(self.space.upper)
        if np.any(pts < lo) or np.any(pts > hi):
            raise OutOfDomainError("some points lie outside the box")
        q = np.floor((pts - lo) / np.asarray(self.widths) + SNAP).astype(np.int64)
        q = np.minimum(q, np.asarray(self.counts) - 1)
        return q @ np.asarray(self.strides, dtype=np.int64)

    def cell_bounds(self, cell) -> tuple[tuple[float, ...], tuple[float, ...]]:
        multi = self.index(cell).multi
        lo = []
        hi = []
        for k, q in enumerate(multi):
            a = self.space.lower[k] + q * self.widths[k]
            b = self.space.upper[k] if q == self.counts[k] - 1 else a + self.widths[k]
            lo.append(a)
            hi.append(b)
        return tuple(lo), tuple(hi)

    def centers(self) -> np.ndarray:
        """``(size, dims)`` array of cell centres in flat order."""
        axes = []
        for k in range(self.dims):
            edges = self.space.lower[k] + self.widths[k] * np.arange(self.counts[k] + 1)
            edges[-1] = self.space.upper[k]
            axes.append((edges[:-1] + edges[1:]) / 2)
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def halved(self) -> GridPartition:
        return GridPartition(self.space, tuple(w / 2 for w in self.widths))

    def to_dict(self) -> dict:
        return {**self.space.to_dict(), "widths": list(self.widths)}

    @classmethod
    def from_dict(cls, d: dict) -> GridPartition:
        return cls(BoxSpace(tuple(d["lower"]), tuple(d["upper"])), tuple(d["widths"]))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> GridPartition:
        return cls.from_dict(json.loads(text))


def cell_of(grid: GridPartition, x: Sequence[float]) -> CellIndex:
    """Return the unique cell of ``grid`` containing ``x``.

    Raises:
        OutOfDomainError: if ``x`` is outside the grid's box.
    """
    if len(x) != grid.dims:
        raise DimensionError(f"point has {len(x)} coordinates, grid has {grid.dims}")
    return grid.index(grid.flat_cell_of(x))


def center_of(grid: GridPartition, cell) -> tuple[float, ...]:
    lo, hi = grid.cell_bounds(cell)
    return tuple((a + b) / 2 for a, b in zip(lo, hi))


# -- behaviors -----------------------------------------------------------------


class Behavior:
    """A deterministic map from an input box to an output box.

    Subclasses implement :meth:`_raw`; outputs are clamped into the output box.
    """

    kind = "scripted"

    def __init__(self, input_space: BoxSpace, output_space: BoxSpace):
        self.input_space = input_space
        self.output_space = output_space

    def _raw(self, x: Sequence[float]) -> Sequence[float]:
        raise NotImplementedError

    def __call__(self, x: Sequence[float]) -> tuple[float, ...]:
        return self.output_space.clamp(self._raw(x))

    def evaluate_many(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=float).reshape(-1, self.input_space.dims)
        out = np.empty((len(pts), self.output_space.dims))
        for n, x in enumerate(pts):
            out[n] = self(tuple(x))
        return out


class FunctionBehavior(Behavior):
    """Wraps a plain Python callable ``x -> y``.

    ``vectorized``, if given, maps an ``(N, dim_in)`` array to ``(N, dim_out)``
    and must agree with ``fn`` pointwise.
    """

    def __init__(self, fn: Callable, input_space: BoxSpace, output_space: BoxSpace,
                 kind: str = "scripted", vectorized: Callable | None = None,
                 name: str = ""):
        super().__init__(input_space, output_space)
        self.fn = fn
        self.kind = kind
        self.vectorized = vectorized
        self.name = name or getattr(fn, "__name__", "behavior")

    def _raw(self, x):
        y = self.fn(x)
        if np.ndim(y) == 0:
            return (float(y),)
        return y

    def evaluate_many(self, points):
        if self.vectorized is None:
            return super().evaluate_many(points)
        pts = np.asarray(points, dtype=float).reshape(-1, self.input_space.dims)
        y = np.asarray(self.vectorized(pts), dtype=float).reshape(len(pts), -1)
        return np.clip(y, self.output_space.lower, self.output_space.upper)

    def __repr__(self):
        return f"FunctionBehavior({self.name!r})"


def constant_behavior(value: Sequence[float] | float, input_space: BoxSpace,
                      output_space: BoxSpace) -> FunctionBehavior:
    y = (float(value),) if np.ndim(value) == 0 else tuple(float(v) for v in value)
    return FunctionBehavior(lambda x: y, input_space, output_space,
                            vectorized=lambda X: np.tile(y, (len(X), 1)),
                            name=f"constant{y}")


class RepresentativeBehavior(Behavior):
    """A cell-to-cell map ``g``: every input in cell ``i`` goes to the centre of ``g[i]``."""

    kind = "representative"

    def __init__(self, input_grid: GridPartition, output_grid: GridPartition,
                 cell_map: Iterable[int]):
        super().__init__(input_grid.space, output_grid.space)
        self.input_grid = input_grid
        self.output_grid = output_grid
        cm = tuple(int(j) for j in cell_map)
        if len(cm) != input_grid.size:
            raise DimensionError(f"map covers {len(cm)} cells, input grid has {input_grid.size}")
        n = output_grid.size
        if any(not 0 <= j < n for j in cm):
            raise IndexError(f"output cell index out of range [0, {n})")
        self.cell_map = cm
        self._centers = output_grid.centers()
        self._center_tuples = [tuple(c) for c in self._centers]

    def __call__(self, x):
        return self._center_tuples[self.cell_map[self.input_grid.flat_cell_of(x)]]

    def evaluate_many(self, points):
        cells = self.input_grid.cells_of(points)
        return self._centers[np.asarray(self.cell_map)[cells]]

    def __eq__(self, other):
        if not isinstance(other, RepresentativeBehavior):
            return NotImplemented
        return (self.input_grid == other.input_grid and self.output_grid == other.output_grid
                and self.cell_map == other.cell_map)

    def __hash__(self):
        return hash((self.input_grid, self.output_grid, self.cell_map))

    def __repr__(self):
        return (f"RepresentativeBehavior(m={self.input_grid.size}, "
                f"n={self.output_grid.size})")

    def to_dict(self) -> dict:
        return {
            "inputGrid": self.input_grid.to_dict(),
            "outputGrid": self.output_grid.to_dict(),
            "map": list(self.cell_map),
        }

    @classmethod
    def from_dict(cls, d: dict) -> RepresentativeBehavior:
        return cls(GridPartition.from_dict(d["inputGrid"]),
                   GridPartition.from_dict(d["outputGrid"]), d["map"])


# -- probing and orderings -----------------------------------------------------


@dataclass(frozen=True)
class SamplingPlan:
    """Finite set of input points on which black-box behaviors are compared."""

    points: np.ndarray

    @classmethod
    def cell_centers(cls, grid: GridPartition) -> SamplingPlan:
        return cls(grid.centers())

    @classmethod
    def of(cls, points) -> SamplingPlan:
        return cls(np.atleast_2d(np.asarray(points, dtype=float)))


def _check_same_spaces(*behaviors: Behavior) -> None:
    first = behaviors[0]
    for b in behaviors[1:]:
        if b.input_space != first.input_space or b.output_space != first.output_space:
            raise DimensionError("behaviors do not share input/output spaces")


def _default_probe(behaviors: Sequence[Behavior]) -> SamplingPlan:
    grids = {b.input_grid for b in behaviors if isinstance(b, RepresentativeBehavior)}
    if len(grids) == 1:
        return SamplingPlan.cell_centers(grids.pop())
    raise ValueError("a probe plan is required unless the behaviors share one input grid")


def behavior_distance(f1: Behavior, f2: Behavior, probe: SamplingPlan | None = None) -> float:
    """Max over probe points of ``||f1(x) - f2(x)||_inf``.

    For black boxes this is a lower bound of the supremum over the whole input
    space.  Exact when both are representative behaviors over one grid and the
    probe is omitted (one centre per input cell).
    """
    _check_same_spaces(f1, f2)
    probe = probe or _default_probe([f1, f2])
    y1 = f1.evaluate_many(probe.points)
    y2 = f2.evaluate_many(probe.points)
    if len(y1) == 0:
        return 0.0
    return float(np.max(np.abs(y1 - y2)))


def leq_behavior(f1: Behavior, f2: Behavior, base: Behavior,
                 probe: SamplingPlan | None = None) -> bool:
    """``f1`` is at least as close to ``base`` as ``f2`` on every probe point and dimension."""
    _check_same_spaces(f1, f2, base)
    probe = probe or _default_probe([f1, f2, base])
    y0 = base.evaluate_many(probe.points)
    y1 = f1.evaluate_many(probe.points)
    y2 = f2.evaluate_many(probe.points)
    up = (y0 <= y1) & (y1 <= y2)
    down = (y0 >= y1) & (y1 >= y2)
    return bool(np.all(up | down))
