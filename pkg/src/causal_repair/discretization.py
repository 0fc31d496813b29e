"""Grid refinement until a cell-to-cell map reproduces the factual verdict."""
from __future__ import annotations

import csv
import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .core import Behavior, BoxSpace, GridPartition, RepresentativeBehavior

# Probe points sit this fraction of a cell width inside the cell faces, so a
# point meant for cell i never lands on the face it shares with cell i+1.
PROBE_INSET = 1e-6


class RefinementBudgetError(RuntimeError):
    """Refinement stopped at ``max_halvings`` without meeting both loop conditions."""

    def __init__(self, message: str, input_grid: GridPartition, output_grid: GridPartition):
        super().__init__(message)
        self.input_grid = input_grid
        self.output_grid = output_grid


class ContainmentError(ValueError):
    """Some input cell is not mapped into a single output cell."""

    def __init__(self, message: str, cells: list[int]):
        super().__init__(message)
        self.cells = cells


@dataclass(frozen=True)
class DiscretizationConfig:
    initial_widths_in: tuple[float, ...]
    initial_widths_out: tuple[float, ...]
    max_halvings: int = 8
    containment: str = "probe"  # or "lipschitz"
    samples_per_cell: int | None = None  # probe mode; default 5 ** dim(I)
    lipschitz: float | None = None  # lipschitz mode

    def __post_init__(self):
        if self.max_halvings < 1:
            raise ValueError("max_halvings must be >= 1")
        if self.containment not in ("probe", "lipschitz"):
            raise ValueError(f"unknown containment mode {self.containment!r}")
        if self.containment == "lipschitz" and not (self.lipschitz and self.lipschitz > 0):
            raise ValueError("lipschitz mode needs a positive constant")
        object.__setattr__(self, "initial_widths_in", tuple(map(float, self.initial_widths_in)))
        object.__setattr__(self, "initial_widths_out", tuple(map(float, self.initial_widths_out)))

    def validate_against(self, input_space: BoxSpace, output_space: BoxSpace) -> None:
        for widths, space, label in ((self.initial_widths_in, input_space, "input"),
                                     (self.initial_widths_out, output_space, "output")):
            if len(widths) != space.dims:
                raise ValueError(f"{len(widths)} {label} widths for {space.dims} dimensions")
            for w, e in zip(widths, space.extents):
                if not 0 < w <= e * (1 + 1e-12):
                    raise ValueError(f"{label} width {w} not in (0, {e}]")

    def to_dict(self) -> dict:
        return {
            "initialWidthsIn": list(self.initial_widths_in),
            "initialWidthsOut": list(self.initial_widths_out),
            "maxHalvings": self.max_halvings,
            "containment": self.containment,
            "samplesPerCell": self.samples_per_cell,
            "lipschitz": self.lipschitz,
        }

    @classmethod
    def from_dict(cls, d: dict) -> DiscretizationConfig:
        return cls(tuple(d["initialWidthsIn"]), tuple(d["initialWidthsOut"]),
                   d.get("maxHalvings", 8), d.get("containment", "probe"),
                   d.get("samplesPerCell"), d.get("lipschitz"))


@dataclass
class DiscretizationResult:
    input_grid: GridPartition
    output_grid: GridPartition
    g: RepresentativeBehavior
    halvings_used: tuple[int, int]
    verdict: bool
    history: list[tuple[tuple[float, ...], tuple[float, ...]]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {**self.g.to_dict(), "halvingsUsed": list(self.halvings_used),
                "verdict": self.verdict}


# -- probing -------------------------------------------------------------------


def _lattice_size(samples: int, dims: int) -> int:
    r = 1
    while r ** dims < samples:
        r += 2
    return r


def probe_offsets(samples: int, dims: int) -> np.ndarray:
    """Relative positions (in [0, 1]^dims) of the probe points, centre first.

    The pattern is the smallest odd ``r``-per-dimension lattice with at least
    ``samples`` points, spanning the cell from face to face (faces pulled in by
    :data:`PROBE_INSET`).  ``r = 5`` gives corners, edge midpoints, quarter
    points and the centre.
    """
    if samples < 1:
        raise ValueError("need at least one probe point per cell")
    r = _lattice_size(samples, dims)
    if r == 1:
        axis = np.array([0.5])
    else:
        axis = np.linspace(PROBE_INSET, 1 - PROBE_INSET, r)
        axis[r // 2] = 0.5
    pts = [np.full(dims, 0.5)]
    for combo in itertools.product(axis, repeat=dims):
        p = np.asarray(combo)
        if not np.all(p == 0.5):
            pts.append(p)
    return np.asarray(pts[:samples])


def probe_points(grid: GridPartition, samples: int) -> np.ndarray:
    """``(size, samples, dims)`` probe points for every cell in flat order."""
    offsets = probe_offsets(samples, grid.dims)
    lo_edges = []
    widths = []
    for k in range(grid.dims):
        edges = grid.space.lower[k] + grid.widths[k] * np.arange(grid.counts[k] + 1)
        edges[-1] = grid.space.upper[k]
        lo_edges.append(edges[:-1])
        widths.append(np.diff(edges))
    lo = np.stack([m.ravel() for m in np.meshgrid(*lo_edges, indexing="ij")], axis=1)
    w = np.stack([m.ravel() for m in np.meshgrid(*widths, indexing="ij")], axis=1)
    return lo[:, None, :] + w[:, None, :] * offsets[None, :, :]


def tabulate(f: Behavior, input_grid: GridPartition, samples_per_cell: int = 1):
    """I/O table of ``f``: rows ``(cell_flat, input point, output point)``, centre first."""
    pts = probe_points(input_grid, samples_per_cell)
    flat_pts = pts.reshape(-1, input_grid.dims)
    outs = f.evaluate_many(flat_pts)
    cells = np.repeat(np.arange(input_grid.size), samples_per_cell)
    return [(int(c), tuple(x), tuple(y)) for c, x, y in zip(cells, flat_pts, outs)]


def write_table_csv(rows, path) -> None:
    if not rows:
        raise ValueError("empty table")
    din = len(rows[0][1])
    dout = len(rows[0][2])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["cell_flat", *(f"input_{k}" for k in range(din)),
                    *(f"output_{k}" for k in range(dout))])
        for c, x, y in rows:
            w.writerow([c, *map(repr, map(float, x)), *map(repr, map(float, y))])


def _probe_map(f: Behavior, input_grid: GridPartition, output_grid: GridPartition,
               samples: int) -> tuple[np.ndarray, list[int]]:
    """Output cell of each input cell's centre, and the input cells that straddle."""
    pts = probe_points(input_grid, samples)
    outs = f.evaluate_many(pts.reshape(-1, input_grid.dims))
    out_cells = output_grid.cells_of(outs).reshape(input_grid.size, samples)
    bad = np.nonzero(np.any(out_cells != out_cells[:, :1], axis=1))[0]
    return out_cells[:, 0], [int(i) for i in bad]


def _center_map(f: Behavior, input_grid: GridPartition, output_grid: GridPartition) -> np.ndarray:
    return output_grid.cells_of(f.evaluate_many(input_grid.centers()))


def discretize_fixed(f: Behavior, input_grid: GridPartition, output_grid: GridPartition,
                     samples_per_cell: int | None = None) -> RepresentativeBehavior:
    """Cell map of ``f`` over given grids, without refinement.

    Raises:
        ContainmentError: if any input cell's probe points land in more than one
            output cell.
    """
    samples = samples_per_cell or 5 ** input_grid.dims
    cmap, bad = _probe_map(f, input_grid, output_grid, samples)
    if bad:
        raise ContainmentError(f"{len(bad)} input cells straddle output cells", bad)
    return RepresentativeBehavior(input_grid, output_grid, cmap)


def center_sampled(f: Behavior, input_grid: GridPartition,
                   output_grid: GridPartition) -> RepresentativeBehavior:
    """Cell map taking each input cell to the output cell of ``f`` at its centre.

    No containment check; used for coarse grid profiles where ``f`` is known to
    straddle cells.
    """
    return RepresentativeBehavior(input_grid, output_grid, _center_map(f, input_grid, output_grid))


def recon(g: RepresentativeBehavior) -> Behavior:
    """The behavior sending every input of cell ``i`` to the centre of output cell ``g[i]``.

    Representative behaviors are already evaluable, so this is the identity on
    them; it exists to mark where a cell map is turned back into a behavior.
    """
    if not isinstance(g, RepresentativeBehavior):
        raise TypeError("recon expects a RepresentativeBehavior")
    return g


def discretize(f: Behavior, sim: Callable[[Behavior], bool],
               cfg: DiscretizationConfig) -> DiscretizationResult:
    """Refine input/output grids until ``recon(g)`` has the same verdict as ``f``.

    Outer loop: partition the output box, halve the output width.  Inner loop:
    partition the input box, halve the input width, until every input cell maps
    into one output cell.  Widths are never reset, so successive grids only get
    finer.  In lipschitz mode the inner condition is the sufficient bound
    ``c * sqrt(dim I) * max(dx) <= min(dy)`` and cells are mapped by centre.

    Raises:
        RefinementBudgetError: if either space needs more than
            ``cfg.max_halvings`` halvings.
    """
    cfg.validate_against(f.input_space, f.output_space)
    target = bool(sim(f))
    dims_in = f.input_space.dims
    samples = cfg.samples_per_cell or 5 ** dims_in
    dx = cfg.initial_widths_in
    dy = cfg.initial_widths_out
    hx = hy = 0
    history = []
    in_grid = out_grid = None
    while True:
        if hy > cfg.max_halvings:
            raise RefinementBudgetError(
                f"verdict still differs after {cfg.max_halvings} output halvings",
                in_grid, out_grid)
        out_grid = GridPartition(f.output_space, dy)
        used_hy = hy
        dy = tuple(w / 2 for w in dy)
        hy += 1
        while True:
            if hx > cfg.max_halvings:
                raise RefinementBudgetError(
                    f"input cells still straddle output cells after {cfg.max_halvings} "
                    f"input halvings", in_grid, out_grid)
            in_grid = GridPartition(f.input_space, dx)
            used_hx = hx
            dx = tuple(w / 2 for w in dx)
            hx += 1
            history.append((in_grid.widths, out_grid.widths))
            if cfg.containment == "probe":
                cmap, bad = _probe_map(f, in_grid, out_grid, samples)
                if not bad:
                    break
            else:
                lhs = cfg.lipschitz * math.sqrt(dims_in) * max(in_grid.widths)
                if lhs <= min(out_grid.widths) * (1 + 1e-12):
                    cmap = _center_map(f, in_grid, out_grid)
                    break
        g = RepresentativeBehavior(in_grid, out_grid, cmap)
        if bool(sim(recon(g))) == target:
            return DiscretizationResult(in_grid, out_grid, g, (used_hx, used_hy), target, history)


def write_map_json(g: RepresentativeBehavior, path, **extra) -> None:
    with open(path, "w") as fh:
        json.dump({"schema": "causal-repair/cell-map/1", **g.to_dict(), **extra}, fh, indent=1)


def read_map_json(path) -> RepresentativeBehavior:
    with open(path) as fh:
        return RepresentativeBehavior.from_dict(json.load(fh))
