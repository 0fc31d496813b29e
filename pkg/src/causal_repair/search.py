"""Counterfactual sampling with a Wilson-score failure bound, and interpolation
from a satisfying counterfactual back toward the factual assignment."""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .core import Behavior, RepresentativeBehavior
from .discretization import recon
from .hp_model import DiffSet, HPModel, NodeAssignment, decode, node_diff

Simulator = Callable[[Behavior], bool]


class ContractError(ValueError):
    """Inputs that violate an operation's precondition (e.g. wrong verdicts)."""


# -- normal quantile (Wichura, AS 241, PPND16) ---------------------------------

_A = (3.3871328727963666080e0, 1.3314166789178437745e2, 1.9715909503065514427e3,
      1.3731693765509461125e4, 4.5921953931549871457e4, 6.7265770927008700853e4,
      3.3430575583588128105e4, 2.5090809287301226727e3)
_B = (1.0, 4.2313330701600911252e1, 6.8718700749205790830e2, 5.3941960214247511077e3,
      2.1213794301586595867e4, 3.9307895800092710610e4, 2.8729085735721942674e4,
      5.2264952788528545610e3)
_C = (1.42343711074968357734e0, 4.63033784615654529590e0, 5.76949722146069140550e0,
      3.64784832476320460504e0, 1.27045825245236838258e0, 2.41780725177450611770e-1,
      2.27238449892691845833e-2, 7.74545014278341407640e-4)
_D = (1.0, 2.05319162663775882187e0, 1.67638483018380384940e0, 6.89767334985100004550e-1,
      1.48103976427480074590e-1, 1.51986665636164571966e-2, 5.47593808499534494600e-4,
      1.05075007164441684324e-9)
_E = (6.65790464350110377720e0, 5.46378491116411436990e0, 1.78482653991729133580e0,
      2.96560571828504891230e-1, 2.65321895265761230930e-2, 1.24266094738807843860e-3,
      2.71155556874348757815e-5, 2.01033439929228813265e-7)
_F = (1.0, 5.99832206555887937690e-1, 1.36929880922735805310e-1, 1.48753612908506148525e-2,
      7.86869131145613259100e-4, 1.84631831751005468180e-5, 1.42151175831644588870e-7,
      2.04426310338993978564e-15)


def _poly(coeffs, x):
    acc = 0.0
    for c in reversed(coeffs):
        acc = acc * x + c
    return acc


def normal_quantile(q: float) -> float:
    """Inverse standard-normal CDF by Wichura's rational approximations (|err| ~ 1e-16)."""
    if not 0.0 < q < 1.0:
        raise ValueError(f"quantile level must lie in (0, 1), got {q}")
    r = q - 0.5
    if abs(r) <= 0.425:
        s = 0.180625 - r * r
        return r * _poly(_A, s) / _poly(_B, s)
    s = math.sqrt(-math.log(q if r < 0 else 1.0 - q))
    if s <= 5.0:
        z = _poly(_C, s - 1.6) / _poly(_D, s - 1.6)
    else:
        z = _poly(_E, s - 5.0) / _poly(_F, s - 5.0)
    return -z if r < 0 else z


def required_samples(p: float, alpha: float) -> int:
    """Misses needed before claiming success probability <= p at confidence 1 - alpha."""
    if not 0 < p < 1 or not 0 < alpha < 1:
        raise ValueError("p and alpha must lie in (0, 1)")
    z = normal_quantile(1 - alpha / 2)
    return max(1, math.ceil((1 / p - 1) * z * z))


def wilson_upper_bound(n: float, alpha: float) -> float:
    """Upper end of the Wilson score interval after ``n`` trials with zero successes."""
    if n <= 0:
        raise ValueError("need at least one trial")
    z2 = normal_quantile(1 - alpha / 2) ** 2
    return z2 / (n + z2)


# -- sampling ------------------------------------------------------------------


@dataclass(frozen=True)
class SamplerConfig:
    p: float = 0.001
    alpha: float = 0.05
    seed: int = 0
    max_samples_override: int | None = None
    workers: int = 1
    batch: int = 64

    def __post_init__(self):
        if not 0 < self.p < 1 or not 0 < self.alpha < 1:
            raise ValueError("p and alpha must lie in (0, 1)")
        if self.max_samples_override is not None and self.max_samples_override < 1:
            raise ValueError("max_samples_override must be positive")

    @property
    def n_samples(self) -> int:
        if self.max_samples_override is not None:
            return self.max_samples_override
        return required_samples(self.p, self.alpha)


@dataclass(frozen=True)
class FailureStatement:
    p: float
    alpha: float
    N: int
    seed: int

    @property
    def bound(self) -> float:
        """Success-probability bound actually supported by ``N`` misses."""
        return wilson_upper_bound(self.N, self.alpha)

    @property
    def statement(self) -> str:
        return (f"After {self.N} consecutive unsatisfactory uniform samples: with confidence "
                f"at least {1 - self.alpha:g}, the fraction of satisfying assignments is at most "
                f"{self.bound:.6g} (threshold p = {self.p:g}). The violation is unlikely to be "
                f"caused by this component's I/O behavior alone.")

    def to_dict(self) -> dict:
        return {"schema": "causal-repair/failure/1", "p": self.p, "alpha": self.alpha,
                "N": self.N, "seed": self.seed, "bound": self.bound,
                "statement": self.statement}


class CountingSimulator:
    """Counts verdict queries made through it."""

    def __init__(self, sim: Simulator):
        self.sim = sim
        self.calls = 0

    def __call__(self, f: Behavior) -> bool:
        self.calls += 1
        return bool(self.sim(f))


def verdict(model: HPModel, sim: Simulator, v: NodeAssignment) -> bool:
    return bool(sim(recon(decode(v, model))))


def _draw(model: HPModel, rng: np.random.Generator) -> NodeAssignment:
    cells = rng.integers(0, model.n, size=model.m)
    levels = np.stack(np.unravel_index(cells, model.output_grid.counts), axis=1)
    return NodeAssignment(model, levels)


def sample_counterfactual(model: HPModel, sim: Simulator,
                          cfg: SamplerConfig) -> NodeAssignment | FailureStatement:
    """Draw assignments uniformly over all ``n ** m`` valid ones until one satisfies.

    Each input cell independently gets a uniformly random output cell, which is
    exactly uniform over valid thermometer assignments.  With ``cfg.workers >
    1`` samples are verdicted in batches on a thread pool; acceptance still
    goes in sample order so the result matches the sequential run.
    """
    rng = np.random.default_rng(cfg.seed)
    total = cfg.n_samples
    if cfg.workers <= 1:
        for _ in range(total):
            v = _draw(model, rng)
            if verdict(model, sim, v):
                return v
        return FailureStatement(cfg.p, cfg.alpha, total, cfg.seed)

    drawn = 0
    with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
        while drawn < total:
            batch = [_draw(model, rng) for _ in range(min(cfg.batch, total - drawn))]
            drawn += len(batch)
            for v, ok in zip(batch, pool.map(lambda a: verdict(model, sim, a), batch)):
                if ok:
                    return v
    return FailureStatement(cfg.p, cfg.alpha, total, cfg.seed)


# -- interpolation -------------------------------------------------------------


@dataclass
class CauseResult:
    factual: NodeAssignment
    counterfactual_raw: NodeAssignment
    counterfactual_minimal: NodeAssignment
    cause: DiffSet
    repaired_behavior: RepresentativeBehavior
    simulator_calls: int
    step_ops: int
    mode: str = "incremental"
    changed_cells: list[tuple[int, int, int]] = field(default_factory=list)

    def to_dict(self) -> dict:
        model = self.factual.model
        return {
            "schema": "causal-repair/cause/1",
            "model_hash": model.hash,
            "inputGrid": model.input_grid.to_dict(),
            "outputGrid": model.output_grid.to_dict(),
            "mode": self.mode,
            "factual": self.factual.to_dict()["blocks"],
            "counterfactual_raw": self.counterfactual_raw.to_dict()["blocks"],
            "counterfactual_minimal": self.counterfactual_minimal.to_dict()["blocks"],
            "cause": [list(n) for n in sorted(self.cause)],
            "changed_cells": [
                {"input_cell": i, "factual_output_cell": a, "repaired_output_cell": b}
                for i, a, b in self.changed_cells
            ],
            "repaired_map": list(self.repaired_behavior.cell_map),
            "simulator_calls": self.simulator_calls,
            "step_ops": self.step_ops,
        }

    @classmethod
    def from_dict(cls, d: dict, sim=None) -> CauseResult:
        from .hp_model import model_from_dict
        model = model_from_dict(d, sim)
        if model.hash != d["model_hash"]:
            raise ContractError("model hash does not match the stored grids")

        def load(blocks):
            return NodeAssignment.from_bits(model, [b for blk in blocks for b in blk])

        v = load(d["factual"])
        vr = load(d["counterfactual_raw"])
        vs = load(d["counterfactual_minimal"])
        return cls(v, vr, vs, node_diff(v, vs), decode(vs, model), d["simulator_calls"],
                   d["step_ops"], d["mode"],
                   [(c["input_cell"], c["factual_output_cell"], c["repaired_output_cell"])
                    for c in d["changed_cells"]])


def block_order(model: HPModel, order=None) -> list[tuple[int, int]]:
    """Order in which ``(i, j)`` blocks are walked.

    ``None`` is the plain ``i``-then-``j`` loop order, an ``int`` seeds a random
    permutation, and an explicit sequence of blocks is used as given (blocks it
    omits follow in loop order).
    """
    blocks = [(i, j) for i in range(model.m) for j in range(model.d)]
    if order is None or order == "ijk":
        return blocks
    if isinstance(order, (int, np.integer)):
        perm = np.random.default_rng(int(order)).permutation(len(blocks))
        return [blocks[p] for p in perm]
    given = [tuple(b) for b in order]
    seen = set(given)
    return given + [b for b in blocks if b not in seen]


class _Walker:
    """Shared state for both interpolation modes."""

    def __init__(self, model, sim, factual, start):
        self.model = model
        self.sim = sim
        self.fact = factual.levels
        self.cur = np.array(start.levels)
        self.calls = 0
        self.steps = 0
        self.accepts = 0
        self.rejected_at: dict[tuple[int, int], int] = {}

    def ok(self, levels) -> bool:
        self.calls += 1
        return bool(self.sim(recon(decode(NodeAssignment(self.model, levels), self.model))))

    def direction(self, b) -> int:
        return int(np.sign(self.fact[b] - self.cur[b]))

    def try_step(self, b) -> bool:
        trial = self.cur.copy()
        trial[b] += self.direction(b)
        self.steps += 1
        if self.ok(trial):
            self.cur = trial
            self.accepts += 1
            self.rejected_at.pop(b, None)
            return True
        self.rejected_at[b] = self.accepts
        return False

    def walk_block(self, b) -> None:
        while self.cur[b] != self.fact[b] and self.try_step(b):
            pass

    def settle(self, blocks) -> None:
        """Re-test blocks whose rejection predates a later accepted step until none do."""
        while True:
            stale = [b for b in blocks if b in self.rejected_at
                     and self.rejected_at[b] < self.accepts and self.cur[b] != self.fact[b]]
            if not stale:
                return
            for b in stale:
                self.walk_block(b)


def _incremental(w: _Walker, blocks) -> None:
    for b in blocks:
        w.walk_block(b)
    w.settle(blocks)


def _binary(w: _Walker, blocks) -> None:
    pending = [b for b in blocks for _ in range(abs(int(w.fact[b] - w.cur[b])))]

    def applied(n):
        lv = w.cur.copy()
        for b in pending[:n]:
            lv[b] += int(np.sign(w.fact[b] - lv[b]))
        return lv

    while pending:
        full = applied(len(pending))
        w.steps += len(pending)
        if w.ok(full):
            w.cur = full
            w.accepts += 1
            break
        lo, hi = 0, len(pending)
        while hi - lo > 1:
            mid = (lo + hi) // 2
            w.steps += mid
            if w.ok(applied(mid)):
                lo = mid
            else:
                hi = mid
        if lo:
            w.cur = applied(lo)
            w.accepts += 1
        bad = pending[lo]
        w.rejected_at[bad] = w.accepts
        pending = [b for b in pending[lo + 1:] if b != bad]
    w.settle(blocks)


def interpolate(model: HPModel, sim: Simulator, v: NodeAssignment, v_prime: NodeAssignment,
                mode: str = "incremental", order=None, check: bool = True) -> CauseResult:
    """Walk ``v_prime`` toward the factual ``v`` while the property stays satisfied.

    A step moves one block's bin level by one toward its factual level, which
    flips exactly one node and keeps the thermometer code valid.  Blocks are
    visited in ``order`` (see :func:`block_order`).

    ``incremental`` tries the steps one at a time.  ``binary`` lays all steps
    out in that order and binary-searches the longest prefix that still
    satisfies; the failing step's block is set aside and the search repeats on
    what is left.  Both finish by re-testing every set-aside block whose
    rejection happened before some later accepted step, so the result is
    1-minimal: no single further step toward ``v`` keeps the property.

    Raises:
        ContractError: if ``v`` does not violate or ``v_prime`` does not satisfy.
    """
    if mode not in ("incremental", "binary"):
        raise ValueError(f"unknown interpolation mode {mode!r}")
    if check:
        if verdict(model, sim, v):
            raise ContractError("factual assignment satisfies the property")
        if not verdict(model, sim, v_prime):
            raise ContractError("counterfactual assignment does not satisfy the property")
    blocks = [b for b in block_order(model, order)]
    w = _Walker(model, sim, v, v_prime)
    (_incremental if mode == "incremental" else _binary)(w, blocks)
    v_star = NodeAssignment(model, w.cur)
    cause, changed = extract_cause(v, v_star, model)
    return CauseResult(v, v_prime, v_star, cause, decode(v_star, model), w.calls, w.steps,
                       mode, changed)


def extract_cause(v: NodeAssignment, v_star: NodeAssignment,
                  model: HPModel | None = None) -> tuple[DiffSet, list[tuple[int, int, int]]]:
    """Cause nodes and the input cells whose output cell changed, ``(i, factual, repaired)``."""
    model = model or v.model
    g = decode(v, model).cell_map
    h = decode(v_star, model).cell_map
    changed = [(i, a, b) for i, (a, b) in enumerate(zip(g, h)) if a != b]
    return node_diff(v, v_star), changed


def describe_cause(changed: Sequence[tuple[int, int, int]], m: int) -> str:
    k = len(changed)
    return (f"Actual cause: the factual controller's outputs on {k} of {m} input cells. "
            f"Mapping just those cells as the repaired behavior does makes the property hold.")


def single_restorations(model: HPModel, sim: Simulator, v: NodeAssignment,
                        v_star: NodeAssignment) -> dict[tuple[int, int, int], bool]:
    """Verdict after restoring each restorable cause node of ``v_star`` on its own.

    Within a block only the node at the current level boundary can be restored
    without breaking the thermometer code; that node is the key.
    """
    out = {}
    for i, j in zip(*np.nonzero(v.levels != v_star.levels)):
        b = (int(i), int(j))
        lv = np.array(v_star.levels)
        step = int(np.sign(v.levels[b] - lv[b]))
        node_k = int(lv[b]) if step < 0 else int(lv[b]) + 1
        lv[b] += step
        out[(b[0], b[1], node_k)] = verdict(model, sim, NodeAssignment(model, lv))
    return out


def is_one_minimal(model: HPModel, sim: Simulator, v: NodeAssignment,
                   v_star: NodeAssignment) -> bool:
    return not any(single_restorations(model, sim, v, v_star).values())


def node_restorations(model: HPModel, sim: Simulator, v: NodeAssignment,
                      v_star: NodeAssignment) -> dict[tuple[int, int, int], bool]:
    """Verdict after restoring each cause node of ``v_star`` to its factual value.

    A lone node flip usually breaks the thermometer code, so each node is
    restored through the nearest valid assignment in which it has its factual
    value: the block's level moves to just below (or exactly onto) that node.
    Costs one simulation per cause node.
    """
    out = {}
    for i, j, k in sorted(node_diff(v, v_star)):
        lv = np.array(v_star.levels)
        lv[i, j] = k - 1 if lv[i, j] >= k else k
        out[(i, j, k)] = verdict(model, sim, NodeAssignment(model, lv))
    return out
