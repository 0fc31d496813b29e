"""Diagnose and repair a controller that brakes in the middle of the valley.

The car starts at rest at pos = -0.5 and has 110 steps to reach pos >= 0.45.
Energy pumping (push in the direction of motion) gets there; the flawed
variant reverses its push for -0.4 <= pos < 0 and never builds enough swing.
"""
import numpy as np

from causal_repair.discretization import DiscretizationConfig, discretize
from causal_repair.hp_model import build_model, encode
from causal_repair.search import SamplerConfig, interpolate, node_restorations, sample_counterfactual
from causal_repair.simulation import (
    ClosedLoopSimulator,
    energy_pumping_controller,
    flawed_controller,
    mountain_car_config,
)

sim = ClosedLoopSimulator(mountain_car_config())
f = flawed_controller()
for name, ctrl in (("energy pumping", energy_pumping_controller()), ("flawed", f)):
    tr = sim.rollout(ctrl)
    print(f"{name:>15}: verdict {int(tr.verdict)}, max pos {max(s[0] for s in tr.states):+.3f}")

# Refine grids until the cell map behaves like the controller itself.
res = discretize(f, sim, DiscretizationConfig((0.8, 0.08), (0.1,)))
print(f"\ninput grid {res.input_grid.counts} (widths {res.input_grid.widths}), "
      f"{res.output_grid.size} output cells, halvings {res.halvings_used}")

model = build_model(res.input_grid, res.output_grid, sim)
v = encode(res.g, model)
print(f"{model.node_count} nodes, 10^{model.log10_valid_assignments:.1f} valid assignments")

# Seed 49 is the shipped default: on this grid only about 1 seed in 120 finds a
# satisfying map within the 3838-sample budget.
vp = sample_counterfactual(model, sim, SamplerConfig(seed=49))
print(f"\nrandom counterfactual differs on {int(np.sum(vp.levels != v.levels))} of {model.m} cells")

for mode in ("incremental", "binary"):
    r = interpolate(model, sim, v, vp, mode)
    print(f"{mode:>11}: {r.simulator_calls} simulator calls, {len(r.changed_cells)} cells "
          f"changed, {len(r.cause)} cause nodes")

ig = model.input_grid
print("\nchanged cells (pos range, vel range): factual -> repaired control")
for i, a, b in r.changed_cells:
    lo, hi = ig.cell_bounds(i)
    ya = model.output_grid.centers()[a][0]
    yb = model.output_grid.centers()[b][0]
    print(f"  pos [{lo[0]:+.1f}, {hi[0]:+.1f})  vel [{lo[1]:+.2f}, {hi[1]:+.2f}):  "
          f"{ya:+.2f} -> {yb:+.2f}")

tr = sim.rollout(r.repaired_behavior)
print(f"\nrepaired run reaches pos {tr.states[-1][0]:.3f} after {len(tr.states) - 1} steps")
undone = node_restorations(model, sim, v, r.counterfactual_minimal)
print(f"restoring any one of the {len(undone)} cause nodes breaks the repair: "
      f"{not any(undone.values())}")
