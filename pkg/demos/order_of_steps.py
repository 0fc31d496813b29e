"""Which 1-minimal repair you get depends on the order blocks are walked.

One input cell, a 4x4 output grid, and a property that holds iff the two
output levels add up to at least 4.  The factual output sits at (0, 0) and the
sampled counterfactual at (3, 3).
"""
from causal_repair.core import BoxSpace, GridPartition
from causal_repair.hp_model import NodeAssignment, build_model
from causal_repair.search import interpolate, is_one_minimal
from causal_repair.simulation import CellMapSimulator

ig = GridPartition(BoxSpace((0.0,), (1.0,)), (1.0,))
og = GridPartition(BoxSpace((0.0, 0.0), (4.0, 4.0)), (1.0, 1.0))
model = build_model(ig, og)
sim = CellMapSimulator(lambda cm: sum(og.multi_of(cm[0])) >= 4)

v = NodeAssignment(model, [[0, 0]])
vp = NodeAssignment(model, [[3, 3]])

for label, order in (("first dimension first", None), ("second dimension first", [(0, 1), (0, 0)])):
    r = interpolate(model, sim, v, vp, "incremental", order=order)
    lv = r.counterfactual_minimal.levels[0].tolist()
    print(f"{label:>23}: repaired cell {tuple(lv)}, {len(r.cause)} cause nodes, "
          f"1-minimal {is_one_minimal(model, sim, v, r.counterfactual_minimal)}")

print("\nBoth are valid answers; neither is a subset of the other.")
for k in range(4):
    print(" ".join("G" if j + k >= 4 else "." for j in range(4)), f"  level {k} of dim 2")
