"""How many misses justify giving up, and what the give-up statement says."""
from causal_repair.core import BoxSpace, GridPartition
from causal_repair.hp_model import build_model
from causal_repair.search import (
    SamplerConfig,
    required_samples,
    sample_counterfactual,
    wilson_upper_bound,
)
from causal_repair.simulation import ConstantSimulator

for p in (0.1, 0.01, 0.001, 0.0001):
    n = required_samples(p, 0.05)
    print(f"p = {p:<7} N = {n:>7}   Wilson bound after N misses = {wilson_upper_bound(n, 0.05):.3g}")

box = BoxSpace((0.0,), (1.0,))
model = build_model(GridPartition(box, (0.5,)), GridPartition(box, (0.5,)))
never = ConstantSimulator(False, box, box)
out = sample_counterfactual(model, never, SamplerConfig(p=0.01, seed=0))
print("\n" + out.statement)
