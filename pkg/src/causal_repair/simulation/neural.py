"""Feed-forward network behaviors loaded from a JSON weights file.

Schema::

    {"layers": [{"w": [[...]], "b": [...], "act": "sigmoid" | "tanh" | "id"}, ...],
     "out_lo": [...], "out_hi": [...],
     "in_lo": [...], "in_hi": [...]}          # input box optional

The final layer's output is clamped into ``[out_lo, out_hi]``.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..core import Behavior, BoxSpace, DimensionError

ACTIVATIONS = {
    "sigmoid": lambda z: 1.0 / (1.0 + np.exp(-z)),
    "tanh": np.tanh,
    "id": lambda z: z,
}
# Global Lipschitz constant of each activation.
SLOPES = {"sigmoid": 0.25, "tanh": 1.0, "id": 1.0}


class NeuralBehavior(Behavior):
    kind = "neural"

    def __init__(self, layers, input_space: BoxSpace, output_space: BoxSpace):
        super().__init__(input_space, output_space)
        self.layers = []
        width = input_space.dims
        for n, (w, b, act) in enumerate(layers):
            w = np.asarray(w, dtype=float)
            b = np.asarray(b, dtype=float).reshape(-1)
            if act not in ACTIVATIONS:
                raise ValueError(f"layer {n}: unknown activation {act!r}")
            if w.ndim != 2 or w.shape[1] != width or w.shape[0] != len(b):
                raise DimensionError(f"layer {n}: weight shape {w.shape} does not take "
                                     f"{width} inputs to {len(b)} outputs")
            self.layers.append((w, b, act))
            width = w.shape[0]
        if width != output_space.dims:
            raise DimensionError(f"network emits {width} values, output space has "
                                 f"{output_space.dims} dimensions")

    def forward(self, X: np.ndarray) -> np.ndarray:
        h = np.asarray(X, dtype=float).reshape(-1, self.input_space.dims)
        for w, b, act in self.layers:
            h = ACTIVATIONS[act](h @ w.T + b)
        return h

    def _raw(self, x):
        return tuple(self.forward(np.asarray(x, dtype=float))[0])

    def evaluate_many(self, points):
        return np.clip(self.forward(points), self.output_space.lower, self.output_space.upper)

    def lipschitz_bound(self) -> float:
        """Upper bound on the max-norm Lipschitz constant (product of induced inf-norms)."""
        c = 1.0
        for w, _, act in self.layers:
            c *= np.abs(w).sum(axis=1).max() * SLOPES[act]
        return float(c)

    def to_dict(self) -> dict:
        return {
            "layers": [{"w": w.tolist(), "b": b.tolist(), "act": act} for w, b, act in self.layers],
            "in_lo": list(self.input_space.lower), "in_hi": list(self.input_space.upper),
            "out_lo": list(self.output_space.lower), "out_hi": list(self.output_space.upper),
        }


def load_weights(path_or_dict, input_space: BoxSpace | None = None) -> NeuralBehavior:
    if isinstance(path_or_dict, dict):
        d = path_or_dict
    else:
        d = json.loads(Path(path_or_dict).read_text())
    if input_space is None:
        if "in_lo" not in d:
            raise ValueError("weights file has no input box; pass input_space")
        input_space = BoxSpace(tuple(d["in_lo"]), tuple(d["in_hi"]))
    out = BoxSpace(tuple(d["out_lo"]), tuple(d["out_hi"]))
    layers = [(layer["w"], layer["b"], layer["act"]) for layer in d["layers"]]
    return NeuralBehavior(layers, input_space, out)


def eval_neural(nb: NeuralBehavior, x) -> tuple[float, ...]:
    if not nb.input_space.contains(x, tol=1e-12):
        raise ValueError(f"input {x} outside the network's input box")
    return nb(x)


REFERENCE_WEIGHTS = Path(__file__).resolve().parent.parent / "data" / "reference_controller.json"


def reference_controller() -> NeuralBehavior:
    """The shipped 8x16 sigmoid network over the mountain-car state box."""
    return load_weights(REFERENCE_WEIGHTS)
