"""Command-line pipeline: discretize, build the model, sample, interpolate, validate, export.

Exit codes: 0 repaired / valid, 1 error, 2 validation failed, 3 no counterfactual
found within the sample budget.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import platform
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .core import BoxSpace, GridPartition, RepresentativeBehavior, constant_behavior
from .discretization import (
    ContainmentError,
    DiscretizationConfig,
    RefinementBudgetError,
    center_sampled,
    discretize,
    discretize_fixed,
    read_map_json,
    write_map_json,
)
from .hp_model import EncodingError, NodeAssignment, build_model, decode, encode, model_from_dict
from .search import (
    ContractError,
    CountingSimulator,
    FailureStatement,
    SamplerConfig,
    describe_cause,
    interpolate,
    sample_counterfactual,
    verdict,
)
from .simulation import (
    ClosedLoopSimulator,
    ConstantSimulator,
    NumericDivergenceError,
    SimulatorConfig,
    load_weights,
    mountain_car_plant,
    parse_formula,
)
from .simulation.mountain_car import SCRIPTED
from .simulation.stl import Eventually, Predicate

EXIT_OK, EXIT_ERROR, EXIT_INVALID, EXIT_NO_REPAIR = 0, 1, 2, 3
CONFIG_SCHEMA = "causal-repair/config/1"
SEED_ENV = "CAUSAL_REPAIR_SEED"


class ConfigError(ValueError):
    """A config file that fails validation; the message names the offending field."""


class IncompatibleArtifactError(ValueError):
    """An artifact produced for a different model than the one it is used with."""


# -- config --------------------------------------------------------------------


@dataclass
class PipelineConfig:
    plant: dict
    s0: tuple[float, ...]
    prop: str
    controller: dict
    discretization: dict
    sampler: SamplerConfig
    interpolation_mode: str = "binary"
    interpolation_order: object = None
    output_dir: str = "out"
    base_dir: Path = field(default=Path("."), repr=False)

    @property
    def disc_mode(self) -> str:
        return self.discretization.get("mode", "refine")

    def disc_config(self) -> DiscretizationConfig:
        return DiscretizationConfig.from_dict(self.discretization)


def _require(d: dict, key: str, where: str):
    if key not in d:
        raise ConfigError(f"{where}: missing field '{key}'")
    return d[key]


def parse_config(d: dict, base_dir: Path = Path(".")) -> PipelineConfig:
    """Validate a config dict completely before any compute happens."""
    if not isinstance(d, dict):
        raise ConfigError("config must be a JSON object")
    if d.get("schema") != CONFIG_SCHEMA:
        raise ConfigError(f"schema: expected '{CONFIG_SCHEMA}', got {d.get('schema')!r}")
    plant = _require(d, "plant", "config")
    name = _require(plant, "name", "plant")
    if name not in ("mountain_car", "constant"):
        raise ConfigError(f"plant.name: unknown plant {name!r}")
    if name == "constant":
        _require(plant, "verdict", "plant")
        for key in ("inputBox", "outputBox"):
            box = _require(plant, key, "plant")
            try:
                BoxSpace(tuple(box[0]), tuple(box[1]))
            except (ValueError, TypeError, IndexError) as e:
                raise ConfigError(f"plant.{key}: {e}") from None
    elif not isinstance(plant.get("horizon", 110), int) or plant.get("horizon", 110) < 1:
        raise ConfigError("plant.horizon: must be a positive integer")

    s0 = tuple(float(v) for v in d.get("s0", (-0.5, 0.0)))
    prop = d.get("property", "(F 0 110 (>= pos 0.45))")
    try:
        parse_formula(prop)
    except (ValueError, TypeError) as e:
        raise ConfigError(f"property: {e}") from None

    ctrl = _require(d, "controller", "config")
    if not isinstance(ctrl, dict) or len(ctrl) != 1 or \
            next(iter(ctrl)) not in ("scripted", "weights", "constant"):
        raise ConfigError("controller: expected one of {scripted|weights|constant}")
    if "scripted" in ctrl and ctrl["scripted"] not in SCRIPTED:
        raise ConfigError(f"controller.scripted: unknown controller {ctrl['scripted']!r}; "
                          f"known: {sorted(SCRIPTED)}")
    if "weights" in ctrl and not (base_dir / ctrl["weights"]).is_file():
        raise ConfigError(f"controller.weights: file {ctrl['weights']!r} not found")

    disc = _require(d, "discretization", "config")
    if disc.get("mode", "refine") not in ("refine", "fixed", "center"):
        raise ConfigError(f"discretization.mode: unknown mode {disc.get('mode')!r}")
    try:
        DiscretizationConfig.from_dict(disc)
    except (KeyError, TypeError, ValueError) as e:
        raise ConfigError(f"discretization: {e}") from None

    s = d.get("sampler", {})
    try:
        sampler = SamplerConfig(p=s.get("p", 0.001), alpha=s.get("alpha", 0.05),
                                seed=int(s.get("seed", 0)),
                                max_samples_override=s.get("maxSamplesOverride"),
                                workers=int(s.get("workers", 1)))
    except (TypeError, ValueError) as e:
        raise ConfigError(f"sampler: {e}") from None

    interp = d.get("interpolation", {})
    mode = interp.get("mode", "binary")
    if mode not in ("incremental", "binary"):
        raise ConfigError(f"interpolation.mode: unknown mode {mode!r}")
    cfg = PipelineConfig(plant, s0, prop, ctrl, disc, sampler, mode, interp.get("order"),
                         d.get("outputDir", "out"), base_dir)
    try:
        build_simulator(cfg)
    except ValueError as e:
        raise ConfigError(f"s0: {e}") from None
    try:
        cfg.disc_config().validate_against(*plant_spaces(cfg))
    except ValueError as e:
        raise ConfigError(f"discretization: {e}") from None
    return cfg


def load_config(path) -> PipelineConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ConfigError(f"{path}: {e.strerror}") from None
    try:
        d = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: line {e.lineno} column {e.colno}: {e.msg}") from None
    return parse_config(d, path.parent)


def seed_of(cfg: PipelineConfig) -> int:
    env = os.environ.get(SEED_ENV)
    if env is None or env == "":
        return cfg.sampler.seed
    try:
        return int(env)
    except ValueError:
        raise ConfigError(f"{SEED_ENV}: not an integer: {env!r}") from None


# -- pipeline pieces -----------------------------------------------------------


def plant_spaces(cfg: PipelineConfig) -> tuple[BoxSpace, BoxSpace]:
    p = cfg.plant
    if p["name"] == "constant":
        return (BoxSpace(tuple(p["inputBox"][0]), tuple(p["inputBox"][1])),
                BoxSpace(tuple(p["outputBox"][0]), tuple(p["outputBox"][1])))
    plant = mountain_car_plant()
    return plant.input_space, plant.output_space


def input_names(cfg: PipelineConfig) -> list[str]:
    if cfg.plant["name"] == "mountain_car":
        return ["pos", "vel"]
    return [f"x{k}" for k in range(plant_spaces(cfg)[0].dims)]


def build_simulator(cfg: PipelineConfig):
    p = cfg.plant
    if p["name"] == "constant":
        return ConstantSimulator(bool(p["verdict"]), *plant_spaces(cfg))
    prop = parse_formula(cfg.prop)
    # Stopping early is sound only when reaching the goal settles the verdict.
    goal = None
    if isinstance(prop, Eventually) and prop.t1 == 0 and isinstance(prop.child, Predicate):
        goal = prop.child
    return ClosedLoopSimulator(SimulatorConfig(
        mountain_car_plant(p.get("horizon", 110)), cfg.s0, prop,
        stop_at_goal=bool(p.get("stopAtGoal", True)) and goal is not None, goal=goal))


def build_controller(cfg: PipelineConfig):
    c = cfg.controller
    in_space, out_space = plant_spaces(cfg)
    if "scripted" in c:
        return SCRIPTED[c["scripted"]]()
    if "weights" in c:
        return load_weights(cfg.base_dir / c["weights"], in_space)
    return constant_behavior(tuple(c["constant"]), in_space, out_space)


def discretize_stage(cfg: PipelineConfig, sim) -> RepresentativeBehavior:
    f = build_controller(cfg)
    dc = cfg.disc_config()
    in_space, out_space = plant_spaces(cfg)
    if cfg.disc_mode == "refine":
        return discretize(f, sim, dc).g
    in_grid = GridPartition(in_space, dc.initial_widths_in)
    out_grid = GridPartition(out_space, dc.initial_widths_out)
    if cfg.disc_mode == "fixed":
        return discretize_fixed(f, in_grid, out_grid, dc.samples_per_cell)
    return center_sampled(f, in_grid, out_grid)


def error_code(exc: BaseException) -> str:
    for cls, code in ((ConfigError, "config_invalid"), (RefinementBudgetError, "refinement_budget"),
                      (ContainmentError, "containment"), (ContractError, "contract"),
                      (IncompatibleArtifactError, "incompatible_artifact"),
                      (EncodingError, "encoding"), (NumericDivergenceError, "numeric_divergence"),
                      (OSError, "io")):
        if isinstance(exc, cls):
            return code
    return "internal"


# -- artifacts -----------------------------------------------------------------


def write_heatmap(g: RepresentativeBehavior, path, names=None) -> int:
    """One row per input cell: its multi-index followed by the control value at the cell."""
    ig = g.input_grid
    names = names or [f"x{k}" for k in range(ig.dims)]
    d_out = g.output_grid.dims
    ctrl_cols = ["control_center"] if d_out == 1 else [f"control_{k}_center" for k in range(d_out)]
    centers = g.output_grid.centers()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"{n}_cell" for n in names] + ctrl_cols)
        for i, j in enumerate(g.cell_map):
            w.writerow([*ig.multi_of(i), *(repr(float(c)) for c in centers[j])])
    return ig.size


def _dump(obj, path) -> None:
    Path(path).write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n")


def _load_json(path) -> dict:
    return json.loads(Path(path).read_text())


def _versions() -> dict:
    return {"causal_repair": __version__, "numpy": np.__version__,
            "python": platform.python_version()}


def cause_model(d: dict, sim=None):
    model = model_from_dict(d, sim)
    if model.hash != d.get("model_hash"):
        raise IncompatibleArtifactError("model hash does not match the artifact's grids")
    return model


def _check_spaces(model, cfg: PipelineConfig) -> None:
    in_space, out_space = plant_spaces(cfg)
    if model.input_grid.space != in_space or model.output_grid.space != out_space:
        raise IncompatibleArtifactError("artifact grids do not cover the config's plant spaces")


# -- commands ------------------------------------------------------------------


def cmd_repair(config_path, out_dir=None, threads=None) -> int:
    try:
        cfg = load_config(config_path)
        seed = seed_of(cfg)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ERROR
    out = Path(out_dir or cfg.base_dir / cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    workers = cfg.sampler.workers if threads is None else max(1, min(cfg.sampler.workers, threads))
    scfg = SamplerConfig(cfg.sampler.p, cfg.sampler.alpha, seed,
                         cfg.sampler.max_samples_override, workers)
    manifest = {"schema": "causal-repair/manifest/1", "seed": seed, "versions": _versions(),
                "config": str(config_path), "workers": workers, "calls": {}, "wall_s": {},
                "exit_code": None, "error": None}
    names = input_names(cfg)
    try:
        base_sim = build_simulator(cfg)
        f = build_controller(cfg)

        t = time.perf_counter()
        sim = CountingSimulator(base_sim)
        g = discretize_stage(cfg, sim)
        manifest["calls"]["discretize"] = sim.calls
        manifest["wall_s"]["discretize"] = time.perf_counter() - t
        write_map_json(g, out / "factual_map.json", inputNames=names)

        model = build_model(g.input_grid, g.output_grid, base_sim)
        v = encode(g, model)
        manifest["model"] = {"hash": model.hash, "m": model.m, "n": model.n,
                             "nodes": model.node_count,
                             "log10_valid_assignments": model.log10_valid_assignments}
        write_heatmap(g, out / "heatmap_factual.csv", names)
        with open(out / "trajectory_factual.csv", "w"):
            pass
        if hasattr(base_sim, "rollout"):
            base_sim.rollout(f).to_csv(out / "trajectory_factual.csv")
        manifest["factual_verdict"] = bool(base_sim(f))
        if verdict(model, base_sim, v):
            raise ContractError("discretized factual behavior satisfies the property; "
                                "nothing to repair")

        t = time.perf_counter()
        sim = CountingSimulator(base_sim)
        found = sample_counterfactual(model, sim, scfg)
        manifest["calls"]["sample"] = sim.calls
        manifest["wall_s"]["sample"] = time.perf_counter() - t
        if isinstance(found, FailureStatement):
            _dump(found.to_dict(), out / "failure.json")
            print(found.statement)
            manifest["exit_code"] = EXIT_NO_REPAIR
            _dump(manifest, out / "manifest.json")
            return EXIT_NO_REPAIR

        t = time.perf_counter()
        result = interpolate(model, base_sim, v, found, cfg.interpolation_mode,
                             cfg.interpolation_order)
        manifest["calls"]["interpolate"] = result.simulator_calls
        manifest["step_ops"] = result.step_ops
        manifest["wall_s"]["interpolate"] = time.perf_counter() - t
        _dump(result.to_dict(), out / "cause.json")
        write_heatmap(decode(found, model), out / "heatmap_counterfactual.csv", names)
        write_heatmap(result.repaired_behavior, out / "heatmap_interpolated.csv", names)
        repaired_ok = bool(base_sim(result.repaired_behavior))
        if hasattr(base_sim, "rollout"):
            base_sim.rollout(result.repaired_behavior).to_csv(out / "trajectory_repaired.csv")
        summary = describe_cause(result.changed_cells, model.m)
        manifest.update(repaired_verdict=repaired_ok, cause_size=len(result.cause),
                        changed_cells=len(result.changed_cells), summary=summary)
        manifest["exit_code"] = EXIT_OK if repaired_ok else EXIT_INVALID
        print(summary)
        print(f"{len(result.cause)} cause nodes, repaired verdict {int(repaired_ok)}")
    except Exception as e:  # surfaced in the manifest, then exit 1
        manifest["error"] = {"code": error_code(e), "message": str(e)}
        manifest["exit_code"] = EXIT_ERROR
        print(f"error [{error_code(e)}]: {e}", file=sys.stderr)
    _dump(manifest, out / "manifest.json")
    return manifest["exit_code"]


def cmd_validate(repair_path, config_path) -> int:
    try:
        cfg = load_config(config_path)
        d = _load_json(repair_path)
        sim = build_simulator(cfg)
        model = cause_model(d, sim)
        _check_spaces(model, cfg)
        blocks = d.get("counterfactual_minimal", d.get("blocks"))
        v_star = NodeAssignment.from_bits(model, [b for blk in blocks for b in blk])
        ok = verdict(model, sim, v_star)
    except Exception as e:
        print(f"error [{error_code(e)}]: {e}", file=sys.stderr)
        return EXIT_ERROR
    print(f"verdict {int(ok)}")
    return EXIT_OK if ok else EXIT_INVALID


def _behavior_from_artifact(d: dict, which: str) -> RepresentativeBehavior:
    if "map" in d:
        return RepresentativeBehavior.from_dict(d)
    model = cause_model(d)
    key = {"factual": "factual", "counterfactual": "counterfactual_raw",
           "repaired": "counterfactual_minimal"}[which]
    blocks = d[key]
    return decode(NodeAssignment.from_bits(model, [b for blk in blocks for b in blk]), model)


def cmd_export_heatmap(artifact_path, out_path, which="repaired", names=None) -> int:
    try:
        d = _load_json(artifact_path)
        g = _behavior_from_artifact(d, which)
        names = names or d.get("inputNames")
        rows = write_heatmap(g, out_path, names)
    except Exception as e:
        print(f"error [{error_code(e)}]: {e}", file=sys.stderr)
        return EXIT_ERROR
    print(f"{rows} rows written to {out_path}")
    return EXIT_OK


def cmd_discretize(config_path, out_path) -> int:
    try:
        cfg = load_config(config_path)
        g = discretize_stage(cfg, build_simulator(cfg))
        write_map_json(g, out_path, inputNames=input_names(cfg))
    except Exception as e:
        print(f"error [{error_code(e)}]: {e}", file=sys.stderr)
        return EXIT_ERROR
    print(f"{g.input_grid.size} input cells, {g.output_grid.size} output cells")
    return EXIT_OK


def cmd_build_model(map_path, out_path) -> int:
    try:
        g = read_map_json(map_path)
        model = build_model(g.input_grid, g.output_grid)
        _dump({**model.summary(), "factual": encode(g, model).blocks()}, out_path)
    except Exception as e:
        print(f"error [{error_code(e)}]: {e}", file=sys.stderr)
        return EXIT_ERROR
    print(f"{model.node_count} nodes, 10^{model.log10_valid_assignments:.2f} valid assignments")
    return EXIT_OK


def _factual(map_path, cfg):
    sim = build_simulator(cfg)
    g = read_map_json(map_path)
    model = build_model(g.input_grid, g.output_grid, sim)
    _check_spaces(model, cfg)
    return sim, model, encode(g, model)


def cmd_search(config_path, map_path, out_path, threads=None) -> int:
    try:
        cfg = load_config(config_path)
        sim, model, _ = _factual(map_path, cfg)
        workers = cfg.sampler.workers if threads is None else max(1, min(cfg.sampler.workers,
                                                                          threads))
        scfg = SamplerConfig(cfg.sampler.p, cfg.sampler.alpha, seed_of(cfg),
                             cfg.sampler.max_samples_override, workers)
        found = sample_counterfactual(model, sim, scfg)
        if isinstance(found, FailureStatement):
            _dump(found.to_dict(), out_path)
            print(found.statement)
            return EXIT_NO_REPAIR
        _dump(found.to_dict(), out_path)
    except Exception as e:
        print(f"error [{error_code(e)}]: {e}", file=sys.stderr)
        return EXIT_ERROR
    return EXIT_OK


def cmd_interpolate(config_path, map_path, counterfactual_path, out_path) -> int:
    try:
        cfg = load_config(config_path)
        sim, model, v = _factual(map_path, cfg)
        d = _load_json(counterfactual_path)
        if d.get("model_hash") != model.hash:
            raise IncompatibleArtifactError("counterfactual was sampled for a different model")
        vp = NodeAssignment.from_dict(model, d)
        result = interpolate(model, sim, v, vp, cfg.interpolation_mode, cfg.interpolation_order)
        _dump(result.to_dict(), out_path)
    except Exception as e:
        print(f"error [{error_code(e)}]: {e}", file=sys.stderr)
        return EXIT_ERROR
    print(f"{len(result.cause)} cause nodes, {result.simulator_calls} simulator calls")
    return EXIT_OK


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="causal-repair", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="cmd", required=True)
    p = sub.add_parser("repair", help="run the whole pipeline")
    p.add_argument("config")
    p.add_argument("--out", help="output directory (overrides outputDir)")
    p.add_argument("--threads", type=int, help="cap on sampler worker threads")
    p = sub.add_parser("validate", help="re-simulate a repair")
    p.add_argument("repair")
    p.add_argument("config")
    p = sub.add_parser("export-heatmap", help="cell map or cause JSON to CSV")
    p.add_argument("artifact")
    p.add_argument("out")
    p.add_argument("--which", choices=("factual", "counterfactual", "repaired"),
                   default="repaired")
    p.add_argument("--names", nargs="+", help="input dimension names")
    p = sub.add_parser("discretize")
    p.add_argument("config")
    p.add_argument("out")
    p = sub.add_parser("build-model")
    p.add_argument("map")
    p.add_argument("out")
    p = sub.add_parser("search")
    p.add_argument("config")
    p.add_argument("map")
    p.add_argument("out")
    p.add_argument("--threads", type=int)
    p = sub.add_parser("interpolate")
    p.add_argument("config")
    p.add_argument("map")
    p.add_argument("counterfactual")
    p.add_argument("out")
    a = ap.parse_args(argv)
    if a.cmd == "repair":
        return cmd_repair(a.config, a.out, a.threads)
    if a.cmd == "validate":
        return cmd_validate(a.repair, a.config)
    if a.cmd == "export-heatmap":
        return cmd_export_heatmap(a.artifact, a.out, a.which, a.names)
    if a.cmd == "discretize":
        return cmd_discretize(a.config, a.out)
    if a.cmd == "build-model":
        return cmd_build_model(a.map, a.out)
    if a.cmd == "search":
        return cmd_search(a.config, a.map, a.out, a.threads)
    return cmd_interpolate(a.config, a.map, a.counterfactual, a.out)
