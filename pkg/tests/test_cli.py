import csv
import json
import shutil
import subprocess
import sys

import pytest

from causal_repair.cli import (
    EXIT_ERROR,
    EXIT_INVALID,
    EXIT_NO_REPAIR,
    EXIT_OK,
    ConfigError,
    load_config,
    main,
)

from .conftest import DATA

SHIPPED = DATA / "mountain_car_flawed.json"


def write_config(tmp_path, **changes):
    d = json.loads(SHIPPED.read_text())
    for k, v in changes.items():
        d[k] = v
    p = tmp_path / "config.json"
    p.write_text(json.dumps(d))
    return p


def reduced_config(tmp_path, workers=1):
    return write_config(
        tmp_path,
        discretization={"mode": "center", "initialWidthsIn": [0.2, 0.02],
                        "initialWidthsOut": [0.2]},
        sampler={"p": 0.001, "alpha": 0.05, "seed": 1, "workers": workers})


def constant_config(tmp_path):
    d = {"schema": "causal-repair/config/1",
         "plant": {"name": "constant", "verdict": False, "inputBox": [[0], [1]],
                   "outputBox": [[0], [1]]},
         "controller": {"constant": [0.5]},
         "discretization": {"mode": "center", "initialWidthsIn": [1.0],
                            "initialWidthsOut": [0.5]},
         "sampler": {"p": 0.5, "alpha": 0.05, "seed": 0}}
    p = tmp_path / "const.json"
    p.write_text(json.dumps(d))
    return p


@pytest.fixture(scope="module")
def shipped_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    code = main(["repair", str(SHIPPED), "--out", str(out)])
    return code, out


def rows(path):
    with open(path) as fh:
        return list(csv.reader(fh))


def test_repair_writes_all_artifacts(shipped_run):
    code, out = shipped_run
    assert code == EXIT_OK
    for name in ("cause.json", "manifest.json", "factual_map.json", "heatmap_factual.csv",
                 "heatmap_counterfactual.csv", "heatmap_interpolated.csv",
                 "trajectory_factual.csv", "trajectory_repaired.csv"):
        assert (out / name).is_file(), name
    m = json.loads((out / "manifest.json").read_text())
    assert m["exit_code"] == 0 and m["error"] is None
    assert m["repaired_verdict"] is True and m["factual_verdict"] is False
    assert set(m["calls"]) == {"discretize", "sample", "interpolate"}
    assert m["model"]["nodes"] == 5042


def test_repaired_trajectory_reaches_goal(shipped_run):
    _, out = shipped_run
    traj = rows(out / "trajectory_repaired.csv")
    assert max(float(r[1]) for r in traj[1:]) >= 0.45
    assert max(float(r[1]) for r in rows(out / "trajectory_factual.csv")[1:]) < 0.45


def test_validate_emitted_repair(shipped_run):
    _, out = shipped_run
    assert main(["validate", str(out / "cause.json"), str(SHIPPED)]) == EXIT_OK


def test_validate_rejects_a_repair_with_one_node_restored(shipped_run, tmp_path):
    _, out = shipped_run
    d = json.loads((out / "cause.json").read_text())
    i = d["changed_cells"][0]["input_cell"]
    fact, rep = d["factual"][i], d["counterfactual_minimal"][i]
    level, target = sum(rep) - 1, sum(fact) - 1
    new = level + (1 if target > level else -1)
    d["counterfactual_minimal"][i] = [1] * (new + 1) + [0] * (len(rep) - new - 1)
    p = tmp_path / "edited.json"
    p.write_text(json.dumps(d))
    assert main(["validate", str(p), str(SHIPPED)]) == EXIT_INVALID


def test_validate_rejects_the_factual(shipped_run, tmp_path):
    _, out = shipped_run
    d = json.loads((out / "cause.json").read_text())
    d["counterfactual_minimal"] = d["factual"]
    p = tmp_path / "factual.json"
    p.write_text(json.dumps(d))
    assert main(["validate", str(p), str(SHIPPED)]) == EXIT_INVALID


def test_validate_detects_model_mismatch(shipped_run, tmp_path):
    _, out = shipped_run
    d = json.loads((out / "cause.json").read_text())
    d["model_hash"] = "0" * 16
    p = tmp_path / "bad.json"
    p.write_text(json.dumps(d))
    assert main(["validate", str(p), str(SHIPPED)]) == EXIT_ERROR


def test_heatmaps(shipped_run, tmp_path):
    _, out = shipped_run
    fact = rows(out / "heatmap_factual.csv")
    rep = rows(out / "heatmap_interpolated.csv")
    assert fact[0] == ["pos_cell", "vel_cell", "control_center"]
    assert len(fact) - 1 == 252 and len(rep) - 1 == 252
    changed = json.loads((out / "cause.json").read_text())["changed_cells"]
    assert sum(a != b for a, b in zip(fact[1:], rep[1:])) == len(changed) >= 1
    # the cause artifact exports the same panels
    assert main(["export-heatmap", str(out / "cause.json"), str(tmp_path / "h.csv"),
                 "--which", "repaired", "--names", "pos", "vel"]) == EXIT_OK
    assert rows(tmp_path / "h.csv") == rep


def test_heatmap_of_one_cell_model(tmp_path):
    g = {"inputGrid": {"lower": [0.0], "upper": [1.0], "widths": [1.0]},
         "outputGrid": {"lower": [0.0], "upper": [1.0], "widths": [0.5]}, "map": [1]}
    (tmp_path / "g.json").write_text(json.dumps(g))
    assert main(["export-heatmap", str(tmp_path / "g.json"), str(tmp_path / "h.csv")]) == 0
    assert rows(tmp_path / "h.csv") == [["x0_cell", "control_center"], ["0", "0.75"]]


def test_byte_identical_reruns(shipped_run, tmp_path):
    _, out = shipped_run
    assert main(["repair", str(SHIPPED), "--out", str(tmp_path)]) == EXIT_OK
    assert (tmp_path / "cause.json").read_bytes() == (out / "cause.json").read_bytes()


def test_constant_unsafe_plant_gives_failure_statement(tmp_path):
    out = tmp_path / "out"
    assert main(["repair", str(constant_config(tmp_path)), "--out", str(out)]) == EXIT_NO_REPAIR
    f = json.loads((out / "failure.json").read_text())
    assert f["schema"] == "causal-repair/failure/1" and f["N"] == 4
    assert f["bound"] <= 0.5
    assert not (out / "cause.json").exists()


def test_seed_env_override(tmp_path, monkeypatch):
    monkeypatch.setenv("CAUSAL_REPAIR_SEED", "17")
    out = tmp_path / "out"
    main(["repair", str(constant_config(tmp_path)), "--out", str(out)])
    assert json.loads((out / "failure.json").read_text())["seed"] == 17
    assert json.loads((out / "manifest.json").read_text())["seed"] == 17


def test_malformed_config_writes_nothing(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{"schema": "causal-repair/config/1",\n "plant": }')
    out = tmp_path / "out"
    assert main(["repair", str(p), "--out", str(out)]) == EXIT_ERROR
    assert not out.exists()
    with pytest.raises(ConfigError, match="line 2"):
        load_config(p)


@pytest.mark.parametrize("change,field", [
    ({"controller": {"scripted": "nope"}}, "controller.scripted"),
    ({"s0": [3.0, 0.0]}, "s0"),
    ({"property": "(F 0 110 (>= pos"}, "property"),
    ({"discretization": {"initialWidthsIn": [0.1], "initialWidthsOut": [0.1]}}, "discretization"),
    ({"interpolation": {"mode": "fastest"}}, "interpolation.mode"),
    ({"schema": "other"}, "schema"),
])
def test_config_diagnostics_name_the_field(tmp_path, change, field):
    with pytest.raises(ConfigError, match=field.replace(".", r"\.")):
        load_config(write_config(tmp_path, **change))


def test_thread_cap_does_not_change_results(tmp_path):
    cfg = reduced_config(tmp_path, workers=4)
    assert main(["repair", str(cfg), "--out", str(tmp_path / "a"), "--threads", "1"]) == 0
    assert main(["repair", str(cfg), "--out", str(tmp_path / "b"), "--threads", "4"]) == 0
    assert (tmp_path / "a" / "cause.json").read_bytes() == \
        (tmp_path / "b" / "cause.json").read_bytes()


def test_stagewise_commands_match_repair(tmp_path):
    cfg = reduced_config(tmp_path)
    assert main(["repair", str(cfg), "--out", str(tmp_path / "full")]) == EXIT_OK
    m, model, cf, cause = (tmp_path / n for n in ("map.json", "model.json", "cf.json",
                                                  "cause.json"))
    assert main(["discretize", str(cfg), str(m)]) == EXIT_OK
    assert main(["build-model", str(m), str(model)]) == EXIT_OK
    assert json.loads(model.read_text())["nodes"] == 63 * 10 + 2
    assert main(["search", str(cfg), str(m), str(cf)]) == EXIT_OK
    assert main(["interpolate", str(cfg), str(m), str(cf), str(cause)]) == EXIT_OK
    assert cause.read_text() == (tmp_path / "full" / "cause.json").read_text()
    assert main(["validate", str(cause), str(cfg)]) == EXIT_OK


def test_interpolate_rejects_foreign_counterfactual(tmp_path):
    cfg = reduced_config(tmp_path)
    m, cf = tmp_path / "map.json", tmp_path / "cf.json"
    main(["discretize", str(cfg), str(m)])
    main(["search", str(cfg), str(m), str(cf)])
    d = json.loads(cf.read_text())
    d["model_hash"] = "f" * 16
    cf.write_text(json.dumps(d))
    assert main(["interpolate", str(cfg), str(m), str(cf), str(tmp_path / "c.json")]) == 1


def test_weights_controller_config(tmp_path):
    shutil.copy(DATA / "reference_controller.json", tmp_path / "net.json")
    cfg = write_config(tmp_path, controller={"weights": "net.json"},
                       discretization={"mode": "center", "initialWidthsIn": [0.1, 0.01],
                                       "initialWidthsOut": [0.1]})
    assert main(["discretize", str(cfg), str(tmp_path / "m.json")]) == EXIT_OK
    assert len(json.loads((tmp_path / "m.json").read_text())["map"]) == 252


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "causal_repair", "repair",
                        str(constant_config(tmp_path)), "--out", str(tmp_path / "o")],
                       capture_output=True, text=True)
    assert r.returncode == EXIT_NO_REPAIR
    assert "unsatisfactory" in r.stdout
