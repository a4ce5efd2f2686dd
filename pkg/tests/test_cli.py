import csv
import json

import numpy as np
import pytest

from helpers import DESK_DWELLS, quadratic_follower_game, scalar_game
from stgames.cli import load_config, main, substream
from stgames.game_model import spec_to_config

SCALAR_GRID = {
    "x_axes": [{"lower": -1.0, "upper": 1.0, "nodes": 9}],
    "dwell_candidates": [[0.2, 0.4, 0.6], [0.2, 0.4, 0.6]],
    "param_axes": [[[-1.0, 0.0, 1.0]], [[-1.0, 0.0, 1.0]]],
}

DESK_GAME = {"kind": "lq_pursuit", "leader": "evader", "dwell_candidates_pursuer": DESK_DWELLS,
             "dwell_candidates_evader": DESK_DWELLS, "z0": [1.0, 0.0]}


def write(tmp_path, name, cfg):
    path = tmp_path / name
    path.write_text(json.dumps(cfg, indent=1))
    return str(path)


def scalar_config(spec, **sections):
    cfg = {"game": spec_to_config(spec), "grid": SCALAR_GRID,
           "leader": {"kind": "constant", "dwell": 0.4, "param": [0.5]}}
    cfg.update(sections)
    return cfg


def run(command, config, out, *flags):
    return main([command, "--config", config, "--out", str(out), *flags])


def test_substreams_are_named_and_deterministic():
    assert substream(0, "flow") == substream(0, "flow")
    assert substream(0, "flow") != substream(0, "simulate")
    assert substream(0, "flow") != substream(1, "flow")


def test_zero_cost_game_converges_in_one_sweep(tmp_path):
    cfg = write(tmp_path, "zero.json", scalar_config(scalar_game()))
    assert run("solve-follower", cfg, tmp_path / "out") == 0
    report = json.loads((tmp_path / "out" / "report.json").read_text())
    assert report["converged"] and report["iterations"] == 1
    manifest = json.loads((tmp_path / "out" / "manifest.json").read_text())
    names = {e["path"] for e in manifest["files"]}
    assert {"follower_value.bin", "follower_value.json", "report.json"} <= names


def test_unreachable_tolerance_exits_2(tmp_path, capsys):
    cfg = write(tmp_path, "q.json", scalar_config(quadratic_follower_game()))
    assert run("solve-follower", cfg, tmp_path / "out", "--max-iters", "1", "--tol", "1e-12") == 2
    assert "NOT converged" in capsys.readouterr().out
    report = json.loads((tmp_path / "out" / "report.json").read_text())
    assert not report["converged"]
    assert json.loads((tmp_path / "out" / "manifest.json").read_text())["runs"][-1]["status"] == "max_iters"


def test_bad_config_reports_the_line(tmp_path, capsys):
    cfg = scalar_config(scalar_game())
    cfg["leader"]["dwell"] = 5.0
    path = write(tmp_path, "bad.json", cfg)
    assert run("solve-follower", path, tmp_path / "out") == 1
    err = capsys.readouterr().err
    line = next(i for i, s in enumerate(open(path), 1) if '"dwell": 5.0' in s)
    assert f"bad.json:{line}:" in err and "outside" in err


def test_malformed_json_reports_the_line(tmp_path, capsys):
    path = tmp_path / "broken.json"
    path.write_text('{\n "game": {\n  "kind": "lq_pursuit",,\n }\n}\n')
    assert run("baseline", str(path), tmp_path / "out") == 1
    assert "broken.json:3:" in capsys.readouterr().err


def test_missing_config_and_missing_game_section(tmp_path):
    assert run("baseline", str(tmp_path / "nope.json"), tmp_path / "out") == 1
    assert run("baseline", write(tmp_path, "empty.json", {"solver": {}}), tmp_path / "out") == 1


def test_scalar_riccati_baseline_prints_one(tmp_path, capsys):
    game = {"kind": "riccati", "A": [[0.0]], "B1": [[1.0]], "Q1": [[1.0]], "gamma": 0.0}
    assert run("baseline", write(tmp_path, "are.json", {"game": game}), tmp_path / "out") == 0
    assert "P = [[1.]]" in capsys.readouterr().out
    assert json.loads((tmp_path / "out" / "baseline.json").read_text())["P1"][0][0] == pytest.approx(1.0, abs=1e-12)


def test_zero_sum_baseline_fails_numerically(tmp_path):
    cfg = write(tmp_path, "zs.json", {"game": dict(DESK_GAME, zero_sum=True)})
    assert run("baseline", cfg, tmp_path / "out") == 2
    assert "error" in json.loads((tmp_path / "out" / "baseline.json").read_text())


def test_sweep_of_a_constant_leader_is_flat(tmp_path):
    cfg = write(tmp_path, "s.json", {"game": DESK_GAME, "leader": {"kind": "constant", "dwell": 0.55, "param": [0.3]},
                                     "sweep": {"policy": "leader"}})
    assert run("sweep", cfg, tmp_path / "out") == 0
    with open(tmp_path / "out" / "sensitivity.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 121
    assert {r["dwell"] for r in rows} == {"0.55"} or {float(r["dwell"]) for r in rows} == {0.55}
    assert len({r[list(r)[-1]] for r in rows}) == 1


@pytest.mark.parametrize("command", ["simulate", "verify", "sweep"])
def test_missing_artifacts_exit_1(tmp_path, command, capsys):
    cfg = write(tmp_path, "c.json", {"game": DESK_GAME})
    assert run(command, cfg, tmp_path / "out", "--artifacts", str(tmp_path / "empty")) == 1
    assert "error:" in capsys.readouterr().err


@pytest.fixture(scope="module")
def desk_artifacts(tmp_path_factory):
    root = tmp_path_factory.mktemp("desk")
    cfg = {"game": DESK_GAME, "leader": {"kind": "constant", "dwell": 0.55, "param": [0.0]},
           "solver": {"tol": 1e-6}, "verify": {"n_states": 20, "n_rollouts": 32}}
    path = write(root, "desk.json", cfg)
    assert run("solve-follower", path, root / "out") == 0
    return path, root / "out"


def test_desk_artifacts_verify(desk_artifacts, capsys):
    path, out = desk_artifacts
    assert run("verify", path, out) == 0
    payload = json.loads((out / "verify.json").read_text())
    assert payload["residual_ok"] and payload["rollout_ok"] and len(payload["states"]) == 20
    assert "FAIL" not in capsys.readouterr().out


def test_tampered_artifact_is_an_input_error(desk_artifacts, tmp_path):
    path, out = desk_artifacts
    copy = tmp_path / "copy"
    copy.mkdir()
    for f in out.iterdir():
        (copy / f.name).write_bytes(f.read_bytes())
    raw = bytearray((copy / "follower_value.bin").read_bytes())
    raw[0] ^= 1
    (copy / "follower_value.bin").write_bytes(bytes(raw))
    assert run("verify", path, tmp_path / "v", "--artifacts", str(copy)) == 1


def test_simulate_after_solve(desk_artifacts, tmp_path):
    path, out = desk_artifacts
    assert run("simulate", path, tmp_path / "sim", "--artifacts", str(out)) == 0
    costs = json.loads((tmp_path / "sim" / "costs.json").read_text())
    assert np.all(np.isfinite(costs["mean"]))
    assert (tmp_path / "sim" / "comparison.json").exists()


def test_manifest_keeps_earlier_runs(desk_artifacts, tmp_path):
    path, out = desk_artifacts
    dest = tmp_path / "sweep"
    assert run("sweep", path, dest, "--artifacts", str(out)) == 0
    assert run("sweep", path, dest, "--artifacts", str(out)) == 0
    manifest = json.loads((dest / "manifest.json").read_text())
    assert [r["command"] for r in manifest["runs"]] == ["sweep", "sweep"]


def hashes(out):
    return {e["path"]: e["sha256"] for e in json.loads((out / "manifest.json").read_text())["files"]}


def test_reruns_are_byte_identical(tmp_path):
    cfg = scalar_config(quadratic_follower_game(), simulate={"t_max": 5.0, "n_rollouts": 8})
    path = write(tmp_path, "q.json", cfg)
    for d in ("a", "b"):
        assert run("solve-follower", path, tmp_path / d, "--seed", "7") == 0
        assert run("simulate", path, tmp_path / d, "--seed", "7") == 0
    assert hashes(tmp_path / "a") == hashes(tmp_path / "b")
    assert len(hashes(tmp_path / "a")) >= 8


def test_nash_command(tmp_path):
    spec = scalar_game(kappa1=0.05, kappa2=0.05)
    cfg = write(tmp_path, "n.json", scalar_config(spec, nash={"damping": 0.5}))
    assert run("nash", cfg, tmp_path / "out", "--tol", "1e-8") == 0
    assert json.loads((tmp_path / "out" / "nash_report.json").read_text())["classification"] == "converged"
    assert run("nash", cfg, tmp_path / "bad", "--damping", "1.5") == 1


def leader_cfg(tmp_path, xi=None, **opt):
    sec = {"chi0": [[1.0, 0.0, 0.0, 0.0, 0.0, 0.0]], "step": 0.5}
    sec.update(opt)
    leader = {} if xi is None else {"xi": list(xi)}
    return write(tmp_path, "lead.json", {"game": DESK_GAME, "leader": leader, "leader_opt": sec, "solver": {"tol": 1e-6}})


def read_history(out):
    with open(out / "history.csv") as fh:
        return list(csv.DictReader(fh))


def test_optimize_leader_zero_iterations_only_evaluates(tmp_path):
    path = leader_cfg(tmp_path)
    assert run("optimize-leader", path, tmp_path / "out", "--outer-iters", "0") == 0
    rows = read_history(tmp_path / "out")
    assert len(rows) == 1 and rows[0]["iter"] == "0"
    saved = json.loads((tmp_path / "out" / "leader_xi.json").read_text())
    assert not np.any(saved["xi"]) and saved["best_iter"] == 0


def test_negative_step_decay_is_an_input_error(tmp_path):
    assert run("optimize-leader", leader_cfg(tmp_path, step_decay=-1.0), tmp_path / "out") == 1


@pytest.mark.slow
def test_step_decay_and_best_iterate(tmp_path):
    path = leader_cfg(tmp_path, step=0.05, step_decay=0.5)
    assert run("optimize-leader", path, tmp_path / "out", "--outer-iters", "3") == 0
    saved = json.loads((tmp_path / "out" / "leader_xi.json").read_text())
    J = [float(r["J1"]) for r in read_history(tmp_path / "out")]
    assert saved["best_objective"] == min(J) and J[saved["best_iter"]] == min(J)


@pytest.mark.slow
def test_optimize_leader_rerun_gives_identical_history(tmp_path):
    path = leader_cfg(tmp_path)
    for d in ("a", "b"):
        assert run("optimize-leader", path, tmp_path / d, "--outer-iters", "2") == 0
    assert (tmp_path / "a" / "history.csv").read_bytes() == (tmp_path / "b" / "history.csv").read_bytes()
    assert hashes(tmp_path / "a") == hashes(tmp_path / "b")


@pytest.mark.slow
def test_fd_and_implicit_first_steps_agree(tmp_path):
    # xi = 0 puts every leader decision on a grid node, where the interpolant has a kink
    xi0 = 0.5 * np.random.default_rng(0).normal(size=10)
    path = leader_cfg(tmp_path, xi=xi0)
    steps = {}
    for grad in ("implicit", "fd"):
        assert run("optimize-leader", path, tmp_path / grad, "--outer-iters", "1", "--grad", grad) == 0
        steps[grad] = np.array(json.loads((tmp_path / grad / "leader_xi.json").read_text())["xi"]) - xi0
    a, b = steps["implicit"], steps["fd"]
    assert np.linalg.norm(a) > 0
    angle = np.degrees(np.arccos(np.clip(a @ b / (np.linalg.norm(a) * np.linalg.norm(b)), -1, 1)))
    assert angle < 5.0


def test_config_line_lookup(tmp_path):
    cfg = load_config(write(tmp_path, "c.json", scalar_config(scalar_game())))
    assert cfg.text.splitlines()[cfg.line_of("leader", "dwell") - 1].strip().startswith('"dwell"')


def test_config_schema_tracks_the_code():
    import dataclasses
    from pathlib import Path

    import stgames.primitives as prim
    from stgames.lq_pursuit import LQPursuitConfig

    schema = json.loads((Path(__file__).parents[1] / "docs" / "config_schema.json").read_text())
    defs = schema["$defs"]
    lq = set(defs["lq_pursuit"]["properties"]) - {"kind"}
    assert lq == {f.name for f in dataclasses.fields(LQPursuitConfig)}
    assert set(defs["primitive"]["properties"]["kind"]["enum"]) == set(prim._REGISTRY)
    custom = spec_to_config(quadratic_follower_game())
    assert set(custom) <= set(defs["custom"]["properties"])
    assert set(custom["players"][0]) <= set(defs["player"]["properties"])


def test_test_configs_satisfy_the_schema():
    from pathlib import Path

    import jsonschema

    schema = json.loads((Path(__file__).parents[1] / "docs" / "config_schema.json").read_text())
    jsonschema.Draft202012Validator.check_schema(schema)
    good = [
        scalar_config(quadratic_follower_game(), simulate={"t_max": 5.0, "n_rollouts": 8}, nash={"damping": 0.5}),
        {"game": DESK_GAME, "leader": {"kind": "constant", "dwell": 0.55, "param": [0.0]}, "solver": {"tol": 1e-6},
         "verify": {"n_states": 20, "n_rollouts": 32}, "sweep": {"policy": "leader"}},
        {"game": DESK_GAME, "leader": {"xi": [0.0] * 10}, "leader_opt": {"chi0": [[1.0] + [0.0] * 5], "step": 0.5}},
        {"game": {"kind": "riccati", "A": [[0.0]], "B1": [[1.0]], "Q1": [[1.0]], "gamma": 0.0}},
    ]
    for cfg in good:
        jsonschema.validate(cfg, schema)
    with pytest.raises(jsonschema.ValidationError):
        jsonschema.validate({"game": dict(DESK_GAME, kapa=1.0)}, schema)
