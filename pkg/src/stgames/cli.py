"""Command-line front end: ``stgames <command> --config cfg.json --out DIR``.

Exit codes: 0 success, 1 input error (bad config, missing artifacts),
2 numerical non-convergence or a failed verification check.

Every randomized step draws its seed from ``--seed`` through a named
substream, so a rerun with the same config and seed reproduces every
output byte for byte. The only timestamp lives in ``manifest.json``
under ``metadata``.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import hashlib
import json
import logging
import sys
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import __version__
from .follower_dp import DEFAULT_MC_PATHS, StackelbergOperator, node_classes, value_iteration
from .game_model import AugmentedState, GameSpec, SpecError, spec_from_config, validate_spec
from .leader_opt import LeaderPolicyHead, LeaderProblem, SmoothingConfig, optimize_leader
from .lq_pursuit import (
    LQPursuitConfig,
    RiccatiError,
    build_game,
    build_lq_grid,
    continuous_rollout,
    coupled_riccati,
    policy_sensitivity_sweep,
    riccati_baseline,
    run_comparison,
    save_sensitivity_csv,
)
from .nash_relax import nash_iterate
from .pdmp_sim import monte_carlo_costs, rollout
from .policies import ConstantPolicy, TablePolicy, TriggerPolicy
from .value_grid import GridError, GridSpec, ValueGrid, build_grid, interpolate, load_value_grid, save_value_grid

log = logging.getLogger("stgames")

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 1, 2


class ConfigError(Exception):
    """Input problem; ``line`` points into the config file when known."""

    def __init__(self, msg: str, path: str | None = None, line: int | None = None):
        self.path, self.line = path, line
        where = f"{path}:{line}: " if path and line else (f"{path}: " if path else "")
        super().__init__(where + msg)


# ---------------------------------------------------------------- config


@dataclass
class Config:
    data: dict
    text: str
    path: str

    def line_of(self, *keys: str) -> int | None:
        """Line of the last key in ``keys``, searched in nesting order."""
        pos = 0
        for k in keys:
            i = self.text.find(f'"{k}"', pos)
            if i < 0:
                return None
            pos = i + 1
        return self.text.count("\n", 0, pos) + 1

    def error(self, msg: str, *keys: str) -> ConfigError:
        return ConfigError(msg, self.path, self.line_of(*keys) if keys else None)

    def section(self, name: str) -> dict:
        sec = self.data.get(name, {})
        if not isinstance(sec, dict):
            raise self.error(f"section '{name}' must be an object", name)
        return sec


def load_config(path: str | Path) -> Config:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config: {e.strerror}", str(p)) from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"invalid JSON: {e.msg} (column {e.colno})", str(p), e.lineno) from None
    if not isinstance(data, dict):
        raise ConfigError("top level must be an object", str(p), 1)
    if "game" not in data:
        raise ConfigError("missing required section 'game'", str(p), 1)
    return Config(data, text, str(p))


def substream(seed: int, name: str) -> int:
    """Deterministic child seed for a named randomness consumer."""
    ss = np.random.SeedSequence([int(seed), zlib.crc32(name.encode())])
    return int(ss.generate_state(1, dtype=np.uint32)[0])


@dataclass
class Problem:
    spec: GameSpec
    grid: GridSpec
    lq: LQPursuitConfig | None


def build_problem(cfg: Config) -> Problem:
    game = cfg.section("game")
    kind = game.get("kind", "custom")
    lq = None
    try:
        if kind == "lq_pursuit":
            lq = LQPursuitConfig.from_dict({k: v for k, v in game.items() if k != "kind"})
            spec = build_game(lq)
        elif kind == "custom":
            spec = spec_from_config(game)
        else:
            raise cfg.error(f"unknown game kind '{kind}' (expected 'lq_pursuit' or 'custom')", "game", "kind")
    except ConfigError:
        raise
    except (SpecError, KeyError, TypeError, ValueError) as e:
        raise cfg.error(f"invalid game: {e}", "game") from None
    problems = validate_spec(spec)
    if problems:
        raise cfg.error("game fails validation: " + "; ".join(problems), "game")
    gsec = cfg.data.get("grid")
    try:
        if gsec is None:
            if lq is None:
                raise cfg.error("custom games need a 'grid' section")
            grid = build_lq_grid(lq, spec)
        else:
            x_axes = [_axis(a) for a in gsec["x_axes"]]
            grid = build_grid(
                spec,
                x_axes,
                gsec["dwell_candidates"],
                [[_axis(a) for a in pa] for pa in gsec["param_axes"]],
            )
    except ConfigError:
        raise
    except (GridError, SpecError, KeyError, TypeError, ValueError) as e:
        raise cfg.error(f"invalid grid: {e}", "grid") from None
    return Problem(spec, grid, lq)


def _axis(a) -> np.ndarray:
    """Explicit node list or {"lower", "upper", "nodes"}."""
    if isinstance(a, dict):
        return np.linspace(float(a["lower"]), float(a["upper"]), int(a["nodes"]))
    return np.asarray(a, dtype=float)


def leader_policy(cfg: Config, prob: Problem, artifacts: Path | None = None) -> TriggerPolicy:
    sec = cfg.section("leader")
    kind = sec.get("kind", "constant")
    p1 = prob.spec.player(1)
    if kind == "constant":
        dwell = float(sec.get("dwell", p1.t_under))
        param = np.asarray(sec.get("param", np.zeros(p1.param_dim)), dtype=float)
        if not p1.t_under <= dwell <= p1.t_over:
            raise cfg.error(f"leader dwell {dwell} outside [{p1.t_under}, {p1.t_over}]", "leader", "dwell")
        if param.shape != (p1.param_dim,):
            raise cfg.error(f"leader param must have {p1.param_dim} entries", "leader", "param")
        return ConstantPolicy(1, dwell, param)
    if kind == "head":
        head = LeaderPolicyHead(prob.spec)
        return head.table(leader_xi(cfg, head), prob.grid)
    if kind == "table":
        stem = sec.get("path")
        if stem is None:
            raise cfg.error("table leader needs 'path'", "leader")
        stem = Path(stem)
        if not stem.is_absolute():
            stem = Path(cfg.path).parent / stem
        return _load_table(stem)
    raise cfg.error(f"unknown leader kind '{kind}'", "leader", "kind")


def leader_xi(cfg: Config, head: LeaderPolicyHead) -> np.ndarray:
    xi = cfg.section("leader").get("xi")
    if xi is None:
        return np.zeros(head.dim)
    xi = np.asarray(xi, dtype=float)
    if xi.shape != (head.dim,):
        raise cfg.error(f"leader xi must have {head.dim} entries", "leader", "xi")
    return xi


def _load_table(stem: Path) -> TablePolicy:
    try:
        return TablePolicy.load(stem)
    except (OSError, KeyError, ValueError) as e:
        raise ConfigError(f"cannot load policy table {stem}: {e}") from None


def _load_values(stem: Path) -> ValueGrid:
    try:
        return load_value_grid(stem)
    except (OSError, KeyError, ValueError) as e:
        raise ConfigError(f"cannot load value table {stem}: {e}") from None


def initial_states(cfg: Config, prob: Problem, section: str) -> np.ndarray:
    """``chi0`` rows from a config section, defaulting to z0 with both clocks at zero."""
    lay = prob.spec.layout
    rows = cfg.section(section).get("chi0")
    if rows is None:
        x0 = prob.lq.z0 if prob.lq is not None else np.zeros(lay.n)
        return lay.pack(x0, 0.0, np.zeros(lay.m1), 0.0, np.zeros(lay.m2))
    arr = np.atleast_2d(np.asarray(rows, dtype=float))
    if arr.shape[1] != lay.dim:
        raise cfg.error(f"chi0 rows must have {lay.dim} entries (x, sigma1, theta1, sigma2, theta2 concatenated)", section, "chi0")
    return arr


def solver_settings(cfg: Config, args) -> tuple[float, int, int]:
    s = cfg.section("solver")
    tol = args.tol if args.tol is not None else float(s.get("tol", 1e-6))
    iters = args.max_iters if args.max_iters is not None else int(s.get("max_iters", 10_000))
    n_mc = int(s.get("n_mc", DEFAULT_MC_PATHS))
    if not tol > 0 or iters < 0 or n_mc < 1:
        raise cfg.error("solver needs tol > 0, max_iters >= 0, n_mc >= 1", "solver")
    return tol, iters, n_mc


# -------------------------------------------------------------- manifest


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with path.open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out: Path, command: str, cfg: Config, seed: int, files: list[Path], status: str) -> Path:
    """Record produced files with their hashes; earlier runs into the same directory are kept."""
    path = out / "manifest.json"
    runs, known = [], set()
    if path.exists():
        try:
            old = json.loads(path.read_text())
            runs = list(old.get("runs", []))
            known = {e["path"] for e in old.get("files", [])}
        except (ValueError, KeyError, TypeError):
            pass
    known |= {str(f.relative_to(out)) for f in files}
    entries = [{"path": p, "sha256": _sha256(out / p), "bytes": (out / p).stat().st_size}
               for p in sorted(known) if (out / p).exists()]
    runs.append({
        "command": command,
        "status": status,
        "seed": seed,
        "config": cfg.path,
        "config_sha256": hashlib.sha256(cfg.text.encode()).hexdigest(),
    })
    manifest = {
        "runs": runs,
        "files": entries,
        "metadata": {"version": __version__, "created": _dt.datetime.now(_dt.timezone.utc).isoformat()},
    }
    path.write_text(json.dumps(manifest, indent=1))
    return path


def check_manifest(out: Path) -> dict:
    path = out / "manifest.json"
    if not path.exists():
        raise ConfigError(f"no manifest in {out}")
    manifest = json.loads(path.read_text())
    for e in manifest["files"]:
        f = out / e["path"]
        if not f.exists():
            raise ConfigError(f"artifact {f} listed in the manifest is missing")
        if _sha256(f) != e["sha256"]:
            raise ConfigError(f"artifact {f} does not match its manifest hash")
    return manifest


def _dump(path: Path, obj: Any) -> Path:
    path.write_text(json.dumps(obj, indent=1, sort_keys=True))
    return path


# --------------------------------------------------------------- commands


def cmd_solve_follower(cfg: Config, out: Path, args) -> tuple[int, list[Path], str]:
    prob = build_problem(cfg)
    tol, iters, n_mc = solver_settings(cfg, args)
    pi1 = leader_policy(cfg, prob)
    try:
        v, pi2, report = value_iteration(prob.spec, pi1, prob.grid, tol, iters, n_mc, substream(args.seed, "flow"))
    except GridError as e:
        raise ConfigError(str(e)) from None
    files = save_value_grid(v, out / "follower_value")
    files += pi2.save(out / "follower_policy")
    if isinstance(pi1, TablePolicy):
        files += pi1.save(out / "leader_policy")
    files.append(report.save(out / "report.json"))
    print(f"value iteration: {report.iterations} sweeps, residual {report.final_residual:.3e}, "
          f"{'converged' if report.converged else 'NOT converged'}")
    return (EXIT_OK if report.converged else EXIT_NUMERIC), files, "converged" if report.converged else "max_iters"


def cmd_optimize_leader(cfg: Config, out: Path, args) -> tuple[int, list[Path], str]:
    prob = build_problem(cfg)
    tol, _, n_mc = solver_settings(cfg, args)
    sec = cfg.section("leader_opt")
    head = LeaderPolicyHead(prob.spec, sec.get("mask"))
    xi0 = leader_xi(cfg, head)
    chi0 = initial_states(cfg, prob, "leader_opt")
    smoothing = SmoothingConfig(
        temperature=args.temperature if args.temperature is not None else float(sec.get("temperature", 0.05)),
        margin=float(sec.get("margin", 1e-2)),
        enabled=bool(sec.get("smoothing", True)),
        anneal=float(sec.get("anneal", 1.0)),
    )
    outer = args.outer_iters if args.outer_iters is not None else int(sec.get("outer_iters", 10))
    step = args.step if args.step is not None else sec.get("step", 0.1)
    decay = float(sec.get("step_decay", 0.0))
    if decay < 0:
        raise cfg.error("step_decay must be non-negative", "leader_opt", "step_decay")
    if decay and np.isscalar(step):
        step = (lambda a: lambda k: a / (k + 1) ** decay)(float(step))
    grad = args.grad or sec.get("grad", "implicit")
    problem = LeaderProblem(prob.spec, prob.grid, head, chi0, n_mc, substream(args.seed, "flow"), inner_tol=tol)
    xi, hist = optimize_leader(
        problem, xi0, schedule=step, inner_tol=tol, outer_iters=outer, grad=grad,
        objective=sec.get("objective", "grid"), smoothing=smoothing,
        fd_step=float(sec.get("fd_step", 1e-3)), n_rollouts=int(sec.get("n_rollouts", 16)),
        seed=substream(args.seed, "leader_mc"),
    )
    files = [hist.to_csv(out / "history.csv")]
    hist.timing_csv(out / "history_timing.csv")  # wall clock: not hashed, not reproducible
    best = hist.best
    files.append(_dump(out / "leader_xi.json", {"xi": xi.tolist(), "stopped": hist.stopped, "best_iter": hist.iters[best],
                                                "best_objective": hist.objective[best], "best_xi": hist.xi[best].tolist()}))
    table = head.table(xi, prob.grid)
    files += table.save(out / "leader_policy")
    ok = hist.stopped != "inner value iteration did not converge"
    if ok:
        v, pi2, report = value_iteration(prob.spec, table, prob.grid, tol, args.max_iters or 10_000, n_mc,
                                         substream(args.seed, "flow"))
        files += save_value_grid(v, out / "follower_value")
        files += pi2.save(out / "follower_policy")
        files.append(report.save(out / "report.json"))
        ok = report.converged
    for k, J, g in zip(hist.iters, hist.objective, hist.grad_norm):
        print(f"iter {k:3d}  J1 {J:.10g}  |grad| {g:.3e}")
    return (EXIT_OK if ok else EXIT_NUMERIC), files, hist.stopped


def cmd_nash(cfg: Config, out: Path, args) -> tuple[int, list[Path], str]:
    prob = build_problem(cfg)
    tol, iters, n_mc = solver_settings(cfg, args)
    damping = args.damping if args.damping is not None else float(cfg.section("nash").get("damping", 0.5))
    if not 0 < damping <= 1:
        raise cfg.error("damping must lie in (0, 1]", "nash", "damping")
    iters = args.max_iters if args.max_iters is not None else int(cfg.section("nash").get("max_iters", 5000))
    v1, v2, report = nash_iterate(prob.spec, prob.grid, damping, tol, iters, n_mc, substream(args.seed, "flow"))
    files = save_value_grid(v1, out / "nash_value1") + save_value_grid(v2, out / "nash_value2")
    files.append(report.save(out / "nash_report.json"))
    print(f"nash relaxation: {report.classification} after {report.iterations} sweeps")
    return (EXIT_OK if report.classification == "converged" else EXIT_NUMERIC), files, report.classification


def _solved_policies(cfg: Config, prob: Problem, art: Path) -> tuple[TriggerPolicy, TriggerPolicy]:
    fp = art / "follower_policy.json"
    if not fp.exists():
        raise ConfigError(f"no follower policy in {art}; run solve-follower or optimize-leader first")
    pi2 = _load_table(art / "follower_policy")
    pi1 = _load_table(art / "leader_policy") if (art / "leader_policy.json").exists() else leader_policy(cfg, prob)
    return pi1, pi2


def cmd_simulate(cfg: Config, out: Path, args) -> tuple[int, list[Path], str]:
    prob = build_problem(cfg)
    art = Path(args.artifacts) if args.artifacts else out
    pi1, pi2 = _solved_policies(cfg, prob, art)
    sec = cfg.section("simulate")
    t_max = float(sec.get("t_max", 20.0))
    n = int(sec.get("n_rollouts", 32))
    chi0 = initial_states(cfg, prob, "simulate")
    seed = substream(args.seed, "simulate")
    traj = rollout(prob.spec, AugmentedState.from_vector(prob.spec.layout, chi0[0]), pi1, pi2, t_max, seed)
    files = [traj.to_csv(out / "trajectory.csv"), traj.to_event_log(out / "events.json")]
    mean, se = monte_carlo_costs(prob.spec, chi0, pi1, pi2, t_max, n, seed)
    files.append(_dump(out / "costs.json", {"chi0": chi0.tolist(), "mean": mean.tolist(), "standard_error": se.tolist(),
                                            "t_max": t_max, "n_rollouts": n}))
    if prob.lq is not None and sec.get("compare_baseline", True):
        try:
            report = run_comparison(prob.lq, pi1, pi2, seed, t_max)
            files += report.save(out, "comparison")
        except RiccatiError as e:
            log.warning("baseline comparison skipped: %s", e)
    print("discounted costs (player 1, player 2):", " ".join(f"{m:.6g}" for m in mean[0]))
    return EXIT_OK, files, "ok"


def cmd_sweep(cfg: Config, out: Path, args) -> tuple[int, list[Path], str]:
    prob = build_problem(cfg)
    sec = cfg.section("sweep")
    which = sec.get("policy", "follower")
    if which == "leader":
        pol = leader_policy(cfg, prob)
    elif which == "follower":
        art = Path(args.artifacts) if args.artifacts else out
        pol = _solved_policies(cfg, prob, art)[1]
    else:
        raise cfg.error("sweep policy must be 'leader' or 'follower'", "sweep", "policy")
    opp = prob.spec.player(3 - pol.owner)
    s_opp = np.asarray(sec.get("sigma_opp", np.linspace(0.0, opp.t_over, 11)), dtype=float)
    hi = prob.spec.state_upper[0]
    dist = np.asarray(sec.get("distances", np.linspace(0.0, hi, 11)), dtype=float)
    table = policy_sensitivity_sweep(pol, prob.spec, s_opp, dist, sec.get("velocity"), sec.get("theta_opp"),
                                     sec.get("direction"))
    files = [save_sensitivity_csv(table, out / "sensitivity.csv")]
    print(f"sensitivity table: {table.shape[0]} rows")
    return EXIT_OK, files, "ok"


def cmd_baseline(cfg: Config, out: Path, args) -> tuple[int, list[Path], str]:
    game = cfg.section("game")
    if game.get("kind") == "riccati":
        try:
            mats = {k: np.atleast_2d(np.asarray(game[k], dtype=float)) for k in ("A", "B1", "Q1")}
            n, m1 = mats["B1"].shape
            B2 = np.atleast_2d(np.asarray(game.get("B2", np.zeros((n, 1))), dtype=float))
            m2 = B2.shape[1]
            get = lambda k, shape: np.atleast_2d(np.asarray(game.get(k, np.zeros(shape)), dtype=float))
            sol = coupled_riccati(
                mats["A"], mats["B1"], B2, mats["Q1"], get("Q2", (n, n)),
                get("R11", (m1, m1)) if "R11" in game else np.eye(m1), get("R22", (m2, m2)) if "R22" in game else np.eye(m2),
                get("R12", (m2, m2)), get("R21", (m1, m1)), gamma=float(game.get("gamma", 0.0)),
            )
        except (KeyError, ValueError, np.linalg.LinAlgError) as e:
            raise cfg.error(f"invalid riccati game: {e}", "game") from None
        except RiccatiError as e:
            files = [_dump(out / "baseline.json", {"error": str(e), "residual_trace": e.trace})]
            print(f"Riccati iteration failed: {e}")
            return EXIT_NUMERIC, files, "riccati_failed"
        payload = {"P1": sol.P1.tolist(), "P2": sol.P2.tolist(), "K1": sol.K1.tolist(), "K2": sol.K2.tolist(),
                   "residuals": list(sol.residuals), "iterations": sol.iterations}
        print("P =", np.array2string(sol.P1, precision=10))
        return EXIT_OK, [_dump(out / "baseline.json", payload)], "ok"
    prob = build_problem(cfg)
    if prob.lq is None:
        raise cfg.error("baseline needs an lq_pursuit or riccati game", "game", "kind")
    try:
        base = riccati_baseline(prob.lq)
    except RiccatiError as e:
        files = [_dump(out / "baseline.json", {"error": str(e), "residual_trace": e.trace})]
        print(f"Riccati iteration failed: {e}")
        return EXIT_NUMERIC, files, "riccati_failed"
    roll = continuous_rollout(prob.lq, base)
    z0 = prob.lq.z0
    payload = {
        "P": base.P.tolist(), "K_pursuer": base.K_pursuer.tolist(), "K_evader": base.K_evader.tolist(),
        "residuals": list(base.solution.residuals), "iterations": base.solution.iterations,
        "value_z0": float(z0 @ base.P @ z0), "rollout_cost_pursuer": roll.cost_pursuer,
        "rollout_cost_evader": roll.cost_evader,
    }
    print("P =", np.array2string(base.P, precision=10))
    return EXIT_OK, [_dump(out / "baseline.json", payload)], "ok"


def cmd_verify(cfg: Config, out: Path, args) -> tuple[int, list[Path], str]:
    """Re-check saved follower artifacts: hashes, fixed-point residual, rollout consistency."""
    art = Path(args.artifacts) if args.artifacts else out
    check_manifest(art)
    prob = build_problem(cfg)
    tol, _, n_mc = solver_settings(cfg, args)
    v = _load_values(art / "follower_value")
    if not v.grid.same_as(prob.grid):
        raise ConfigError("saved value table was built on a different grid than the config describes")
    pi1, pi2 = _solved_policies(cfg, prob, art)
    sec = cfg.section("verify")
    op = StackelbergOperator(prob.spec, prob.grid, pi1, n_mc, substream(args.seed, "flow"))
    beta = prob.spec.contraction_modulus
    residual = float(np.max(np.abs(op.sweep(v.values) - v.values)))
    # a fixed point reached at tol is within tol * 2 / (1 - beta) of the exact one in sup norm
    res_ok = residual <= 2 * tol / (1 - beta) + 1e-12
    rng = np.random.default_rng(substream(args.seed, "verify_states"))
    n_states = int(sec.get("n_states", 20))
    n_roll = int(sec.get("n_rollouts", 64))
    t_max = float(sec.get("t_max", 30.0 / prob.spec.discount))
    disc = float(sec.get("discretization_tol", 0.1))
    nodes = prob.grid.nodes()
    pick = rng.choice(node_classes(prob.grid).flow, size=min(n_states, node_classes(prob.grid).flow.size), replace=False)
    chi0 = nodes[np.sort(pick)]
    mean, se = monte_carlo_costs(prob.spec, chi0, pi1, pi2, t_max, n_roll, substream(args.seed, "verify_mc"))
    pred = interpolate(v, chi0)
    gap = np.abs(mean[:, 1] - pred)
    allow = 3 * se[:, 1] + disc * (1 + np.abs(pred))
    roll_ok = bool(np.all(gap <= allow))
    payload = {
        "fixed_point_residual": residual, "residual_ok": res_ok,
        "states": chi0.tolist(), "value": pred.tolist(), "mc_mean": mean[:, 1].tolist(),
        "mc_standard_error": se[:, 1].tolist(), "allowed_gap": allow.tolist(), "rollout_ok": roll_ok,
    }
    files = [_dump(out / "verify.json", payload)]
    print(f"fixed-point residual {residual:.3e} ({'ok' if res_ok else 'FAIL'}); "
          f"rollout vs value max gap {gap.max():.3e} ({'ok' if roll_ok else 'FAIL'})")
    ok = res_ok and roll_ok
    return (EXIT_OK if ok else EXIT_NUMERIC), files, "ok" if ok else "failed"


COMMANDS: dict[str, Callable] = {
    "solve-follower": cmd_solve_follower,
    "optimize-leader": cmd_optimize_leader,
    "nash": cmd_nash,
    "simulate": cmd_simulate,
    "sweep": cmd_sweep,
    "baseline": cmd_baseline,
    "verify": cmd_verify,
}


def make_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="stgames", description="Self-triggered two-player game solvers.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True)
        p.add_argument("--out", required=True)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--tol", type=float)
        p.add_argument("--max-iters", type=int)
        p.add_argument("--grad", choices=("implicit", "fd"))
        p.add_argument("--damping", type=float)
        p.add_argument("--artifacts", help="directory holding earlier outputs (default: --out)")
        p.add_argument("--outer-iters", type=int)
        p.add_argument("--step", type=float, help="constant leader step size")
        p.add_argument("--temperature", type=float, help="smoothing temperature")
        p.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv: list[str] | None = None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    out = Path(args.out)
    try:
        cfg = load_config(args.config)
        out.mkdir(parents=True, exist_ok=True)
        code, files, status = COMMANDS[args.command](cfg, out, args)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT
    write_manifest(out, args.command, cfg, args.seed, files, status)
    return code


if __name__ == "__main__":
    sys.exit(main())
