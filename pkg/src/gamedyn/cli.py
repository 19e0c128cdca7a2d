"""Batch front end: run scenario configs, reproduce the preset experiments,
and emit machine-readable certification reports.

Every scenario run writes `trajectory.csv`, `report.json`, `manifest.json`,
and (unless plotting is disabled) `figure.png` into its own directory.
Exit status: 0 when all requested checks pass, 1 on a failed check, 2 on a
config parse or validation error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (
    box_corners,
    check_constant_of_motion,
    check_energy_balance,
    divergence_residual,
    recurrence_report,
    regret_report,
    volume_drift,
)
from .dynamics import dynamic_from_config, has_escort
from .games import (
    GameSpec,
    cyclic_matching_pennies,
    game_from_dict,
    load_game,
    rock_paper_scissors,
    uniform_profile,
    validate_constant_sum,
)
from .integrate import AgentSpec, IntegratorConfig, SystemSpec, Trajectory, reduce_coordinates, simulate
from .presets import expand_preset, list_presets

CHECK_NAMES = ("energy", "regret", "recurrence", "divergence", "volume")

DEFAULT_TOLS = {
    "energy": 1e-6,
    "constant_of_motion_rel": 1e-3,
    "regret": 1e-4,
    "divergence": 1e-8,
    "volume": 1e-2,
}


class ConfigError(ValueError):
    def __init__(self, where, message):
        super().__init__(f"{where}: {message}")
        self.where = where


def _require(cond, where, message):
    if not cond:
        raise ConfigError(where, message)


def _build_game(spec, where, base_dir) -> GameSpec:
    if isinstance(spec, str):
        path = Path(base_dir) / spec
        _require(path.exists(), where, f"referenced game file {path} does not exist")
        return load_game(path)
    _require(isinstance(spec, dict), where, "game must be an object or a file path")
    if "builtin" in spec:
        name = spec["builtin"]
        if name == "rock_paper_scissors":
            return rock_paper_scissors(
                win=float(spec.get("win", 1.0)), loss=float(spec.get("loss", 1.0))
            )
        if name == "cyclic_matching_pennies":
            return cyclic_matching_pennies()
        raise ConfigError(where, f"unknown builtin game {name!r}")
    try:
        return game_from_dict(spec)
    except ValueError as exc:
        raise ConfigError(where, str(exc)) from exc


def _build_agents(entries, where):
    agents = []
    for i, entry in enumerate(entries):
        w = f"{where}[{i}]"
        _require(isinstance(entry, dict), w, "agent entry must be an object")
        _require("dynamic" in entry, w, "agent entry needs a 'dynamic'")
        try:
            dyn = dynamic_from_config(entry["dynamic"])
        except ValueError as exc:
            raise ConfigError(f"{w}.dynamic", str(exc)) from exc
        q0 = entry.get("q0")
        x0 = entry.get("x0")
        _require((q0 is None) != (x0 is None), w, "give exactly one of 'q0', 'x0'")
        try:
            agents.append(AgentSpec(dyn, q0=q0, x0=x0))
        except ValueError as exc:
            raise ConfigError(w, str(exc)) from exc
    return agents


def _shift_profile(spec, game, where):
    if spec is None or spec == "uniform":
        return uniform_profile(game)
    _require(isinstance(spec, list) and len(spec) == game.num_agents, where,
             f"shift must be 'uniform' or one vector per agent ({game.num_agents})")
    return [np.asarray(v, dtype=float) for v in spec]


def parse_scenario(config: dict, base_dir="."):
    """Validate a scenario config and build the runnable pieces."""
    _require(isinstance(config, dict), "config", "top level must be an object")
    name = config.get("name", "scenario")
    game = _build_game(config.get("game"), "config.game", base_dir)
    _require("agents" in config, "config.agents", "scenario needs an agent list")
    agents = _build_agents(config["agents"], "config.agents")
    integ = config.get("integrator", {})
    try:
        cfg = IntegratorConfig(
            dt=float(integ.get("dt", 0.01)),
            horizon=float(integ.get("horizon", 100.0)),
            record_stride=int(integ.get("record_stride", 1)),
        )
    except ValueError as exc:
        raise ConfigError("config.integrator", str(exc)) from exc
    try:
        system = SystemSpec(game, tuple(agents))
    except ValueError as exc:
        raise ConfigError("config.agents", str(exc)) from exc
    shift = _shift_profile(config.get("shift"), game, "config.shift")
    checks = config.get("checks", [])
    for c in checks:
        _require(c in CHECK_NAMES, "config.checks", f"unknown check {c!r}; valid: {CHECK_NAMES}")
    options = config.get("check_options", {})
    return name, system, cfg, shift, list(checks), options


def _entry(check, scenario, residual, tol, ok, cfg, **extra):
    out = {
        "check": check,
        "scenario": scenario,
        "max_residual": float(residual),
        "tolerance": float(tol),
        "verdict": "pass" if ok else "fail",
        "dt": cfg.dt,
        "T": cfg.horizon,
    }
    out.update(extra)
    return out


def _run_checks(name, system, traj, cfg, shift, checks, options, rng, tol_scale,
                csum_tol=None):
    entries = []
    rec_report = None
    com_report = None
    all_q = system.all_q_state

    if "energy" in checks:
        opt = options.get("energy", {})
        tol = float(opt.get("tol", DEFAULT_TOLS["energy"])) * tol_scale
        worst = 0.0
        ok = True
        for i in range(traj.num_agents):
            if has_escort(traj.dynamics[i]):
                continue
            rep = check_energy_balance(traj, i, shift[i], tol=tol)
            worst = max(worst, rep.max_abs)
            ok = ok and rep.verdict == "lossless"
        entries.append(_entry("energy", name, worst, tol, ok, cfg))
        if all_q:
            rel_tol = float(opt.get("rel_tol", DEFAULT_TOLS["constant_of_motion_rel"])) * tol_scale
            com_report = check_constant_of_motion(
                traj, shift, tol_rel=rel_tol, constant_sum_tol=csum_tol
            )
            entries.append(
                _entry("constant_of_motion", name, com_report.rel_drift, rel_tol,
                       com_report.ok, cfg, initial=com_report.initial)
            )

    if "regret" in checks:
        opt = options.get("regret", {})
        tol = float(opt.get("tol", DEFAULT_TOLS["regret"])) * tol_scale
        reports = regret_report(traj, tol=tol)
        gap = max((r.sup - r.bound) for r in reports if not np.isnan(r.bound))
        entries.append(_entry("regret", name, gap, tol, all(r.ok for r in reports), cfg))

    if "recurrence" in checks:
        opt = options.get("recurrence", {})
        eps = float(opt.get("epsilon", 1e-3))
        dead = float(opt.get("dead_time", 1.0))
        need = int(opt.get("min_returns", 1))
        rec_report = recurrence_report(traj, epsilon=eps, dead_time=dead)
        ok = (not rec_report.stationary) and rec_report.count >= need
        entries.append(
            _entry("recurrence", name, rec_report.min_distance, eps, ok, cfg,
                   returns=rec_report.count, required=need,
                   stationary=rec_report.stationary,
                   events=[{"t": t, "distance": d} for t, d in rec_report.events])
        )

    if "divergence" in checks:
        opt = options.get("divergence", {})
        tol = float(opt.get("tol", DEFAULT_TOLS["divergence"])) * tol_scale
        step = float(opt.get("step", 1e-5))
        points = int(opt.get("points", 100))
        idx = rng.integers(0, len(traj.t), size=points)
        qhat = np.concatenate(traj.q, axis=1)
        worst = max(divergence_residual(system, qhat[k], step=step) for k in idx)
        entries.append(_entry("divergence", name, worst, tol, worst < tol, cfg))

    if "volume" in checks:
        opt = options.get("volume", {})
        tol = float(opt.get("tol", DEFAULT_TOLS["volume"])) * tol_scale
        edge = float(opt.get("edge", 1e-3))
        horizon = float(opt.get("horizon", min(50.0, cfg.horizon)))
        center = np.concatenate(reduce_coordinates([q[0] for q in traj.q]))
        vcfg = IntegratorConfig(dt=cfg.dt, horizon=horizon, record_stride=1)
        rep = volume_drift(system, box_corners(center, edge), vcfg)
        entries.append(_entry("volume", name, rep.drift, tol, rep.drift < tol, cfg,
                              volume_ratio=rep.ratio))

    return entries, rec_report, com_report


def run_scenario(config: dict, out_dir, seed=0, tol_scale=1.0, plot=True,
                 csum_tol=None, base_dir=".") -> tuple[int, Trajectory | None]:
    """Execute one scenario and write its artifact files into ``out_dir``."""
    started = time.time()
    name, system, cfg, shift, checks, options = parse_scenario(config, base_dir)
    if csum_tol is not None and any(c in ("energy", "volume") for c in checks):
        rep = validate_constant_sum(system.game, tol=csum_tol)
        if not rep.ok:
            raise ConfigError(
                "config.game",
                f"edge pair {rep.pair} breaks the constant-sum identity by "
                f"{rep.violation:g} at entry {rep.entry} (tolerance {csum_tol:g})",
            )

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    traj = simulate(system, cfg)
    rng = np.random.default_rng(seed)
    entries, rec_report, com_report = _run_checks(
        name, system, traj, cfg, shift, checks, options, rng, tol_scale, csum_tol
    )

    shifts = shift if system.all_q_state else None
    traj.write_csv(out / "trajectory.csv", shifts=shifts)

    report = {"scenario": name, "checks": entries,
              "all_passed": all(e["verdict"] == "pass" for e in entries)}
    with open(out / "report.json", "w") as fh:
        json.dump(report, fh, indent=2)

    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"))
    manifest = {
        "scenario": name,
        "config": config,
        "config_sha256": hashlib.sha256(canonical.encode()).hexdigest(),
        "tool_version": __version__,
        "wall_time_s": round(time.time() - started, 3),
    }
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2)

    if plot:
        from .plotting import scenario_figure

        scenario_figure(traj, rec_report, com_report, title=name, path=out / "figure.png")

    for e in entries:
        print(f"[{e['verdict']:>4}] {name}/{e['check']}: residual {e['max_residual']:.3e} "
              f"tol {e['tolerance']:.3e}")
    return (0 if report["all_passed"] else 1), traj


def _common_flags(p):
    p.add_argument("--out", default="runs", help="output directory (default: runs)")
    p.add_argument("--seed", type=int, default=0, help="seed for randomized check inputs")
    p.add_argument("--tolerance-scale", type=float, default=1.0,
                   help="multiplier applied to all check tolerances")
    p.add_argument("--no-plot", action="store_true", help="skip figure rendering")
    p.add_argument("--constant-sum-tol", type=float, default=None,
                   help="widen the constant-sum validation tolerance for text matrices")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="gamedyn",
        description="simulate learning dynamics in graphical constant-sum games "
                    "and certify conservation, regret, and recurrence properties",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a scenario config file")
    p_run.add_argument("config", help="path to a scenario JSON document")
    _common_flags(p_run)

    p_pre = sub.add_parser("preset", help="run a compiled-in preset")
    p_pre.add_argument("name", help="preset name (see list-presets)")
    p_pre.add_argument("--dt", type=float, default=None, help="override the step size")
    p_pre.add_argument("--horizon", type=float, default=None, help="override the horizon")
    _common_flags(p_pre)

    sub.add_parser("list-presets", help="print the preset catalog")

    args = parser.parse_args(argv)

    if args.command == "list-presets":
        for name, desc in list_presets():
            print(f"{name:12s} {desc}")
        return 0

    if args.command == "run":
        path = Path(args.config)
        if not path.exists():
            print(f"{path}: no such config file", file=sys.stderr)
            return 2
        try:
            with open(path) as fh:
                config = json.load(fh)
        except json.JSONDecodeError as exc:
            print(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}", file=sys.stderr)
            return 2
        name = config.get("name", path.stem) if isinstance(config, dict) else path.stem
        try:
            code, _ = run_scenario(
                config, Path(args.out) / name, seed=args.seed,
                tol_scale=args.tolerance_scale, plot=not args.no_plot,
                csum_tol=args.constant_sum_tol, base_dir=path.parent,
            )
        except (ConfigError, ValueError) as exc:
            # semantic failures (bad shift, broken constant-sum hypothesis)
            # are configuration problems, same exit contract as parse errors
            print(f"{path}: {exc}", file=sys.stderr)
            return 2
        return code

    # preset
    try:
        configs = expand_preset(args.name, dt=args.dt, horizon=args.horizon)
    except KeyError as exc:
        print(exc.args[0], file=sys.stderr)
        return 2
    worst = 0
    finished = []
    for config in configs:
        code, traj = run_scenario(
            config, Path(args.out) / config["name"], seed=args.seed,
            tol_scale=args.tolerance_scale, plot=not args.no_plot,
            csum_tol=args.constant_sum_tol,
        )
        worst = max(worst, code)
        finished.append((config["name"], traj))
    if (not args.no_plot and args.name == "fig3_mix" and len(finished) == 3):
        from .plotting import cycle_cube_figure

        cycle_cube_figure(
            [(n.split("_")[-1], t) for n, t in finished],
            path=Path(args.out) / "fig3_mix_cube.png",
        )
    return worst


if __name__ == "__main__":
    raise SystemExit(main())
