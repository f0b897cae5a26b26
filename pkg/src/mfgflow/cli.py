"""Configuration-driven command line for the solver suite.

Subcommands: steady-check | mfg1 | mfg2 | mfg1-sde | mfg2-sde | sample |
sweep. Every run writes a self-describing directory:

    manifest.json     config echo, cost breakdown, histories, diagnostics
                      (fully deterministic for a fixed config+seed)
    timing.json       wall time (excluded from the determinism guarantee)
    fields/*.bin      trajectory dumps (binary + JSON sidecar)
    csv/*.csv         per-frame field CSVs when output.csv is set
    iterations.csv    one row per outer iteration (flow-control modes)
    gmu.csv           line-search improvement curves g(mu) per iteration

Exit codes: 0 success, 2 configuration errors, 1 solver errors; failures
leave a machine-readable error.json in the output directory.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import fieldio
from .config import MODES, ExperimentConfig, load_config
from .costs import total_cost_mfg1
from .errors import ConfigError, MfgflowError
from .flow import SteadyStateParams, steady_residual_report
from .mfg1 import solve_mfg1
from .mfg2 import iterate_mfg2
from .particles import sample_from_density, solve_mfg1_sde, solve_mfg2_sde
from .spectral import Grid
from .timestep import FieldTrajectory, solve_forward_continuity

SCHEMA_VERSION = 1


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(
            path=args.config,
            overrides=args.override,
            seed=args.seed,
            out=args.out,
            mode=None if args.command == "sweep" else args.command,
        )
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    outdir = Path(cfg.output["dir"])
    try:
        if args.command == "sweep":
            run_sweep(cfg, args.axis, args.values, outdir)
        else:
            run(cfg, outdir)
        return 0
    except ConfigError as exc:
        _write_error(outdir, exc)
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except MfgflowError as exc:
        _write_error(outdir, exc)
        print(f"solver error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # keep the error record machine-readable
        _write_error(outdir, exc)
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="mfgflow",
        description="Mean-field-game control of scalar transport on periodic domains",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in MODES[:-1]:  # every mode is a subcommand; sweep is special
        p = sub.add_parser(name, help=f"run the {name} pipeline")
        _common_flags(p)
    p = sub.add_parser("sweep", help="run the configured mode over a parameter axis")
    _common_flags(p)
    p.add_argument("--axis", required=True, help="dotted config path, e.g. solver.start_time")
    p.add_argument("--values", required=True, help="comma-separated values")
    return parser


def _common_flags(p):
    p.add_argument("--config", default=None, help="YAML/JSON config file")
    p.add_argument("--out", default=None, help="output directory")
    p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE")
    p.add_argument("--seed", type=int, default=None)


def _write_error(outdir: Path, exc: Exception) -> None:
    try:
        outdir.mkdir(parents=True, exist_ok=True)
        (outdir / "error.json").write_text(
            json.dumps({"error": {"type": type(exc).__name__, "message": str(exc)}}, indent=1)
        )
    except OSError:
        pass


# ---------------------------------------------------------------------------
# single runs
# ---------------------------------------------------------------------------

def run(cfg: ExperimentConfig, outdir: Path) -> dict:
    """Execute one configured run; returns the manifest dict."""
    started = time.time()
    outdir.mkdir(parents=True, exist_ok=True)
    runner = {
        "steady-check": _run_steady_check,
        "mfg1": _run_mfg1,
        "mfg2": _run_mfg2,
        "mfg1-sde": _run_mfg1_sde,
        "mfg2-sde": _run_mfg2_sde,
        "sample": _run_sample,
    }[cfg.mode]
    manifest = runner(cfg, outdir)
    manifest["schema_version"] = SCHEMA_VERSION
    manifest["mode"] = cfg.mode
    manifest["config"] = cfg.echo()
    (outdir / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True))
    (outdir / "timing.json").write_text(
        json.dumps({"wall_time_seconds": time.time() - started})
    )
    return manifest


def _decimate(traj: FieldTrajectory, k: int) -> FieldTrajectory:
    if k <= 1:
        return traj
    if (traj.n_frames - 1) % k != 0:
        raise ConfigError(
            f"output.stride {k} does not divide the stored frame count {traj.n_frames - 1}"
        )
    return FieldTrajectory(
        traj.grid, traj.window, traj.data[::k], traj.stride * k, is_vector=traj.is_vector
    )


def _dump_trajectory(cfg, outdir: Path, name: str, traj: FieldTrajectory) -> dict:
    fields = outdir / "fields"
    fields.mkdir(exist_ok=True)
    out = _decimate(traj, cfg.output["stride"])
    entries = {}
    streams = [(name, None)] if not out.is_vector else [
        (f"{name}_{axis}", d) for d, axis in enumerate("xy"[: out.grid.dim])
    ]
    for stream_name, component in streams:
        meta = fieldio.write_trajectory(fields / stream_name, out, component)
        entry = {"bin": f"fields/{stream_name}.bin", "meta": meta, "times": list(out.times)}
        if cfg.output["csv"]:
            csvdir = outdir / "csv"
            csvdir.mkdir(exist_ok=True)
            frames = []
            data = out.data if component is None else out.data[:, component]
            for i in range(out.n_frames):
                rel = f"csv/{stream_name}_{i:04d}.csv"
                fieldio.write_field_csv(outdir / rel, out.grid, data[i])
                frames.append(rel)
            entry["csv_frames"] = frames
        entries[stream_name] = entry
    return entries


def _reference_l1(cfg, grid: Grid, terminal_values: np.ndarray):
    """L1 distance of the terminal state to a reference run's terminal state."""
    if cfg.reference is None:
        return None
    ref_dir = Path(cfg.reference)
    manifest = json.loads((ref_dir / "manifest.json").read_text())
    entry = manifest["outputs"]["q" if "q" in manifest["outputs"] else "rho"]
    ref_grid, frames = fieldio.read_field_dump(ref_dir / entry["bin"])
    if ref_grid != grid:
        raise ConfigError("reference run lives on a different grid")
    ref_terminal = frames[-1]
    return {
        "l1_terminal_vs_reference": grid.integrate(np.abs(terminal_values - ref_terminal)),
        "reference": str(ref_dir),
        "l1_reference_norm": grid.integrate(np.abs(ref_terminal)),
    }


def _run_steady_check(cfg: ExperimentConfig, outdir: Path) -> dict:
    grid = cfg.grid()
    params = cfg.model_params(grid)
    window = cfg.window()
    p = SteadyStateParams(cfg.tree["flow_state"]["sigma"], cfg.as_center(cfg.tree["flow_state"]["center"]), params.nu)
    report = steady_residual_report(p, grid)
    Q = cfg.flow_profile(grid)
    traj = solve_forward_continuity(Q, "self", None, params, window, cfg.solver["stride"])
    drift = float(np.abs(traj.data - Q.values).max())
    masses = traj.data.sum(axis=tuple(range(-grid.dim, 0))) * grid.cell_volume
    manifest = {
        "cost": None,
        "diagnostics": {
            **report,
            "steady": bool(report["residual"] < 1e-6),
            "self_evolution_sup_drift": drift,
            "mass_drift": float(np.abs(masses - masses[0]).max() / abs(masses[0])),
        },
        "outputs": _dump_trajectory(cfg, outdir, "q", traj),
    }
    return manifest


def _tracer_inputs(cfg: ExperimentConfig):
    grid = cfg.grid()
    params = cfg.model_params(grid)
    window = cfg.window()
    cost_cfg = cfg.cost_config(grid)
    q_traj = FieldTrajectory.from_constant(
        cfg.flow_profile(grid), window, cfg.solver["stride"]
    )
    rho0 = cfg.initial_profile(grid)
    return grid, params, window, cost_cfg, q_traj, rho0


def _run_mfg1(cfg: ExperimentConfig, outdir: Path) -> dict:
    grid, params, window, cost_cfg, q_traj, rho0 = _tracer_inputs(cfg)
    sol = solve_mfg1(q_traj, rho0, cost_cfg, params, window, cfg.solver["stride"])
    free = solve_forward_continuity(rho0, q_traj, None, params, window, cfg.solver["stride"])
    zero_alpha = FieldTrajectory(
        grid, window, np.zeros_like(sol.alpha.data), sol.alpha.stride, is_vector=True
    )
    free_cost = total_cost_mfg1(free, zero_alpha, q_traj, cost_cfg)
    outputs = {}
    outputs.update(_dump_trajectory(cfg, outdir, "rho", sol.rho))
    outputs.update(_dump_trajectory(cfg, outdir, "phi", sol.phi))
    outputs.update(_dump_trajectory(cfg, outdir, "alpha", sol.alpha))
    diagnostics = {
        "value_identity_residual": sol.value_identity_residual,
        **sol.diagnostics,
    }
    if cfg.tree["cost"]["report_tracer_substitution"]:
        # diagnostic reading of the cost ambiguity: the running/terminal
        # functionals evaluated at the tracer density itself (never fed back
        # into the solve, which stays decoupled)
        from .costs import total_cost_mfg2 as _tracer_cost

        diagnostics["cost_tracer_substitution"] = _tracer_cost(sol.rho, sol.alpha, cost_cfg).to_dict()
    return {
        "cost": sol.cost.to_dict(),
        "uncontrolled_cost": free_cost.to_dict(),
        "diagnostics": diagnostics,
        "outputs": outputs,
    }


def _iterations_csv(outdir: Path, records: list[dict]) -> None:
    cols = [
        "n", "mu_star", "terminal", "running_state", "running_control",
        "total", "d_q", "d_alpha", "g_quadratic_coeff",
    ]
    with open(outdir / "iterations.csv", "w") as fh:
        fh.write(",".join(cols) + "\n")
        for rec in records:
            vals = [rec[c] if rec[c] is not None else float("nan") for c in cols]
            fh.write(",".join(f"{v:.17g}" for v in vals) + "\n")
    with open(outdir / "gmu.csv", "w") as fh:
        fh.write("iteration,mu,g\n")
        for rec in records:
            for mu, gval in rec["g_curve"]:
                fh.write(f"{rec['n']},{mu:.17g},{gval:.17g}\n")


def _mfg2_manifest(cfg, outdir, sol) -> dict:
    records = sol.diagnostics["iterations"]
    _iterations_csv(outdir, records)
    outputs = {}
    outputs.update(_dump_trajectory(cfg, outdir, "q", sol.q))
    outputs.update(_dump_trajectory(cfg, outdir, "phi", sol.phi))
    outputs.update(_dump_trajectory(cfg, outdir, "alpha", sol.alpha))
    diag = {
        "mass_drift": sol.diagnostics["mass_drift"],
        "monotone": sol.diagnostics["monotone"],
        "fixed_point_residual": sol.fixed_point_residual,
        "converged": sol.converged,
        "iterations": [
            {k: v for k, v in rec.items() if k != "g_curve"} for rec in records
        ],
    }
    for extra in ("n_particles", "seed", "bandwidth"):
        if extra in sol.diagnostics:
            diag[extra] = sol.diagnostics[extra]
    ref = _reference_l1(cfg, sol.q.grid, sol.q.data[-1])
    if ref:
        diag.update(ref)
    return {
        "cost": sol.cost.to_dict(),
        "loss_history": sol.loss_history,
        "mu_history": sol.mu_history,
        "diagnostics": diag,
        "outputs": outputs,
    }


def _run_mfg2(cfg: ExperimentConfig, outdir: Path) -> dict:
    grid = cfg.grid()
    params = cfg.model_params(grid)
    window = cfg.window()
    sol = iterate_mfg2(
        cfg.initial_profile(grid),
        cfg.cost_config(grid),
        cfg.iteration_config(),
        params,
        window,
        cfg.solver["stride"],
    )
    return _mfg2_manifest(cfg, outdir, sol)


def _run_mfg1_sde(cfg: ExperimentConfig, outdir: Path) -> dict:
    grid, params, window, cost_cfg, q_traj, rho0 = _tracer_inputs(cfg)
    sol = solve_mfg1_sde(
        q_traj,
        rho0,
        cost_cfg,
        cfg.sde["n"],
        cfg.sde["seed"],
        params,
        window,
        kde=cfg.kde_config(grid, rho0.mass()),
        stride=cfg.solver["stride"],
    )
    outputs = {}
    outputs.update(_dump_trajectory(cfg, outdir, "rho", sol.empirical))
    outputs.update(_dump_trajectory(cfg, outdir, "phi", sol.phi))
    outputs.update(_dump_trajectory(cfg, outdir, "alpha", sol.alpha))
    fieldio.write_ensemble(outdir / "fields" / "ensemble.bin", sol.ensemble.positions)
    diag = dict(sol.diagnostics)
    ref = _reference_l1(cfg, grid, sol.empirical.data[-1])
    if ref:
        diag.update(ref)
    return {"cost": sol.cost.to_dict(), "diagnostics": diag, "outputs": outputs}


def _run_mfg2_sde(cfg: ExperimentConfig, outdir: Path) -> dict:
    grid = cfg.grid()
    params = cfg.model_params(grid)
    window = cfg.window()
    q_init = cfg.initial_profile(grid)
    sol = solve_mfg2_sde(
        q_init,
        cfg.cost_config(grid),
        cfg.iteration_config(),
        cfg.sde["n"],
        cfg.sde["seed"],
        params,
        window,
        kde=cfg.kde_config(grid, q_init.mass()),
        stride=cfg.solver["stride"],
        refresh_stride=cfg.sde["refresh_stride"],
    )
    return _mfg2_manifest(cfg, outdir, sol)


def _run_sample(cfg: ExperimentConfig, outdir: Path) -> dict:
    grid = cfg.grid()
    rho = cfg.initial_profile(grid)
    ens = sample_from_density(rho, cfg.sde["n"], cfg.sde["seed"])
    fields = outdir / "fields"
    fields.mkdir(exist_ok=True)
    fieldio.write_ensemble(fields / "ensemble.bin", ens.positions)
    if cfg.output["csv"]:
        csvdir = outdir / "csv"
        csvdir.mkdir(exist_ok=True)
        with open(csvdir / "positions.csv", "w") as fh:
            fh.write(",".join("xy"[: grid.dim]) + "\n")
            for row in ens.positions:
                fh.write(",".join(f"{v:.17g}" for v in row) + "\n")
    return {
        "cost": None,
        "diagnostics": {
            "n_particles": ens.n,
            "seed": cfg.sde["seed"],
            "source_mass": rho.mass(),
            "all_in_domain": bool(
                np.all(ens.positions >= -grid.L) and np.all(ens.positions < grid.L)
            ),
        },
        "outputs": {"ensemble": {"bin": "fields/ensemble.bin"}},
    }


# ---------------------------------------------------------------------------
# sweeps
# ---------------------------------------------------------------------------

def run_sweep(cfg: ExperimentConfig, axis: str, values_csv: str, outdir: Path) -> list[dict]:
    from .config import parse_scalar

    values = [v for v in (s.strip() for s in values_csv.split(",")) if v]
    if not values:
        raise ConfigError("sweep needs a nonempty values list")
    outdir.mkdir(parents=True, exist_ok=True)
    rows = []
    for raw in values:
        value = parse_scalar(raw)
        subdir = str(outdir / f"{axis.split('.')[-1]}_{raw}")
        sub = ExperimentConfig(tree=_override_tree(cfg, axis, value, subdir))
        manifest = run(sub, Path(subdir))
        cost = manifest.get("cost") or {}
        diag = manifest.get("diagnostics", {})
        rows.append(
            {
                "value": value,
                "total_cost": cost.get("total"),
                "iterations": len(manifest.get("mu_history", []) or []),
                "converged": diag.get("converged", True),
                "l1_terminal_vs_reference": diag.get("l1_terminal_vs_reference"),
                "dir": sub.output["dir"],
            }
        )
    with open(outdir / "sweep.csv", "w") as fh:
        fh.write("value,total_cost,iterations,converged,l1_terminal_vs_reference,dir\n")
        for r in rows:
            total = r["total_cost"] if r["total_cost"] is not None else float("nan")
            l1 = r["l1_terminal_vs_reference"] if r["l1_terminal_vs_reference"] is not None else float("nan")
            fh.write(
                f"{r['value']},{total:.17g},{r['iterations']},"
                f"{int(bool(r['converged']))},{l1:.17g},{r['dir']}\n"
            )
    (outdir / "manifest.json").write_text(
        json.dumps(
            {
                "schema_version": SCHEMA_VERSION,
                "mode": "sweep",
                "axis": axis,
                "values": [r["value"] for r in rows],
                "rows": rows,
                "config": cfg.echo(),
                "cost": None,
                "diagnostics": {},
            },
            indent=1,
            sort_keys=True,
        )
    )
    return rows


def _override_tree(cfg: ExperimentConfig, axis: str, value, subdir: str) -> dict:
    import copy as _copy

    from .config import _set_path, _validate

    tree = _copy.deepcopy(cfg.tree)
    _set_path(tree, axis, value)
    tree["output"]["dir"] = subdir
    _validate(tree)
    return tree


if __name__ == "__main__":
    sys.exit(main())
