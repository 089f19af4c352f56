"""Command line front end: config-driven experiment pipelines.

Subcommands: distance, coverage, simulate, verify-dod, uc, reconstruct,
report. Exit codes: 0 success, 1 invariant or acceptance failure, 2 usage
or configuration error. Outputs land in the config's output directory with
a checksum manifest; identical config and seed give bitwise-identical data
files.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import config as cfgmod
from . import fileio
from .config import ConfigError
from .continuation import domain_of_dependence, uc_cylinder_expand, uc_iterate, verify_dod
from .coverage import check_property_p, exterior_clearance, min_time
from .field import make_patch, sample_bilinear
from .geodesic import DistanceField, dijkstra_oracle, lipschitz_check, solve_eikonal
from .inversion import forward_operator, landweber
from .wave import SimOptions, Trace, simulate, simulate_exterior

__all__ = ["main"]


def _out_dir(cfg: dict) -> Path:
    out = Path(cfg.get("output_dir", "out"))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _finish(cfg: dict, out: Path, outputs: list[Path], extra_inputs: dict | None = None) -> None:
    used = fileio.write_json(out / "config.used.json", cfg)
    inputs = {"config": fileio.checksum_file(used)}
    inputs.update(extra_inputs or {})
    fileio.write_manifest(out, inputs, outputs + [used])


def _json_safe(x):
    if isinstance(x, float) and not np.isfinite(x):
        return "inf" if x > 0 else "-inf"
    return x


# ---------------------------------------------------------------------------
# distance


def cmd_distance(cfg: dict, check_file: str | None = None) -> int:
    grid = cfgmod.build_grid(cfg)
    speed = cfgmod.build_speed(cfg, grid)
    out = _out_dir(cfg)
    outputs: list[Path] = []

    if check_file is not None:
        fgrid, values, sidecar = fileio.read_field(check_file)
        if not fgrid.same_as(grid):
            raise ConfigError("distance file grid does not match the config grid")
        dist = DistanceField(
            grid=grid,
            values=values,
            reachable=np.isfinite(values),
            mode=sidecar["meta"].get("mode", "free-space"),
            source=sidecar["meta"].get("source", {}),
            speed=speed,
        )
        report = lipschitz_check(dist, speed)
        status = "pass" if report.passed else "fail"
        print(
            f"lipschitz: {status} (max violation {report.max_violation:.6g} "
            f"vs tolerance {report.tolerance:.6g} at node {report.location})"
        )
        summary = {
            "lipschitz": status,
            "max_violation": report.max_violation,
            "tolerance": report.tolerance,
            "location": list(report.location),
            "checked_file": str(check_file),
        }
        outputs.append(fileio.write_json(out / "summary.json", summary))
        _finish(cfg, out, outputs, {"distance_field": fileio.checksum_file(Path(check_file).with_suffix(".f64"))})
        return 0 if report.passed else 1

    d = cfg.get("distance", {})
    mode = d.get("mode", "free-space")
    obstacle = None
    if mode == "exterior-restricted":
        obstacle = cfgmod.build_region(cfg, grid)
    elif mode != "free-space":
        raise ConfigError(f"unknown distance mode {mode!r}")
    if d.get("use_patch"):
        region = obstacle if obstacle is not None else cfgmod.build_region(cfg, grid)
        source = np.asarray(cfgmod.build_patch(cfg, region).samples, dtype=float)
    else:
        pts = d.get("points")
        if not pts:
            raise ConfigError("distance section needs 'points' or 'use_patch'")
        source = np.asarray(pts, dtype=float)

    dist = solve_eikonal(speed, source, obstacle=obstacle)
    report = lipschitz_check(dist, speed)
    status = "pass" if report.passed else "fail"
    print(
        f"lipschitz: {status} (max violation {report.max_violation:.6g} "
        f"vs tolerance {report.tolerance:.6g})"
    )

    store = np.where(dist.reachable, dist.values, np.inf)
    paths = fileio.write_field(
        out / "distance",
        grid,
        store,
        kind="distance",
        meta={"mode": dist.mode, "source": dist.source, "method": dist.method},
    )
    outputs.extend(paths)
    summary = {
        "lipschitz": status,
        "max_violation": report.max_violation,
        "tolerance": report.tolerance,
        "location": list(report.location),
        "mode": dist.mode,
        "reachable_nodes": int(dist.reachable.sum()),
    }
    if d.get("oracle"):
        oracle = dijkstra_oracle(speed, source, obstacle=obstacle)
        both = dist.reachable & oracle.reachable
        diff = float(np.abs(dist.values[both] - oracle.values[both]).max())
        summary["oracle_max_abs_diff"] = diff
        summary["oracle_max_rel_diff"] = float(
            np.max(
                np.abs(dist.values[both] - oracle.values[both])
                / np.maximum(oracle.values[both], 10.0 * grid.h)
            )
        )
        print(f"oracle discrepancy: max abs {diff:.6g} (rel {summary['oracle_max_rel_diff']:.4%})")
    outputs.append(fileio.write_json(out / "summary.json", summary))
    _finish(cfg, out, outputs)
    return 0 if report.passed else 1


# ---------------------------------------------------------------------------
# coverage


def cmd_coverage(cfg: dict) -> int:
    grid = cfgmod.build_grid(cfg)
    speed = cfgmod.build_speed(cfg, grid)
    region = cfgmod.build_region(cfg, grid)
    patch = cfgmod.build_patch(cfg, region)
    cov = cfg.get("coverage", {})
    epsilon = None
    if "epsilon_factor" in cov:
        epsilon = float(cov["epsilon_factor"]) * grid.h
    report = check_property_p(
        region,
        patch,
        speed,
        strategy=cov.get("strategy", "offset-eikonal"),
        subsample_k=int(cov.get("subsample_k", 64)),
        epsilon=epsilon,
    )
    status = (
        "satisfied"
        if report.satisfied
        else ("indeterminate" if report.indeterminate else "violated")
    )
    t_min_str = f"{report.t_min:.6g}" if np.isfinite(report.t_min) else "inf"
    print(f"property_p: {status}, tMin = {t_min_str}")

    out = _out_dir(cfg)
    outputs: list[Path] = []
    outputs.extend(
        fileio.write_field(out / "margin", grid, report.margin, kind="coverage-margin",
                           meta={"epsilon": report.epsilon, "strategy": report.strategy})
    )
    outputs.extend(
        fileio.write_field(out / "witness", grid, report.witness.astype(float), kind="coverage-witness", meta={})
    )
    summary = report.summary()
    summary["status"] = status
    summary["clearances"] = [
        _json_safe(float(v)) for v in np.asarray(report.clearance)
    ]
    outputs.append(fileio.write_json(out / "summary.json", summary))
    _finish(cfg, out, outputs)
    return 0


# ---------------------------------------------------------------------------
# simulate


def _t_max(cfg: dict, region=None, patch=None, speed=None) -> float:
    s = cfg.get("solver", {})
    if s.get("t_max") is not None:
        return float(s["t_max"])
    if s.get("t_max_factor") is not None:
        if region is None or patch is None or speed is None:
            raise ConfigError("t_max_factor needs region, patch, and speed sections")
        return float(s["t_max_factor"]) * min_time(region, patch, speed)
    raise ConfigError("solver section needs 't_max' or 't_max_factor'")


def cmd_simulate(cfg: dict) -> int:
    grid = cfgmod.build_grid(cfg)
    speed = cfgmod.build_speed(cfg, grid)
    region = cfgmod.build_region(cfg, grid)
    patch = cfgmod.build_patch(cfg, region)
    phantom = cfgmod.build_phantom(cfg, region)
    t_max = _t_max(cfg, region, patch, speed)
    options = cfgmod.solver_options(cfg)

    run, trace = simulate(speed, phantom, t_max, patch, options)
    out = _out_dir(cfg)
    outputs: list[Path] = []
    outputs.append(fileio.write_trace_csv(out / "trace.csv", trace))
    outputs.extend(
        fileio.write_table(
            out / "trace",
            trace.values,
            kind="trace",
            meta={
                "dt": trace.dt,
                "t_start": trace.t_start,
                "t_max": trace.t_max,
                "params": trace.patch.sample_params.tolist(),
            },
        )
    )
    if cfg.get("solver", {}).get("record_full_boundary"):
        full = make_patch(region, [(0.0, region.perimeter)])
        _, tr_full = simulate(speed, phantom, t_max, full, options)
        outputs.extend(
            fileio.write_table(
                out / "trace_full",
                tr_full.values,
                kind="trace",
                meta={
                    "dt": tr_full.dt,
                    "t_start": tr_full.t_start,
                    "t_max": tr_full.t_max,
                    "params": tr_full.patch.sample_params.tolist(),
                },
            )
        )
    for snap in run.snapshots:
        outputs.extend(
            fileio.write_field(
                out / f"snap_{snap.step:06d}",
                grid,
                snap.u,
                kind="wave-snapshot",
                meta={"time": snap.time, "step": snap.step},
            )
        )
    summary = {
        "dt": run.dt,
        "steps": run.steps,
        "t_max": t_max,
        "boundary": options.boundary,
        "receivers": int(len(patch.sample_indices)),
        "trace_max_abs": float(np.abs(trace.values).max()),
    }
    outputs.append(fileio.write_json(out / "summary.json", summary))
    _finish(cfg, out, outputs)
    print(f"simulate: {run.steps} steps, dt = {run.dt:.6g}, trace max |u| = {summary['trace_max_abs']:.6g}")
    return 0


# ---------------------------------------------------------------------------
# verify-dod


def _synthetic_boundary_data(region, full_patch, data_cfg, dt, steps, t_max):
    """Smooth bump in arc parameter times a smooth bump in time."""
    P = region.perimeter
    s = region.boundary_params
    center = float(data_cfg.get("arc_center", 0.0))
    halfwidth = float(data_cfg.get("arc_halfwidth", P / 16))
    t_center = float(data_cfg.get("time_center", t_max / 3))
    t_halfwidth = float(data_cfg.get("time_halfwidth", t_max / 4))
    amp = float(data_cfg.get("amplitude", 1.0))
    ds = np.abs((s - center + P / 2) % P - P / 2)
    prof_s = np.maximum(0.0, 1.0 - (ds / halfwidth) ** 2) ** 2
    t = dt * np.arange(steps + 1)
    prof_t = np.maximum(0.0, 1.0 - ((t - t_center) / t_halfwidth) ** 2) ** 2
    return amp * prof_s[:, None] * prof_t[None, :]


def cmd_verify_dod(cfg: dict) -> int:
    grid = cfgmod.build_grid(cfg)
    speed = cfgmod.build_speed(cfg, grid)
    region = cfgmod.build_region(cfg, grid)
    patch = cfgmod.build_patch(cfg, region)
    v = cfg.get("verify_dod")
    if not v:
        raise ConfigError("config section 'verify_dod' is required for this command")
    p = np.asarray(v["point"], dtype=float)
    delta_shrink = float(v.get("delta_shrink", 0.05))
    stride = int(v.get("time_stride", 8))
    tolerance = float(v.get("tolerance", 1e-3))

    dist = solve_eikonal(speed, p[None, :], obstacle=region)
    horizon = v.get("horizon", "auto")
    if horizon == "auto":
        if patch.is_full:
            raise ConfigError("'auto' horizon needs a proper subpatch")
        comp = (1.0 - delta_shrink) * dist.sample(
            np.asarray(patch.complement_samples, dtype=float)
        )
        horizon = float(np.min(comp)) - 2.0 * grid.h
    horizon = float(horizon)
    t_max = horizon

    options = cfgmod.solver_options(cfg, snapshot_stride=stride)
    if "solver" not in cfg or "boundary" not in cfg.get("solver", {}):
        options = cfgmod.solver_options(cfg, snapshot_stride=stride, boundary="padded")
    from .wave import cfl_time_step

    dt, steps = cfl_time_step(grid, speed.c_max, t_max, options.cfl_factor)

    full = make_patch(region, [(0.0, region.perimeter)])
    data_cfg = v.get("data", {"source": "synthetic"})
    if data_cfg.get("source", "synthetic") == "file":
        base = Path(data_cfg["path"])
        if not base.with_suffix(".json").exists():
            print(
                f"missing boundary data {base}.json: run 'tatkit simulate' with "
                "solver.record_full_boundary first",
                file=sys.stderr,
            )
            return 2
        values, sidecar = fileio.read_table(base)
        gdt = sidecar["meta"]["dt"]
        data = Trace(patch=full, dt=gdt, values=values, t_max=sidecar["meta"]["t_max"])
    else:
        values = _synthetic_boundary_data(region, full, data_cfg, dt, steps, t_max)
        data = Trace(patch=full, dt=dt, values=values, t_max=t_max)
    if data_cfg.get("zero_on_patch", True):
        vals = np.array(data.values)
        vals[patch.sample_indices] = 0.0
        data = Trace(patch=full, dt=data.dt, values=vals, t_max=data.t_max, t_start=data.t_start)

    run = simulate_exterior(speed, region, data, t_max, options)
    n_slices = steps // stride + 1
    dod = domain_of_dependence(
        p, horizon, region, patch, speed, delta_shrink, dt * stride, n_slices
    )
    report = verify_dod(run, dod.space_time_set)
    data_max = float(np.abs(data.values).max())
    ok = (not dod.admissible) or data_max == 0.0 or report.max_abs <= tolerance * data_max

    out = _out_dir(cfg)
    summary = {
        "admissible": dod.admissible,
        "complement_entry_margin": _json_safe(dod.complement_entry_margin),
        "horizon": horizon,
        "delta_shrink": delta_shrink,
        "max_abs_in_set": report.max_abs,
        "energy_fraction": report.energy_fraction,
        "data_max": data_max,
        "tolerance": tolerance,
        "passed": bool(ok),
        "slices": report.checked_slices,
    }
    outputs = [fileio.write_json(out / "summary.json", summary)]
    _finish(cfg, out, outputs)
    print(
        f"verify_dod: admissible={dod.admissible}, max |v| in set = {report.max_abs:.3e} "
        f"({'pass' if ok else 'FAIL'} at {tolerance:g} x max |data| = {tolerance * data_max:.3e})"
    )
    return 0 if ok else 1


# ---------------------------------------------------------------------------
# unique continuation


def cmd_uc(cfg: dict) -> int:
    grid = cfgmod.build_grid(cfg)
    speed = cfgmod.build_speed(cfg, grid)
    c = cfg.get("continuation")
    if not c:
        raise ConfigError("config section 'continuation' is required for this command")
    p = tuple(c["point"])
    rho = float(c["rho"])
    horizon = float(c["horizon"])
    delta_inj = c.get("delta_inj")
    delta_inj = horizon / 8.0 if delta_inj is None else float(delta_inj)
    set_dt = c.get("set_dt")
    set_dt = horizon / 64.0 if set_dt is None else float(set_dt)

    result = uc_iterate(p, rho, horizon, delta_inj, speed, set_dt)
    sts = result.space_time_set
    cyl = result.cylinder_indicator()
    env = result.causal_envelope_indicator(slack=3.0 * grid.h)
    chain_ok = bool(np.all(sts.indicator | ~cyl)) and bool(np.all(env | ~sts.indicator))

    out = _out_dir(cfg)
    outputs: list[Path] = []
    stride = int(c.get("time_stride", 8))
    for k in range(0, sts.steps, stride):
        outputs.extend(
            fileio.write_field(
                out / f"ucset_{k:05d}",
                grid,
                sts.indicator[:, :, k].astype(float),
                kind="spacetime-slice",
                meta={"time": float(sts.times()[k]), "label": sts.label},
            )
        )
    summary = {
        "iterations": result.iterations,
        "delta_inj": delta_inj,
        "set_dt": set_dt,
        "volume": sts.volume(),
        "containment_chain": chain_ok,
        "label": sts.label,
        "steps": sts.steps,
        "t0": sts.t0,
    }
    outputs.append(fileio.write_json(out / "summary.json", summary))
    _finish(cfg, out, outputs)
    print(
        f"uc: {result.iterations} expansion passes, volume {sts.volume()}, "
        f"containment chain {'ok' if chain_ok else 'VIOLATED'}"
    )
    return 0 if chain_ok else 1


# ---------------------------------------------------------------------------
# reconstruct


def cmd_reconstruct(cfg: dict) -> int:
    grid = cfgmod.build_grid(cfg)
    speed = cfgmod.build_speed(cfg, grid)
    region = cfgmod.build_region(cfg, grid)
    patch = cfgmod.build_patch(cfg, region)
    inv = cfg.get("inversion", {})
    options = cfgmod.solver_options(cfg)
    t_max = _t_max(cfg, region, patch, speed)

    phantom = None
    if inv.get("data_path"):
        values, sidecar = fileio.read_table(inv["data_path"])
        data = Trace(
            patch=patch,
            dt=sidecar["meta"]["dt"],
            values=values,
            t_max=sidecar["meta"]["t_max"],
        )
    else:
        phantom = cfgmod.build_phantom(cfg, region)
        data = forward_operator(phantom, patch, speed, t_max, options)

    run = landweber(
        data,
        patch,
        speed,
        t_max,
        iterations=int(inv.get("iterations", 50)),
        step_size=inv.get("step_size"),
        support=region,
        options=options,
        norm_seed=int(cfg.get("seed", 0)),
    )

    out = _out_dir(cfg)
    outputs: list[Path] = []
    outputs.extend(
        fileio.write_field(out / "estimate", grid, run.estimate, kind="reconstruction", meta=run.config)
    )
    hist_path = out / "residual_history.csv"
    with hist_path.open("w", encoding="utf-8", newline="\n") as fh:
        fh.write("iteration,residual\n")
        for i, r in enumerate(run.residual_history):
            fh.write(f"{i},{r:.17g}\n")
    outputs.append(hist_path)
    summary = {
        "iterations": run.iterations,
        "step_size": run.step_size,
        "final_residual": float(run.residual_history[-1]),
        "initial_residual": float(run.residual_history[0]),
        "t_max": t_max,
        "config": {k: _json_safe(v) for k, v in run.config.items()},
    }
    if phantom is not None:
        true = np.where(region.interior_mask, phantom.values, 0.0)
        denom = float(np.linalg.norm(true))
        if denom > 0:
            summary["relative_error"] = float(
                np.linalg.norm(run.estimate - true) / denom
            )
    outputs.append(fileio.write_json(out / "summary.json", summary))
    _finish(cfg, out, outputs)
    msg = f"reconstruct: final residual {summary['final_residual']:.6g}"
    if "relative_error" in summary:
        msg += f", relative error {summary['relative_error']:.4f}"
    print(msg)
    return 0


# ---------------------------------------------------------------------------
# report


def cmd_report(run_dirs: list[str], out_path: str | None) -> int:
    rows = []
    for d in run_dirs:
        summary_path = Path(d) / "summary.json"
        if not summary_path.exists():
            print(f"missing {summary_path}: run the pipeline that produces it first", file=sys.stderr)
            return 2
        payload = fileio.read_json(summary_path)
        rows.append(
            {
                "run": str(d),
                "final_residual": payload.get("final_residual"),
                "relative_error": payload.get("relative_error"),
                "status": payload.get("status"),
                "t_min": payload.get("t_min"),
                "iterations": payload.get("iterations"),
            }
        )

    def sort_key(row):
        r = row["final_residual"]
        return (r is None, r if r is not None else 0.0, row["run"])

    rows.sort(key=sort_key)
    header = ["run", "final_residual", "relative_error", "status", "t_min", "iterations"]
    lines_csv = [",".join(header)]
    for row in rows:
        lines_csv.append(",".join("" if row[k] is None else str(row[k]) for k in header))
    text_lines = []
    for row in rows:
        cells = [f"{k}={row[k]}" for k in header if row[k] is not None]
        text_lines.append("  ".join(cells))
    table_txt = "\n".join(text_lines)
    print(table_txt)
    if out_path:
        base = Path(out_path)
        base.parent.mkdir(parents=True, exist_ok=True)
        base.with_suffix(".csv").write_text("\n".join(lines_csv) + "\n", encoding="utf-8")
        base.with_suffix(".txt").write_text(table_txt + "\n", encoding="utf-8")
    return 0


# ---------------------------------------------------------------------------
# entry point


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tatkit",
        description="limited-view thermoacoustic tomography toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_text, **kw):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("config", help="path to the JSON experiment config")
        p.add_argument(
            "overrides",
            nargs="*",
            help="dotted key=value overrides, e.g. coverage.strategy=subsample",
        )
        return p

    p_dist = add("distance", "eikonal solve plus gradient-bound check")
    p_dist.add_argument("--check-file", help="check an existing distance field only")
    add("coverage", "detector coverage decision and minimal time")
    add("simulate", "forward acoustic simulation with boundary traces")
    add("verify-dod", "exterior solve checked against its domain of dependence")
    add("uc", "unique-continuation set expansion")
    add("reconstruct", "Landweber reconstruction from traces")
    p_rep = sub.add_parser("report", help="collate run summaries into a table")
    p_rep.add_argument("run_dirs", nargs="+", help="output directories to collate")
    p_rep.add_argument("--out", help="basename for report.csv/.txt", default=None)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "report":
            return cmd_report(args.run_dirs, args.out)
        cfg = cfgmod.load_config(args.config, args.overrides)
        if args.command == "distance":
            return cmd_distance(cfg, args.check_file)
        if args.command == "coverage":
            return cmd_coverage(cfg)
        if args.command == "simulate":
            return cmd_simulate(cfg)
        if args.command == "verify-dod":
            return cmd_verify_dod(cfg)
        if args.command == "uc":
            return cmd_uc(cfg)
        if args.command == "reconstruct":
            return cmd_reconstruct(cfg)
        raise ConfigError(f"unknown command {args.command!r}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
