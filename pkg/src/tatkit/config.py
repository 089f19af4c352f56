"""Experiment configuration: one JSON document drives every command.

Unknown keys are rejected (typos should fail loudly, not silently change
an experiment), cross-references are resolved here, and all randomness
flows from the single top-level seed.
"""

from __future__ import annotations

import json
from pathlib import Path

from .field import (
    Bump,
    Disk,
    Ellipse,
    GridSpec,
    Region,
    RoundedPolygon,
    SpeedField,
    constant_speed,
    layered_speed,
    make_patch,
    make_phantom,
    make_region,
    radial_speed,
    speed_from_values,
)
from .wave import SimOptions

__all__ = ["ConfigError", "load_config", "apply_overrides"]


class ConfigError(ValueError):
    """Bad configuration; maps to the usage exit code."""


_SCHEMA = {
    "grid": {"origin", "spacing", "dims"},
    "speed": {
        "model",
        "value",
        "bound",
        "c_lower",
        "c_upper",
        "interface_y",
        "blend_halfwidth",
        "center",
        "c_inner",
        "c_outer",
        "r_inner",
        "r_outer",
        "path",
    },
    "region": {"shape", "center", "radius", "a", "b", "vertices", "corner_radius"},
    "patch": {"arcs", "arcs_fraction"},
    "phantom": {"bumps"},
    "solver": {
        "boundary",
        "cfl_factor",
        "sponge_width",
        "sponge_strength",
        "snapshot_stride",
        "t_max",
        "t_max_factor",
        "record_full_boundary",
    },
    "coverage": {"strategy", "subsample_k", "epsilon_factor"},
    "continuation": {
        "point",
        "rho",
        "horizon",
        "delta_shrink",
        "delta_inj",
        "set_dt",
        "time_stride",
    },
    "distance": {"mode", "points", "use_patch", "oracle"},
    "verify_dod": {
        "point",
        "horizon",
        "delta_shrink",
        "tolerance",
        "data",
        "time_stride",
    },
    "inversion": {
        "iterations",
        "step_size",
        "power_iterations",
        "data_path",
    },
    "output_dir": None,
    "seed": None,
}

_DATA_KEYS = {
    "source",
    "path",
    "arc_center",
    "arc_halfwidth",
    "time_center",
    "time_halfwidth",
    "amplitude",
    "zero_on_patch",
}


def _reject_unknown(cfg: dict) -> None:
    for key, sub in cfg.items():
        if key not in _SCHEMA:
            raise ConfigError(f"unknown config key {key!r}")
        allowed = _SCHEMA[key]
        if allowed is None:
            continue
        if not isinstance(sub, dict):
            raise ConfigError(f"config section {key!r} must be an object")
        for k in sub:
            if k not in allowed:
                raise ConfigError(f"unknown key {key}.{k!r}")
        if key == "verify_dod" and isinstance(sub.get("data"), dict):
            for k in sub["data"]:
                if k not in _DATA_KEYS:
                    raise ConfigError(f"unknown key verify_dod.data.{k!r}")


def load_config(path: str | Path, overrides: list[str] | None = None) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        cfg = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config parse error in {path}: line {exc.lineno}: {exc.msg}")
    if not isinstance(cfg, dict):
        raise ConfigError("config root must be a JSON object")
    if overrides:
        cfg = apply_overrides(cfg, overrides)
    _reject_unknown(cfg)
    return cfg


def apply_overrides(cfg: dict, overrides: list[str]) -> dict:
    """Apply dotted key=value pairs; values parse as JSON, else strings."""
    import copy

    cfg = copy.deepcopy(cfg)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        dotted, raw = item.split("=", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = cfg
        parts = dotted.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override path {dotted!r} crosses a non-object")
        node[parts[-1]] = value
    return cfg


def _require(cfg: dict, section: str) -> dict:
    if section not in cfg:
        raise ConfigError(f"config section {section!r} is required for this command")
    return cfg[section]


def build_grid(cfg: dict) -> GridSpec:
    g = _require(cfg, "grid")
    spacing = g.get("spacing")
    if isinstance(spacing, (int, float)):
        spacing = (spacing, spacing)
    try:
        return GridSpec(
            origin=tuple(g["origin"]), spacing=tuple(spacing), dims=tuple(g["dims"])
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad grid section: {exc}")


def build_speed(cfg: dict, grid: GridSpec) -> SpeedField:
    s = _require(cfg, "speed")
    model = s.get("model", "constant")
    try:
        if model == "constant":
            return constant_speed(grid, float(s.get("value", 1.0)), s.get("bound"))
        if model == "layered":
            return layered_speed(
                grid,
                float(s["c_lower"]),
                float(s["c_upper"]),
                float(s.get("interface_y", 0.0)),
                s.get("blend_halfwidth"),
                s.get("bound"),
            )
        if model == "radial":
            return radial_speed(
                grid,
                tuple(s.get("center", (0.0, 0.0))),
                float(s["c_inner"]),
                float(s["c_outer"]),
                float(s["r_inner"]),
                float(s["r_outer"]),
                s.get("bound"),
            )
        if model == "from-file":
            from .fileio import read_field

            fgrid, values, _ = read_field(s["path"])
            if not fgrid.same_as(grid):
                raise ConfigError("speed file grid does not match the config grid")
            return speed_from_values(grid, values, s.get("bound"))
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad speed section: {exc}")
    raise ConfigError(f"unknown speed model {model!r}")


def build_region(cfg: dict, grid: GridSpec) -> Region:
    r = _require(cfg, "region")
    shape_name = r.get("shape")
    try:
        if shape_name == "disk":
            shape = Disk(center=tuple(r.get("center", (0.0, 0.0))), radius=float(r["radius"]))
        elif shape_name == "ellipse":
            shape = Ellipse(
                center=tuple(r.get("center", (0.0, 0.0))), a=float(r["a"]), b=float(r["b"])
            )
        elif shape_name == "polygon":
            shape = RoundedPolygon(
                vertices=tuple(map(tuple, r["vertices"])),
                corner_radius=float(r["corner_radius"]),
            )
        else:
            raise ConfigError(f"unknown region shape {shape_name!r}")
        return make_region(grid, shape)
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad region section: {exc}")


def build_patch(cfg: dict, region: Region):
    p = _require(cfg, "patch")
    arcs = p.get("arcs")
    if arcs is None and "arcs_fraction" in p:
        arcs = [
            (lo * region.perimeter, hi * region.perimeter)
            for lo, hi in p["arcs_fraction"]
        ]
    if arcs is None:
        raise ConfigError("patch section needs 'arcs' or 'arcs_fraction'")
    try:
        return make_patch(region, arcs)
    except ValueError as exc:
        raise ConfigError(f"bad patch section: {exc}")


def build_phantom(cfg: dict, region: Region):
    p = _require(cfg, "phantom")
    try:
        bumps = [
            Bump(
                center=tuple(b["center"]),
                radius=float(b["radius"]),
                amplitude=float(b.get("amplitude", 1.0)),
                smoothness=int(b.get("smoothness", 2)),
            )
            for b in p.get("bumps", [])
        ]
        return make_phantom(region, bumps)
    except ValueError as exc:
        raise ConfigError(f"bad phantom section: {exc}")


def solver_options(cfg: dict, **extra) -> SimOptions:
    s = cfg.get("solver", {})
    kwargs = dict(
        boundary=s.get("boundary", "sponge"),
        cfl_factor=float(s.get("cfl_factor", 0.9)),
        sponge_width=int(s.get("sponge_width", 16)),
        sponge_strength=s.get("sponge_strength"),
    )
    if s.get("snapshot_stride") is not None:
        kwargs["snapshot_stride"] = int(s["snapshot_stride"])
    kwargs.update(extra)
    try:
        return SimOptions(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"bad solver section: {exc}")
