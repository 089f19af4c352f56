"""On-disk formats: raw little-endian float64 rasters with JSON sidecars.

A field is stored as ``<base>.f64`` (row-major float64) next to
``<base>.json`` holding the grid, the value kind, and a checksum. Regions
and patches reuse the same sidecar. Nothing here writes timestamps, so
identical inputs produce bitwise-identical files.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from .field import BoundaryPatch, GridSpec, Region, make_patch

__all__ = [
    "FORMAT_VERSION",
    "checksum_bytes",
    "checksum_file",
    "write_field",
    "read_field",
    "write_region",
    "read_region",
    "write_patch",
    "read_patch",
    "write_table",
    "read_table",
    "write_trace_csv",
    "write_json",
    "read_json",
    "write_manifest",
]

FORMAT_VERSION = "1"


def checksum_bytes(data: bytes) -> str:
    return "sha256:" + hashlib.sha256(data).hexdigest()


def checksum_file(path: Path | str) -> str:
    return checksum_bytes(Path(path).read_bytes())


def write_json(path: Path | str, payload: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, sort_keys=True, indent=1) + "\n", encoding="utf-8")
    return path


def read_json(path: Path | str) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def write_field(
    base: Path | str,
    grid: GridSpec,
    values: np.ndarray,
    kind: str,
    meta: dict | None = None,
) -> tuple[Path, Path]:
    """Write values as <base>.f64 plus a <base>.json sidecar."""
    base = Path(base)
    values = np.ascontiguousarray(np.asarray(values, dtype="<f8"))
    if values.shape != grid.dims:
        raise ValueError(f"values shape {values.shape} does not match grid dims {grid.dims}")
    raw = values.tobytes()
    data_path = base.with_suffix(".f64")
    data_path.parent.mkdir(parents=True, exist_ok=True)
    data_path.write_bytes(raw)
    sidecar = {
        "format_version": FORMAT_VERSION,
        "kind": kind,
        "grid": grid.to_dict(),
        "dtype": "<f8",
        "order": "C",
        "shape": list(values.shape),
        "checksum": checksum_bytes(raw),
        "meta": meta or {},
    }
    meta_path = write_json(base.with_suffix(".json"), sidecar)
    return data_path, meta_path


def read_field(base: Path | str) -> tuple[GridSpec, np.ndarray, dict]:
    """Read a field pair back; verifies format version and checksum."""
    base = Path(base)
    sidecar = read_json(base.with_suffix(".json"))
    if sidecar.get("format_version") != FORMAT_VERSION:
        raise ValueError(
            f"unsupported field format version {sidecar.get('format_version')!r} "
            f"(expected {FORMAT_VERSION})"
        )
    raw = base.with_suffix(".f64").read_bytes()
    if checksum_bytes(raw) != sidecar["checksum"]:
        raise ValueError(f"checksum mismatch for {base}.f64")
    grid = GridSpec.from_dict(sidecar["grid"])
    values = np.frombuffer(raw, dtype="<f8").reshape(tuple(sidecar["shape"])).copy()
    return grid, values, sidecar


def write_region(base: Path | str, region: Region) -> tuple[Path, Path]:
    meta = {
        "boundary_points": region.boundary_points.tolist(),
        "boundary_normals": region.boundary_normals.tolist(),
        "boundary_params": region.boundary_params.tolist(),
        "perimeter": region.perimeter,
    }
    return write_field(base, region.grid, region.phi, kind="signed-distance", meta=meta)


def read_region(base: Path | str) -> Region:
    grid, phi, sidecar = read_field(base)
    if sidecar["kind"] != "signed-distance":
        raise ValueError(f"{base} holds kind {sidecar['kind']!r}, not a region")
    meta = sidecar["meta"]
    return Region(
        grid=grid,
        phi=phi,
        boundary_points=np.asarray(meta["boundary_points"]),
        boundary_normals=np.asarray(meta["boundary_normals"]),
        boundary_params=np.asarray(meta["boundary_params"]),
        perimeter=meta["perimeter"],
    )


def write_patch(path: Path | str, patch: BoundaryPatch, region_base: str) -> Path:
    payload = {
        "format_version": FORMAT_VERSION,
        "kind": "boundary-patch",
        "region": region_base,
        "arcs": [list(a) for a in patch.arcs],
        "sample_indices": patch.sample_indices.tolist(),
        "complement_indices": patch.complement_indices.tolist(),
    }
    return write_json(path, payload)


def read_patch(path: Path | str, region: Region) -> BoundaryPatch:
    payload = read_json(path)
    if payload.get("format_version") != FORMAT_VERSION:
        raise ValueError("unsupported patch format version")
    return make_patch(region, payload["arcs"])


def write_table(base: Path | str, values: np.ndarray, kind: str, meta: dict | None = None) -> tuple[Path, Path]:
    """Like :func:`write_field` but for non-grid 2-D arrays (traces etc.)."""
    base = Path(base)
    values = np.ascontiguousarray(np.asarray(values, dtype="<f8"))
    raw = values.tobytes()
    data_path = base.with_suffix(".f64")
    data_path.parent.mkdir(parents=True, exist_ok=True)
    data_path.write_bytes(raw)
    sidecar = {
        "format_version": FORMAT_VERSION,
        "kind": kind,
        "dtype": "<f8",
        "order": "C",
        "shape": list(values.shape),
        "checksum": checksum_bytes(raw),
        "meta": meta or {},
    }
    meta_path = write_json(base.with_suffix(".json"), sidecar)
    return data_path, meta_path


def read_table(base: Path | str) -> tuple[np.ndarray, dict]:
    base = Path(base)
    sidecar = read_json(base.with_suffix(".json"))
    if sidecar.get("format_version") != FORMAT_VERSION:
        raise ValueError(
            f"unsupported table format version {sidecar.get('format_version')!r}"
        )
    raw = base.with_suffix(".f64").read_bytes()
    if checksum_bytes(raw) != sidecar["checksum"]:
        raise ValueError(f"checksum mismatch for {base}.f64")
    values = np.frombuffer(raw, dtype="<f8").reshape(tuple(sidecar["shape"])).copy()
    return values, sidecar


def write_trace_csv(path: Path | str, trace) -> Path:
    """Receiver traces as CSV: a time column then one column per receiver."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    params = trace.patch.sample_params
    header = "time," + ",".join(f"r{k:04d}@s={params[k]:.9g}" for k in range(len(params)))
    times = trace.t_start + trace.dt * np.arange(trace.values.shape[1])
    table = np.column_stack([times, trace.values.T])
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        fh.write(header + "\n")
        np.savetxt(fh, table, delimiter=",", fmt="%.17g")
    return path


def write_manifest(outdir: Path | str, inputs: dict[str, str], outputs: list[Path]) -> Path:
    """Provenance manifest: checksums of every input and produced file."""
    outdir = Path(outdir)
    payload = {
        "format_version": FORMAT_VERSION,
        "inputs": dict(sorted(inputs.items())),
        "outputs": {p.name: checksum_file(p) for p in sorted(outputs)},
    }
    return write_json(outdir / "manifest.json", payload)
