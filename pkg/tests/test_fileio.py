import json

import numpy as np
import pytest

from tatkit import fileio
from tatkit.field import Disk, GridSpec, constant_speed, make_patch, make_region
from tatkit.wave import SimOptions, Trace, simulate
from tatkit.field import Bump, make_phantom


@pytest.fixture()
def grid():
    return GridSpec(origin=(-1.0, -1.0), spacing=(0.25, 0.25), dims=(9, 9))


def test_field_round_trip(tmp_path, grid):
    values = np.arange(81, dtype=float).reshape(9, 9)
    fileio.write_field(tmp_path / "f", grid, values, kind="test", meta={"note": 1})
    g2, v2, sidecar = fileio.read_field(tmp_path / "f")
    assert g2.same_as(grid)
    assert np.array_equal(v2, values)
    assert sidecar["kind"] == "test"
    assert sidecar["meta"]["note"] == 1


def test_checksum_mismatch_detected(tmp_path, grid):
    values = np.zeros(grid.dims)
    fileio.write_field(tmp_path / "f", grid, values, kind="test")
    raw = bytearray((tmp_path / "f.f64").read_bytes())
    raw[3] ^= 0xFF
    (tmp_path / "f.f64").write_bytes(bytes(raw))
    with pytest.raises(ValueError, match="checksum"):
        fileio.read_field(tmp_path / "f")


def test_version_mismatch_rejected(tmp_path, grid):
    values = np.zeros(grid.dims)
    fileio.write_field(tmp_path / "f", grid, values, kind="test")
    sidecar = json.loads((tmp_path / "f.json").read_text())
    sidecar["format_version"] = "0"
    (tmp_path / "f.json").write_text(json.dumps(sidecar))
    with pytest.raises(ValueError, match="version"):
        fileio.read_field(tmp_path / "f")


def test_region_round_trip(tmp_path):
    g = GridSpec.from_bounds((-2, -2), (2, 2), 1 / 32)
    region = make_region(g, Disk(center=(0.1, -0.2), radius=1.0))
    fileio.write_region(tmp_path / "reg", region)
    loaded = fileio.read_region(tmp_path / "reg")
    assert np.array_equal(loaded.phi, region.phi)
    assert np.allclose(loaded.boundary_points, region.boundary_points)
    assert np.allclose(loaded.boundary_params, region.boundary_params)
    assert loaded.perimeter == pytest.approx(region.perimeter)


def test_patch_round_trip(tmp_path):
    g = GridSpec.from_bounds((-2, -2), (2, 2), 1 / 32)
    region = make_region(g, Disk(center=(0, 0), radius=1.0))
    patch = make_patch(region, [(0.5, 2.5), (4.0, 5.0)])
    fileio.write_patch(tmp_path / "patch.json", patch, region_base="reg")
    loaded = fileio.read_patch(tmp_path / "patch.json", region)
    assert np.array_equal(loaded.sample_indices, patch.sample_indices)


def test_table_round_trip(tmp_path):
    values = np.random.default_rng(0).standard_normal((7, 13))
    fileio.write_table(tmp_path / "t", values, kind="trace", meta={"dt": 0.5})
    v2, sidecar = fileio.read_table(tmp_path / "t")
    assert np.array_equal(v2, values)
    assert sidecar["meta"]["dt"] == 0.5


def test_trace_csv(tmp_path):
    g = GridSpec.from_bounds((-1.5, -1.5), (1.5, 1.5), 1 / 16)
    speed = constant_speed(g, 1.0)
    region = make_region(g, Disk(center=(0, 0), radius=0.8))
    patch = make_patch(region, [(0.0, 1.0)])
    phantom = make_phantom(region, [Bump(center=(0.0, 0.0), radius=0.2, amplitude=1.0)])
    _, trace = simulate(speed, phantom, 0.3, patch, SimOptions(boundary="reflecting"))
    path = fileio.write_trace_csv(tmp_path / "trace.csv", trace)
    lines = path.read_text().splitlines()
    header = lines[0].split(",")
    assert header[0] == "time"
    assert len(header) == 1 + len(patch.sample_indices)
    assert header[1].startswith("r0000@s=")
    assert len(lines) == 1 + trace.n_samples
    first = np.array(lines[1].split(","), dtype=float)
    assert first[0] == 0.0


def test_manifest(tmp_path, grid):
    p1, p2 = fileio.write_field(tmp_path / "f", grid, np.zeros(grid.dims), kind="test")
    manifest = fileio.write_manifest(tmp_path, {"config": "sha256:abc"}, [p1, p2])
    payload = json.loads(manifest.read_text())
    assert payload["inputs"]["config"] == "sha256:abc"
    assert set(payload["outputs"]) == {"f.f64", "f.json"}
    for checksum in payload["outputs"].values():
        assert checksum.startswith("sha256:")


def test_writes_are_deterministic(tmp_path, grid):
    values = np.linspace(0, 1, 81).reshape(9, 9)
    fileio.write_field(tmp_path / "a", grid, values, kind="x", meta={"k": [1, 2]})
    fileio.write_field(tmp_path / "b", grid, values, kind="x", meta={"k": [1, 2]})
    assert (tmp_path / "a.f64").read_bytes() == (tmp_path / "b.f64").read_bytes()
    assert (tmp_path / "a.json").read_text() == (tmp_path / "b.json").read_text()
