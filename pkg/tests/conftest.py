import numpy as np
import pytest

from tatkit.field import Disk, GridSpec, constant_speed, make_patch, make_region
from tatkit.geodesic import warmup


@pytest.fixture(scope="session", autouse=True)
def _jit_warmup():
    # compile the marching kernel once so timed tests measure the solve only
    warmup()


@pytest.fixture(scope="session")
def disk_setup():
    """Unit disk at h = 1/64 with a constant unit speed, shared read-only."""
    grid = GridSpec.from_bounds((-1.5, -1.5), (1.5, 1.5), 1 / 64)
    speed = constant_speed(grid, 1.0)
    region = make_region(grid, Disk(center=(0.0, 0.0), radius=1.0))
    return grid, speed, region


def three_quarter_patch(region):
    P = region.perimeter
    return make_patch(region, [(P / 8, 7 * P / 8)])


def quarter_patch(region):
    P = region.perimeter
    return make_patch(region, [(3 * P / 8, 5 * P / 8)])


def rel_diff(a, b):
    return abs(a - b) / max(abs(a), abs(b), 1e-300)


def make_disk(h, radius=1.0, half_extent=1.5, c=1.0):
    grid = GridSpec.from_bounds((-half_extent, -half_extent), (half_extent, half_extent), h)
    speed = constant_speed(grid, c)
    region = make_region(grid, Disk(center=(0.0, 0.0), radius=radius))
    return grid, speed, region


def exact_disk_exterior_wrap(r_src: float, radius: float = 1.0) -> float:
    """Exterior geodesic length from (r, 0) to (-r, 0) around a disk."""
    tangent = np.sqrt(r_src**2 - radius**2)
    arc = (np.pi - 2.0 * np.arccos(radius / r_src)) * radius
    return 2.0 * tangent + arc
