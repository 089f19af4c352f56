"""Detector-coverage decision and minimal observation time.

A detector set covers the domain when every interior point has some
detector closer (in free-space travel time) than that detector's
exterior clearance from the unmeasured rest of the boundary. The margin
field quantifies by how much; the minimal time is the largest travel
time from the interior to the detector set.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .field import BoundaryPatch, Region, SpeedField
from .geodesic import (
    DistanceField,
    _march_from_seeds,
    _seeds_from_points,
    solve_eikonal,
)

__all__ = [
    "CoverageReport",
    "exterior_clearance",
    "check_property_p",
    "min_time",
]


def max_workers() -> int:
    """Worker cap for the per-detector solves, from TATKIT_MAX_WORKERS."""
    try:
        return max(1, int(os.environ.get("TATKIT_MAX_WORKERS", "1")))
    except ValueError:
        return 1


@dataclass(frozen=True)
class CoverageReport:
    """Outcome of the coverage check.

    ``margin`` holds max over detectors of (clearance - travel time) at
    interior nodes and NaN elsewhere; +/-inf encode the empty-complement
    and empty-detector edge cases, mirrored by the two flags. ``witness``
    is the index into the detector samples of the maximizing detector
    (-1 outside the domain). ``satisfied`` requires the minimal margin to
    clear ``epsilon``; within ``epsilon`` of zero the configuration is
    reported indeterminate at this resolution instead.
    """

    satisfied: bool
    indeterminate: bool
    min_margin: float
    margin: np.ndarray
    witness: np.ndarray
    clearance: np.ndarray
    clearance_infinite: bool
    t_min: float
    epsilon: float
    strategy: str
    requested_strategy: str
    offset_compat_defect: float | None

    def summary(self) -> dict:
        return {
            "satisfied": bool(self.satisfied),
            "indeterminate": bool(self.indeterminate),
            "min_margin": _json_float(self.min_margin),
            "t_min": _json_float(self.t_min),
            "epsilon": self.epsilon,
            "strategy": self.strategy,
            "requested_strategy": self.requested_strategy,
            "clearance_infinite": bool(self.clearance_infinite),
            "offset_compat_defect": _json_float(self.offset_compat_defect),
            "n_detectors": int(len(self.clearance)),
        }


def _json_float(x):
    if x is None:
        return None
    x = float(x)
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return x


def _check_patch(region: Region, patch: BoundaryPatch) -> None:
    if patch.region is region:
        return
    if not patch.region.grid.same_as(region.grid) or not np.array_equal(
        patch.region.boundary_params, region.boundary_params
    ):
        raise ValueError("patch does not belong to this region")


def exterior_clearance(
    region: Region, patch: BoundaryPatch, speed: SpeedField
) -> np.ndarray:
    """Exterior-restricted travel time from each detector to the unmeasured
    boundary; +inf for every detector when the whole boundary is measured."""
    _check_patch(region, patch)
    n = len(patch.sample_indices)
    if n == 0:
        return np.empty(0)
    if patch.is_full:
        return np.full(n, np.inf)
    dist = solve_eikonal(speed, patch.complement_samples, obstacle=region)
    return dist.sample(patch.samples)


def min_time(region: Region, patch: BoundaryPatch, speed: SpeedField) -> float:
    """Largest free-space travel time from interior nodes to the detectors."""
    _check_patch(region, patch)
    if patch.is_empty:
        raise ValueError("minimal time is undefined for an empty detector set")
    dist = solve_eikonal(speed, patch.samples)
    inside = region.interior_mask
    return float(dist.values[inside].max())


def _nested_order(n: int) -> np.ndarray:
    """Bit-reversal permutation of range(n): prefixes are evenly spread,
    and growing the prefix only adds detectors (keeps margins monotone)."""
    bits = max(1, (n - 1).bit_length())
    out = []
    for i in range(1 << bits):
        r = int(format(i, f"0{bits}b")[::-1], 2)
        if r < n:
            out.append(r)
    return np.asarray(out, dtype=np.int64)


def _offset_margin(
    region: Region, patch: BoundaryPatch, speed: SpeedField, w: np.ndarray
) -> tuple[np.ndarray, np.ndarray, float]:
    """Single sweep computing min over detectors of (d(x,p) - w(p)).

    Seeding detectors with value -w(p) is valid because w inherits the
    metric Lipschitz bound; the defect at the seeds measures how badly
    that compatibility is violated on this grid.
    """
    grid = speed.grid
    pts = np.asarray(patch.samples, dtype=float)
    labels = np.arange(len(pts), dtype=np.int32)
    seeds = _seeds_from_points(
        grid, speed.slowness(), pts, -w, labels, 4.0 * grid.h
    )
    values, reachable, lab = _march_from_seeds(speed, None, *seeds)
    sweep = DistanceField(
        grid=grid,
        values=values,
        reachable=reachable,
        mode="free-space",
        source={"type": "offset-detectors"},
        speed=speed,
    )
    defect = float(np.max(np.abs(sweep.sample(pts) + w)))
    return -values, lab, defect


def _subsample_margin(
    region: Region,
    patch: BoundaryPatch,
    speed: SpeedField,
    w: np.ndarray,
    k: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Max over k spread detectors of (w(p) - d(x,p)); a lower bound on the
    true margin that grows toward it as k increases."""
    n = len(patch.sample_indices)
    chosen = np.sort(_nested_order(n)[: max(1, min(k, n))])
    pts = np.asarray(patch.samples, dtype=float)

    def solve_one(idx: int) -> np.ndarray:
        return solve_eikonal(speed, pts[idx : idx + 1]).values

    workers = max_workers()
    if workers > 1 and len(chosen) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            fields = list(pool.map(solve_one, chosen))
    else:
        fields = [solve_one(i) for i in chosen]

    margin = np.full(speed.grid.dims, -np.inf)
    witness = np.full(speed.grid.dims, -1, dtype=np.int32)
    for idx, dvals in zip(chosen, fields):
        cand = w[idx] - dvals
        better = cand > margin  # strict: ties keep the lowest index
        margin[better] = cand[better]
        witness[better] = idx
    return margin, witness


def check_property_p(
    region: Region,
    patch: BoundaryPatch,
    speed: SpeedField,
    strategy: str = "offset-eikonal",
    subsample_k: int = 64,
    epsilon: float | None = None,
    compat_tolerance: float | None = None,
) -> CoverageReport:
    """Decide the coverage condition and produce margin and witness maps.

    ``offset-eikonal`` computes the exact margin in one sweep and falls
    back to ``subsample`` when the seed-compatibility defect exceeds
    ``compat_tolerance`` (default 2h). ``subsample`` runs one solve per
    chosen detector and lower-bounds the margin.
    """
    _check_patch(region, patch)
    if not speed.grid.same_as(region.grid):
        raise ValueError("speed and region live on different grids")
    if strategy not in ("offset-eikonal", "subsample"):
        raise ValueError(f"unknown coverage strategy {strategy!r}")
    grid = speed.grid
    h = grid.h
    if epsilon is None:
        epsilon = 3.0 * h
    if compat_tolerance is None:
        compat_tolerance = 2.0 * h
    inside = region.interior_mask

    margin = np.full(grid.dims, np.nan)
    witness = np.full(grid.dims, -1, dtype=np.int32)

    if patch.is_empty:
        margin[inside] = -np.inf
        return CoverageReport(
            satisfied=False,
            indeterminate=False,
            min_margin=-np.inf,
            margin=margin,
            witness=witness,
            clearance=np.empty(0),
            clearance_infinite=False,
            t_min=np.inf,
            epsilon=epsilon,
            strategy=strategy,
            requested_strategy=strategy,
            offset_compat_defect=None,
        )

    w = exterior_clearance(region, patch, speed)
    t_min = min_time(region, patch, speed)

    if patch.is_full:
        margin[inside] = np.inf
        witness[inside] = 0  # every detector witnesses; lowest index by convention
        return CoverageReport(
            satisfied=True,
            indeterminate=False,
            min_margin=np.inf,
            margin=margin,
            witness=witness,
            clearance=w,
            clearance_infinite=True,
            t_min=t_min,
            epsilon=epsilon,
            strategy=strategy,
            requested_strategy=strategy,
            offset_compat_defect=None,
        )

    requested = strategy
    defect = None
    if strategy == "offset-eikonal":
        full_margin, full_witness, defect = _offset_margin(region, patch, speed, w)
        if defect > compat_tolerance:
            strategy = "subsample"
    if strategy == "subsample":
        full_margin, full_witness = _subsample_margin(region, patch, speed, w, subsample_k)

    margin[inside] = full_margin[inside]
    witness[inside] = full_witness[inside]
    min_margin = float(full_margin[inside].min()) if inside.any() else np.inf
    return CoverageReport(
        satisfied=bool(min_margin > epsilon),
        indeterminate=bool(abs(min_margin) <= epsilon),
        min_margin=min_margin,
        margin=margin,
        witness=witness,
        clearance=w,
        clearance_infinite=False,
        t_min=t_min,
        epsilon=epsilon,
        strategy=strategy,
        requested_strategy=requested,
        offset_compat_defect=defect,
    )
