"""Grids, sound-speed fields, domains, boundary patches, and phantoms.

Everything downstream (eikonal solves, wave stepping, coverage checks)
consumes the sampled representations built here. All containers are
immutable after construction and safe to share across workers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "GridSpec",
    "SpeedField",
    "Region",
    "BoundaryPatch",
    "Phantom",
    "Bump",
    "Disk",
    "Ellipse",
    "RoundedPolygon",
    "make_region",
    "make_patch",
    "make_phantom",
    "constant_speed",
    "layered_speed",
    "radial_speed",
    "speed_from_values",
    "sample_bilinear",
]


# ---------------------------------------------------------------------------
# grid


@dataclass(frozen=True)
class GridSpec:
    """Uniform rectangular grid of nodes in the plane.

    Node (i, j) sits at ``origin + (i * spacing[0], j * spacing[1])``.
    Value arrays are indexed ``[i, j]`` (x first), C order.
    """

    origin: tuple[float, float]
    spacing: tuple[float, float]
    dims: tuple[int, int]
    dimension: int = 2

    def __post_init__(self):
        if self.dimension != 2:
            raise ValueError("only dimension 2 is supported (3 is reserved)")
        if len(self.origin) != 2 or len(self.spacing) != 2 or len(self.dims) != 2:
            raise ValueError("origin, spacing, dims must have length 2")
        if any(h <= 0 for h in self.spacing):
            raise ValueError("grid spacing must be positive")
        if any(n < 8 for n in self.dims):
            raise ValueError("grid dims must be at least 8 per axis")
        object.__setattr__(self, "origin", (float(self.origin[0]), float(self.origin[1])))
        object.__setattr__(self, "spacing", (float(self.spacing[0]), float(self.spacing[1])))
        object.__setattr__(self, "dims", (int(self.dims[0]), int(self.dims[1])))

    @classmethod
    def from_bounds(cls, lo: Sequence[float], hi: Sequence[float], h: float) -> "GridSpec":
        """Grid covering [lo, hi] with spacing as close to h as fits exactly."""
        dims = tuple(int(round((hi[k] - lo[k]) / h)) + 1 for k in range(2))
        spacing = tuple((hi[k] - lo[k]) / (dims[k] - 1) for k in range(2))
        return cls(origin=(lo[0], lo[1]), spacing=spacing, dims=dims)

    @property
    def nx(self) -> int:
        return self.dims[0]

    @property
    def ny(self) -> int:
        return self.dims[1]

    @property
    def h(self) -> float:
        """Largest spacing, used as the resolution scale in tolerances."""
        return max(self.spacing)

    @property
    def upper(self) -> tuple[float, float]:
        return (
            self.origin[0] + self.spacing[0] * (self.dims[0] - 1),
            self.origin[1] + self.spacing[1] * (self.dims[1] - 1),
        )

    def axis(self, k: int) -> np.ndarray:
        return self.origin[k] + self.spacing[k] * np.arange(self.dims[k])

    def meshgrid(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.axis(0), self.axis(1), indexing="ij")

    def nodes(self) -> np.ndarray:
        """All node coordinates as an (nx*ny, 2) array in C order."""
        xx, yy = self.meshgrid()
        return np.column_stack([xx.ravel(), yy.ravel()])

    def contains(self, points: np.ndarray, slack: float = 1e-9) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        lo = np.asarray(self.origin) - slack
        hi = np.asarray(self.upper) + slack
        return np.all((pts >= lo) & (pts <= hi), axis=1)

    def to_index(self, points: np.ndarray) -> np.ndarray:
        """Fractional index coordinates of world points."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return (pts - np.asarray(self.origin)) / np.asarray(self.spacing)

    def same_as(self, other: "GridSpec", tol: float = 1e-12) -> bool:
        return (
            self.dims == other.dims
            and all(abs(a - b) <= tol for a, b in zip(self.origin, other.origin))
            and all(abs(a - b) <= tol for a, b in zip(self.spacing, other.spacing))
        )

    def to_dict(self) -> dict:
        return {
            "origin": list(self.origin),
            "spacing": list(self.spacing),
            "dims": list(self.dims),
            "dimension": self.dimension,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GridSpec":
        return cls(
            origin=tuple(d["origin"]),
            spacing=tuple(d["spacing"]),
            dims=tuple(d["dims"]),
            dimension=d.get("dimension", 2),
        )


def sample_bilinear(grid: GridSpec, values: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Bilinear interpolation of a node field at world points (clamped)."""
    idx = grid.to_index(points)
    fi = np.clip(idx[:, 0], 0.0, grid.nx - 1.0)
    fj = np.clip(idx[:, 1], 0.0, grid.ny - 1.0)
    i0 = np.minimum(fi.astype(np.int64), grid.nx - 2)
    j0 = np.minimum(fj.astype(np.int64), grid.ny - 2)
    tx = fi - i0
    ty = fj - j0
    v00 = values[i0, j0]
    v10 = values[i0 + 1, j0]
    v01 = values[i0, j0 + 1]
    v11 = values[i0 + 1, j0 + 1]
    return (
        v00 * (1 - tx) * (1 - ty)
        + v10 * tx * (1 - ty)
        + v01 * (1 - tx) * ty
        + v11 * tx * ty
    )


# ---------------------------------------------------------------------------
# speed


@dataclass(frozen=True)
class SpeedField:
    """Sound speed c sampled on grid nodes with a hard two-sided bound.

    The bound M > 1 with 1/M < c < M everywhere is a constructor
    invariant; violating values are rejected outright.
    """

    grid: GridSpec
    values: np.ndarray
    bound: float

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != self.grid.dims:
            raise ValueError(f"speed values shape {vals.shape} != grid dims {self.grid.dims}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("speed values must be finite")
        if self.bound <= 1.0:
            raise ValueError("speed bound M must be > 1")
        if not (np.all(vals < self.bound) and np.all(vals > 1.0 / self.bound)):
            raise ValueError(
                f"speed values must satisfy 1/M < c < M with M={self.bound}; "
                f"got range [{vals.min()}, {vals.max()}]"
            )
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "bound", float(self.bound))

    @property
    def c_max(self) -> float:
        return float(self.values.max())

    @property
    def c_min(self) -> float:
        return float(self.values.min())

    def at(self, points: np.ndarray) -> np.ndarray:
        return sample_bilinear(self.grid, self.values, points)

    def slowness(self) -> np.ndarray:
        return 1.0 / self.values


def _default_bound(values: np.ndarray) -> float:
    m = max(float(values.max()), 1.0 / float(values.min()))
    return m * (1.0 + 1e-9) + 1e-9


def speed_from_values(grid: GridSpec, values: np.ndarray, bound: float | None = None) -> SpeedField:
    values = np.asarray(values, dtype=float)
    return SpeedField(grid, values, _default_bound(values) if bound is None else bound)


def constant_speed(grid: GridSpec, value: float, bound: float | None = None) -> SpeedField:
    return speed_from_values(grid, np.full(grid.dims, float(value)), bound)


def _smoothstep(t: np.ndarray) -> np.ndarray:
    t = np.clip(t, 0.0, 1.0)
    return t * t * (3.0 - 2.0 * t)


def layered_speed(
    grid: GridSpec,
    c_lower: float,
    c_upper: float,
    interface_y: float = 0.0,
    blend_halfwidth: float | None = None,
    bound: float | None = None,
) -> SpeedField:
    """Two horizontal layers joined by a C1 smoothstep over 2*blend_halfwidth."""
    if blend_halfwidth is None:
        blend_halfwidth = 2.0 * grid.h
    _, yy = grid.meshgrid()
    s = _smoothstep((yy - interface_y + blend_halfwidth) / (2.0 * blend_halfwidth))
    return speed_from_values(grid, c_lower + (c_upper - c_lower) * s, bound)


def radial_speed(
    grid: GridSpec,
    center: Sequence[float],
    c_inner: float,
    c_outer: float,
    r_inner: float,
    r_outer: float,
    bound: float | None = None,
) -> SpeedField:
    """Radially graded speed, C1 smoothstep between the two radii."""
    if not 0.0 <= r_inner < r_outer:
        raise ValueError("need 0 <= r_inner < r_outer")
    xx, yy = grid.meshgrid()
    r = np.hypot(xx - center[0], yy - center[1])
    s = _smoothstep((r - r_inner) / (r_outer - r_inner))
    return speed_from_values(grid, c_inner + (c_outer - c_inner) * s, bound)


# ---------------------------------------------------------------------------
# shapes (signed distance + boundary parametrization)


def _cross2(u: np.ndarray, v: np.ndarray) -> float:
    return float(u[0] * v[1] - u[1] * v[0])


@dataclass(frozen=True)
class Disk:
    center: tuple[float, float]
    radius: float

    def sdf(self, pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        return np.hypot(pts[:, 0] - self.center[0], pts[:, 1] - self.center[1]) - self.radius

    def perimeter(self) -> float:
        return 2.0 * math.pi * self.radius

    def boundary(self, s: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        theta = np.asarray(s, dtype=float) / self.radius
        n = np.column_stack([np.cos(theta), np.sin(theta)])
        return np.asarray(self.center) + self.radius * n, n


@dataclass(frozen=True)
class Ellipse:
    center: tuple[float, float]
    a: float
    b: float
    _arc_table: tuple = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.a <= 0 or self.b <= 0:
            raise ValueError("ellipse semi-axes must be positive")
        # cumulative arc length over parameter angle, for uniform resampling
        theta = np.linspace(0.0, 2.0 * math.pi, 16385)
        mid = 0.5 * (theta[:-1] + theta[1:])
        ds = np.hypot(self.a * np.sin(mid), self.b * np.cos(mid)) * np.diff(theta)
        cum = np.concatenate([[0.0], np.cumsum(ds)])
        object.__setattr__(self, "_arc_table", (theta, cum))

    def perimeter(self) -> float:
        return float(self._arc_table[1][-1])

    def _theta_of_arc(self, s: np.ndarray) -> np.ndarray:
        theta, cum = self._arc_table
        return np.interp(np.mod(s, cum[-1]), cum, theta)

    def boundary(self, s: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        th = self._theta_of_arc(np.asarray(s, dtype=float))
        pts = np.column_stack(
            [self.center[0] + self.a * np.cos(th), self.center[1] + self.b * np.sin(th)]
        )
        grad = np.column_stack([np.cos(th) / self.a, np.sin(th) / self.b])
        return pts, grad / np.linalg.norm(grad, axis=1, keepdims=True)

    def sdf(self, pts: np.ndarray) -> np.ndarray:
        """Exact signed distance via the Lagrange-multiplier root, bisected.

        The nearest boundary point of p is q = (a^2 px/(t+a^2), b^2 py/(t+b^2))
        where t solves (a px/(t+a^2))^2 + (b py/(t+b^2))^2 = 1; the left side
        is strictly decreasing for t > -min(a,b)^2, so bisection is safe.
        Points on the symmetry axes bifurcate (the Lagrange root degenerates
        inside the evolute), so they take explicit branches.
        """
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        px = np.abs(pts[:, 0] - self.center[0])
        py = np.abs(pts[:, 1] - self.center[1])
        a, b = self.a, self.b
        inside = (px / a) ** 2 + (py / b) ** 2 < 1.0
        tol = 1e-9 * max(a, b)
        on_x = py <= tol
        on_y = px <= tol
        dist = np.empty(px.shape)

        if on_x.any():
            x = px[on_x]
            cusp = max((a * a - b * b) / a, 0.0)
            d = np.empty(x.shape)
            near = x < cusp
            if near.any():
                qx = a * a * x[near] / (a * a - b * b)
                qy = b * np.sqrt(np.maximum(0.0, 1.0 - (qx / a) ** 2))
                d[near] = np.hypot(x[near] - qx, qy)
            d[~near] = np.abs(x[~near] - a)
            dist[on_x] = d
        if on_y.any():
            y = py[on_y]
            cusp = max((b * b - a * a) / b, 0.0)
            d = np.empty(y.shape)
            near = y < cusp
            if near.any():
                qy = b * b * y[near] / (b * b - a * a)
                qx = a * np.sqrt(np.maximum(0.0, 1.0 - (qy / b) ** 2))
                d[near] = np.hypot(qx, y[near] - qy)
            d[~near] = np.abs(y[~near] - b)
            dist[on_y] = d

        generic = ~(on_x | on_y)
        if generic.any():
            qx = px[generic]
            qy = py[generic]
            lo = np.full(qx.shape, -min(a, b) ** 2 * (1.0 - 1e-14))
            hi = np.maximum(a * qx + a * a, b * qy + b * b)
            for _ in range(4):  # ensure the upper bracket is on the negative side
                g_hi = (a * qx / (hi + a * a)) ** 2 + (b * qy / (hi + b * b)) ** 2 - 1.0
                grow = g_hi > 0
                if not grow.any():
                    break
                hi = np.where(grow, hi * 4.0 + 1.0, hi)
            for _ in range(100):
                t = 0.5 * (lo + hi)
                g = (a * qx / (t + a * a)) ** 2 + (b * qy / (t + b * b)) ** 2 - 1.0
                lo = np.where(g > 0, t, lo)
                hi = np.where(g > 0, hi, t)
            t = 0.5 * (lo + hi)
            nx_ = a * a * qx / (t + a * a)
            ny_ = b * b * qy / (t + b * b)
            dist[generic] = np.hypot(qx - nx_, qy - ny_)
        return np.where(inside, -dist, dist)


@dataclass(frozen=True)
class RoundedPolygon:
    """Convex polygon with circular fillets of the given radius at corners."""

    vertices: tuple
    corner_radius: float

    def __post_init__(self):
        verts = np.asarray(self.vertices, dtype=float)
        if verts.ndim != 2 or verts.shape[0] < 3 or verts.shape[1] != 2:
            raise ValueError("need at least 3 vertices of dimension 2")
        if self.corner_radius <= 0:
            raise ValueError("corner radius must be positive")
        # enforce counterclockwise convex ordering
        area2 = 0.0
        n = len(verts)
        for i in range(n):
            x0, y0 = verts[i]
            x1, y1 = verts[(i + 1) % n]
            area2 += x0 * y1 - x1 * y0
        if area2 < 0:
            verts = verts[::-1].copy()
        for i in range(n):
            a = verts[i]
            b = verts[(i + 1) % n]
            c = verts[(i + 2) % n]
            if _cross2(b - a, c - b) <= 0:
                raise ValueError("polygon must be strictly convex")
        object.__setattr__(self, "vertices", tuple(map(tuple, verts)))
        object.__setattr__(self, "_geom", self._build_geometry())

    def _build_geometry(self):
        verts = np.asarray(self.vertices, dtype=float)
        r = self.corner_radius
        n = len(verts)
        # inset each edge line inward by r; intersections are the fillet centers
        centers = []
        for i in range(n):
            p_prev = verts[(i - 1) % n]
            p = verts[i]
            p_next = verts[(i + 1) % n]
            e0 = p - p_prev
            e1 = p_next - p
            n0 = np.array([e0[1], -e0[0]]) / np.linalg.norm(e0)  # outward for CCW
            n1 = np.array([e1[1], -e1[0]]) / np.linalg.norm(e1)
            # intersect lines (p_prev - r n0) + t e0 and (p - r n1) + u e1
            A = np.column_stack([e0, -e1])
            rhs = (p - r * n1) - (p_prev - r * n0)
            try:
                t, _ = np.linalg.solve(A, rhs)
            except np.linalg.LinAlgError:
                raise ValueError("corner radius too large for this polygon")
            centers.append((p_prev - r * n0) + t * e0)
        centers = np.asarray(centers)
        for i in range(n):
            a = centers[i]
            b = centers[(i + 1) % n]
            c = centers[(i + 2) % n]
            if _cross2(b - a, c - b) <= 0:
                raise ValueError("corner radius too large for this polygon")
        return centers

    def sdf(self, pts: np.ndarray) -> np.ndarray:
        """Distance to the inset polygon minus the fillet radius (exact)."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        centers = np.asarray(self._geom)
        n = len(centers)
        dmin = np.full(pts.shape[0], np.inf)
        inside = np.ones(pts.shape[0], dtype=bool)
        for i in range(n):
            a = centers[i]
            b = centers[(i + 1) % n]
            e = b - a
            L2 = float(e @ e)
            t = np.clip(((pts - a) @ e) / L2, 0.0, 1.0)
            proj = a + t[:, None] * e
            dmin = np.minimum(dmin, np.hypot(*(pts - proj).T))
            rel = pts - a
            inside &= e[0] * rel[:, 1] - e[1] * rel[:, 0] >= 0
        return np.where(inside, -dmin, dmin) - self.corner_radius

    def perimeter(self) -> float:
        centers = np.asarray(self._geom)
        n = len(centers)
        edge_len = sum(
            float(np.linalg.norm(centers[(i + 1) % n] - centers[i])) for i in range(n)
        )
        return edge_len + 2.0 * math.pi * self.corner_radius

    def boundary(self, s: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        # piecewise: arc at corner i, then straight run to corner i+1
        centers = np.asarray(self._geom)
        r = self.corner_radius
        n = len(centers)
        pieces = []  # (kind, length, data)
        for i in range(n):
            a = centers[i]
            b = centers[(i + 1) % n]
            c = centers[(i + 2) % n]
            e0 = (b - a) / np.linalg.norm(b - a)
            e1 = (c - b) / np.linalg.norm(c - b)
            n0 = np.array([e0[1], -e0[0]])
            n1 = np.array([e1[1], -e1[0]])
            th0 = math.atan2(n0[1], n0[0])
            th1 = math.atan2(n1[1], n1[0])
            turn = (th1 - th0) % (2.0 * math.pi)
            pieces.append(("seg", float(np.linalg.norm(b - a)), (a + r * n0, b + r * n0, n0)))
            pieces.append(("arc", r * turn, (b, th0, turn)))
        lengths = np.array([p[1] for p in pieces])
        cum = np.concatenate([[0.0], np.cumsum(lengths)])
        total = cum[-1]
        s = np.mod(np.asarray(s, dtype=float), total)
        out_p = np.empty((s.size, 2))
        out_n = np.empty((s.size, 2))
        seg_idx = np.clip(np.searchsorted(cum, s, side="right") - 1, 0, len(pieces) - 1)
        for k in range(len(pieces)):
            mask = seg_idx == k
            if not mask.any():
                continue
            kind, length, data = pieces[k]
            local = (s[mask] - cum[k]) / length
            if kind == "seg":
                p0, p1, nrm = data
                out_p[mask] = p0 + local[:, None] * (p1 - p0)
                out_n[mask] = nrm
            else:
                ctr, th0, turn = data
                ang = th0 + local * turn
                nrm = np.column_stack([np.cos(ang), np.sin(ang)])
                out_p[mask] = ctr + r * nrm
                out_n[mask] = nrm
        return out_p, out_n


# ---------------------------------------------------------------------------
# region


@dataclass(frozen=True)
class Region:
    """Bounded domain as a signed distance field (negative inside).

    Boundary samples are approximately uniformly spaced in arc length and
    carry outward unit normals and the arc parameter.
    """

    grid: GridSpec
    phi: np.ndarray
    boundary_points: np.ndarray
    boundary_normals: np.ndarray
    boundary_params: np.ndarray
    perimeter: float
    shape: object = field(default=None, compare=False)

    def __post_init__(self):
        phi = np.asarray(self.phi, dtype=float)
        phi.setflags(write=False)
        object.__setattr__(self, "phi", phi)
        h = self.grid.h
        pb = sample_bilinear(self.grid, phi, self.boundary_points)
        if np.max(np.abs(pb)) > h:
            raise ValueError("boundary samples stray more than h from the zero level set")
        norms = np.linalg.norm(self.boundary_normals, axis=1)
        if np.max(np.abs(norms - 1.0)) > 1e-9:
            raise ValueError("boundary normals must be unit length")

    @property
    def interior_mask(self) -> np.ndarray:
        return self.phi < 0.0

    @property
    def n_boundary(self) -> int:
        return len(self.boundary_points)

    def sdf(self, pts: np.ndarray) -> np.ndarray:
        """Signed distance at arbitrary points (analytic when available)."""
        if self.shape is not None:
            return self.shape.sdf(pts)
        return sample_bilinear(self.grid, self.phi, pts)


def make_region(grid: GridSpec, shape: Disk | Ellipse | RoundedPolygon) -> Region:
    """Sample a shape onto the grid and discretize its boundary.

    Rejects shapes that come within 4h of the grid edge.
    """
    h = grid.h
    phi = shape.sdf(grid.nodes()).reshape(grid.dims)

    edge = np.zeros(grid.dims, dtype=bool)
    edge[0, :] = edge[-1, :] = True
    edge[:, 0] = edge[:, -1] = True
    if phi[edge].min() < 4.0 * h:
        raise ValueError("shape touches the grid boundary (need margin >= 4h)")
    if phi.min() >= 0.0:
        raise ValueError("shape has no interior on this grid")

    perim = shape.perimeter()
    n_samples = max(int(math.ceil(perim / h)), 8)
    params = perim * np.arange(n_samples) / n_samples
    points, normals = shape.boundary(params)
    return Region(
        grid=grid,
        phi=phi,
        boundary_points=points,
        boundary_normals=normals,
        boundary_params=params,
        perimeter=perim,
        shape=shape,
    )


# ---------------------------------------------------------------------------
# boundary patch


@dataclass(frozen=True)
class BoundaryPatch:
    """Partition of a region's boundary samples into detectors and the rest."""

    region: Region
    arcs: tuple
    sample_indices: np.ndarray
    complement_indices: np.ndarray

    @property
    def samples(self) -> np.ndarray:
        return self.region.boundary_points[self.sample_indices]

    @property
    def complement_samples(self) -> np.ndarray:
        return self.region.boundary_points[self.complement_indices]

    @property
    def sample_params(self) -> np.ndarray:
        return self.region.boundary_params[self.sample_indices]

    @property
    def is_full(self) -> bool:
        return len(self.complement_indices) == 0

    @property
    def is_empty(self) -> bool:
        return len(self.sample_indices) == 0


def _merge_intervals(arcs: Sequence[Sequence[float]]) -> list[tuple[float, float]]:
    ivs = sorted((float(a), float(b)) for a, b in arcs)
    merged: list[tuple[float, float]] = []
    for lo, hi in ivs:
        if merged and lo <= merged[-1][1]:
            merged[-1] = (merged[-1][0], max(merged[-1][1], hi))
        else:
            merged.append((lo, hi))
    return merged


def make_patch(region: Region, arcs: Sequence[Sequence[float]]) -> BoundaryPatch:
    """Select boundary samples whose arc parameter falls in any closed arc."""
    P = region.perimeter
    for lo, hi in arcs:
        if not (0.0 <= lo <= hi <= P + 1e-12):
            raise ValueError(f"arc [{lo}, {hi}] outside the boundary parameter range [0, {P}]")
    merged = _merge_intervals(arcs)
    s = region.boundary_params
    selected = np.zeros(len(s), dtype=bool)
    for lo, hi in merged:
        selected |= (s >= lo - 1e-12) & (s <= hi + 1e-12)
    idx = np.arange(len(s))
    return BoundaryPatch(
        region=region,
        arcs=tuple(map(tuple, merged)),
        sample_indices=idx[selected],
        complement_indices=idx[~selected],
    )


# ---------------------------------------------------------------------------
# phantom


@dataclass(frozen=True)
class Bump:
    center: tuple[float, float]
    radius: float
    amplitude: float
    smoothness: int = 2

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("bump radius must be positive")
        if self.smoothness < 2:
            raise ValueError("smoothness >= 2 required for a C1 profile")

    def evaluate(self, xx: np.ndarray, yy: np.ndarray) -> np.ndarray:
        r2 = ((xx - self.center[0]) ** 2 + (yy - self.center[1]) ** 2) / self.radius**2
        return self.amplitude * np.maximum(0.0, 1.0 - r2) ** self.smoothness


@dataclass(frozen=True)
class Phantom:
    """Initial pressure field, compactly supported strictly inside the domain."""

    grid: GridSpec
    values: np.ndarray
    support_margin: float

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)


def make_phantom(region: Region, bumps: Sequence[Bump]) -> Phantom:
    """Superpose polynomial bumps, each kept at least 2h inside the domain."""
    grid = region.grid
    h = grid.h
    xx, yy = grid.meshgrid()
    values = np.zeros(grid.dims)
    margins = []
    for k, bump in enumerate(bumps):
        depth = -float(region.sdf(np.asarray([bump.center]))[0])
        margin = depth - bump.radius
        if margin < 2.0 * h:
            raise ValueError(
                f"bump {k} at {bump.center} (radius {bump.radius}) protrudes "
                f"outside the domain: margin {margin:.4g} < 2h = {2*h:.4g}"
            )
        margins.append(margin)
        values += bump.evaluate(xx, yy)
    # shave off the interpolation slack when phi at the centers is not analytic
    safety = 1e-12 if region.shape is not None else 0.25 * h * h
    if margins:
        support_margin = min(margins) - safety
    else:
        support_margin = max(2.0 * h, -float(region.phi.min()))
    return Phantom(grid=grid, values=values, support_margin=support_margin)
