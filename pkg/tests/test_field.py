import numpy as np
import pytest

from tatkit.field import (
    Bump,
    Disk,
    Ellipse,
    GridSpec,
    RoundedPolygon,
    constant_speed,
    layered_speed,
    make_patch,
    make_phantom,
    make_region,
    radial_speed,
    sample_bilinear,
    speed_from_values,
)


class TestGridSpec:
    def test_basic_properties(self):
        g = GridSpec(origin=(-1.0, -2.0), spacing=(0.5, 0.25), dims=(9, 17))
        assert g.nx == 9 and g.ny == 17
        assert g.upper == (3.0, 2.0)
        assert g.h == 0.5
        assert np.allclose(g.axis(0), np.arange(-1.0, 3.01, 0.5))

    def test_from_bounds_hits_spacing(self):
        g = GridSpec.from_bounds((-1, -1), (1, 1), 1 / 64)
        assert g.dims == (129, 129)
        assert g.spacing == (1 / 64, 1 / 64)

    @pytest.mark.parametrize(
        "kwargs",
        [
            dict(origin=(0, 0), spacing=(0.1, 0.1), dims=(7, 9)),
            dict(origin=(0, 0), spacing=(0.0, 0.1), dims=(9, 9)),
            dict(origin=(0, 0), spacing=(-0.1, 0.1), dims=(9, 9)),
            dict(origin=(0, 0), spacing=(0.1, 0.1), dims=(9, 9), dimension=3),
        ],
    )
    def test_invalid_specs_rejected(self, kwargs):
        with pytest.raises(ValueError):
            GridSpec(**kwargs)

    def test_round_trip_dict(self):
        g = GridSpec(origin=(0.25, 0.5), spacing=(0.1, 0.2), dims=(11, 12))
        assert GridSpec.from_dict(g.to_dict()).same_as(g)

    def test_bilinear_exact_on_bilinear_function(self):
        g = GridSpec(origin=(0.0, 0.0), spacing=(0.1, 0.1), dims=(11, 11))
        xx, yy = g.meshgrid()
        vals = 2.0 + 3.0 * xx - yy + 0.5 * xx * yy
        rng = np.random.default_rng(1)
        pts = rng.uniform(0.0, 1.0, size=(50, 2))
        expect = 2.0 + 3.0 * pts[:, 0] - pts[:, 1] + 0.5 * pts[:, 0] * pts[:, 1]
        assert np.allclose(sample_bilinear(g, vals, pts), expect, atol=1e-12)


class TestSpeedField:
    def test_bound_is_hard_invariant(self):
        g = GridSpec(origin=(0, 0), spacing=(0.1, 0.1), dims=(9, 9))
        vals = np.ones(g.dims)
        vals[3, 4] = 2.5
        with pytest.raises(ValueError):
            speed_from_values(g, vals, bound=2.0)
        sf = speed_from_values(g, vals, bound=3.0)
        assert sf.c_max == 2.5

    def test_nonfinite_rejected(self):
        g = GridSpec(origin=(0, 0), spacing=(0.1, 0.1), dims=(9, 9))
        vals = np.ones(g.dims)
        vals[0, 0] = np.nan
        with pytest.raises(ValueError):
            speed_from_values(g, vals)

    def test_layered_profile(self):
        g = GridSpec.from_bounds((-1, -1), (1, 1), 1 / 32)
        sf = layered_speed(g, 1.0, 2.0, interface_y=0.0, blend_halfwidth=0.125)
        assert np.allclose(sf.at(np.array([[0.0, -0.5]])), 1.0)
        assert np.allclose(sf.at(np.array([[0.3, 0.5]])), 2.0)
        assert 1.0 < sf.at(np.array([[0.0, 0.0]]))[0] < 2.0

    def test_radial_profile(self):
        g = GridSpec.from_bounds((-1, -1), (1, 1), 1 / 32)
        sf = radial_speed(g, (0, 0), 2.0, 1.0, 0.2, 0.8)
        assert np.allclose(sf.at(np.array([[0.0, 0.05]])), 2.0)
        assert np.allclose(sf.at(np.array([[0.9, 0.0]])), 1.0)


class TestRegion:
    def test_disk_signed_distance_exact(self):
        g = GridSpec.from_bounds((-2, -2), (2, 2), 1 / 64)
        reg = make_region(g, Disk(center=(0, 0), radius=1.0))
        i = np.argmin(np.abs(g.axis(0)))
        j = np.argmin(np.abs(g.axis(1)))
        assert abs(reg.phi[i, j] + 1.0) <= 1 / 64

    def test_disk_boundary_sampling(self):
        h = 1 / 64
        g = GridSpec.from_bounds((-2, -2), (2, 2), h)
        reg = make_region(g, Disk(center=(0, 0), radius=1.0))
        expected = 2 * np.pi / h
        assert abs(reg.n_boundary - expected) <= 2
        radii = np.hypot(*reg.boundary_points.T)
        assert np.abs(radii - 1.0).max() < 1e-12
        assert np.abs(np.linalg.norm(reg.boundary_normals, axis=1) - 1.0).max() < 1e-9
        spacing = np.diff(reg.boundary_params)
        assert spacing.max() <= h + 1e-12

    def test_boundary_phi_consistency(self):
        g = GridSpec.from_bounds((-2, -2), (2, 2), 1 / 32)
        reg = make_region(g, Ellipse(center=(0.1, -0.2), a=1.1, b=0.6))
        pb = sample_bilinear(g, reg.phi, reg.boundary_points)
        assert np.abs(pb).max() <= g.h

    def test_touching_grid_boundary_rejected(self):
        g = GridSpec.from_bounds((-1, -1), (1, 1), 1 / 32)
        with pytest.raises(ValueError, match="grid boundary"):
            make_region(g, Disk(center=(0, 0), radius=0.95))

    def test_ellipse_center_distance(self):
        g = GridSpec.from_bounds((-2, -2), (2, 2), 1 / 64)
        reg = make_region(g, Ellipse(center=(0, 0), a=1.0, b=0.5))
        i = np.argmin(np.abs(g.axis(0)))
        j = np.argmin(np.abs(g.axis(1)))
        assert abs(reg.phi[i, j] + 0.5) <= 2 / 64

    def test_ellipse_sdf_against_polyline_oracle(self):
        shape = Ellipse(center=(0.0, 0.0), a=1.2, b=0.7)
        dense_s = np.linspace(0.0, shape.perimeter(), 200001)[:-1]
        boundary, _ = shape.boundary(dense_s)
        from scipy.spatial import cKDTree

        tree = cKDTree(boundary)
        rng = np.random.default_rng(3)
        pts = rng.uniform(-1.8, 1.8, size=(200, 2))
        oracle_abs = tree.query(pts)[0]
        got = shape.sdf(pts)
        assert np.abs(np.abs(got) - oracle_abs).max() < 1e-6
        inside = (pts[:, 0] / 1.2) ** 2 + (pts[:, 1] / 0.7) ** 2 < 1.0
        assert np.all((got < 0) == inside)

    def test_rounded_polygon(self):
        shape = RoundedPolygon(
            vertices=((-0.8, -0.6), (0.8, -0.6), (0.8, 0.6), (-0.8, 0.6)),
            corner_radius=0.2,
        )
        # rectangle with fillets: perimeter = straight runs + full circle
        expect = 2 * (1.6 - 0.4) + 2 * (1.2 - 0.4) + 2 * np.pi * 0.2
        assert abs(shape.perimeter() - expect) < 1e-9
        assert shape.sdf(np.array([[0.0, 0.0]]))[0] == pytest.approx(-0.6, abs=1e-9)
        # fillet corner: distance to the arc
        corner_out = np.array([[0.9, 0.7]])
        center = np.array([0.6, 0.4])
        expect_d = np.linalg.norm(corner_out[0] - center) - 0.2
        assert shape.sdf(corner_out)[0] == pytest.approx(expect_d, abs=1e-9)
        g = GridSpec.from_bounds((-1.5, -1.5), (1.5, 1.5), 1 / 32)
        reg = make_region(g, shape)
        assert reg.n_boundary >= shape.perimeter() / g.h - 1

    def test_nonconvex_polygon_rejected(self):
        with pytest.raises(ValueError, match="convex"):
            RoundedPolygon(
                vertices=((0, 0), (1, 0), (0.2, 0.2), (0, 1)), corner_radius=0.05
            )


class TestBoundaryPatch:
    def test_full_range(self, disk_setup):
        _, _, region = disk_setup
        patch = make_patch(region, [(0.0, region.perimeter)])
        assert patch.is_full
        assert len(patch.complement_indices) == 0

    def test_empty(self, disk_setup):
        _, _, region = disk_setup
        patch = make_patch(region, [])
        assert patch.is_empty
        assert len(patch.sample_indices) == 0
        assert len(patch.complement_indices) == region.n_boundary

    def test_half_range_split(self, disk_setup):
        _, _, region = disk_setup
        patch = make_patch(region, [(0.0, region.perimeter / 2)])
        assert abs(len(patch.sample_indices) - len(patch.complement_indices)) <= 2

    def test_partition_invariant(self, disk_setup):
        _, _, region = disk_setup
        for arcs in ([], [(0.0, 1.0)], [(0.5, 2.0), (1.5, 3.0)], [(0.0, region.perimeter)]):
            patch = make_patch(region, arcs)
            n = len(patch.sample_indices) + len(patch.complement_indices)
            assert n == region.n_boundary
            assert not set(patch.sample_indices) & set(patch.complement_indices)

    def test_overlapping_arcs_merged(self, disk_setup):
        _, _, region = disk_setup
        a = make_patch(region, [(0.5, 2.0), (1.5, 3.0)])
        b = make_patch(region, [(0.5, 3.0)])
        assert np.array_equal(a.sample_indices, b.sample_indices)
        assert a.arcs == ((0.5, 3.0),)

    def test_out_of_range_rejected(self, disk_setup):
        _, _, region = disk_setup
        with pytest.raises(ValueError, match="parameter range"):
            make_patch(region, [(-0.5, 1.0)])
        with pytest.raises(ValueError, match="parameter range"):
            make_patch(region, [(1.0, region.perimeter + 1.0)])


class TestPhantom:
    def test_empty_bump_list(self, disk_setup):
        _, _, region = disk_setup
        ph = make_phantom(region, [])
        assert np.all(ph.values == 0.0)

    def test_single_bump(self, disk_setup):
        grid, _, region = disk_setup
        ph = make_phantom(region, [Bump(center=(0.0, 0.0), radius=0.1, amplitude=1.0)])
        i = np.argmin(np.abs(grid.axis(0)))
        j = np.argmin(np.abs(grid.axis(1)))
        assert ph.values[i, j] == pytest.approx(1.0)
        xx, yy = grid.meshgrid()
        outside = np.hypot(xx, yy) >= 0.1
        assert np.all(ph.values[outside] == 0.0)

    def test_disjoint_bumps_superpose(self, disk_setup):
        grid, _, region = disk_setup
        # centers on grid nodes so the peak amplitude is sampled exactly
        x40 = grid.origin[0] + round((0.4 - grid.origin[0]) / grid.spacing[0]) * grid.spacing[0]
        b1 = Bump(center=(-x40, 0.0), radius=0.15, amplitude=1.0)
        b2 = Bump(center=(x40, 0.0), radius=0.15, amplitude=0.5)
        ph = make_phantom(region, [b1, b2])
        single1 = make_phantom(region, [b1])
        single2 = make_phantom(region, [b2])
        assert np.allclose(ph.values, single1.values + single2.values)
        assert ph.values.max() == pytest.approx(1.0)

    def test_support_margin_invariant(self, disk_setup):
        grid, _, region = disk_setup
        ph = make_phantom(
            region,
            [
                Bump(center=(0.3, 0.2), radius=0.2, amplitude=1.0, smoothness=3),
                Bump(center=(-0.5, -0.1), radius=0.25, amplitude=-0.5),
            ],
        )
        assert ph.support_margin >= 2 * grid.h
        violating = region.phi >= -ph.support_margin
        assert np.all(ph.values[violating] == 0.0)

    def test_protruding_bump_rejected(self, disk_setup):
        _, _, region = disk_setup
        with pytest.raises(ValueError, match="bump 1"):
            make_phantom(
                region,
                [
                    Bump(center=(0.0, 0.0), radius=0.1, amplitude=1.0),
                    Bump(center=(0.95, 0.0), radius=0.2, amplitude=1.0),
                ],
            )
