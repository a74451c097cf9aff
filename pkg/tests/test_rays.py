import math

import numpy as np
import pytest

from lentiray.display import DisplayProfile, viewpoint_matrix
from lentiray.rays import (
    build_rayset,
    camera_rig,
    pixel_rays,
    ray_params,
    reorder_to_encoded,
)
from lentiray.repurpose import assemble_encoded, build_index_matrix

from conftest import random_toy_profile


@pytest.fixture(scope="module")
def desk_rayset(desk_profile, desk_views):
    return build_rayset(build_index_matrix(desk_profile, desk_views, 2))


class TestBuildRayset:
    def test_no_repurposing_counts_every_subpixel(self, desk_profile, desk_views):
        index = build_index_matrix(desk_profile, desk_views, 2, repurpose=False)
        rayset = build_rayset(index)
        h, w = desk_profile.panel_shape
        assert rayset.n_rays == 3 * w * h

    def test_r_alignment(self, desk_profile, desk_views, desk_rayset):
        index = build_index_matrix(desk_profile, desk_views, 2)
        h, w = desk_profile.panel_shape
        j = 0
        for x in range(h):
            for y in range(w):
                assert desk_rayset.view[j] == index.view[x, y, 0]
                assert desk_rayset.src_x[j] == index.src_x[x, y, 0]
                assert desk_rayset.src_y[j] == index.src_y[x, y, 0]
                j += 1

    def test_no_duplicate_triples(self, desk_profile, desk_rayset):
        h, w = desk_profile.panel_shape
        packed = (
            desk_rayset.view.astype(np.int64) * h + desk_rayset.src_x
        ) * w + desk_rayset.src_y
        assert np.unique(packed).size == desk_rayset.n_rays
        assert w * h <= desk_rayset.n_rays <= 3 * w * h

    def test_index_permutations_by_exhaustive_lookup(self):
        rng = np.random.default_rng(17)
        prof = random_toy_profile(rng)
        index = build_index_matrix(prof, viewpoint_matrix(prof), 2)
        rayset = build_rayset(index)
        h, w = prof.panel_shape
        lookup = {}
        for j in range(rayset.n_rays):
            lookup[(int(rayset.view[j]), int(rayset.src_x[j]), int(rayset.src_y[j]))] = j
        for x in range(h):
            for y in range(w):
                g = (int(index.view[x, y, 1]), int(index.src_x[x, y, 1]), int(index.src_y[x, y, 1]))
                b = (int(index.view[x, y, 2]), int(index.src_x[x, y, 2]), int(index.src_y[x, y, 2]))
                assert rayset.idx_g[x * w + y] == lookup[g]
                assert rayset.idx_b[x * w + y] == lookup[b]

    def test_every_index_triple_appears(self, desk_profile, desk_rayset):
        index = build_index_matrix(desk_profile, viewpoint_matrix(desk_profile), 2)
        h, w = desk_profile.panel_shape
        ray_packed = (
            desk_rayset.view.astype(np.int64) * h + desk_rayset.src_x
        ) * w + desk_rayset.src_y
        slot_packed = (
            (index.view.astype(np.int64) * h + index.src_x) * w + index.src_y
        ).ravel()
        assert np.array_equal(np.unique(ray_packed), np.unique(slot_packed))

    def test_degenerate_profile_rejected(self):
        # one viewpoint: R-channel triples collide, ray ordering undefined
        prof = DisplayProfile(
            width_px=9, height_px=9, line_count=1.0, tilt_angle_deg=0.0,
            offset=0.0, num_views=1, fov_deg=40.0, focal_px=9.0,
        )
        index = build_index_matrix(prof, viewpoint_matrix(prof), 3)
        with pytest.raises(ValueError, match="repeat"):
            build_rayset(index)


class TestCameraRig:
    def test_middle_view_is_center_pose(self, desk_profile):
        pose = np.eye(4)
        prof = DisplayProfile(**{**desk_profile.to_dict(), "num_views": 9, "name": "odd"})
        rig = camera_rig(prof, pose, radius=2.5)
        assert np.array_equal(rig.poses[4], pose)

    def test_two_views_at_half_fov(self):
        prof = DisplayProfile(
            width_px=8, height_px=8, line_count=4.0, tilt_angle_deg=0.0,
            offset=0.0, num_views=2, fov_deg=90.0, focal_px=8.0,
        )
        rig = camera_rig(prof, np.eye(4), radius=1.0)
        # arc center is at (0, 0, -1); rotating the origin about the x axis
        # through it by -/+45 degrees moves the camera to y = +/- sin(45)
        for v, sign in ((0, -1.0), (1, 1.0)):
            angle = sign * math.pi / 4
            expect = np.array([0.0, -math.sin(angle), -1.0 + math.cos(angle)])
            assert np.allclose(rig.poses[v][:3, 3], expect, atol=1e-12)

    def test_all_views_aim_at_arc_center(self, desk_profile):
        rng = np.random.default_rng(4)
        axis = rng.normal(0, 1, 3)
        axis /= np.linalg.norm(axis)
        angle = 0.7
        k = np.array([[0, -axis[2], axis[1]], [axis[2], 0, -axis[0]], [-axis[1], axis[0], 0]])
        pose = np.eye(4)
        pose[:3, :3] = np.eye(3) + math.sin(angle) * k + (1 - math.cos(angle)) * (k @ k)
        pose[:3, 3] = rng.normal(0, 2, 3)
        rig = camera_rig(desk_profile, pose, radius=3.0)
        for v in range(desk_profile.num_views):
            origin = rig.poses[v][:3, 3]
            forward = -rig.poses[v][:3, 2]
            to_center = rig.arc_center - origin
            # forward axis passes through the arc center
            assert np.linalg.norm(np.cross(forward, to_center)) < 1e-9
            assert np.linalg.norm(to_center) == pytest.approx(3.0, abs=1e-9)

    def test_rig_symmetry(self, desk_profile):
        rig = camera_rig(desk_profile, np.eye(4), radius=2.0)
        n = desk_profile.num_views
        center = rig.arc_center
        for v in range(n):
            a = rig.poses[v][:3, 3] - center
            b = rig.poses[n - 1 - v][:3, 3] - center
            # mirrored views sit at mirrored angles about the centre plane
            assert a[2] == pytest.approx(b[2], abs=1e-12)
            assert a[1] == pytest.approx(-b[1], abs=1e-12)

    def test_poses_are_rigid(self, desk_profile):
        rig = camera_rig(desk_profile, np.eye(4), radius=2.0)
        for pose in rig.poses:
            rot = pose[:3, :3]
            assert np.allclose(rot @ rot.T, np.eye(3), atol=1e-12)
            assert np.linalg.det(rot) == pytest.approx(1.0, abs=1e-12)

    def test_single_view_sits_at_center(self):
        prof = DisplayProfile(
            width_px=8, height_px=8, line_count=4.0, tilt_angle_deg=0.0,
            offset=0.0, num_views=1, fov_deg=40.0, focal_px=8.0,
        )
        pose = np.eye(4)
        pose[:3, 3] = [1.0, 2.0, 3.0]
        rig = camera_rig(prof, pose, radius=5.0)
        assert np.array_equal(rig.poses[0], pose)

    def test_rejections(self, desk_profile):
        with pytest.raises(ValueError):
            camera_rig(desk_profile, np.eye(4), radius=0.0)
        bad = np.eye(4)
        bad[0, 0] = 2.0
        with pytest.raises(ValueError, match="orthonormal"):
            camera_rig(desk_profile, bad, radius=1.0)


class TestRayParams:
    def test_principal_ray(self):
        h = w = 16
        rows = np.array([h / 2])
        cols = np.array([w / 2])
        origins, dirs = pixel_rays(np.eye(4), rows, cols, 16.0, h, w)
        assert np.allclose(dirs[0], [0.0, 0.0, -1.0])
        assert np.array_equal(origins[0], np.zeros(3))

    def test_45_degree_ray(self):
        h = w = 16
        origins, dirs = pixel_rays(np.eye(4), np.array([float(h)]), np.array([w / 2]), h / 2, h, w)
        expect = np.array([1.0, 0.0, -1.0]) / math.sqrt(2.0)
        assert np.allclose(dirs[0], expect, atol=1e-15)

    def test_origins_match_pose_translation(self, desk_profile, desk_rayset):
        rig = camera_rig(desk_profile, np.eye(4), radius=2.0)
        origins, _ = ray_params(desk_rayset, rig, desk_profile)
        expect = rig.poses[desk_rayset.view.astype(np.int64), :3, 3]
        assert np.array_equal(origins, expect)

    def test_directions_unit_norm(self, desk_profile, desk_rayset):
        rig = camera_rig(desk_profile, np.eye(4), radius=2.0)
        _, dirs = ray_params(desk_rayset, rig, desk_profile)
        norms = np.linalg.norm(dirs, axis=1)
        assert np.abs(norms - 1.0).max() < 1e-9

    def test_matches_grid_path_bitwise(self, desk_profile, desk_views):
        # the per-ray path and the full-raster path must agree bit for bit,
        # otherwise the two render modes cannot be compared exactly
        index = build_index_matrix(desk_profile, desk_views, 2, repurpose=False)
        rayset = build_rayset(index)
        rig = camera_rig(desk_profile, np.eye(4), radius=2.0)
        origins, dirs = ray_params(rayset, rig, desk_profile)
        h, w = desk_profile.panel_shape
        rows = np.arange(h, dtype=np.float64)[:, None]
        cols = np.arange(w, dtype=np.float64)[None, :]
        for v in (0, desk_profile.num_views - 1):
            g_orig, g_dirs = pixel_rays(rig.poses[v], rows, cols, desk_profile.focal_px, h, w)
            mask = rayset.view == v
            sel_x = rayset.src_x[mask]
            sel_y = rayset.src_y[mask]
            assert np.array_equal(dirs[mask], g_dirs[sel_x, sel_y])
            assert np.array_equal(origins[mask], g_orig[sel_x, sel_y])

    def test_focal_must_be_positive(self):
        with pytest.raises(ValueError):
            pixel_rays(np.eye(4), np.array([0.0]), np.array([0.0]), 0.0, 4, 4)


class TestReorder:
    def test_constant_colors(self, desk_profile, desk_rayset):
        colors = np.full((desk_rayset.n_rays, 3), 0.7)
        out = reorder_to_encoded(colors, desk_rayset)
        assert out.shape == (*desk_profile.panel_shape, 3)
        assert (out == 0.7).all()

    def test_matches_assemble_encoded(self, desk_profile, desk_views):
        rng = np.random.default_rng(9)
        index = build_index_matrix(desk_profile, desk_views, 2)
        rayset = build_rayset(index)
        h, w = desk_profile.panel_shape
        stack = rng.random((desk_profile.num_views, h, w, 3))
        colors = stack[rayset.view.astype(np.int64), rayset.src_x, rayset.src_y, :]
        assert np.array_equal(
            reorder_to_encoded(colors, rayset), assemble_encoded(index, stack)
        )

    def test_length_mismatch_rejected(self, desk_rayset):
        with pytest.raises(ValueError):
            reorder_to_encoded(np.zeros((3, 3)), desk_rayset)
