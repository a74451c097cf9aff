"""Unique ray derivation, arc camera rig, and per-ray origin/direction math.

The encoded image references rendered pixels through the index matrix; the
distinct (view, src_x, src_y) triples are the only rays a frame needs.  The
triple list is ordered so its first w*h rows line up with the encoded R
channel in row-major order; two permutation index arrays route rendered G
and B components into their encoded slots.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .display import DisplayProfile
from .repurpose import EncodedIndexMatrix

@dataclass
class RaySet:
    """Ordered unique rays plus G/B permutation indices."""

    view: np.ndarray   # (n_rays,) uint16
    src_x: np.ndarray  # (n_rays,) int32
    src_y: np.ndarray  # (n_rays,) int32
    idx_g: np.ndarray  # (w*h,) uint32, position of each G slot's ray
    idx_b: np.ndarray  # (w*h,) uint32
    panel_shape: tuple[int, int]

    @property
    def n_rays(self) -> int:
        return int(self.view.shape[0])


@dataclass
class CameraRig:
    """Per-view camera-to-world extrinsics on an arc."""

    center_pose: np.ndarray  # (4, 4)
    poses: np.ndarray        # (N_v, 4, 4)
    radius: float
    arc_center: np.ndarray   # (3,)


def _pack(view: np.ndarray, sx: np.ndarray, sy: np.ndarray, h: int, w: int) -> np.ndarray:
    return (view.astype(np.int64) * h + sx.astype(np.int64)) * w + sy.astype(np.int64)


def build_rayset(index: EncodedIndexMatrix) -> RaySet:
    """Collect unique ray triples from an index matrix, R-channel aligned.

    rays[j] for j < w*h is the source triple of the j-th encoded R slot in
    row-major order; any remaining unique triples follow in first-appearance
    (slot scan) order.  idx_g[j] / idx_b[j] locate the j-th G / B slot's
    triple inside the ray list.
    """
    h, w = index.panel_shape
    wh = w * h
    packed = _pack(index.view, index.src_x, index.src_y, h, w)  # (h, w, 3)
    flat = packed.reshape(-1)  # row-major slot order (x, y, k)

    r_packed = packed[:, :, 0].reshape(-1)
    r_sorted = np.sort(r_packed)
    if np.any(r_sorted[1:] == r_sorted[:-1]):
        raise ValueError(
            "R-channel source triples repeat; the profile is too degenerate "
            "for ray ordering (channel triplets must map to distinct viewpoints)"
        )

    uniq, first_pos = np.unique(flat, return_index=True)
    appearance = uniq[np.argsort(first_pos)]
    in_r = np.isin(appearance, r_sorted)
    tail = appearance[~in_r]
    rays_packed = np.concatenate([r_packed, tail])

    order = np.argsort(rays_packed)
    sorted_packed = rays_packed[order]

    def positions(slot_packed: np.ndarray) -> np.ndarray:
        at = np.searchsorted(sorted_packed, slot_packed)
        return order[at].astype(np.uint32)

    idx_g = positions(packed[:, :, 1].reshape(-1))
    idx_b = positions(packed[:, :, 2].reshape(-1))

    sy = rays_packed % w
    rest = rays_packed // w
    sx = rest % h
    view = rest // h
    return RaySet(
        view=view.astype(np.uint16),
        src_x=sx.astype(np.int32),
        src_y=sy.astype(np.int32),
        idx_g=idx_g,
        idx_b=idx_b,
        panel_shape=(h, w),
    )


def _check_rigid(pose: np.ndarray) -> None:
    if pose.shape != (4, 4):
        raise ValueError("pose must be a 4x4 matrix")
    rot = pose[:3, :3]
    err = np.abs(rot @ rot.T - np.eye(3)).max()
    if err > 1e-6:
        raise ValueError(f"pose rotation block is not orthonormal (deviation {err:.2e})")
    if np.linalg.det(rot) < 0:
        raise ValueError("pose rotation block has negative determinant")
    if not np.allclose(pose[3], [0.0, 0.0, 0.0, 1.0]):
        raise ValueError("pose bottom row must be [0, 0, 0, 1]")


def _axis_rotation(axis: np.ndarray, angle: float) -> np.ndarray:
    ux, uy, uz = axis
    k = np.array([[0.0, -uz, uy], [uz, 0.0, -ux], [-uy, ux, 0.0]])
    return np.eye(3) + math.sin(angle) * k + (1.0 - math.cos(angle)) * (k @ k)


def camera_rig(profile: DisplayProfile, center_pose: np.ndarray, radius: float) -> CameraRig:
    """Place N_v cameras on an arc about the point ``radius`` ahead of the
    centre camera, spanning the display FOV endpoint-inclusive.

    Cameras look along their local -z; the rig rotates about the image-
    vertical axis (the camera's local x, which the ray convention pairs with
    image rows) so the views sweep horizontally.  The middle view of an odd
    rig is exactly the centre pose.
    """
    center_pose = np.asarray(center_pose, dtype=np.float64)
    _check_rigid(center_pose)
    if radius <= 0:
        raise ValueError("arc radius must be positive")
    n = profile.num_views
    forward = -center_pose[:3, 2]
    arc_center = center_pose[:3, 3] + radius * forward
    if n == 1:
        return CameraRig(center_pose, center_pose[None].copy(), radius, arc_center)
    axis = center_pose[:3, 0]
    axis = axis / np.linalg.norm(axis)
    poses = np.empty((n, 4, 4))
    step = profile.fov / (n - 1)
    for v in range(n):
        theta = -0.5 * profile.fov + v * step
        rot = _axis_rotation(axis, theta)
        affine = np.eye(4)
        affine[:3, :3] = rot
        affine[:3, 3] = arc_center - rot @ arc_center
        poses[v] = affine @ center_pose
    return CameraRig(center_pose, poses, radius, arc_center)


def _ray_directions(r00, r01, r02, r10, r11, r12, r20, r21, r22, dx, dy):
    # Shared expression for camera-frame [dx, dy, -1] into world space; both
    # the per-ray and the full-grid paths must produce bit-identical floats.
    wx = (r00 * dx + r01 * dy) - r02
    wy = (r10 * dx + r11 * dy) - r12
    wz = (r20 * dx + r21 * dy) - r22
    norm = np.sqrt(wx * wx + wy * wy + wz * wz)
    return wx / norm, wy / norm, wz / norm


def pixel_rays(
    pose: np.ndarray,
    rows: np.ndarray,
    cols: np.ndarray,
    focal: float,
    height: int,
    width: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Rays through pixel (row, col) of one camera raster.

    The camera-frame direction is [(row - h/2)/f, (col - w/2)/f, -1]; the
    principal point sits at (h/2, w/2).
    """
    if focal <= 0:
        raise ValueError("focal length must be positive")
    dx = (rows.astype(np.float64) - height / 2) / focal
    dy = (cols.astype(np.float64) - width / 2) / focal
    r = pose[:3, :3]
    wx, wy, wz = _ray_directions(
        r[0, 0], r[0, 1], r[0, 2], r[1, 0], r[1, 1], r[1, 2], r[2, 0], r[2, 1], r[2, 2], dx, dy
    )
    dirs = np.stack([wx, wy, wz], axis=-1)
    origins = np.broadcast_to(pose[:3, 3], dirs.shape).copy()
    return origins, dirs


def ray_params(
    rayset: RaySet,
    rig: CameraRig,
    profile: DisplayProfile,
    start: int = 0,
    stop: int | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Origins and unit directions for rays [start, stop) of the ray list."""
    if profile.focal_px <= 0:
        raise ValueError("focal length must be positive")
    if rayset.view.size and int(rayset.view.max()) >= rig.poses.shape[0]:
        raise ValueError("ray set references views beyond the rig")
    sl = slice(start, rayset.n_rays if stop is None else stop)
    views = rayset.view[sl].astype(np.int64)
    h, w = profile.panel_shape
    f = profile.focal_px
    dx = (rayset.src_x[sl].astype(np.float64) - h / 2) / f
    dy = (rayset.src_y[sl].astype(np.float64) - w / 2) / f
    rot = rig.poses[:, :3, :3]
    wx, wy, wz = _ray_directions(
        rot[views, 0, 0], rot[views, 0, 1], rot[views, 0, 2],
        rot[views, 1, 0], rot[views, 1, 1], rot[views, 1, 2],
        rot[views, 2, 0], rot[views, 2, 1], rot[views, 2, 2],
        dx, dy,
    )
    dirs = np.stack([wx, wy, wz], axis=-1)
    origins = rig.poses[views, :3, 3]
    return origins, dirs


def reorder_to_encoded(colors: np.ndarray, rayset: RaySet) -> np.ndarray:
    """Route per-ray colors into the encoded (h, w, 3) layout.

    The R channel is the first w*h rays in order; G and B channels gather
    through the precomputed permutations.
    """
    h, w = rayset.panel_shape
    wh = w * h
    colors = np.asarray(colors)
    if colors.ndim != 2 or colors.shape[1] != 3:
        raise ValueError("colors must have shape (n_rays, 3)")
    if colors.shape[0] != rayset.n_rays:
        raise ValueError(
            f"got {colors.shape[0]} colors for {rayset.n_rays} rays"
        )
    out = np.empty((h, w, 3), dtype=colors.dtype)
    out[:, :, 0] = colors[:wh, 0].reshape(h, w)
    out[:, :, 1] = colors[rayset.idx_g.astype(np.int64), 1].reshape(h, w)
    out[:, :, 2] = colors[rayset.idx_b.astype(np.int64), 2].reshape(h, w)
    return out
