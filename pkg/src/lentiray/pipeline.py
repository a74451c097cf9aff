"""End-to-end jobs: precompute, render (both paradigms), compare, bench.

Shading happens in unit-interval float64 throughout; quantisation to 8-bit
happens exactly once when a frame is written, identically for both render
modes, so mode-equivalence comparisons are exact.
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np
from PIL import Image

from . import raycast
from .cache import PrecomputeCache, build_cache, profile_hash, read_cache, write_cache
from .display import (
    BUILTIN_PROFILES,
    DisplayProfile,
    load_profile,
    resize_bilinear,
    viewpoint_matrix,
)
from .errors import DataError, UsageError
from .fields import ANALYTIC_KINDS, load_gaussian_scene, make_analytic_field
from .rays import _check_rigid, camera_rig, pixel_rays, ray_params, reorder_to_encoded
from .repurpose import DEFAULT_AREA_WIDTH

RENDER_MODES = ("directl", "standard")
VIEW_RES_PRESETS = ("lr", "mr", "hr")
_CHUNK_RAYS = 2_000_000


def resolve_profile(source: str | Path) -> DisplayProfile:
    text = str(source)
    if text not in BUILTIN_PROFILES and not Path(text).is_file():
        raise UsageError(
            f"profile {text!r} is neither a built-in ({', '.join(BUILTIN_PROFILES)}) "
            "nor an existing file"
        )
    try:
        return load_profile(source)
    except ValueError as exc:
        raise DataError(str(exc)) from exc


def quantize(image: np.ndarray) -> np.ndarray:
    """Unit-interval floats to 8-bit, the one quantisation point."""
    return np.rint(np.clip(image, 0.0, 1.0) * 255.0).astype(np.uint8)


def write_png(image8: np.ndarray, path: str | Path) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    try:
        Image.fromarray(image8, mode="RGB").save(tmp, format="PNG")
        os.replace(tmp, path)
    except BaseException:
        tmp.unlink(missing_ok=True)
        raise


def load_image(path: str | Path) -> np.ndarray:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"image file {path} does not exist")
    try:
        with Image.open(path) as img:
            return np.asarray(img.convert("RGB"))
    except OSError as exc:
        raise DataError(f"cannot read image {path}: {exc}") from exc


def load_poses(path: str | Path) -> np.ndarray:
    """Plain-text pose file: one 4x4 row-major camera-to-world matrix per line."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"pose file {path} does not exist")
    try:
        flat = np.loadtxt(str(path), dtype=np.float64, ndmin=2)
    except ValueError as exc:
        raise DataError(f"pose file {path} is not numeric text: {exc}") from exc
    if flat.size == 0:
        raise DataError(f"pose file {path} holds no poses")
    if flat.shape[1] != 16:
        raise DataError(
            f"pose file {path} rows must have 16 values (4x4 row-major), got {flat.shape[1]}"
        )
    poses = flat.reshape(-1, 4, 4)
    for i, pose in enumerate(poses):
        try:
            _check_rigid(pose)
        except ValueError as exc:
            raise DataError(f"pose {i} in {path} is not rigid: {exc}") from exc
    return poses


def save_poses(poses: np.ndarray, path: str | Path) -> None:
    np.savetxt(str(path), np.asarray(poses).reshape(-1, 16), fmt="%.17g")


def make_field(
    analytic: str | None = None,
    scene: str | Path | None = None,
    n_samples: int = 512,
    heap_capacity: int = raycast.DEFAULT_HEAP_CAPACITY,
    branching: int = raycast.DEFAULT_BRANCHING,
    k_sigma: float = raycast.DEFAULT_K_SIGMA,
):
    """Build the radiance field a job shades: analytic kind or scene file."""
    if (analytic is None) == (scene is None):
        raise UsageError("exactly one of an analytic field kind or a scene file is required")
    if analytic is not None:
        if analytic not in ANALYTIC_KINDS:
            raise UsageError(
                f"unknown analytic field {analytic!r}; choose from {', '.join(ANALYTIC_KINDS)}"
            )
        if n_samples < 1:
            raise UsageError("sample count must be at least 1")
        return make_analytic_field(analytic, n_samples=n_samples)
    if heap_capacity < 1:
        raise UsageError("heap capacity must be at least 1")
    if branching < 2:
        raise UsageError("BVH branching factor must be at least 2")
    try:
        gaussians = load_gaussian_scene(scene)
    except ValueError as exc:
        raise DataError(str(exc)) from exc
    return raycast.build_field(gaussians, c_h=heap_capacity, branching=branching, k_sigma=k_sigma)


def field_radius(fld, profile: DisplayProfile) -> float:
    """Default arc radius: the scene's bounding sphere fills the centre view."""
    if hasattr(fld, "bounding_radius"):
        bound = float(fld.bounding_radius())
    else:
        bound = float(np.linalg.norm(np.maximum(np.abs(fld.bbox_lo), np.abs(fld.bbox_hi))))
    bound = max(bound, 1e-6)
    return bound * profile.focal_px / (profile.height_px / 2.0)


@dataclass
class FrameTiming:
    stages: dict[str, float] = dc_field(default_factory=dict)
    rays: int = 0

    @property
    def total(self) -> float:
        return sum(self.stages.values())

    @property
    def rays_per_s(self) -> float:
        shade = self.stages.get("shade", 0.0)
        return self.rays / shade if shade > 0 else 0.0

    def as_dict(self) -> dict:
        return {
            "stages_s": {k: round(v, 6) for k, v in self.stages.items()},
            "total_s": round(self.total, 6),
            "rays": self.rays,
            "rays_per_s": round(self.rays_per_s, 1),
        }


def render_directl_frame(
    cache: PrecomputeCache,
    fld,
    pose: np.ndarray,
    radius: float,
    background: tuple[float, float, float],
) -> tuple[np.ndarray, FrameTiming]:
    """Shade exactly the cached unique rays, then permute into the panel."""
    timing = FrameTiming(rays=cache.n_rays)
    t0 = time.perf_counter()
    rig = camera_rig(cache.profile, pose, radius)
    n = cache.n_rays
    origins = np.empty((n, 3))
    dirs = np.empty((n, 3))
    for start in range(0, n, _CHUNK_RAYS):
        stop = min(start + _CHUNK_RAYS, n)
        origins[start:stop], dirs[start:stop] = ray_params(
            cache.rayset, rig, cache.profile, start, stop
        )
    t1 = time.perf_counter()
    timing.stages["rays"] = t1 - t0
    colors = fld.shade_rays(origins, dirs, background)
    t2 = time.perf_counter()
    timing.stages["shade"] = t2 - t1
    encoded = reorder_to_encoded(colors, cache.rayset)
    timing.stages["reorder"] = time.perf_counter() - t2
    return encoded, timing


def render_standard_frame(
    profile: DisplayProfile,
    views: np.ndarray,
    fld,
    pose: np.ndarray,
    radius: float,
    background: tuple[float, float, float],
    view_res: str = "hr",
) -> tuple[np.ndarray, FrameTiming]:
    """Multi-view-then-interlace: full per-view rasters gathered by viewpoint."""
    h, w = profile.panel_shape
    vh, vw = profile.view_resolution(view_res)
    focal = profile.focal_px * (vh / h)
    timing = FrameTiming(rays=profile.num_views * vh * vw)
    t0 = time.perf_counter()
    rig = camera_rig(profile, pose, radius)
    timing.stages["rays"] = time.perf_counter() - t0
    view3 = views.reshape(h, w, 3)
    encoded = np.zeros((h, w, 3))
    rows = np.arange(vh, dtype=np.float64)[:, None]
    cols = np.arange(vw, dtype=np.float64)[None, :]
    for v in range(profile.num_views):
        t0 = time.perf_counter()
        origins, dirs = pixel_rays(rig.poses[v], rows, cols, focal, vh, vw)
        timing.stages["rays"] = timing.stages.get("rays", 0.0) + time.perf_counter() - t0
        t0 = time.perf_counter()
        raster = fld.shade_rays(
            origins.reshape(-1, 3), dirs.reshape(-1, 3), background
        ).reshape(vh, vw, 3)
        t1 = time.perf_counter()
        timing.stages["shade"] = timing.stages.get("shade", 0.0) + t1 - t0
        if (vh, vw) != (h, w):
            raster = resize_bilinear(raster, h, w)
        t2 = time.perf_counter()
        timing.stages["resize"] = timing.stages.get("resize", 0.0) + t2 - t1
        mask = view3 == v
        encoded[mask] = raster[mask]
        timing.stages["interlace"] = (
            timing.stages.get("interlace", 0.0) + time.perf_counter() - t2
        )
    return encoded, timing


def precompute_job(
    profile_source: str,
    area_width: int = DEFAULT_AREA_WIDTH,
    repurpose: bool = True,
    out_path: str | Path | None = None,
) -> dict:
    if area_width < 1:
        raise UsageError("area width (grating units) must be at least 1")
    profile = resolve_profile(profile_source)
    if area_width * profile.line_count > 3 * profile.width_px:
        raise UsageError(
            f"area width {area_width} exceeds the panel's "
            f"{3 * profile.width_px / profile.line_count:.1f} grating units"
        )
    t0 = time.perf_counter()
    cache = build_cache(profile, area_width, repurpose)
    elapsed = time.perf_counter() - t0
    result = {
        "profile": profile.name or str(profile_source),
        "panel": [profile.height_px, profile.width_px],
        "area_width": area_width,
        "repurpose": repurpose,
        "beta": cache.beta,
        "n_rays": cache.n_rays,
        "build_s": round(elapsed, 3),
    }
    if out_path is not None:
        out_path = Path(out_path)
        if out_path.parent and not out_path.parent.is_dir():
            raise UsageError(f"output directory {out_path.parent} does not exist")
        write_cache(cache, out_path)
        result["cache"] = str(out_path)
        result["cache_bytes"] = out_path.stat().st_size
    return result


def _resolve_render_inputs(
    mode: str,
    cache_path: str | None,
    profile_source: str | None,
    view_res: str,
):
    if mode not in RENDER_MODES:
        raise UsageError(f"unknown render mode {mode!r}; choose directl or standard")
    if view_res not in VIEW_RES_PRESETS:
        raise UsageError(f"unknown view resolution {view_res!r}; choose lr, mr, or hr")
    cache = None
    if cache_path is not None:
        cache = read_cache(cache_path)
    if mode == "directl" and cache is None:
        raise UsageError("directl mode requires a precompute cache")
    if cache is not None and profile_source is not None:
        override = resolve_profile(profile_source)
        if profile_hash(override) != cache.profile_hash:
            raise DataError(
                "the supplied profile does not match the cache "
                "(content hashes differ); rebuild the cache or drop --profile"
            )
    profile = cache.profile if cache is not None else None
    if profile is None:
        if profile_source is None:
            raise UsageError("standard mode requires a cache or a profile")
        profile = resolve_profile(profile_source)
    return cache, profile


def render_job(
    mode: str,
    poses_path: str,
    out_dir: str,
    cache_path: str | None = None,
    profile_source: str | None = None,
    analytic: str | None = None,
    scene: str | None = None,
    view_res: str = "hr",
    radius: float | None = None,
    background: tuple[float, float, float] = (0.0, 0.0, 0.0),
    n_samples: int = 512,
    heap_capacity: int = raycast.DEFAULT_HEAP_CAPACITY,
) -> dict:
    cache, profile = _resolve_render_inputs(mode, cache_path, profile_source, view_res)
    if mode == "standard":
        try:
            profile.view_resolution(view_res)
        except ValueError as exc:
            raise UsageError(str(exc)) from exc
    fld = make_field(analytic, scene, n_samples, heap_capacity)
    poses = load_poses(poses_path)
    if radius is None:
        radius = field_radius(fld, profile)
    elif radius <= 0:
        raise UsageError("arc radius must be positive")
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise UsageError(f"cannot create output directory {out}: {exc}") from exc

    views = None if mode == "directl" else viewpoint_matrix(profile)
    frames = []
    timings = []
    for i, pose in enumerate(poses):
        if mode == "directl":
            encoded, timing = render_directl_frame(cache, fld, pose, radius, background)
        else:
            encoded, timing = render_standard_frame(
                profile, views, fld, pose, radius, background, view_res
            )
        t0 = time.perf_counter()
        frame_path = out / f"frame_{i:04d}.png"
        write_png(quantize(encoded), frame_path)
        timing.stages["write"] = time.perf_counter() - t0
        frames.append(str(frame_path))
        timings.append(timing.as_dict())
    result = {
        "mode": mode,
        "frames": frames,
        "radius": radius,
        "rays_per_frame": timings[0]["rays"] if timings else 0,
        "timings": timings,
        "mean_frame_s": round(float(np.mean([t["total_s"] for t in timings])), 6),
    }
    log_path = out / "timings.json"
    tmp = out / "timings.json.tmp"
    tmp.write_text(json.dumps(result, indent=2))
    os.replace(tmp, log_path)
    result["timing_log"] = str(log_path)
    return result


def compare_images(path_a: str | Path, path_b: str | Path) -> float:
    """RMSE over all subpixels on the 0..255 scale."""
    a = load_image(path_a).astype(np.float64)
    b = load_image(path_b).astype(np.float64)
    if a.shape != b.shape:
        raise DataError(f"image dimensions differ: {a.shape} vs {b.shape}")
    return float(np.sqrt(np.mean((a - b) ** 2)))


def bench_job(
    cache_path: str,
    poses_path: str,
    frames: int,
    analytic: str | None = None,
    scene: str | None = None,
    radius: float | None = None,
    background: tuple[float, float, float] = (0.0, 0.0, 0.0),
    n_samples: int = 512,
    heap_capacity: int = raycast.DEFAULT_HEAP_CAPACITY,
) -> dict:
    """Time the repurposed ray set against the standard (full) ray set.

    Both runs shade the same field in ray order; only the precomputed ray
    list differs, so the frame-time ratio tracks the ray-count ratio 3/beta.
    """
    if frames < 1:
        raise UsageError("bench needs at least one frame")
    cache_on = read_cache(cache_path)
    if not cache_on.repurposed:
        raise UsageError("bench expects a repurposing-enabled cache; rebuild without --no-repurpose")
    cache_off = build_cache(cache_on.profile, cache_on.area_width, repurpose=False)
    fld = make_field(analytic, scene, n_samples, heap_capacity)
    poses = load_poses(poses_path)
    if radius is None:
        radius = field_radius(fld, cache_on.profile)

    # Warm the kernels so compilation never lands inside a timed frame.
    warm_pose = poses[0]
    render_directl_frame(cache_on, fld, warm_pose, radius, background)

    def sweep(cache: PrecomputeCache) -> list[FrameTiming]:
        out = []
        for i in range(frames):
            _, timing = render_directl_frame(
                cache, fld, poses[i % len(poses)], radius, background
            )
            out.append(timing)
        return out

    on = sweep(cache_on)
    off = sweep(cache_off)
    mean_on = float(np.mean([t.total for t in on]))
    mean_off = float(np.mean([t.total for t in off]))
    ray_ratio = cache_off.n_rays / cache_on.n_rays
    return {
        "frames": frames,
        "repurposed": {
            "n_rays": cache_on.n_rays,
            "beta": cache_on.beta,
            "mean_frame_s": round(mean_on, 6),
            "rays_per_s": round(cache_on.n_rays / mean_on, 1),
        },
        "standard_ray_order": {
            "n_rays": cache_off.n_rays,
            "beta": cache_off.beta,
            "mean_frame_s": round(mean_off, 6),
            "rays_per_s": round(cache_off.n_rays / mean_off, 1),
        },
        "ray_ratio": ray_ratio,
        "three_over_beta": 3.0 / cache_on.beta,
        "time_ratio": mean_off / mean_on,
    }
