"""Lenticular panel geometry: per-subpixel viewpoint assignment and interlacing.

The panel is an LCD behind a tilted lenticular grating.  Every subpixel
(x = row, y = pixel column, k = channel with 0,1,2 = R,G,B) sits at some
horizontal distance from the left edge of the grating unit covering it, and
that distance alone decides which viewpoint the subpixel must display.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

# Relative slop under which the view quotient N_v * x_offset / L_x is snapped
# to the nearest integer before flooring.  Rationally aligned gratings (e.g.
# integer offsets with L_x = 16/3) land exactly on bin boundaries in real
# arithmetic but a hair below/above in float64; without the snap the floor
# would be off by one bin.
_BIN_SNAP = 1e-8

_PROFILE_KEYS = {
    "width_px", "height_px", "line_count", "tilt_angle_deg", "offset",
    "num_views", "fov_deg", "focal_px",
}
_OPTIONAL_KEYS = {"name", "lr_px", "mr_px"}

BUILTIN_PROFILES = ("7.9-inch", "15.6-inch", "65-inch", "desk")


@dataclass
class DisplayProfile:
    """Calibrated lenticular display parameters plus the camera-rig basics.

    Angles are stored in degrees (the on-disk convention) and exposed in
    radians through ``tilt_angle`` / ``fov``.  ``line_count`` is the grating
    unit width in subpixel widths, ``offset`` the grating-to-panel shift in
    subpixel widths.
    """

    width_px: int
    height_px: int
    line_count: float
    tilt_angle_deg: float
    offset: float
    num_views: int
    fov_deg: float
    focal_px: float
    lr_px: tuple[int, int] | None = None  # (width, height) low-res preset
    mr_px: tuple[int, int] | None = None  # (width, height) mid-res preset
    name: str = ""

    def __post_init__(self) -> None:
        if self.width_px <= 0 or self.height_px <= 0:
            raise ValueError("panel dimensions must be positive")
        if self.line_count <= 0:
            raise ValueError("line_count must be positive")
        if self.num_views < 1:
            raise ValueError("num_views must be at least 1")
        if not 0.0 < self.fov_deg < 180.0:
            raise ValueError("fov must lie in (0, 180) degrees")
        if abs(self.tilt_angle_deg) >= 90.0:
            raise ValueError("tilt angle must lie in (-90, 90) degrees")
        if self.focal_px <= 0:
            raise ValueError("focal_px must be positive")
        for key in ("lr_px", "mr_px"):
            val = getattr(self, key)
            if val is not None:
                val = (int(val[0]), int(val[1]))
                if val[0] <= 0 or val[1] <= 0:
                    raise ValueError(f"{key} dimensions must be positive")
                setattr(self, key, val)

    @property
    def tilt_angle(self) -> float:
        """Grating tilt in radians, clockwise positive."""
        return math.radians(self.tilt_angle_deg)

    @property
    def fov(self) -> float:
        """Angular span of the outermost cameras, radians."""
        return math.radians(self.fov_deg)

    @property
    def panel_shape(self) -> tuple[int, int]:
        """(height, width) of the panel in pixels."""
        return self.height_px, self.width_px

    def view_resolution(self, preset: str) -> tuple[int, int]:
        """Per-view (height, width) for an 'lr' / 'mr' / 'hr' preset."""
        if preset == "hr":
            return self.height_px, self.width_px
        if preset == "lr":
            dims = self.lr_px
        elif preset == "mr":
            dims = self.mr_px
        else:
            raise ValueError(f"unknown view resolution preset {preset!r}")
        if dims is None:
            raise ValueError(f"profile {self.name or '<unnamed>'} has no {preset} preset")
        return dims[1], dims[0]

    def to_dict(self) -> dict:
        out = {
            "width_px": self.width_px,
            "height_px": self.height_px,
            "line_count": self.line_count,
            "tilt_angle_deg": self.tilt_angle_deg,
            "offset": self.offset,
            "num_views": self.num_views,
            "fov_deg": self.fov_deg,
            "focal_px": self.focal_px,
        }
        if self.name:
            out["name"] = self.name
        if self.lr_px is not None:
            out["lr_px"] = list(self.lr_px)
        if self.mr_px is not None:
            out["mr_px"] = list(self.mr_px)
        return out

    def canonical_json(self) -> bytes:
        """Stable byte form used for content hashing."""
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":")).encode()


def profile_from_dict(data: dict, name: str = "") -> DisplayProfile:
    if not isinstance(data, dict):
        raise ValueError("profile document must be a JSON object")
    missing = _PROFILE_KEYS - set(data)
    if missing:
        raise ValueError(f"profile is missing keys: {sorted(missing)}")
    unknown = set(data) - _PROFILE_KEYS - _OPTIONAL_KEYS
    if unknown:
        raise ValueError(f"profile has unknown keys: {sorted(unknown)}")
    kwargs = {
        "width_px": int(data["width_px"]),
        "height_px": int(data["height_px"]),
        "line_count": float(data["line_count"]),
        "tilt_angle_deg": float(data["tilt_angle_deg"]),
        "offset": float(data["offset"]),
        "num_views": int(data["num_views"]),
        "fov_deg": float(data["fov_deg"]),
        "focal_px": float(data["focal_px"]),
        "name": str(data.get("name", name)),
    }
    for key in ("lr_px", "mr_px"):
        if data.get(key) is not None:
            pair = data[key]
            if len(pair) != 2:
                raise ValueError(f"{key} must be a [width, height] pair")
            kwargs[key] = (int(pair[0]), int(pair[1]))
    return DisplayProfile(**kwargs)


def load_profile(source: str | Path) -> DisplayProfile:
    """Load a profile by built-in name or from a JSON file path."""
    text = str(source)
    if text in BUILTIN_PROFILES:
        raw = resources.files("lentiray.profiles").joinpath(f"{text}.json").read_text()
        return profile_from_dict(json.loads(raw), name=text)
    path = Path(source)
    if not path.is_file():
        raise ValueError(
            f"profile {text!r} is neither a built-in ({', '.join(BUILTIN_PROFILES)}) "
            "nor an existing file"
        )
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ValueError(f"profile file {path} is not valid JSON: {exc}") from exc
    return profile_from_dict(data, name=path.stem)


def save_profile(profile: DisplayProfile, path: str | Path) -> None:
    Path(path).write_text(json.dumps(profile.to_dict(), indent=2) + "\n")


def _view_from_quotient(q: float, num_views: int) -> int:
    r = round(q)
    if abs(q - r) < _BIN_SNAP * max(1.0, abs(q)):
        q = float(r)
    v = int(math.floor(q))
    if v >= num_views:  # x_offset == L_x - eps can round up past the last bin
        v = num_views - 1
    return max(v, 0)


def subpixel_view(profile: DisplayProfile, x: int, y: int, k: int) -> int:
    """Viewpoint index for subpixel (row x, pixel column y, channel k)."""
    if not 0 <= x < profile.height_px:
        raise ValueError(f"row {x} outside panel of height {profile.height_px}")
    if not 0 <= y < profile.width_px:
        raise ValueError(f"column {y} outside panel of width {profile.width_px}")
    if k not in (0, 1, 2):
        raise ValueError(f"channel {k} not in (0, 1, 2)")
    tan_a = math.tan(profile.tilt_angle)
    d_offset = 3.0 * y + 3.0 * x * tan_a + k - profile.offset
    x_offset = d_offset % profile.line_count
    q = profile.num_views * x_offset / profile.line_count
    return _view_from_quotient(q, profile.num_views)


def viewpoint_matrix(profile: DisplayProfile) -> np.ndarray:
    """Full per-subpixel viewpoint matrix, shape (h, 3w), dtype uint16.

    Entry [x, 3y + k] is ``subpixel_view(profile, x, y, k)``; the vectorised
    arithmetic mirrors the scalar path expression-for-expression so the two
    agree bit for bit.
    """
    h, w = profile.panel_shape
    tan_a = math.tan(profile.tilt_angle)
    col_term = 3.0 * np.arange(w, dtype=np.float64)
    row_term = (3.0 * np.arange(h, dtype=np.float64)) * tan_a
    chan = np.arange(3, dtype=np.float64)
    out = np.empty((h, 3 * w), dtype=np.uint16)
    # Row blocks keep the float64 intermediates small on 8K panels; the
    # per-element arithmetic is unchanged.
    block = max(1, (1 << 22) // (3 * w))
    for x0 in range(0, h, block):
        x1 = min(x0 + block, h)
        d_offset = (
            (col_term[None, :, None] + row_term[x0:x1, None, None]) + chan[None, None, :]
        ) - profile.offset
        d_offset = d_offset.reshape(x1 - x0, 3 * w)
        x_offset = d_offset % profile.line_count
        q = profile.num_views * x_offset / profile.line_count
        r = np.rint(q)
        snap = np.abs(q - r) < _BIN_SNAP * np.maximum(1.0, np.abs(q))
        q = np.where(snap, r, q)
        views = np.floor(q).astype(np.int64)
        np.clip(views, 0, profile.num_views - 1, out=views)
        out[x0:x1] = views.astype(np.uint16)
    return out


def resize_bilinear(image: np.ndarray, height: int, width: int) -> np.ndarray:
    """Resample an (h, w, ...) raster to (height, width, ...) bilinearly.

    Pixel centres are aligned between grids (half-pixel convention); edges
    clamp.  Returns the input unchanged when dimensions already match.
    """
    src_h, src_w = image.shape[:2]
    if (src_h, src_w) == (height, width):
        return image
    work = image.astype(np.float64, copy=False)

    def axis_coords(dst: int, src: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        pos = (np.arange(dst, dtype=np.float64) + 0.5) * (src / dst) - 0.5
        pos = np.clip(pos, 0.0, src - 1.0)
        lo = np.floor(pos).astype(np.int64)
        hi = np.minimum(lo + 1, src - 1)
        return lo, hi, pos - lo

    y_lo, y_hi, fy = axis_coords(height, src_h)
    x_lo, x_hi, fx = axis_coords(width, src_w)
    fy = fy.reshape(-1, 1, *([1] * (work.ndim - 2)))
    fx = fx.reshape(1, -1, *([1] * (work.ndim - 2)))
    top = work[y_lo][:, x_lo] * (1 - fx) + work[y_lo][:, x_hi] * fx
    bot = work[y_hi][:, x_lo] * (1 - fx) + work[y_hi][:, x_hi] * fx
    out = top * (1 - fy) + bot * fy
    if np.issubdtype(image.dtype, np.integer):
        info = np.iinfo(image.dtype)
        out = np.clip(np.rint(out), info.min, info.max)
    return out.astype(image.dtype)


def interlace(profile: DisplayProfile, stack: np.ndarray, views: np.ndarray) -> np.ndarray:
    """Gather a multi-view stack into the encoded panel image.

    ``stack`` has shape (N_v, h', w', 3); views not at panel resolution are
    first resampled bilinearly.  Each encoded subpixel is copied from the
    same position of its assigned view -- a pure gather, no blending.
    """
    h, w = profile.panel_shape
    stack = np.asarray(stack)
    if stack.ndim != 4 or stack.shape[3] != 3:
        raise ValueError("stack must have shape (num_views, h, w, 3)")
    if stack.shape[0] != profile.num_views:
        raise ValueError(
            f"stack has {stack.shape[0]} views, profile expects {profile.num_views}"
        )
    if views.shape != (h, 3 * w):
        raise ValueError("viewpoint matrix does not match the panel dimensions")
    view3 = views.reshape(h, w, 3)
    out = np.zeros((h, w, 3), dtype=stack.dtype)
    for v in range(profile.num_views):
        mask = view3 == v
        if not mask.any():
            continue
        raster = resize_bilinear(stack[v], h, w)
        out[mask] = raster[mask]
    return out
