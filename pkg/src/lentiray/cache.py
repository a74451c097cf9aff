"""Durable precompute cache: index matrix, ray list, and permutations.

One file carries everything the online renderer needs for a display:
a fixed header (format version, panel dims, repurposing settings, ray
count, beta), the canonical profile JSON it was built from plus its
SHA-256, then the packed index-matrix records, the unique ray records,
and the two 32-bit permutation arrays.  All integers little-endian.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .display import DisplayProfile, profile_from_dict, viewpoint_matrix
from .errors import DataError
from .rays import RaySet, build_rayset
from .repurpose import DEFAULT_AREA_WIDTH, EncodedIndexMatrix, build_index_matrix

MAGIC = b"LRYCACHE"
VERSION = 1
_HEADER = struct.Struct("<8sI32sIIIBQdI")  # magic, ver, hash, h, w, pw, flag, n_rays, beta, json_len

_MI_DTYPE = np.dtype([("view", "<u2"), ("src_x", "<u4"), ("src_y", "<u4"), ("channel", "u1")])
_RAY_DTYPE = np.dtype([("view", "<u2"), ("src_x", "<u4"), ("src_y", "<u4")])


@dataclass
class PrecomputeCache:
    profile: DisplayProfile
    profile_hash: bytes
    index: EncodedIndexMatrix
    rayset: RaySet
    area_width: int
    repurposed: bool

    @property
    def beta(self) -> float:
        return self.index.beta

    @property
    def n_rays(self) -> int:
        return self.rayset.n_rays


def profile_hash(profile: DisplayProfile) -> bytes:
    return hashlib.sha256(profile.canonical_json()).digest()


def build_cache(
    profile: DisplayProfile,
    area_width: int = DEFAULT_AREA_WIDTH,
    repurpose: bool = True,
) -> PrecomputeCache:
    """Run the offline derivation: viewpoint matrix -> index matrix -> rays."""
    views = viewpoint_matrix(profile)
    index = build_index_matrix(profile, views, area_width, repurpose)
    rayset = build_rayset(index)
    return PrecomputeCache(
        profile=profile,
        profile_hash=profile_hash(profile),
        index=index,
        rayset=rayset,
        area_width=area_width,
        repurposed=repurpose,
    )


def write_cache(cache: PrecomputeCache, path: str | Path) -> None:
    """Serialise atomically; identical inputs produce identical bytes."""
    path = Path(path)
    h, w = cache.index.panel_shape
    profile_json = cache.profile.canonical_json()
    header = _HEADER.pack(
        MAGIC, VERSION, cache.profile_hash, h, w, cache.area_width,
        1 if cache.repurposed else 0, cache.rayset.n_rays, cache.index.beta,
        len(profile_json),
    )
    mi = np.empty(h * w * 3, dtype=_MI_DTYPE)
    mi["view"] = cache.index.view.reshape(-1)
    mi["src_x"] = cache.index.src_x.reshape(-1)
    mi["src_y"] = cache.index.src_y.reshape(-1)
    mi["channel"] = np.tile(np.arange(3, dtype=np.uint8), h * w)
    rays = np.empty(cache.rayset.n_rays, dtype=_RAY_DTYPE)
    rays["view"] = cache.rayset.view
    rays["src_x"] = cache.rayset.src_x
    rays["src_y"] = cache.rayset.src_y
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(header)
        fh.write(profile_json)
        fh.write(mi.tobytes())
        fh.write(rays.tobytes())
        fh.write(cache.rayset.idx_g.astype("<u4").tobytes())
        fh.write(cache.rayset.idx_b.astype("<u4").tobytes())
    os.replace(tmp, path)


def read_cache(path: str | Path) -> PrecomputeCache:
    """Load and fully validate a cache file."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"cache file {path} does not exist")
    blob = path.read_bytes()
    if len(blob) < _HEADER.size:
        raise DataError(f"cache file {path} is truncated")
    magic, version, stored_hash, h, w, pw, flag, n_rays, beta, json_len = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise DataError(f"{path} is not a precompute cache (bad magic)")
    if version != VERSION:
        raise DataError(f"cache version {version} unsupported (expected {VERSION})")
    off = _HEADER.size
    profile_json = blob[off : off + json_len]
    if len(profile_json) != json_len:
        raise DataError(f"cache file {path} is truncated in the profile block")
    if hashlib.sha256(profile_json).digest() != stored_hash:
        raise DataError(f"cache {path} profile hash mismatch; file corrupt or tampered")
    try:
        profile = profile_from_dict(json.loads(profile_json))
    except ValueError as exc:
        raise DataError(f"cache {path} embeds an invalid profile: {exc}") from exc
    if (profile.height_px, profile.width_px) != (h, w):
        raise DataError(f"cache {path} header dims disagree with its profile")
    off += json_len

    wh = w * h
    mi_bytes = wh * 3 * _MI_DTYPE.itemsize
    ray_bytes = n_rays * _RAY_DTYPE.itemsize
    idx_bytes = wh * 4
    need = off + mi_bytes + ray_bytes + 2 * idx_bytes
    if len(blob) != need:
        raise DataError(f"cache {path} has {len(blob)} bytes, expected {need}")
    mi = np.frombuffer(blob, dtype=_MI_DTYPE, count=wh * 3, offset=off)
    off += mi_bytes
    rays = np.frombuffer(blob, dtype=_RAY_DTYPE, count=n_rays, offset=off)
    off += ray_bytes
    idx_g = np.frombuffer(blob, dtype="<u4", count=wh, offset=off)
    off += idx_bytes
    idx_b = np.frombuffer(blob, dtype="<u4", count=wh, offset=off)

    expect_chan = np.tile(np.arange(3, dtype=np.uint8), wh)
    if not np.array_equal(mi["channel"], expect_chan):
        raise DataError(f"cache {path} index records break the channel==slot invariant")
    if np.any(mi["src_x"] >= h) or np.any(mi["src_y"] >= w):
        raise DataError(f"cache {path} index records reference out-of-panel sources")
    if n_rays < wh or n_rays > 3 * wh:
        raise DataError(f"cache {path} ray count {n_rays} outside [wh, 3wh]")
    if np.any(idx_g >= n_rays) or np.any(idx_b >= n_rays):
        raise DataError(f"cache {path} permutation indices exceed the ray count")

    index = EncodedIndexMatrix(
        view=mi["view"].reshape(h, w, 3).astype(np.uint16),
        src_x=mi["src_x"].reshape(h, w, 3).astype(np.int32),
        src_y=mi["src_y"].reshape(h, w, 3).astype(np.int32),
        beta=beta,
        area_width=pw,
        repurposed=bool(flag),
    )
    rayset = RaySet(
        view=rays["view"].astype(np.uint16),
        src_x=rays["src_x"].astype(np.int32),
        src_y=rays["src_y"].astype(np.int32),
        idx_g=idx_g.astype(np.uint32),
        idx_b=idx_b.astype(np.uint32),
        panel_shape=(h, w),
    )
    return PrecomputeCache(
        profile=profile,
        profile_hash=stored_hash,
        index=index,
        rayset=rayset,
        area_width=pw,
        repurposed=bool(flag),
    )
