"""Radiance field core: volume compositing, SH color, Gaussian scene model.

A radiance field here is anything with a ``shade_rays`` method mapping ray
origins/directions to RGB in [0, 1].  Analytic fields (spheres, a gradient
box) stand in for trained scenes so the rendering paths can be tested
against closed forms.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol

import numpy as np
from numba import njit

# Real spherical harmonics basis constants (degree 0..3), in the sign and
# ordering convention of the 3DGS point-cloud ecosystem.
SH_C0 = 0.28209479177387814
SH_C1 = 0.4886025119029199
SH_C2 = (
    1.0925484305920792,
    -1.0925484305920792,
    0.31539156525252005,
    -1.0925484305920792,
    0.5462742152960396,
)
SH_C3 = (
    -0.5900435899266435,
    2.890611442640554,
    -0.4570457994644658,
    0.3731763325901154,
    -0.4570457994644658,
    1.445305721320277,
    -0.5900435899266435,
)

_VALID_SH_SIZES = {1: 0, 4: 1, 9: 2, 16: 3}
MAX_SCALE_CONDITION = 1e12


class RadianceField(Protocol):
    """Deterministic mapping from rays to colors."""

    def shade_rays(
        self, origins: np.ndarray, dirs: np.ndarray, background: np.ndarray
    ) -> np.ndarray: ...


def volume_weights(sigmas: np.ndarray, deltas: np.ndarray) -> tuple[np.ndarray, float]:
    """Per-sample compositing weights alpha_i * T_i and the final transmittance.

    The weights and T_final sum to 1 up to float error (telescoping product).
    """
    sigmas = np.asarray(sigmas, dtype=np.float64)
    deltas = np.broadcast_to(np.asarray(deltas, dtype=np.float64), sigmas.shape)
    if np.any(sigmas < 0):
        raise ValueError("volume densities must be non-negative")
    if np.any(deltas <= 0):
        raise ValueError("sample spacings must be positive")
    alphas = 1.0 - np.exp(-sigmas * deltas)
    trans = np.cumprod(1.0 - alphas)
    t_before = np.concatenate([[1.0], trans[:-1]])
    t_final = float(trans[-1]) if sigmas.size else 1.0
    return alphas * t_before, t_final


def volume_render(
    sigmas: np.ndarray,
    colors: np.ndarray,
    deltas: np.ndarray,
    background: np.ndarray | tuple = (0.0, 0.0, 0.0),
) -> np.ndarray:
    """Front-to-back compositing of ordered samples along one ray."""
    sigmas = np.asarray(sigmas, dtype=np.float64)
    bg = np.asarray(background, dtype=np.float64)
    if sigmas.size == 0:
        return bg.copy()
    colors = np.asarray(colors, dtype=np.float64).reshape(sigmas.size, 3)
    weights, t_final = volume_weights(sigmas, deltas)
    return weights @ colors + t_final * bg


def quaternions_to_rotations(quats: np.ndarray) -> np.ndarray:
    """Unit quaternions (w, x, y, z) to rotation matrices, shape (N, 3, 3)."""
    q = np.asarray(quats, dtype=np.float64)
    squeeze = q.ndim == 1
    q = np.atleast_2d(q)
    norm = np.linalg.norm(q, axis=1)
    if np.any(norm < 1e-12):
        raise ValueError("zero-norm quaternion")
    q = q / norm[:, None]
    w, x, y, z = q[:, 0], q[:, 1], q[:, 2], q[:, 3]
    rot = np.empty((q.shape[0], 3, 3))
    rot[:, 0, 0] = 1 - 2 * (y * y + z * z)
    rot[:, 0, 1] = 2 * (x * y - w * z)
    rot[:, 0, 2] = 2 * (x * z + w * y)
    rot[:, 1, 0] = 2 * (x * y + w * z)
    rot[:, 1, 1] = 1 - 2 * (x * x + z * z)
    rot[:, 1, 2] = 2 * (y * z - w * x)
    rot[:, 2, 0] = 2 * (x * z - w * y)
    rot[:, 2, 1] = 2 * (y * z + w * x)
    rot[:, 2, 2] = 1 - 2 * (x * x + y * y)
    return rot[0] if squeeze else rot


def covariance_from_rs(scale: np.ndarray, rotation: np.ndarray) -> np.ndarray:
    """Covariance R * S * S^T * R^T of one Gaussian; symmetric positive definite."""
    scale = np.asarray(scale, dtype=np.float64)
    if scale.shape != (3,) or np.any(scale <= 0):
        raise ValueError("scale must be three positive values")
    rot = quaternions_to_rotations(np.asarray(rotation, dtype=np.float64))
    return (rot * scale[None, :] ** 2) @ rot.T


def covariances_from_rs(scales: np.ndarray, rotations: np.ndarray) -> np.ndarray:
    """Vectorised covariance_from_rs over (N, 3) scales and (N, 4) quaternions."""
    scales = np.asarray(scales, dtype=np.float64)
    if np.any(scales <= 0):
        raise ValueError("scales must be positive")
    rot = quaternions_to_rotations(rotations)
    return np.einsum("nij,nj,nkj->nik", rot, scales**2, rot)


def _precision_from_rs(scales: np.ndarray, rotations: np.ndarray) -> np.ndarray:
    # Inverse covariance built as R * diag(1/s^2) * R^T, exactly symmetric.
    rot = quaternions_to_rotations(rotations)
    return np.einsum("nij,nj,nkj->nik", rot, 1.0 / np.asarray(scales, dtype=np.float64) ** 2, rot)


def eval_sh(coeffs: np.ndarray, directions: np.ndarray) -> np.ndarray:
    """Evaluate SH color blocks at unit directions, clamped to [0, 1].

    ``coeffs`` is (B, 3) or (N, B, 3) with B in {1, 4, 9, 16} (degree 0..3);
    ``directions`` broadcasts as (3,) or (N, 3).  Colors follow the 3DGS
    convention: 0.5 baseline plus the coefficient-weighted basis sum.
    """
    coeffs = np.asarray(coeffs, dtype=np.float64)
    squeeze = coeffs.ndim == 2
    if squeeze:
        coeffs = coeffs[None]
    n, nb, _ = coeffs.shape
    if nb not in _VALID_SH_SIZES:
        raise ValueError(f"SH blocks of {nb} coefficients are unsupported (degree > 3?)")
    dirs = np.asarray(directions, dtype=np.float64)
    if dirs.ndim == 1:
        dirs = np.broadcast_to(dirs, (n, 3))
    basis = sh_basis(dirs, _VALID_SH_SIZES[nb])
    rgb = np.einsum("nb,nbc->nc", basis, coeffs) + 0.5
    np.clip(rgb, 0.0, 1.0, out=rgb)
    return rgb[0] if squeeze else rgb


def sh_basis(dirs: np.ndarray, degree: int) -> np.ndarray:
    """Stack of real SH basis values per direction, shape (N, (degree+1)^2)."""
    x, y, z = dirs[:, 0], dirs[:, 1], dirs[:, 2]
    cols = [np.full_like(x, SH_C0)]
    if degree >= 1:
        cols += [-SH_C1 * y, SH_C1 * z, -SH_C1 * x]
    if degree >= 2:
        xx, yy, zz = x * x, y * y, z * z
        xy, yz, xz = x * y, y * z, x * z
        cols += [
            SH_C2[0] * xy,
            SH_C2[1] * yz,
            SH_C2[2] * (2.0 * zz - xx - yy),
            SH_C2[3] * xz,
            SH_C2[4] * (xx - yy),
        ]
    if degree >= 3:
        xx, yy, zz = x * x, y * y, z * z
        cols += [
            SH_C3[0] * y * (3.0 * xx - yy),
            SH_C3[1] * x * y * z,
            SH_C3[2] * y * (4.0 * zz - xx - yy),
            SH_C3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy),
            SH_C3[4] * x * (4.0 * zz - xx - yy),
            SH_C3[5] * z * (xx - yy),
            SH_C3[6] * x * (xx - 3.0 * yy),
        ]
    return np.stack(cols, axis=1)


@dataclass
class GaussianScene:
    """Anisotropic Gaussian mixture with opacity and SH color per component."""

    means: np.ndarray      # (N, 3)
    scales: np.ndarray     # (N, 3), positive
    rotations: np.ndarray  # (N, 4) unit quaternions (w, x, y, z)
    opacities: np.ndarray  # (N,) in [0, 1]
    sh: np.ndarray         # (N, B, 3), B in {1, 4, 9, 16}
    covariances: np.ndarray = field(init=False)
    precisions: np.ndarray = field(init=False)

    def __post_init__(self) -> None:
        self.means = np.ascontiguousarray(self.means, dtype=np.float64)
        self.scales = np.ascontiguousarray(self.scales, dtype=np.float64)
        self.rotations = np.ascontiguousarray(self.rotations, dtype=np.float64)
        self.opacities = np.ascontiguousarray(self.opacities, dtype=np.float64).reshape(-1)
        self.sh = np.ascontiguousarray(self.sh, dtype=np.float64)
        n = self.means.shape[0]
        if n == 0:
            raise ValueError("scene holds no Gaussians")
        for name, arr, shape in (
            ("means", self.means, (n, 3)),
            ("scales", self.scales, (n, 3)),
            ("rotations", self.rotations, (n, 4)),
        ):
            if arr.shape != shape:
                raise ValueError(f"{name} must have shape {shape}, got {arr.shape}")
        if self.opacities.shape != (n,):
            raise ValueError("opacities length does not match means")
        if self.sh.ndim != 3 or self.sh.shape[0] != n or self.sh.shape[2] != 3:
            raise ValueError("sh must have shape (N, B, 3)")
        if self.sh.shape[1] not in _VALID_SH_SIZES:
            raise ValueError(f"unsupported SH block size {self.sh.shape[1]}")
        if not np.isfinite(self.means).all() or not np.isfinite(self.sh).all():
            raise ValueError("scene arrays contain non-finite values")
        if np.any(self.scales <= 0):
            raise ValueError("scales must be strictly positive")
        norms = np.linalg.norm(self.rotations, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-6):
            raise ValueError("rotation quaternions must be unit within 1e-6")
        self.rotations = self.rotations / norms[:, None]
        if np.any(self.opacities < 0) or np.any(self.opacities > 1):
            raise ValueError("opacities must lie in [0, 1]")
        cond = (self.scales.max(axis=1) / self.scales.min(axis=1)) ** 2
        if np.any(cond > MAX_SCALE_CONDITION):
            bad = int(np.argmax(cond))
            raise ValueError(
                f"Gaussian {bad} has a degenerate covariance (condition {cond[bad]:.2e})"
            )
        self.covariances = covariances_from_rs(self.scales, self.rotations)
        self.precisions = _precision_from_rs(self.scales, self.rotations)

    @property
    def size(self) -> int:
        return self.means.shape[0]

    @property
    def sh_degree(self) -> int:
        return _VALID_SH_SIZES[self.sh.shape[1]]

    def bounding_radius(self, k_sigma: float = 3.0) -> float:
        """Radius about the origin covering all k-sigma extents."""
        reach = np.linalg.norm(self.means, axis=1) + k_sigma * self.scales.max(axis=1)
        return float(reach.max())


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


_PLY_PROP_RE = re.compile(r"^property\s+(\w+)\s+(\S+)$")
_PLY_DTYPES = {
    "float": "<f4", "float32": "<f4", "double": "<f8", "float64": "<f8",
    "uchar": "u1", "uint8": "u1", "char": "i1", "int8": "i1",
    "short": "<i2", "int16": "<i2", "ushort": "<u2", "uint16": "<u2",
    "int": "<i4", "int32": "<i4", "uint": "<u4", "uint32": "<u4",
}


def _parse_ply_header(blob: bytes, path: Path) -> tuple[int, list[tuple[str, str]], int]:
    end = blob.find(b"end_header\n")
    if not blob.startswith(b"ply") or end < 0:
        raise ValueError(f"{path} is not a binary point-cloud (ply) file")
    header = blob[:end].decode("ascii", errors="replace").splitlines()
    count = -1
    props: list[tuple[str, str]] = []
    fmt_ok = False
    in_vertex = False
    for line in header[1:]:
        line = line.strip()
        if line.startswith("format"):
            fmt_ok = line.split()[1] == "binary_little_endian"
        elif line.startswith("element"):
            parts = line.split()
            in_vertex = parts[1] == "vertex"
            if in_vertex:
                count = int(parts[2])
            elif count >= 0:
                break  # only the vertex element is read
        elif line.startswith("property") and in_vertex:
            m = _PLY_PROP_RE.match(line)
            if not m:
                raise ValueError(f"{path}: unsupported property line {line!r}")
            kind, name = m.groups()
            if kind == "list":
                raise ValueError(f"{path}: list properties are unsupported")
            if kind not in _PLY_DTYPES:
                raise ValueError(f"{path}: unknown property type {kind!r}")
            props.append((name, _PLY_DTYPES[kind]))
    if not fmt_ok:
        raise ValueError(f"{path} must be binary_little_endian")
    if count < 0 or not props:
        raise ValueError(f"{path} has no vertex element")
    return count, props, end + len(b"end_header\n")


def load_gaussian_scene(path: str | Path) -> GaussianScene:
    """Read a Gaussian scene from the de-facto 3DGS binary point-cloud layout.

    Per point: position, 3 degree-0 SH values (f_dc_*), optional 45
    higher-order SH values (f_rest_*, channel-major), an opacity logit,
    3 log-scales, and a (w, x, y, z) quaternion.  The opacity is passed
    through a sigmoid, scales through exp, quaternions are normalised.
    """
    path = Path(path)
    if not path.is_file():
        raise ValueError(f"scene file {path} does not exist")
    blob = path.read_bytes()
    count, props, offset = _parse_ply_header(blob, path)
    dtype = np.dtype(props)
    need = count * dtype.itemsize
    payload = blob[offset:]
    if len(payload) < need:
        raise ValueError(
            f"{path}: truncated payload, expected {need} bytes for {count} points, "
            f"got {len(payload)}"
        )
    data = np.frombuffer(payload[:need], dtype=dtype)
    names = set(dtype.names or ())

    def take(*keys: str) -> np.ndarray:
        missing = [k for k in keys if k not in names]
        if missing:
            raise ValueError(f"{path}: missing required properties {missing}")
        return np.stack([data[k].astype(np.float64) for k in keys], axis=1)

    means = take("x", "y", "z")
    dc = take("f_dc_0", "f_dc_1", "f_dc_2")
    rest_names = sorted(
        (n for n in names if n.startswith("f_rest_")),
        key=lambda s: int(s.split("_")[-1]),
    )
    n_rest = len(rest_names)
    if n_rest:
        per_channel = n_rest // 3
        if n_rest % 3 or (per_channel + 1) not in _VALID_SH_SIZES:
            raise ValueError(f"{path}: unsupported f_rest coefficient count {n_rest}")
        rest = np.stack([data[k].astype(np.float64) for k in rest_names], axis=1)
        rest = rest.reshape(count, 3, per_channel).transpose(0, 2, 1)
        sh = np.concatenate([dc[:, None, :], rest], axis=1)
    else:
        sh = dc[:, None, :]
    logit = take("opacity")[:, 0]
    log_scales = take("scale_0", "scale_1", "scale_2")
    quats = take("rot_0", "rot_1", "rot_2", "rot_3")

    for name, arr in (("position", means), ("sh", sh), ("opacity", logit),
                      ("scale", log_scales), ("rotation", quats)):
        finite = np.isfinite(arr).reshape(count, -1).all(axis=1)
        if not finite.all():
            bad = int(np.argmin(finite))
            raise ValueError(f"{path}: non-finite {name} values at record {bad}")

    norms = np.linalg.norm(quats, axis=1)
    if np.any(norms < 1e-12):
        bad = int(np.argmin(norms))
        raise ValueError(f"{path}: zero-norm rotation at record {bad}")
    return GaussianScene(
        means=means,
        scales=np.exp(log_scales),
        rotations=quats / norms[:, None],
        opacities=_sigmoid(logit),
        sh=sh,
    )


def save_gaussian_scene(scene: GaussianScene, path: str | Path) -> None:
    """Write a scene in the layout ``load_gaussian_scene`` reads."""
    n = scene.size
    n_rest = (scene.sh.shape[1] - 1) * 3
    fields = (
        [("x", "<f4"), ("y", "<f4"), ("z", "<f4"),
         ("nx", "<f4"), ("ny", "<f4"), ("nz", "<f4"),
         ("f_dc_0", "<f4"), ("f_dc_1", "<f4"), ("f_dc_2", "<f4")]
        + [(f"f_rest_{i}", "<f4") for i in range(n_rest)]
        + [("opacity", "<f4"), ("scale_0", "<f4"), ("scale_1", "<f4"), ("scale_2", "<f4"),
           ("rot_0", "<f4"), ("rot_1", "<f4"), ("rot_2", "<f4"), ("rot_3", "<f4")]
    )
    rec = np.zeros(n, dtype=np.dtype(fields))
    rec["x"], rec["y"], rec["z"] = scene.means.T
    rec["f_dc_0"], rec["f_dc_1"], rec["f_dc_2"] = scene.sh[:, 0, :].T
    rest = scene.sh[:, 1:, :].transpose(0, 2, 1).reshape(n, -1)
    for i in range(n_rest):
        rec[f"f_rest_{i}"] = rest[:, i]
    p = np.clip(scene.opacities, 1e-7, 1.0 - 1e-7)
    rec["opacity"] = np.log(p / (1.0 - p))
    rec["scale_0"], rec["scale_1"], rec["scale_2"] = np.log(scene.scales).T
    rec["rot_0"], rec["rot_1"], rec["rot_2"], rec["rot_3"] = scene.rotations.T
    header = ["ply", "format binary_little_endian 1.0", f"element vertex {n}"]
    header += [f"property float {name}" for name, _ in fields]
    header.append("end_header")
    Path(path).write_bytes("\n".join(header).encode() + b"\n" + rec.tobytes())


ANALYTIC_KINDS = ("constant_sphere", "two_spheres", "gradient_box")
_KIND_IDS = {name: i for i, name in enumerate(ANALYTIC_KINDS)}


@njit(cache=True)
def _analytic_sample(kind, params, px, py, pz):
    sigma = 0.0
    r = 0.0
    g = 0.0
    b = 0.0
    if kind == 0:  # constant_sphere: cx cy cz R sigma rgb
        dx = px - params[0]
        dy = py - params[1]
        dz = pz - params[2]
        if dx * dx + dy * dy + dz * dz < params[3] * params[3]:
            sigma = params[4]
            r = params[5]
            g = params[6]
            b = params[7]
    elif kind == 1:  # two_spheres: 2 x (cx cy cz R sigma rgb)
        for j in range(2):
            o = 8 * j
            dx = px - params[o + 0]
            dy = py - params[o + 1]
            dz = pz - params[o + 2]
            if dx * dx + dy * dy + dz * dz < params[o + 3] * params[o + 3]:
                s = params[o + 4]
                sigma += s
                r += s * params[o + 5]
                g += s * params[o + 6]
                b += s * params[o + 7]
        if sigma > 0.0:
            r /= sigma
            g /= sigma
            b /= sigma
    else:  # gradient_box: lo(3) hi(3) sigma rgb0 rgb1
        if (
            params[0] <= px <= params[3]
            and params[1] <= py <= params[4]
            and params[2] <= pz <= params[5]
        ):
            sigma = params[6]
            span = params[3] - params[0]
            u = (px - params[0]) / span if span > 0 else 0.0
            r = params[7] + u * (params[10] - params[7])
            g = params[8] + u * (params[11] - params[8])
            b = params[9] + u * (params[12] - params[9])
    return sigma, r, g, b


@njit(cache=True, inline="always")
def _slab_axis(o, d, lo_a, hi_a, tmin, tmax):
    if d == 0.0:
        if o < lo_a or o > hi_a:
            return tmin, tmax, False
        return tmin, tmax, True
    inv = 1.0 / d
    t1 = (lo_a - o) * inv
    t2 = (hi_a - o) * inv
    if t1 > t2:
        t1, t2 = t2, t1
    if t1 > tmin:
        tmin = t1
    if t2 < tmax:
        tmax = t2
    return tmin, tmax, tmin <= tmax


@njit(cache=True)
def _slab_intersect(ox, oy, oz, dx, dy, dz, lo, hi):
    tmin, tmax, ok = _slab_axis(ox, dx, lo[0], hi[0], 0.0, np.inf)
    if ok:
        tmin, tmax, ok = _slab_axis(oy, dy, lo[1], hi[1], tmin, tmax)
    if ok:
        tmin, tmax, ok = _slab_axis(oz, dz, lo[2], hi[2], tmin, tmax)
    if not ok:
        return False, 0.0, 0.0
    return True, tmin, tmax


@njit(cache=True)
def _shade_volume_kernel(origins, dirs, kind, params, lo, hi, n_samples, bg, out):
    for i in range(origins.shape[0]):
        ox = origins[i, 0]
        oy = origins[i, 1]
        oz = origins[i, 2]
        dx = dirs[i, 0]
        dy = dirs[i, 1]
        dz = dirs[i, 2]
        hit, t0, t1 = _slab_intersect(ox, oy, oz, dx, dy, dz, lo, hi)
        if not hit or t1 <= t0:
            out[i, 0] = bg[0]
            out[i, 1] = bg[1]
            out[i, 2] = bg[2]
            continue
        dt = (t1 - t0) / n_samples
        trans = 1.0
        cr = 0.0
        cg = 0.0
        cb = 0.0
        for j in range(n_samples):
            t = t0 + (j + 0.5) * dt
            sigma, r, g, b = _analytic_sample(
                kind, params, ox + t * dx, oy + t * dy, oz + t * dz
            )
            if sigma > 0.0:
                alpha = 1.0 - np.exp(-sigma * dt)
                w = trans * alpha
                cr += w * r
                cg += w * g
                cb += w * b
                trans *= 1.0 - alpha
                if trans < 1e-12:
                    break
        out[i, 0] = cr + trans * bg[0]
        out[i, 1] = cg + trans * bg[1]
        out[i, 2] = cb + trans * bg[2]


@dataclass
class AnalyticField:
    """Ray-marched analytic density field (see ``make_analytic_field``)."""

    kind: str
    params: np.ndarray
    bbox_lo: np.ndarray
    bbox_hi: np.ndarray
    n_samples: int = 512

    def shade_rays(
        self,
        origins: np.ndarray,
        dirs: np.ndarray,
        background: np.ndarray | tuple = (0.0, 0.0, 0.0),
    ) -> np.ndarray:
        origins = np.ascontiguousarray(origins, dtype=np.float64)
        dirs = np.ascontiguousarray(dirs, dtype=np.float64)
        out = np.empty_like(origins)
        _shade_volume_kernel(
            origins.reshape(-1, 3),
            dirs.reshape(-1, 3),
            _KIND_IDS[self.kind],
            self.params,
            self.bbox_lo,
            self.bbox_hi,
            self.n_samples,
            np.asarray(background, dtype=np.float64),
            out.reshape(-1, 3),
        )
        return out

    def samples_along(self, origin: np.ndarray, direction: np.ndarray):
        """The exact (sigmas, colors, delta) the shading kernel composites."""
        ox, oy, oz = (float(v) for v in origin)
        dx, dy, dz = (float(v) for v in direction)
        hit, t0, t1 = _slab_intersect(ox, oy, oz, dx, dy, dz, self.bbox_lo, self.bbox_hi)
        if not hit or t1 <= t0:
            return np.empty(0), np.empty((0, 3)), 1.0
        dt = (t1 - t0) / self.n_samples
        sigmas = np.empty(self.n_samples)
        colors = np.empty((self.n_samples, 3))
        kind = _KIND_IDS[self.kind]
        for j in range(self.n_samples):
            t = t0 + (j + 0.5) * dt
            sigmas[j], colors[j, 0], colors[j, 1], colors[j, 2] = _analytic_sample(
                kind, self.params, ox + t * dx, oy + t * dy, oz + t * dz
            )
        return sigmas, colors, dt


def make_analytic_field(kind: str, n_samples: int = 512, **params) -> AnalyticField:
    """Build an analytic test field.

    constant_sphere: center, radius, sigma, color
    two_spheres:     center/radius/sigma/color and center2/... for the pair
    gradient_box:    lo, hi, sigma, color, color2 (gradient along x)
    """
    if kind not in _KIND_IDS:
        raise ValueError(f"unknown analytic field kind {kind!r}")
    if n_samples < 1:
        raise ValueError("n_samples must be positive")

    def vec3(name, default):
        return np.asarray(params.get(name, default), dtype=np.float64).reshape(3)

    if kind == "constant_sphere":
        center = vec3("center", (0.0, 0.0, 0.0))
        radius = float(params.get("radius", 1.0))
        sigma = float(params.get("sigma", 3.0))
        color = vec3("color", (0.9, 0.6, 0.2))
        if radius <= 0 or sigma < 0:
            raise ValueError("radius must be positive and sigma non-negative")
        packed = np.concatenate([center, [radius, sigma], color])
        lo, hi = center - radius, center + radius
    elif kind == "two_spheres":
        c1 = vec3("center", (0.0, 0.0, 0.4))
        r1 = float(params.get("radius", 0.45))
        s1 = float(params.get("sigma", 4.0))
        col1 = vec3("color", (0.9, 0.25, 0.2))
        c2 = vec3("center2", (0.0, 0.0, -0.5))
        r2 = float(params.get("radius2", 0.55))
        s2 = float(params.get("sigma2", 4.0))
        col2 = vec3("color2", (0.2, 0.4, 0.9))
        if min(r1, r2) <= 0 or min(s1, s2) < 0:
            raise ValueError("radii must be positive and sigmas non-negative")
        packed = np.concatenate([c1, [r1, s1], col1, c2, [r2, s2], col2])
        lo = np.minimum(c1 - r1, c2 - r2)
        hi = np.maximum(c1 + r1, c2 + r2)
    else:
        lo = vec3("lo", (-0.8, -0.6, -0.5))
        hi = vec3("hi", (0.8, 0.6, 0.5))
        sigma = float(params.get("sigma", 2.5))
        col1 = vec3("color", (0.95, 0.8, 0.1))
        col2 = vec3("color2", (0.1, 0.3, 0.9))
        if np.any(hi <= lo) or sigma < 0:
            raise ValueError("box needs hi > lo componentwise and sigma >= 0")
        packed = np.concatenate([lo, hi, [sigma], col1, col2])
    return AnalyticField(
        kind=kind,
        params=packed,
        bbox_lo=np.ascontiguousarray(lo),
        bbox_hi=np.ascontiguousarray(hi),
        n_samples=int(n_samples),
    )
