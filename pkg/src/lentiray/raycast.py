"""Ray-order Gaussian rendering: SAH BVH, bounded-heap traversal, oracle.

Each ray gathers every Gaussian whose k-sigma bounding box it enters,
solves the closest-approach depth in Mahalanobis metric, keeps the nearest
``c_h`` hits in a max-heap, then alpha-composites the survivors in depth
order.  ``brute_force_ray`` runs the same per-Gaussian math over the whole
scene with no BVH and no heap bound, as an independent reference.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass

import numpy as np
from numba import njit

from .fields import SH_C0, SH_C1, SH_C2, SH_C3, GaussianScene, eval_sh

ALPHA_FLOOR = 1.0 / 255.0
DEFAULT_HEAP_CAPACITY = 128
DEFAULT_K_SIGMA = 3.0
DEFAULT_BRANCHING = 8
_SAH_BINS = 16
_MAX_LEAF = 64


@dataclass
class Aabb:
    lo: np.ndarray
    hi: np.ndarray


@dataclass
class Bvh:
    """Flattened wide BVH over Gaussian bounding boxes.

    ``children[i]`` lists child node indices (-1 padded); a node with
    ``leaf_count[i] > 0`` is a leaf owning ``prim_order[leaf_start[i] :
    leaf_start[i] + leaf_count[i]]``.  Node 0 is the root.
    """

    node_lo: np.ndarray      # (M, 3)
    node_hi: np.ndarray      # (M, 3)
    children: np.ndarray     # (M, B) int32
    leaf_start: np.ndarray   # (M,) int32
    leaf_count: np.ndarray   # (M,) int32
    prim_order: np.ndarray   # (N,) int32
    prim_lo: np.ndarray      # (N, 3) per-Gaussian boxes, original index order
    prim_hi: np.ndarray      # (N, 3)
    branching: int
    k_sigma: float
    sah_cost: float


def gaussian_aabbs(scene: GaussianScene, k_sigma: float = DEFAULT_K_SIGMA):
    """Axis-aligned boxes covering each Gaussian's k-sigma ellipsoid."""
    if k_sigma <= 0:
        raise ValueError("k_sigma must be positive")
    half = k_sigma * np.sqrt(np.diagonal(scene.covariances, axis1=1, axis2=2))
    return scene.means - half, scene.means + half


def gaussian_aabb(scene: GaussianScene, i: int, k_sigma: float = DEFAULT_K_SIGMA) -> Aabb:
    """Bounding box of one Gaussian."""
    if not 0 <= i < scene.size:
        raise ValueError(f"gaussian index {i} out of range")
    lo, hi = gaussian_aabbs(scene, k_sigma)
    return Aabb(lo[i].copy(), hi[i].copy())


def _surface_area(lo: np.ndarray, hi: np.ndarray) -> float:
    d = np.maximum(hi - lo, 0.0)
    return float(2.0 * (d[0] * d[1] + d[1] * d[2] + d[2] * d[0]))


class _BuildNode:
    __slots__ = ("lo", "hi", "start", "count", "left", "right")

    def __init__(self, lo, hi, start, count):
        self.lo = lo
        self.hi = hi
        self.start = start
        self.count = count
        self.left = None
        self.right = None


def _build_binary(lo: np.ndarray, hi: np.ndarray, order: np.ndarray) -> _BuildNode:
    centroids = 0.5 * (lo + hi)

    def bounds_of(ids):
        return lo[ids].min(axis=0), hi[ids].max(axis=0)

    def make(start, count):
        ids = order[start : start + count]
        blo, bhi = bounds_of(ids)
        node = _BuildNode(blo, bhi, start, count)
        if count == 1:
            return node
        c = centroids[ids]
        cmin, cmax = c.min(axis=0), c.max(axis=0)
        extent = cmax - cmin
        axis = int(np.argmax(extent))
        if extent[axis] <= 0:
            if count <= _MAX_LEAF:
                return node
            half = count // 2  # identical centroids: arbitrary even split
            node.left = make(start, half)
            node.right = make(start + half, count - half)
            return node
        rel = (c[:, axis] - cmin[axis]) / extent[axis]
        bins = np.minimum((rel * _SAH_BINS).astype(np.int64), _SAH_BINS - 1)
        counts = np.bincount(bins, minlength=_SAH_BINS)
        bin_lo = np.full((_SAH_BINS, 3), np.inf)
        bin_hi = np.full((_SAH_BINS, 3), -np.inf)
        for b in range(_SAH_BINS):
            mask = bins == b
            if counts[b]:
                bin_lo[b] = lo[ids[mask]].min(axis=0)
                bin_hi[b] = hi[ids[mask]].max(axis=0)
        pre_lo = np.minimum.accumulate(bin_lo, axis=0)
        pre_hi = np.maximum.accumulate(bin_hi, axis=0)
        suf_lo = np.minimum.accumulate(bin_lo[::-1], axis=0)[::-1]
        suf_hi = np.maximum.accumulate(bin_hi[::-1], axis=0)[::-1]
        n_left = np.cumsum(counts)[:-1]
        n_right = count - n_left
        costs = np.full(_SAH_BINS - 1, np.inf)
        for b in range(_SAH_BINS - 1):
            if n_left[b] == 0 or n_right[b] == 0:
                continue
            costs[b] = _surface_area(pre_lo[b], pre_hi[b]) * n_left[b] + _surface_area(
                suf_lo[b + 1], suf_hi[b + 1]
            ) * n_right[b]
        best = int(np.argmin(costs))
        if not np.isfinite(costs[best]):
            if count <= _MAX_LEAF:
                return node
            half = count // 2
            node.left = make(start, half)
            node.right = make(start + half, count - half)
            return node
        area = _surface_area(blo, bhi)
        if area > 0 and count <= _MAX_LEAF:
            split_cost = 1.0 + costs[best] / area  # c_node + weighted c_prim
            if split_cost >= float(count):
                return node
        go_left = bins <= best
        left_ids = ids[go_left]
        right_ids = ids[~go_left]
        order[start : start + left_ids.size] = left_ids
        order[start + left_ids.size : start + count] = right_ids
        node.left = make(start, left_ids.size)
        node.right = make(start + left_ids.size, count - left_ids.size)
        return node

    return make(0, order.size)


def build_bvh(
    scene: GaussianScene,
    branching: int = DEFAULT_BRANCHING,
    k_sigma: float = DEFAULT_K_SIGMA,
    c_node: float = 1.0,
    c_prim: float = 1.0,
) -> Bvh:
    """Binned-SAH binary build collapsed to the requested branching factor."""
    if branching < 2:
        raise ValueError("branching factor must be at least 2")
    prim_lo, prim_hi = gaussian_aabbs(scene, k_sigma)
    order = np.arange(scene.size, dtype=np.int64)
    old_limit = sys.getrecursionlimit()
    sys.setrecursionlimit(max(old_limit, 10000))
    try:
        root = _build_binary(prim_lo, prim_hi, order)
    finally:
        sys.setrecursionlimit(old_limit)

    # Collapse: repeatedly expand the largest-area binary interior child.
    node_lo, node_hi, children, leaf_start, leaf_count = [], [], [], [], []

    def emit(bnode: _BuildNode) -> int:
        idx = len(node_lo)
        node_lo.append(bnode.lo)
        node_hi.append(bnode.hi)
        children.append([])
        leaf_start.append(bnode.start if bnode.left is None else 0)
        leaf_count.append(bnode.count if bnode.left is None else 0)
        if bnode.left is None:
            return idx
        group = [bnode.left, bnode.right]
        while len(group) < branching:
            best_j = -1
            best_area = -1.0
            for j, g in enumerate(group):
                if g.left is None:
                    continue
                area = _surface_area(g.lo, g.hi)
                if area > best_area:
                    best_area = area
                    best_j = j
            if best_j < 0:
                break
            g = group.pop(best_j)
            group.insert(best_j, g.right)
            group.insert(best_j, g.left)
        children[idx] = [emit(g) for g in group]
        return idx

    old_limit = sys.getrecursionlimit()
    sys.setrecursionlimit(max(old_limit, 10000))
    try:
        emit(root)
    finally:
        sys.setrecursionlimit(old_limit)

    m = len(node_lo)
    child_arr = np.full((m, branching), -1, dtype=np.int32)
    for i, ch in enumerate(children):
        child_arr[i, : len(ch)] = ch
    lo_arr = np.asarray(node_lo)
    hi_arr = np.asarray(node_hi)
    start_arr = np.asarray(leaf_start, dtype=np.int32)
    count_arr = np.asarray(leaf_count, dtype=np.int32)

    root_area = _surface_area(lo_arr[0], hi_arr[0])
    cost = 0.0
    for i in range(m):
        rel = _surface_area(lo_arr[i], hi_arr[i]) / root_area if root_area > 0 else 1.0
        if count_arr[i] > 0:
            cost += rel * float(count_arr[i]) * c_prim
        else:
            cost += rel * c_node
    return Bvh(
        node_lo=lo_arr,
        node_hi=hi_arr,
        children=child_arr,
        leaf_start=start_arr,
        leaf_count=count_arr,
        prim_order=order.astype(np.int32),
        prim_lo=prim_lo,
        prim_hi=prim_hi,
        branching=branching,
        k_sigma=k_sigma,
        sah_cost=cost,
    )


def validate_bvh(bvh: Bvh, scene: GaussianScene) -> None:
    """Check structural invariants (each prim once, containment)."""
    seen = np.sort(bvh.prim_order)
    if not np.array_equal(seen, np.arange(scene.size)):
        raise ValueError("prim_order is not a permutation of the scene")
    for i in range(bvh.node_lo.shape[0]):
        if bvh.leaf_count[i] > 0:
            ids = bvh.prim_order[bvh.leaf_start[i] : bvh.leaf_start[i] + bvh.leaf_count[i]]
            if np.any(bvh.prim_lo[ids] < bvh.node_lo[i] - 1e-12) or np.any(
                bvh.prim_hi[ids] > bvh.node_hi[i] + 1e-12
            ):
                raise ValueError(f"leaf {i} does not contain its primitives")
        for c in bvh.children[i]:
            if c < 0:
                continue
            if np.any(bvh.node_lo[c] < bvh.node_lo[i] - 1e-12) or np.any(
                bvh.node_hi[c] > bvh.node_hi[i] + 1e-12
            ):
                raise ValueError(f"child {c} escapes parent {i}")


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


@njit(cache=True, inline="always")
def _box_hit(ox, oy, oz, dx, dy, dz, lo, hi, row):
    tmin, tmax, ok = _slab_axis(ox, dx, lo[row, 0], hi[row, 0], 0.0, np.inf)
    if not ok:
        return False
    tmin, tmax, ok = _slab_axis(oy, dy, lo[row, 1], hi[row, 1], tmin, tmax)
    if not ok:
        return False
    _, _, ok = _slab_axis(oz, dz, lo[row, 2], hi[row, 2], tmin, tmax)
    return ok


@njit(cache=True)
def _heap_greater(t, seq, a, b):
    if t[a] != t[b]:
        return t[a] > t[b]
    return seq[a] > seq[b]


@njit(cache=True)
def _heap_sift_down(t, seq, alpha, rgb, size, i):
    while True:
        left = 2 * i + 1
        right = left + 1
        largest = i
        if left < size and _heap_greater(t, seq, left, largest):
            largest = left
        if right < size and _heap_greater(t, seq, right, largest):
            largest = right
        if largest == i:
            return
        t[i], t[largest] = t[largest], t[i]
        seq[i], seq[largest] = seq[largest], seq[i]
        alpha[i], alpha[largest] = alpha[largest], alpha[i]
        for c in range(3):
            rgb[i, c], rgb[largest, c] = rgb[largest, c], rgb[i, c]
        i = largest


@njit(cache=True)
def _heap_sift_up(t, seq, alpha, rgb, i):
    while i > 0:
        parent = (i - 1) // 2
        if _heap_greater(t, seq, i, parent):
            t[i], t[parent] = t[parent], t[i]
            seq[i], seq[parent] = seq[parent], seq[i]
            alpha[i], alpha[parent] = alpha[parent], alpha[i]
            for c in range(3):
                rgb[i, c], rgb[parent, c] = rgb[parent, c], rgb[i, c]
            i = parent
        else:
            return


@njit(cache=True)
def _trace_kernel(
    origins, dirs, node_lo, node_hi, children, leaf_start, leaf_count,
    prim_order, prim_lo, prim_hi, means, prec, opac, sh_coef, sh_deg,
    c_h, alpha_floor, bg, out,
):
    n_rays = origins.shape[0]
    branching = children.shape[1]
    stack = np.empty(4096, np.int32)
    h_t = np.empty(c_h)
    h_seq = np.empty(c_h, np.int64)
    h_a = np.empty(c_h)
    h_rgb = np.empty((c_h, 3))
    basis = np.empty(16)
    n_basis = (sh_deg + 1) * (sh_deg + 1)
    for i in range(n_rays):
        ox = origins[i, 0]
        oy = origins[i, 1]
        oz = origins[i, 2]
        dx = dirs[i, 0]
        dy = dirs[i, 1]
        dz = dirs[i, 2]
        _fill_sh_basis(basis, dx, dy, dz, sh_deg)
        size = 0
        seq_next = 0
        sp = 1
        stack[0] = 0
        while sp > 0:
            sp -= 1
            node = stack[sp]
            if not _box_hit(ox, oy, oz, dx, dy, dz, node_lo, node_hi, node):
                continue
            cnt = leaf_count[node]
            if cnt > 0:
                start = leaf_start[node]
                for j in range(start, start + cnt):
                    p = prim_order[j]
                    if not _box_hit(ox, oy, oz, dx, dy, dz, prim_lo, prim_hi, p):
                        continue
                    mx = means[p, 0] - ox
                    my = means[p, 1] - oy
                    mz = means[p, 2] - oz
                    pdx = prec[p, 0, 0] * dx + prec[p, 0, 1] * dy + prec[p, 0, 2] * dz
                    pdy = prec[p, 1, 0] * dx + prec[p, 1, 1] * dy + prec[p, 1, 2] * dz
                    pdz = prec[p, 2, 0] * dx + prec[p, 2, 1] * dy + prec[p, 2, 2] * dz
                    den = dx * pdx + dy * pdy + dz * pdz
                    tj = (mx * pdx + my * pdy + mz * pdz) / den
                    if tj <= 0.0:
                        continue
                    vx = tj * dx - mx
                    vy = tj * dy - my
                    vz = tj * dz - mz
                    q = (
                        vx * (prec[p, 0, 0] * vx + prec[p, 0, 1] * vy + prec[p, 0, 2] * vz)
                        + vy * (prec[p, 1, 0] * vx + prec[p, 1, 1] * vy + prec[p, 1, 2] * vz)
                        + vz * (prec[p, 2, 0] * vx + prec[p, 2, 1] * vy + prec[p, 2, 2] * vz)
                    )
                    a = opac[p] * np.exp(-0.5 * q)
                    if a < alpha_floor:
                        continue
                    if size == c_h and tj >= h_t[0]:
                        continue  # farther than the kept set's maximum
                    cr = 0.5
                    cg = 0.5
                    cb = 0.5
                    for bidx in range(n_basis):
                        cr += basis[bidx] * sh_coef[p, bidx, 0]
                        cg += basis[bidx] * sh_coef[p, bidx, 1]
                        cb += basis[bidx] * sh_coef[p, bidx, 2]
                    cr = min(max(cr, 0.0), 1.0)
                    cg = min(max(cg, 0.0), 1.0)
                    cb = min(max(cb, 0.0), 1.0)
                    if size == c_h:
                        h_t[0] = tj
                        h_seq[0] = seq_next
                        h_a[0] = a
                        h_rgb[0, 0] = cr
                        h_rgb[0, 1] = cg
                        h_rgb[0, 2] = cb
                        _heap_sift_down(h_t, h_seq, h_a, h_rgb, size, 0)
                    else:
                        h_t[size] = tj
                        h_seq[size] = seq_next
                        h_a[size] = a
                        h_rgb[size, 0] = cr
                        h_rgb[size, 1] = cg
                        h_rgb[size, 2] = cb
                        size += 1
                        _heap_sift_up(h_t, h_seq, h_a, h_rgb, size - 1)
                    seq_next += 1
            else:
                for c in range(branching):
                    ch = children[node, c]
                    if ch >= 0:
                        stack[sp] = ch
                        sp += 1
        # heap-sort ascending by (t, insertion order), then composite.
        full = size
        while size > 1:
            size -= 1
            h_t[0], h_t[size] = h_t[size], h_t[0]
            h_seq[0], h_seq[size] = h_seq[size], h_seq[0]
            h_a[0], h_a[size] = h_a[size], h_a[0]
            for c in range(3):
                h_rgb[0, c], h_rgb[size, c] = h_rgb[size, c], h_rgb[0, c]
            _heap_sift_down(h_t, h_seq, h_a, h_rgb, size, 0)
        trans = 1.0
        cr = 0.0
        cg = 0.0
        cb = 0.0
        for j in range(full):
            w = trans * h_a[j]
            cr += w * h_rgb[j, 0]
            cg += w * h_rgb[j, 1]
            cb += w * h_rgb[j, 2]
            trans *= 1.0 - h_a[j]
        out[i, 0] = cr + trans * bg[0]
        out[i, 1] = cg + trans * bg[1]
        out[i, 2] = cb + trans * bg[2]


@njit(cache=True)
def _fill_sh_basis(basis, x, y, z, deg):
    basis[0] = SH_C0
    if deg >= 1:
        basis[1] = -SH_C1 * y
        basis[2] = SH_C1 * z
        basis[3] = -SH_C1 * x
    if deg >= 2:
        xx = x * x
        yy = y * y
        zz = z * z
        basis[4] = SH_C2[0] * x * y
        basis[5] = SH_C2[1] * y * z
        basis[6] = SH_C2[2] * (2.0 * zz - xx - yy)
        basis[7] = SH_C2[3] * x * z
        basis[8] = SH_C2[4] * (xx - yy)
    if deg >= 3:
        xx = x * x
        yy = y * y
        zz = z * z
        basis[9] = SH_C3[0] * y * (3.0 * xx - yy)
        basis[10] = SH_C3[1] * x * y * z
        basis[11] = SH_C3[2] * y * (4.0 * zz - xx - yy)
        basis[12] = SH_C3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy)
        basis[13] = SH_C3[4] * x * (4.0 * zz - xx - yy)
        basis[14] = SH_C3[5] * z * (xx - yy)
        basis[15] = SH_C3[6] * x * (xx - 3.0 * yy)


def trace_rays(
    bvh: Bvh,
    scene: GaussianScene,
    origins: np.ndarray,
    dirs: np.ndarray,
    c_h: int = DEFAULT_HEAP_CAPACITY,
    background: np.ndarray | tuple = (0.0, 0.0, 0.0),
    alpha_floor: float = ALPHA_FLOOR,
) -> np.ndarray:
    """Shade a batch of rays through the BVH; one RGB row per ray."""
    if c_h < 1:
        raise ValueError("heap capacity must be at least 1")
    origins = np.ascontiguousarray(origins, dtype=np.float64).reshape(-1, 3)
    dirs = np.ascontiguousarray(dirs, dtype=np.float64).reshape(-1, 3)
    out = np.empty_like(origins)
    _trace_kernel(
        origins, dirs, bvh.node_lo, bvh.node_hi, bvh.children, bvh.leaf_start,
        bvh.leaf_count, bvh.prim_order, bvh.prim_lo, bvh.prim_hi, scene.means,
        scene.precisions, scene.opacities, scene.sh, scene.sh_degree,
        int(c_h), float(alpha_floor), np.asarray(background, dtype=np.float64), out,
    )
    return out


def trace_ray(
    bvh: Bvh,
    scene: GaussianScene,
    origin: np.ndarray,
    direction: np.ndarray,
    c_h: int = DEFAULT_HEAP_CAPACITY,
    background: np.ndarray | tuple = (0.0, 0.0, 0.0),
    alpha_floor: float = ALPHA_FLOOR,
) -> np.ndarray:
    """Single-ray convenience wrapper around ``trace_rays``."""
    return trace_rays(
        bvh, scene, np.asarray(origin)[None], np.asarray(direction)[None],
        c_h, background, alpha_floor,
    )[0]


def brute_force_ray(
    scene: GaussianScene,
    origin: np.ndarray,
    direction: np.ndarray,
    background: np.ndarray | tuple = (0.0, 0.0, 0.0),
    alpha_floor: float = ALPHA_FLOOR,
    k_sigma: float = DEFAULT_K_SIGMA,
) -> np.ndarray:
    """Reference shade: every Gaussian tested, unbounded hit list, full sort.

    Mathematically the same pipeline as ``trace_ray`` with infinite heap
    capacity; implemented in plain vectorised numpy with a stable sort so it
    shares no traversal machinery with the BVH path.
    """
    o = np.asarray(origin, dtype=np.float64).reshape(3)
    d = np.asarray(direction, dtype=np.float64).reshape(3)
    bg = np.asarray(background, dtype=np.float64)
    lo, hi = gaussian_aabbs(scene, k_sigma)

    # Slab test in the same (bound - o) * (1/d) form as the traced path so a
    # grazing hit lands on the same side of the boundary in both.
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / d
        t1 = (lo - o) * inv
        t2 = (hi - o) * inv
    near = np.minimum(t1, t2)
    far = np.maximum(t1, t2)
    # Degenerate direction components: inside the slab iff origin within bounds.
    flat = d == 0
    inside = (o >= lo) & (o <= hi)
    near = np.where(flat, np.where(inside, -np.inf, np.inf), near)
    far = np.where(flat, np.where(inside, np.inf, -np.inf), far)
    tmin = np.maximum(near.max(axis=1), 0.0)
    tmax = far.min(axis=1)
    box_ok = tmax >= tmin

    m = scene.means - o
    pd = np.einsum("nij,j->ni", scene.precisions, d)
    den = pd @ d
    tj = np.einsum("ni,ni->n", m, pd) / den
    v = tj[:, None] * d - m
    q = np.einsum("ni,nij,nj->n", v, scene.precisions, v)
    alpha = scene.opacities * np.exp(-0.5 * q)
    keep = box_ok & (tj > 0.0) & (alpha >= alpha_floor)
    if not keep.any():
        return bg.copy()
    idx = np.flatnonzero(keep)
    order = idx[np.argsort(tj[idx], kind="stable")]
    colors = eval_sh(scene.sh[order], d)
    trans = 1.0
    out = np.zeros(3)
    for j, p in enumerate(order):
        w = trans * alpha[p]
        out += w * colors[j]
        trans *= 1.0 - alpha[p]
    return out + trans * bg


@dataclass
class GaussianField:
    """RadianceField adapter: a scene plus its BVH and trace settings."""

    scene: GaussianScene
    bvh: Bvh
    c_h: int = DEFAULT_HEAP_CAPACITY
    alpha_floor: float = ALPHA_FLOOR

    def shade_rays(
        self,
        origins: np.ndarray,
        dirs: np.ndarray,
        background: np.ndarray | tuple = (0.0, 0.0, 0.0),
    ) -> np.ndarray:
        return trace_rays(
            self.bvh, self.scene, origins, dirs, self.c_h, background, self.alpha_floor
        )

    def bounding_radius(self) -> float:
        return self.scene.bounding_radius(self.bvh.k_sigma)


def build_field(
    scene: GaussianScene,
    c_h: int = DEFAULT_HEAP_CAPACITY,
    branching: int = DEFAULT_BRANCHING,
    k_sigma: float = DEFAULT_K_SIGMA,
) -> GaussianField:
    return GaussianField(scene=scene, bvh=build_bvh(scene, branching, k_sigma), c_h=c_h)
