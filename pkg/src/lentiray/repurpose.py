"""Subpixel repurposing: build the encoded-image index matrix.

The standard gather displays one subpixel of every rendered pixel and
discards the other two.  Repurposing walks chains of same-viewpoint
subpixels (nearly parallel to the grating) inside disjoint vertical areas;
whenever a pixel is rendered for one channel, its two idle channels are
banked in a per-viewpoint buffer and handed to the nearest following slots
on the chain that can consume them.  The fraction of panel pixels that
still need rendering is the ratio beta in [1, 3].
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .display import DisplayProfile

DEFAULT_AREA_WIDTH = 2  # grating units per area; speed/quality balance


@dataclass
class EncodedIndexMatrix:
    """Per-subpixel source records for the encoded image.

    ``view[x, y, k]`` is always the viewpoint the display geometry assigns
    to that slot; repurposing only relocates the source coordinates
    ``(src_x, src_y)`` within the same viewpoint image.  The source channel
    equals the slot channel k by construction.
    """

    view: np.ndarray   # (h, w, 3) uint16
    src_x: np.ndarray  # (h, w, 3) int32
    src_y: np.ndarray  # (h, w, 3) int32
    beta: float
    area_width: int
    repurposed: bool

    @property
    def panel_shape(self) -> tuple[int, int]:
        return self.view.shape[0], self.view.shape[1]

    def validate(self) -> None:
        h, w, _ = self.view.shape
        if self.src_x.shape != (h, w, 3) or self.src_y.shape != (h, w, 3):
            raise ValueError("index matrix arrays disagree on shape")
        if (self.src_x < 0).any() or (self.src_x >= h).any():
            raise ValueError("src_x entries out of panel range")
        if (self.src_y < 0).any() or (self.src_y >= w).any():
            raise ValueError("src_y entries out of panel range")
        if not 1.0 <= self.beta <= 3.0:
            raise ValueError(f"beta {self.beta} outside [1, 3]")


@njit(cache=True)
def _search_same_view(views, filled, buf_occ, v, x, s, y, k, s0, s1, h, dy_lo, dx_hi):
    # Candidate window below the current subpixel, following the printed
    # bounds verbatim (including the odd min() on the lower row bound).  A
    # candidate must show the chain's viewpoint, be unassigned, lie in the
    # chain's area, and -- while idle banked channels are pending -- be able
    # to consume one of them; that last filter is what makes a rendered
    # pixel's spare channels land on the nearest same-viewpoint slots.
    xl = x + 2
    if xl > h - 1:
        xl = h - 1
    yl_f = y - dy_lo
    if yl_f < 0.0:
        yl_f = 0.0
    yl = int(math.floor(yl_f))
    xh_f = x + dx_hi
    if xh_f > h - 1.0:
        xh_f = h - 1.0
    xh = int(math.floor(xh_f))
    pending = buf_occ[0] or buf_occ[1] or buf_occ[2]
    for xx in range(xl, xh + 1):
        for yy in range(yl, y + 1):
            base = 3 * yy
            for dk in range(3):
                # Rotate the channel preference so degenerate single-view
                # panels cycle R,G,B; real profiles have at most one
                # matching channel per pixel, where this order is moot.
                kk = (k + 1 + dk) % 3
                if pending and not buf_occ[kk]:
                    continue
                ss = base + kk
                if ss < s0 or ss >= s1:
                    continue
                if xx == x and ss == s:
                    continue
                if views[xx, ss] != v:
                    continue
                if filled[xx, ss] >= 0:
                    continue
                return True, xx, ss
    return False, -1, -1


@njit(cache=True)
def _build_kernel(views, h, w, area_width_cols, dy_lo, dx_hi, src_x, src_y):
    w3 = 3 * w
    n_bands = int(math.ceil(w3 / area_width_cols))
    buf_x = np.zeros(3, np.int32)
    buf_y = np.zeros(3, np.int32)
    buf_occ = np.zeros(3, np.bool_)
    for b in range(n_bands):
        # Fractional band edges keep every area exactly P_w grating units
        # wide on average; rounding every band up would drift against the
        # grating and make beta non-monotone in the area width.
        s0 = int(math.ceil(b * area_width_cols))
        s1 = min(int(math.ceil((b + 1) * area_width_cols)), w3)
        if s0 >= s1:
            continue
        for x_start in range(h):
            for s_start in range(s0, s1):
                if src_x[x_start, s_start] >= 0:
                    continue
                v = views[x_start, s_start]
                x = x_start
                s = s_start
                while src_x[x, s] < 0 and s0 <= s < s1:
                    k = s % 3
                    y = s // 3
                    if buf_occ[k]:
                        src_x[x, s] = buf_x[k]
                        src_y[x, s] = buf_y[k]
                        buf_occ[k] = False
                    else:
                        src_x[x, s] = x
                        src_y[x, s] = y
                        k1 = (k + 2) % 3  # (k - 1) mod 3
                        k2 = (k + 1) % 3  # (k - 2) mod 3
                        if not buf_occ[k1]:
                            buf_occ[k1] = True
                            buf_x[k1] = x
                            buf_y[k1] = y
                        if not buf_occ[k2]:
                            buf_occ[k2] = True
                            buf_x[k2] = x
                            buf_y[k2] = y
                    found, nx, ns = _search_same_view(
                        views, src_x, buf_occ, v, x, s, y, k, s0, s1, h, dy_lo, dx_hi
                    )
                    if not found:
                        break
                    x = nx
                    s = ns
                # Chain for viewpoint v dead-ended: drop its pending buffer.
                buf_occ[0] = False
                buf_occ[1] = False
                buf_occ[2] = False


def _identity_index(profile: DisplayProfile) -> tuple[np.ndarray, np.ndarray]:
    h, w = profile.panel_shape
    src_x = np.broadcast_to(np.arange(h, dtype=np.int32)[:, None, None], (h, w, 3)).copy()
    src_y = np.broadcast_to(np.arange(w, dtype=np.int32)[None, :, None], (h, w, 3)).copy()
    return src_x, src_y


def count_unique_rays(view: np.ndarray, src_x: np.ndarray, src_y: np.ndarray) -> int:
    """Number of distinct (view, src_x, src_y) triples referenced."""
    h, w = view.shape[0], view.shape[1]
    # In-place packing: an 8K panel already needs ~800 MB for the packed
    # keys, so avoid stacking further temporaries on top.
    packed = view.ravel().astype(np.int64)
    packed *= h
    packed += src_x.ravel()
    packed *= w
    packed += src_y.ravel()
    packed.sort()
    if packed.size == 0:
        return 0
    return int(np.count_nonzero(packed[1:] != packed[:-1])) + 1


def build_index_matrix(
    profile: DisplayProfile,
    views: np.ndarray,
    area_width: int = DEFAULT_AREA_WIDTH,
    repurpose: bool = True,
) -> EncodedIndexMatrix:
    """Populate the encoded-image index matrix (one source per subpixel).

    With ``repurpose=False`` this emits the identity mapping of the standard
    one-to-one gather (beta = 3 on any profile whose channel triplets land
    on three distinct viewpoints).
    """
    h, w = profile.panel_shape
    if views.shape != (h, 3 * w):
        raise ValueError("viewpoint matrix does not match the panel dimensions")
    if area_width < 1:
        raise ValueError("area_width must be at least 1")
    if area_width * profile.line_count > 3 * w:
        raise ValueError(
            f"area_width {area_width} exceeds the panel width of "
            f"{3 * w / profile.line_count:.2f} grating units"
        )

    view3 = np.ascontiguousarray(views.reshape(h, w, 3))
    if not repurpose:
        src_x, src_y = _identity_index(profile)
    else:
        dy_lo = profile.num_views / (3.0 * profile.line_count)
        dx_hi = 2.0 * (profile.num_views / profile.line_count) + profile.num_views / (
            2.0 * profile.line_count
        )
        flat_x = np.full((h, 3 * w), -1, dtype=np.int32)
        flat_y = np.full((h, 3 * w), -1, dtype=np.int32)
        _build_kernel(
            np.ascontiguousarray(views),
            h,
            w,
            area_width * profile.line_count,
            dy_lo,
            dx_hi,
            flat_x,
            flat_y,
        )
        src_x = flat_x.reshape(h, w, 3)
        src_y = flat_y.reshape(h, w, 3)

    n_rays = count_unique_rays(view3, src_x, src_y)
    return EncodedIndexMatrix(
        view=view3,
        src_x=src_x,
        src_y=src_y,
        beta=n_rays / float(w * h),
        area_width=area_width,
        repurposed=repurpose,
    )


def compute_beta(index: EncodedIndexMatrix) -> float:
    """Distinct rendered (view, x, y) triples over the panel pixel count."""
    h, w = index.panel_shape
    return count_unique_rays(index.view, index.src_x, index.src_y) / float(w * h)


def assemble_encoded(index: EncodedIndexMatrix, stack: np.ndarray) -> np.ndarray:
    """Gather an encoded image through the index matrix.

    ``stack`` must hold panel-resolution views: shape (N_v, h, w, 3).
    """
    h, w = index.panel_shape
    stack = np.asarray(stack)
    if stack.ndim != 4 or stack.shape[1:] != (h, w, 3):
        raise ValueError("stack must have shape (num_views, h, w, 3) at panel resolution")
    if int(index.view.max()) >= stack.shape[0]:
        raise ValueError("index matrix references views beyond the stack")
    ks = np.broadcast_to(np.arange(3, dtype=np.int64)[None, None, :], (h, w, 3))
    return stack[index.view.astype(np.int64), index.src_x, index.src_y, ks]
